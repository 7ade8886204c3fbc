#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "patchlab/codeprep/syntax_tree.hpp"

namespace patchlab::codeprep {

// Function names captured by the definition and call patterns.
std::set<std::string> extract_identifiers(const SyntaxTree& tree);
// Declarator identifiers (variables and parameters).
std::set<std::string> extract_variable_names(const SyntaxTree& tree);
// Text of every leaf token that lexes as an identifier of any kind.
std::set<std::string> identifier_tokens(const SyntaxTree& tree);

struct RenameMap {
  std::map<std::string, std::string> entries;
  std::uint64_t seed = 0;

  bool injective() const;
};

// Produces candidate replacement names; the default draws `func_` plus 16
// lowercase hex digits from a seeded Rng.
using NameGenerator = std::function<std::string()>;
NameGenerator seeded_name_generator(std::uint64_t seed);

bool is_generated_name(std::string_view name);

struct ObfuscationResult {
  std::string text;
  RenameMap map;
};

inline constexpr int kMaxRenameAttempts = 64;

ObfuscationResult obfuscate(std::string_view source, std::uint64_t seed,
                            bool rename_variables = false,
                            LanguageTag language = LanguageTag::cpp);
ObfuscationResult obfuscate(std::string_view source, std::uint64_t seed,
                            const NameGenerator& generator, bool rename_variables,
                            LanguageTag language);

struct JointObfuscationResult {
  std::vector<std::string> texts;
  RenameMap map;
};

// Renames several related sources (e.g. a vulnerable function and its fix)
// with one shared map built from the union of their captured names.
JointObfuscationResult obfuscate_together(const std::vector<std::string>& sources,
                                          std::uint64_t seed, bool rename_variables = false,
                                          LanguageTag language = LanguageTag::cpp);

// Rewrites every `identifier` token whose text is a key of the map.
std::string apply_rename(std::string_view source, const RenameMap& map,
                         LanguageTag language = LanguageTag::cpp);

struct Comment {
  std::uint32_t start = 0;
  std::uint32_t end = 0;
  std::string text;
};

struct CommentSet {
  std::vector<Comment> comments;  // ordered by start offset

  std::size_t total_bytes() const;
};

CommentSet extract_comments(std::string_view source, LanguageTag language = LanguageTag::cpp);
std::string strip_comments(std::string_view source, LanguageTag language = LanguageTag::cpp);

}  // namespace patchlab::codeprep
