#include "patchlab/codeprep/transforms.hpp"

#include <algorithm>
#include <cstdio>
#include <unordered_set>

#include "patchlab/error.hpp"
#include "patchlab/rng.hpp"

namespace patchlab::codeprep {

namespace {

const Query& cached_query(LanguageTag language, const std::string& (*source)()) {
  // TSQuery is immutable once built; cursors are created per call.
  static const Query c_fn(LanguageTag::c, function_name_query_source());
  static const Query cpp_fn(LanguageTag::cpp, function_name_query_source());
  static const Query c_cm(LanguageTag::c, comment_query_source());
  static const Query cpp_cm(LanguageTag::cpp, comment_query_source());
  static const Query c_var(LanguageTag::c, variable_query_source());
  static const Query cpp_var(LanguageTag::cpp, variable_query_source());
  const bool c = language == LanguageTag::c;
  if (source == &function_name_query_source) return c ? c_fn : cpp_fn;
  if (source == &comment_query_source) return c ? c_cm : cpp_cm;
  return c ? c_var : cpp_var;
}

std::set<std::string> capture_texts(const SyntaxTree& tree, const std::string& (*source)()) {
  std::set<std::string> names;
  for (const auto& cap : cached_query(tree.language(), source).captures(tree)) {
    names.insert(cap.text);
  }
  return names;
}

bool is_identifier_kind(const std::string& kind) {
  return kind == "identifier" || kind.ends_with("_identifier");
}

}  // namespace

std::set<std::string> extract_identifiers(const SyntaxTree& tree) {
  return capture_texts(tree, &function_name_query_source);
}

std::set<std::string> extract_variable_names(const SyntaxTree& tree) {
  return capture_texts(tree, &variable_query_source);
}

std::set<std::string> identifier_tokens(const SyntaxTree& tree) {
  std::set<std::string> out;
  for (const SyntaxNode* leaf : tree.leaves()) {
    if (is_identifier_kind(leaf->kind)) out.emplace(tree.text(*leaf));
  }
  return out;
}

bool RenameMap::injective() const {
  std::unordered_set<std::string> seen;
  for (const auto& [from, to] : entries) {
    if (!seen.insert(to).second) return false;
  }
  return true;
}

NameGenerator seeded_name_generator(std::uint64_t seed) {
  return [rng = std::make_shared<Rng>(seed)]() {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "func_%016llx",
                  static_cast<unsigned long long>(rng->next()));
    return std::string(buf);
  };
}

bool is_generated_name(std::string_view name) {
  if (name.size() != 21 || !name.starts_with("func_")) return false;
  return std::all_of(name.begin() + 5, name.end(), [](char ch) {
    return (ch >= '0' && ch <= '9') || (ch >= 'a' && ch <= 'f');
  });
}

ObfuscationResult obfuscate(std::string_view source, std::uint64_t seed, bool rename_variables,
                            LanguageTag language) {
  return obfuscate(source, seed, seeded_name_generator(seed), rename_variables, language);
}

namespace {

RenameMap build_map(const std::vector<SyntaxTree>& trees, std::uint64_t seed,
                    const NameGenerator& generator, bool rename_variables) {
  std::set<std::string> names;
  std::set<std::string> taken;
  for (const auto& tree : trees) {
    names.merge(extract_identifiers(tree));
    if (rename_variables) names.merge(extract_variable_names(tree));
    taken.merge(identifier_tokens(tree));
  }
  RenameMap map;
  map.seed = seed;
  for (const auto& name : names) {
    std::string replacement;
    int attempt = 0;
    for (; attempt < kMaxRenameAttempts; ++attempt) {
      replacement = generator();
      if (!taken.contains(replacement)) break;
    }
    if (attempt == kMaxRenameAttempts) {
      throw Error("could not find a collision-free replacement for '" + name + "' after " +
                  std::to_string(kMaxRenameAttempts) + " attempts");
    }
    taken.insert(replacement);
    map.entries.emplace(name, std::move(replacement));
  }
  return map;
}

}  // namespace

ObfuscationResult obfuscate(std::string_view source, std::uint64_t seed,
                            const NameGenerator& generator, bool rename_variables,
                            LanguageTag language) {
  std::vector<SyntaxTree> trees;
  trees.push_back(parse(std::string(source), language));
  RenameMap map = build_map(trees, seed, generator, rename_variables);
  return ObfuscationResult{apply_rename(source, map, language), std::move(map)};
}

JointObfuscationResult obfuscate_together(const std::vector<std::string>& sources,
                                          std::uint64_t seed, bool rename_variables,
                                          LanguageTag language) {
  std::vector<SyntaxTree> trees;
  for (const auto& s : sources) trees.push_back(parse(s, language));
  JointObfuscationResult out;
  out.map = build_map(trees, seed, seeded_name_generator(seed), rename_variables);
  for (const auto& s : sources) out.texts.push_back(apply_rename(s, out.map, language));
  return out;
}

std::string apply_rename(std::string_view source, const RenameMap& map, LanguageTag language) {
  const SyntaxTree tree = parse(std::string(source), language);
  std::string out;
  out.reserve(source.size() + map.entries.size() * 16);
  std::uint32_t cursor = 0;
  for (const SyntaxNode* leaf : tree.leaves()) {
    if (leaf->kind != "identifier") continue;
    auto it = map.entries.find(std::string(tree.text(*leaf)));
    if (it == map.entries.end()) continue;
    out.append(source.substr(cursor, leaf->start - cursor));
    out.append(it->second);
    cursor = leaf->end;
  }
  out.append(source.substr(cursor));
  return out;
}

std::size_t CommentSet::total_bytes() const {
  std::size_t n = 0;
  for (const auto& c : comments) n += c.end - c.start;
  return n;
}

CommentSet extract_comments(std::string_view source, LanguageTag language) {
  const SyntaxTree tree = parse(std::string(source), language);
  CommentSet set;
  for (auto& cap : cached_query(language, &comment_query_source).captures(tree)) {
    set.comments.push_back(Comment{cap.start, cap.end, std::move(cap.text)});
  }
  std::sort(set.comments.begin(), set.comments.end(),
            [](const Comment& a, const Comment& b) { return a.start < b.start; });
  // A node can be reported once per matching pattern; keep one entry per range.
  set.comments.erase(std::unique(set.comments.begin(), set.comments.end(),
                                 [](const Comment& a, const Comment& b) {
                                   return a.start == b.start && a.end == b.end;
                                 }),
                     set.comments.end());
  return set;
}

std::string strip_comments(std::string_view source, LanguageTag language) {
  const CommentSet set = extract_comments(source, language);
  std::string out;
  out.reserve(source.size());
  std::uint32_t cursor = 0;
  for (const auto& c : set.comments) {
    if (c.start < cursor) continue;  // nested ranges cannot occur, but never go backwards
    out.append(source.substr(cursor, c.start - cursor));
    cursor = c.end;
  }
  out.append(source.substr(cursor));
  return out;
}

}  // namespace patchlab::codeprep
