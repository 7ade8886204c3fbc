#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "patchlab/corpus/corpus.hpp"

struct TSTree;
struct TSParser;
struct TSQuery;
struct TSLanguage;

namespace patchlab::codeprep {

using corpus::LanguageTag;

struct SyntaxNode {
  std::string kind;
  std::string field;  // field name within the parent, empty when unnamed
  std::uint32_t start = 0;
  std::uint32_t end = 0;
  bool named = true;
  bool error = false;  // ERROR node or a MISSING token inserted by recovery
  std::vector<SyntaxNode> children;
};

// Owned copy of a concrete syntax tree plus the tree-sitter handle it came
// from, so S-expression queries can still be run against it.
class SyntaxTree {
 public:
  SyntaxTree(std::string source, LanguageTag language, std::shared_ptr<TSTree> handle);

  const SyntaxNode& root() const { return root_; }
  const std::string& source() const { return source_; }
  LanguageTag language() const { return language_; }
  const TSTree* handle() const { return handle_.get(); }

  std::string_view text(const SyntaxNode& node) const;
  std::size_t error_count() const;
  bool has_error() const { return error_count() > 0; }
  std::vector<std::string> preorder_kinds() const;
  // Leaves in document order.
  std::vector<const SyntaxNode*> leaves() const;
  std::string sexp() const;

 private:
  std::string source_;
  LanguageTag language_;
  std::shared_ptr<TSTree> handle_;
  SyntaxNode root_;
};

const TSLanguage* grammar(LanguageTag language);

// One parser per thread; instances are movable but not copyable.
class Parser {
 public:
  explicit Parser(LanguageTag language = LanguageTag::cpp);
  ~Parser();
  Parser(Parser&&) noexcept;
  Parser& operator=(Parser&&) noexcept;
  Parser(const Parser&) = delete;
  Parser& operator=(const Parser&) = delete;

  // Never fails on malformed code: broken regions become error nodes.
  SyntaxTree parse(std::string source);
  LanguageTag language() const { return language_; }

 private:
  TSParser* parser_ = nullptr;
  LanguageTag language_;
};

SyntaxTree parse(std::string source, LanguageTag language = LanguageTag::cpp);

struct Capture {
  std::string name;
  std::uint32_t start = 0;
  std::uint32_t end = 0;
  std::string text;
};

class Query {
 public:
  Query(LanguageTag language, std::string_view source);
  ~Query();
  Query(Query&&) noexcept;
  Query& operator=(Query&&) noexcept;
  Query(const Query&) = delete;
  Query& operator=(const Query&) = delete;

  // Captures in document order.
  std::vector<Capture> captures(const SyntaxTree& tree) const;

 private:
  TSQuery* query_ = nullptr;
};

// Query texts shipped under data/queries, compiled into the library.
const std::string& function_name_query_source();
const std::string& comment_query_source();
const std::string& variable_query_source();

}  // namespace patchlab::codeprep
