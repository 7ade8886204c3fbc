#include "patchlab/codeprep/syntax_tree.hpp"

#include <tree_sitter/api.h>

#include <cstdlib>
#include <utility>

#include "patchlab/error.hpp"
#include "patchlab_queries.hpp"

extern "C" const TSLanguage* tree_sitter_c();
extern "C" const TSLanguage* tree_sitter_cpp();

namespace patchlab::codeprep {

namespace {

SyntaxNode convert(TSTreeCursor* cursor) {
  const TSNode node = ts_tree_cursor_current_node(cursor);
  SyntaxNode out;
  out.kind = ts_node_type(node);
  if (const char* field = ts_tree_cursor_current_field_name(cursor)) out.field = field;
  out.start = ts_node_start_byte(node);
  out.end = ts_node_end_byte(node);
  out.named = ts_node_is_named(node);
  out.error = ts_node_is_error(node) || ts_node_is_missing(node);
  if (ts_tree_cursor_goto_first_child(cursor)) {
    do {
      out.children.push_back(convert(cursor));
    } while (ts_tree_cursor_goto_next_sibling(cursor));
    ts_tree_cursor_goto_parent(cursor);
  }
  return out;
}

void count_errors(const SyntaxNode& n, std::size_t& acc) {
  if (n.error) ++acc;
  for (const auto& c : n.children) count_errors(c, acc);
}

void collect_kinds(const SyntaxNode& n, std::vector<std::string>& acc) {
  acc.push_back(n.kind);
  for (const auto& c : n.children) collect_kinds(c, acc);
}

void collect_leaves(const SyntaxNode& n, std::vector<const SyntaxNode*>& acc) {
  if (n.children.empty()) {
    acc.push_back(&n);
    return;
  }
  for (const auto& c : n.children) collect_leaves(c, acc);
}

}  // namespace

SyntaxTree::SyntaxTree(std::string source, LanguageTag language, std::shared_ptr<TSTree> handle)
    : source_(std::move(source)), language_(language), handle_(std::move(handle)) {
  TSTreeCursor cursor = ts_tree_cursor_new(ts_tree_root_node(handle_.get()));
  root_ = convert(&cursor);
  ts_tree_cursor_delete(&cursor);
}

std::string_view SyntaxTree::text(const SyntaxNode& node) const {
  return std::string_view(source_).substr(node.start, node.end - node.start);
}

std::size_t SyntaxTree::error_count() const {
  std::size_t n = 0;
  count_errors(root_, n);
  return n;
}

std::vector<std::string> SyntaxTree::preorder_kinds() const {
  std::vector<std::string> kinds;
  collect_kinds(root_, kinds);
  return kinds;
}

std::vector<const SyntaxNode*> SyntaxTree::leaves() const {
  std::vector<const SyntaxNode*> out;
  collect_leaves(root_, out);
  return out;
}

std::string SyntaxTree::sexp() const {
  char* raw = ts_node_string(ts_tree_root_node(handle_.get()));
  std::string s(raw);
  std::free(raw);
  return s;
}

const TSLanguage* grammar(LanguageTag language) {
  return language == LanguageTag::c ? tree_sitter_c() : tree_sitter_cpp();
}

Parser::Parser(LanguageTag language) : parser_(ts_parser_new()), language_(language) {
  if (!ts_parser_set_language(parser_, grammar(language))) {
    ts_parser_delete(parser_);
    throw Error("tree-sitter grammar ABI mismatch");
  }
}

Parser::~Parser() {
  if (parser_) ts_parser_delete(parser_);
}

Parser::Parser(Parser&& other) noexcept
    : parser_(std::exchange(other.parser_, nullptr)), language_(other.language_) {}

Parser& Parser::operator=(Parser&& other) noexcept {
  if (this != &other) {
    if (parser_) ts_parser_delete(parser_);
    parser_ = std::exchange(other.parser_, nullptr);
    language_ = other.language_;
  }
  return *this;
}

SyntaxTree Parser::parse(std::string source) {
  TSTree* raw = ts_parser_parse_string(parser_, nullptr, source.data(),
                                       static_cast<std::uint32_t>(source.size()));
  if (!raw) throw Error("tree-sitter returned no tree");
  return SyntaxTree(std::move(source), language_, std::shared_ptr<TSTree>(raw, ts_tree_delete));
}

SyntaxTree parse(std::string source, LanguageTag language) {
  Parser parser(language);
  return parser.parse(std::move(source));
}

Query::Query(LanguageTag language, std::string_view source) {
  std::uint32_t error_offset = 0;
  TSQueryError error_type = TSQueryErrorNone;
  query_ = ts_query_new(grammar(language), source.data(), static_cast<std::uint32_t>(source.size()),
                        &error_offset, &error_type);
  if (!query_) {
    throw InputError("invalid S-expression query at offset " + std::to_string(error_offset) +
                     " (error " + std::to_string(static_cast<int>(error_type)) + ")");
  }
}

Query::~Query() {
  if (query_) ts_query_delete(query_);
}

Query::Query(Query&& other) noexcept : query_(std::exchange(other.query_, nullptr)) {}

Query& Query::operator=(Query&& other) noexcept {
  if (this != &other) {
    if (query_) ts_query_delete(query_);
    query_ = std::exchange(other.query_, nullptr);
  }
  return *this;
}

std::vector<Capture> Query::captures(const SyntaxTree& tree) const {
  TSQueryCursor* cursor = ts_query_cursor_new();
  ts_query_cursor_exec(cursor, query_, ts_tree_root_node(tree.handle()));
  std::vector<Capture> out;
  TSQueryMatch match;
  std::uint32_t capture_index = 0;
  while (ts_query_cursor_next_capture(cursor, &match, &capture_index)) {
    const TSQueryCapture& cap = match.captures[capture_index];
    std::uint32_t len = 0;
    const char* name = ts_query_capture_name_for_id(query_, cap.index, &len);
    Capture c;
    c.name.assign(name, len);
    c.start = ts_node_start_byte(cap.node);
    c.end = ts_node_end_byte(cap.node);
    c.text = tree.source().substr(c.start, c.end - c.start);
    out.push_back(std::move(c));
  }
  ts_query_cursor_delete(cursor);
  return out;
}

const std::string& function_name_query_source() {
  static const std::string s(queries::kFunctionNames);
  return s;
}

const std::string& comment_query_source() {
  static const std::string s(queries::kComments);
  return s;
}

const std::string& variable_query_source() {
  static const std::string s(queries::kVariableNames);
  return s;
}

}  // namespace patchlab::codeprep
