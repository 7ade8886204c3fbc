#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "patchlab/codeprep/syntax_tree.hpp"
#include "patchlab/codeprep/transforms.hpp"

namespace fs = std::filesystem;
using namespace patchlab::codeprep;
using patchlab::corpus::LanguageTag;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<fs::path> fixture_files() {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(fs::path(PATCHLAB_DATA_DIR) / "microcorpus" / "pairs")) {
    out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t count_kind(const SyntaxNode& n, const std::string& kind) {
  std::size_t c = n.kind == kind;
  for (const auto& ch : n.children) c += count_kind(ch, kind);
  return c;
}

const SyntaxNode* field_child(const SyntaxNode& n, const std::string& field) {
  for (const auto& ch : n.children) {
    if (ch.field == field) return &ch;
  }
  return nullptr;
}

// Independent walk mirroring the two capture patterns.
void walk_captures(const SyntaxTree& t, const SyntaxNode& n, std::set<std::string>& out) {
  if (n.kind == "function_definition") {
    const SyntaxNode* d = field_child(n, "declarator");
    if (d && d->kind == "function_declarator") {
      const SyntaxNode* id = field_child(*d, "declarator");
      if (id && id->kind == "identifier") out.insert(std::string(t.text(*id)));
    }
  }
  if (n.kind == "call_expression") {
    const SyntaxNode* f = field_child(n, "function");
    if (f && f->kind == "identifier") out.insert(std::string(t.text(*f)));
  }
  for (const auto& ch : n.children) walk_captures(t, ch, out);
}

void check_ranges(const SyntaxNode& n) {
  for (const auto& ch : n.children) {
    EXPECT_LE(n.start, ch.start);
    EXPECT_GE(n.end, ch.end);
    check_ranges(ch);
  }
}

const std::regex kGenerated("func_[0-9a-f]{16}");

}  // namespace

TEST(Parse, MinimalFunction) {
  const auto t = parse("int f(){return 0;}", LanguageTag::c);
  EXPECT_EQ(count_kind(t.root(), "function_definition"), 1u);
  EXPECT_FALSE(t.has_error());
  check_ranges(t.root());
}

TEST(Parse, EmptySource) {
  const auto t = parse("");
  EXPECT_TRUE(t.root().children.empty());
  EXPECT_FALSE(t.has_error());
}

TEST(Parse, BrokenInputYieldsErrorNodes) {
  const auto t = parse("int f({");
  EXPECT_GE(t.error_count(), 1u);
}

TEST(Parse, LeavesTileTheTokenStream) {
  for (const auto& f : fixture_files()) {
    const auto t = parse(slurp(f), LanguageTag::c);
    std::uint32_t last = 0;
    for (const auto* leaf : t.leaves()) {
      EXPECT_GE(leaf->start, last) << f;
      last = leaf->end;
    }
    check_ranges(t.root());
  }
}

TEST(Queries, ShippedQueryTextsCarryTheCaptures) {
  EXPECT_NE(function_name_query_source().find("@func-def"), std::string::npos);
  EXPECT_NE(function_name_query_source().find("@call-expr"), std::string::npos);
  EXPECT_NE(comment_query_source().find("(comment) @comment"), std::string::npos);
}

TEST(ExtractIdentifiers, DefinitionAndCall) {
  EXPECT_EQ(extract_identifiers(parse("void a(){b();}")), (std::set<std::string>{"a", "b"}));
  EXPECT_TRUE(extract_identifiers(parse("int x = 5;")).empty());
}

TEST(ExtractIdentifiers, MatchesManualWalkOnFixtures) {
  for (const auto& f : fixture_files()) {
    const auto t = parse(slurp(f), LanguageTag::c);
    std::set<std::string> expected;
    walk_captures(t, t.root(), expected);
    EXPECT_EQ(extract_identifiers(t), expected) << f;
  }
}

TEST(Obfuscate, RepeatedNameSharesOneReplacement) {
  const auto r = obfuscate("void a(){a_helper(); a_helper();}", 5);
  ASSERT_EQ(r.map.entries.count("a_helper"), 1u);
  const std::string rep = r.map.entries.at("a_helper");
  EXPECT_TRUE(std::regex_match(rep, kGenerated));
  std::size_t hits = 0;
  for (auto pos = r.text.find(rep); pos != std::string::npos; pos = r.text.find(rep, pos + 1)) ++hits;
  EXPECT_EQ(hits, 2u);
  EXPECT_EQ(r.text.find("a_helper"), std::string::npos);
}

TEST(Obfuscate, DeterministicPerSeed) {
  const std::string src = "int g(int x){return h(x)+g(x-1);}";
  EXPECT_EQ(obfuscate(src, 11).text, obfuscate(src, 11).text);
  EXPECT_NE(obfuscate(src, 11).text, obfuscate(src, 12).text);
}

TEST(Obfuscate, IdentifiersInStringsAndCommentsUntouched) {
  const auto r = obfuscate("void f(){ g(\"f g\"); } // f", 3);
  EXPECT_NE(r.text.find("\"f g\""), std::string::npos);
  EXPECT_NE(r.text.find("// f"), std::string::npos);
}

TEST(Obfuscate, CollisionWithExistingIdentifierRegenerates) {
  // The first candidate already names a local; the generator must move on.
  const std::string taken = "func_0000000000000001";
  int calls = 0;
  NameGenerator gen = [&] {
    ++calls;
    return calls == 1 ? taken : "func_000000000000000" + std::to_string(calls);
  };
  const auto r = obfuscate("void f(){ int " + taken + " = 0; }", 1, gen, false, LanguageTag::c);
  EXPECT_NE(r.map.entries.at("f"), taken);
}

TEST(Obfuscate, GivesUpAfterBoundedRetries) {
  const std::string taken = "func_0000000000000001";
  NameGenerator gen = [&] { return taken; };
  EXPECT_THROW(obfuscate("void f(){ int " + taken + " = 0; }", 1, gen, false, LanguageTag::c),
               std::exception);
}

TEST(ObfuscateProperty, FixtureInvariants) {
  for (const auto& f : fixture_files()) {
    const std::string src = slurp(f);
    const auto before = parse(src, LanguageTag::c);
    const auto r = obfuscate(src, 42, false, LanguageTag::c);
    const auto after = parse(r.text, LanguageTag::c);
    EXPECT_EQ(before.preorder_kinds(), after.preorder_kinds()) << f;
    const auto tokens = identifier_tokens(after);
    for (const auto& [from, to] : r.map.entries) {
      EXPECT_EQ(tokens.count(from), 0u) << from << " leaked in " << f;
      EXPECT_TRUE(std::regex_match(to, kGenerated));
    }
    EXPECT_TRUE(r.map.injective());
    EXPECT_EQ(obfuscate(src, 42, false, LanguageTag::c).text, r.text);
    // Re-applying the map is a no-op on already renamed text.
    EXPECT_EQ(apply_rename(r.text, r.map, LanguageTag::c), r.text);
  }
}

TEST(Obfuscate, VariableRenamingIsOptIn) {
  const std::string src = "int f(int count){ int total = count; return total; }";
  EXPECT_EQ(obfuscate(src, 1).map.entries.count("total"), 0u);
  const auto r = obfuscate(src, 1, true);
  EXPECT_EQ(r.map.entries.count("total"), 1u);
  EXPECT_EQ(r.map.entries.count("count"), 1u);
  EXPECT_FALSE(parse(r.text).has_error());
}

TEST(JointObfuscation, SharesOneMapAcrossSources) {
  const auto r = obfuscate_together({"void a(){b();}", "void a(){b(); c();}"}, 9);
  ASSERT_EQ(r.texts.size(), 2u);
  const std::string a = r.map.entries.at("a");
  EXPECT_NE(r.texts[0].find(a), std::string::npos);
  EXPECT_NE(r.texts[1].find(a), std::string::npos);
  EXPECT_EQ(r.map.entries.size(), 3u);
}

TEST(Comments, Extract) {
  auto c = extract_comments("int x; // hi");
  ASSERT_EQ(c.comments.size(), 1u);
  EXPECT_EQ(c.comments[0].text, "// hi");
  c = extract_comments("/*a*/ int x; /*a*/");
  ASSERT_EQ(c.comments.size(), 2u);
  EXPECT_EQ(c.comments[0].text, c.comments[1].text);
  EXPECT_NE(c.comments[0].start, c.comments[1].start);
  EXPECT_TRUE(extract_comments("int x;").comments.empty());
}

TEST(Comments, StripByRange) {
  EXPECT_EQ(strip_comments("int x; // hi"), "int x; ");
  EXPECT_EQ(strip_comments("/*a*/int a_var;/*a*/"), "int a_var;");
}

TEST(CommentsProperty, StripIsSoundAndIdempotent) {
  for (const auto& f : fixture_files()) {
    const std::string src = slurp(f);
    const auto comments = extract_comments(src, LanguageTag::c);
    const std::string once = strip_comments(src, LanguageTag::c);
    EXPECT_EQ(once.size(), src.size() - comments.total_bytes()) << f;
    EXPECT_EQ(count_kind(parse(once, LanguageTag::c).root(), "comment"), 0u) << f;
    EXPECT_EQ(strip_comments(once, LanguageTag::c), once) << f;
  }
}
