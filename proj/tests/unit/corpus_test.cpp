#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "patchlab/corpus/corpus.hpp"
#include "patchlab/error.hpp"
#include "patchlab/rng.hpp"

namespace fs = std::filesystem;
using namespace patchlab;
using namespace patchlab::corpus;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("patchlab_corpus_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  void write(const std::string& name, const std::string& text) const {
    std::ofstream(path_ / name, std::ios::binary) << text;
  }

 private:
  fs::path path_;
};

std::vector<std::string> numbered_ids(int n) {
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) ids.push_back("id" + std::to_string(i));
  return ids;
}

}  // namespace

TEST(Ingest, SingleWellFormedPair) {
  TempDir d;
  d.write("a_vuln.c", "int f(){return 1;}");
  d.write("a_fixed.c", "int f(){return 0;}");
  d.write("labels.csv", "a,CWE-121\n");
  const auto r = ingest_pairs(d.path(), d.path() / "labels.csv");
  ASSERT_EQ(r.corpus.size(), 1u);
  EXPECT_EQ(r.corpus.pairs[0].cwe, "CWE-121");
  EXPECT_EQ(r.corpus.pairs[0].language, LanguageTag::c);
  EXPECT_TRUE(r.skipped.empty());
}

TEST(Ingest, MissingCounterpartIsSkipped) {
  TempDir d;
  d.write("a_vuln.c", "int f(){return 1;}");
  d.write("b_vuln.c", "int g(){return 1;}");
  d.write("b_fixed.c", "int g(){return 0;}");
  d.write("labels.csv", "a,CWE-121\nb,CWE-78\n");
  const auto r = ingest_pairs(d.path(), d.path() / "labels.csv");
  ASSERT_EQ(r.corpus.size(), 1u);
  EXPECT_EQ(r.corpus.pairs[0].id, "b");
  ASSERT_EQ(r.skipped.size(), 1u);
  EXPECT_EQ(r.skipped[0].id, "a");
}

TEST(Ingest, OnlyIncompletePairsIsAnError) {
  TempDir d;
  d.write("a_vuln.c", "int f(){return 1;}");
  d.write("labels.csv", "a,CWE-121\n");
  EXPECT_THROW(ingest_pairs(d.path(), d.path() / "labels.csv"), InputError);
}

TEST(Ingest, BadLabelLineNamesTheLine) {
  TempDir d;
  d.write("a_vuln.c", "int f(){return 1;}");
  d.write("a_fixed.c", "int f(){return 0;}");
  d.write("labels.csv", "a,CWE-121\nb;CWE-7\n");
  try {
    ingest_pairs(d.path(), d.path() / "labels.csv");
    FAIL() << "expected an error";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
}

TEST(Ingest, MicroCorpusHas24PairsInIdOrder) {
  const fs::path root = fs::path(PATCHLAB_DATA_DIR) / "microcorpus";
  const auto r = ingest_pairs(root / "pairs", root / "labels.csv");
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(root / "pairs")) files += e.path().stem().string().ends_with("_vuln");
  EXPECT_EQ(r.corpus.size(), files);
  EXPECT_EQ(r.corpus.size(), 24u);
  EXPECT_TRUE(std::is_sorted(r.corpus.pairs.begin(), r.corpus.pairs.end(),
                             [](const auto& a, const auto& b) { return a.id < b.id; }));
  for (const auto& p : r.corpus.pairs) {
    EXPECT_NE(p.vulnerable_source, p.repaired_source) << p.id;
    EXPECT_TRUE(is_valid_cwe(p.cwe)) << p.id;
  }
}

TEST(MakeCorpus, RejectsIdenticalSidesAndBadLabels) {
  EXPECT_THROW(make_corpus({{"a", "x", "x", "CWE-1", LanguageTag::c}}), InputError);
  EXPECT_THROW(make_corpus({{"a", "x", "y", "CWE-", LanguageTag::c}}), InputError);
  EXPECT_THROW(make_corpus({{"a", "x", "y", "CWE-1", LanguageTag::c}, {"a", "p", "q", "CWE-2", LanguageTag::c}}),
               InputError);
}

TEST(CweLabel, Pattern) {
  EXPECT_TRUE(is_valid_cwe("CWE-121"));
  EXPECT_FALSE(is_valid_cwe("CWE121"));
  EXPECT_FALSE(is_valid_cwe("cwe-121"));
  EXPECT_FALSE(is_valid_cwe("CWE-12a"));
}

TEST(Split, ExactDivisionSizes) {
  auto s = split_ids(numbered_ids(100), {0.8, 0.1, 0.1}, 7);
  EXPECT_EQ(s.train.size(), 80u);
  EXPECT_EQ(s.validation.size(), 10u);
  EXPECT_EQ(s.test.size(), 10u);
  s = split_ids(numbered_ids(10), {0.8, 0.1, 0.1}, 7);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.validation.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(Split, RemainderGoesToTest) {
  const auto s = split_ids(numbered_ids(7), {0.5, 0.25, 0.25}, 1);
  EXPECT_EQ(s.train.size(), 3u);
  EXPECT_EQ(s.validation.size(), 1u);
  EXPECT_EQ(s.test.size(), 3u);
}

TEST(Split, Deterministic) {
  const auto a = split_ids(numbered_ids(50), {0.8, 0.1, 0.1}, 99);
  const auto b = split_ids(numbered_ids(50), {0.8, 0.1, 0.1}, 99);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.validation, b.validation);
  EXPECT_EQ(a.test, b.test);
}

TEST(Split, BadRatiosThrow) {
  EXPECT_THROW(split_ids(numbered_ids(5), {0.8, 0.1, 0.2}, 1), InputError);
  EXPECT_THROW(split_ids(numbered_ids(5), {1.2, -0.1, -0.1}, 1), InputError);
  EXPECT_THROW(split_ids({}, {0.8, 0.1, 0.1}, 1), InputError);
}

TEST(SplitProperty, DisjointAndExhaustiveOnRandomInputs) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_index(60));
    double a = rng.uniform01(), b = rng.uniform01() * (1 - a);
    const SplitRatios r{a, b, 1.0 - a - b};
    const auto ids = numbered_ids(n);
    const std::uint64_t seed = rng.next();
    const auto s = split_ids(ids, r, seed);
    std::multiset<std::string> all(s.train.begin(), s.train.end());
    all.insert(s.validation.begin(), s.validation.end());
    all.insert(s.test.begin(), s.test.end());
    EXPECT_EQ(all, std::multiset<std::string>(ids.begin(), ids.end()));
    EXPECT_EQ(s.train.size(), static_cast<std::size_t>(std::floor(n * r.train)));
    // The id set, not its order, determines the split.
    auto shuffled = ids;
    rng.shuffle(shuffled);
    EXPECT_EQ(split_ids(shuffled, r, seed).train, s.train);
  }
}

TEST(Histogram, CountsAndOrder) {
  const auto c = make_corpus({{"a", "1", "2", "CWE-121", LanguageTag::c},
                              {"b", "1", "2", "CWE-78", LanguageTag::c},
                              {"c", "1", "2", "CWE-121", LanguageTag::c}});
  const auto h = cwe_histogram(c);
  ASSERT_EQ(h.size(), 2u);
  EXPECT_EQ(h[0], CweCount("CWE-121", 2));
  EXPECT_EQ(h[1], CweCount("CWE-78", 1));
  EXPECT_TRUE(cwe_histogram(Corpus{}).empty());
}

TEST(Histogram, TiesByCweAscendingAndConservation) {
  const fs::path root = fs::path(PATCHLAB_DATA_DIR) / "microcorpus";
  const auto c = ingest_pairs(root / "pairs", root / "labels.csv").corpus;
  const auto h = cwe_histogram(c);
  std::size_t total = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    total += h[i].second;
    if (i > 0) {
      EXPECT_TRUE(h[i - 1].second > h[i].second ||
                  (h[i - 1].second == h[i].second && h[i - 1].first < h[i].first));
    }
  }
  EXPECT_EQ(total, c.size());
}
