#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "patchlab/error.hpp"
#include "patchlab/reward/embedding.hpp"
#include "patchlab/reward/reward_model.hpp"
#include "patchlab/reward/semantic.hpp"
#include "patchlab/rng.hpp"
#include "patchlab/tinylm/tokenizer.hpp"

namespace fs = std::filesystem;
using namespace patchlab;
using namespace patchlab::reward;
using tinylm::ModelConfig;
using tinylm::Tokenizer;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 32;
  c.context = 48;
  c.init_std = 0.2;
  c.seed = 11;
  return c;
}

RowVec vec(std::initializer_list<double> v) {
  RowVec r(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) r(i++) = x;
  return r;
}

// Exhaustive pairwise-cosine table, then row and column maxima.
SemanticScore brute_force(const std::vector<RowVec>& cand, const std::vector<RowVec>& ref) {
  std::vector<std::vector<double>> cos(cand.size(), std::vector<double>(ref.size()));
  for (std::size_t i = 0; i < cand.size(); ++i) {
    for (std::size_t j = 0; j < ref.size(); ++j) {
      double dot = 0, na = 0, nb = 0;
      for (Eigen::Index k = 0; k < cand[i].size(); ++k) {
        dot += cand[i](k) * ref[j](k);
        na += cand[i](k) * cand[i](k);
        nb += ref[j](k) * ref[j](k);
      }
      cos[i][j] = dot / std::sqrt(na * nb);
    }
  }
  SemanticScore s;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    double best = -2;
    for (std::size_t j = 0; j < ref.size(); ++j) best = std::max(best, cos[i][j]);
    s.precision += best / static_cast<double>(cand.size());
  }
  for (std::size_t j = 0; j < ref.size(); ++j) {
    double best = -2;
    for (std::size_t i = 0; i < cand.size(); ++i) best = std::max(best, cos[i][j]);
    s.recall += best / static_cast<double>(ref.size());
  }
  s.f1 = s.precision + s.recall == 0 ? 0 : 2 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

}  // namespace

TEST(Embedding, ModelProviderUnitRowsAndDeterminism) {
  auto model = std::make_shared<const tinylm::Model>(small_config());
  const ModelEmbeddingProvider p(model);
  const auto ids = Tokenizer::encode("return x;");
  const Mat a = p.embed(ids);
  EXPECT_EQ(a.rows(), static_cast<Eigen::Index>(ids.size()));
  EXPECT_EQ(a, p.embed(ids));
  for (Eigen::Index r = 0; r < a.rows(); ++r) EXPECT_NEAR(a.row(r).norm(), 1.0, 1e-6);
  EXPECT_EQ(p.embed(std::vector<TokenId>{65}).rows(), 1);
}

TEST(Embedding, ContextOverflowThrows) {
  auto model = std::make_shared<const tinylm::Model>(small_config());
  const ModelEmbeddingProvider p(model);
  EXPECT_NO_THROW(p.embed(std::vector<TokenId>(p.max_tokens(), 65)));
  EXPECT_THROW(p.embed(std::vector<TokenId>(p.max_tokens() + 1, 65)), InputError);
}

TEST(Embedding, LayerSelectionAndNonNegativeOption) {
  auto model = std::make_shared<const tinylm::Model>(small_config());
  const auto ids = Tokenizer::encode("abc");
  const Mat last = ModelEmbeddingProvider(model, -1).embed(ids);
  const Mat first = ModelEmbeddingProvider(model, 0).embed(ids);
  EXPECT_GT((last - first).cwiseAbs().maxCoeff(), 1e-6);
  const Mat nn = ModelEmbeddingProvider(model, -1, true).embed(ids);
  EXPECT_GE(nn.minCoeff(), 0.0);
  const auto s = semantic_reward(ids, Tokenizer::encode("xyz"), ModelEmbeddingProvider(model, -1, true));
  EXPECT_GE(s.precision, 0.0);
  EXPECT_GE(s.recall, 0.0);
}

TEST(Embedding, StubFileLoadsAndNormalizes) {
  const fs::path path = fs::temp_directory_path() / "patchlab_stub_vectors.txt";
  std::ofstream(path) << "# id v1 v2\n1 3 4\n2 0 2\n";
  const auto p = StubEmbeddingProvider::load(path);
  EXPECT_EQ(p.dimension(), 2);
  const Mat m = p.embed(std::vector<TokenId>{1, 2});
  EXPECT_NEAR(m(0, 0), 0.6, 1e-12);
  EXPECT_NEAR(m(0, 1), 0.8, 1e-12);
  EXPECT_NEAR(m(1, 1), 1.0, 1e-12);
  EXPECT_THROW(p.embed(std::vector<TokenId>{3}), InputError);
  EXPECT_THROW(StubEmbeddingProvider::parse("1 1 0\n2 1\n"), InputError);
  fs::remove(path);
}

TEST(Semantic, SelfMatchIsOne) {
  auto model = std::make_shared<const tinylm::Model>(small_config());
  const ModelEmbeddingProvider p(model);
  const auto ids = Tokenizer::encode("if (n > 0) free(p);");
  const auto s = semantic_reward(ids, ids, p);
  EXPECT_NEAR(s.precision, 1.0, 1e-6);
  EXPECT_NEAR(s.recall, 1.0, 1e-6);
  EXPECT_NEAR(s.f1, 1.0, 1e-6);
}

TEST(Semantic, OrthogonalStubGivesZero) {
  const StubEmbeddingProvider p({{1, vec({1, 0, 0, 0})}, {2, vec({0, 1, 0, 0})},
                                 {3, vec({0, 0, 1, 0})}, {4, vec({0, 0, 0, 1})}});
  const auto s = semantic_reward(std::vector<TokenId>{1, 2}, std::vector<TokenId>{3, 4}, p);
  EXPECT_EQ(s.precision, 0.0);
  EXPECT_EQ(s.recall, 0.0);
  EXPECT_EQ(s.f1, 0.0);
}

TEST(Semantic, ThreeVersusTwoMatchesBruteForce) {
  const std::map<TokenId, RowVec> v{{1, vec({1, 0})}, {2, vec({1, 1})}, {3, vec({0, 1})},
                                    {4, vec({-1, 2})}, {5, vec({2, -1})}};
  const StubEmbeddingProvider p(v);
  const std::vector<TokenId> cand{1, 2, 3}, ref{4, 5};
  const auto s = semantic_reward(cand, ref, p);
  const auto o = brute_force({v.at(1), v.at(2), v.at(3)}, {v.at(4), v.at(5)});
  EXPECT_NEAR(s.precision, o.precision, 1e-12);
  EXPECT_NEAR(s.recall, o.recall, 1e-12);
  EXPECT_NEAR(s.f1, o.f1, 1e-12);
}

TEST(Semantic, EmptyInputThrows) {
  const StubEmbeddingProvider p({{1, vec({1, 0})}});
  EXPECT_THROW(semantic_reward(std::vector<TokenId>{}, std::vector<TokenId>{1}, p), InputError);
  EXPECT_THROW(semantic_reward(std::vector<TokenId>{1}, std::vector<TokenId>{}, p), InputError);
}

TEST(Semantic, RecallForm) {
  SemanticScore s{0.2, 0.6, 0.3};
  EXPECT_EQ(scalar_reward(s), 0.3);
  EXPECT_EQ(scalar_reward(s, RewardForm::recall), 0.6);
}

TEST(SemanticProperty, BruteForceAndSwapSymmetryOnRandomStubs) {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    std::map<TokenId, RowVec> v;
    const int dim = 2 + static_cast<int>(rng.uniform_index(3));
    for (TokenId t = 0; t < 6; ++t) {
      RowVec r(dim);
      for (int k = 0; k < dim; ++k) r(k) = rng.normal();
      v[t] = r;
    }
    const StubEmbeddingProvider p(v);
    std::vector<TokenId> a(1 + rng.uniform_index(4)), b(1 + rng.uniform_index(4));
    for (auto& t : a) t = static_cast<TokenId>(rng.uniform_index(6));
    for (auto& t : b) t = static_cast<TokenId>(rng.uniform_index(6));
    std::vector<RowVec> va, vb;
    for (auto t : a) va.push_back(v.at(t));
    for (auto t : b) vb.push_back(v.at(t));
    const auto s = semantic_reward(a, b, p);
    const auto o = brute_force(va, vb);
    EXPECT_NEAR(s.precision, o.precision, 1e-12);
    EXPECT_NEAR(s.recall, o.recall, 1e-12);
    EXPECT_NEAR(s.f1, o.f1, 1e-12);
    const auto swapped = semantic_reward(b, a, p);
    EXPECT_EQ(swapped.precision, s.recall);
    EXPECT_EQ(swapped.recall, s.precision);
    EXPECT_EQ(swapped.f1, s.f1);
    EXPECT_GE(s.precision, -1.0 - 1e-12);
    EXPECT_LE(s.recall, 1.0 + 1e-12);
  }
}

TEST(RewardLoss, KnownValues) {
  EXPECT_NEAR(reward_model_loss(0.3, 0.3), -0.693147, 1e-6);
  EXPECT_NEAR(reward_model_loss(2.0, 0.0), -0.126928, 1e-5);
  EXPECT_LT(reward_model_loss(800.0, 0.0), 0.0 + 1e-300);
  EXPECT_GT(reward_model_loss(800.0, 0.0), -1e-12);
  EXPECT_NEAR(reward_model_loss(0.0, 800.0), -800.0, 1e-9);
}

TEST(RewardLossProperty, ComplementaryProbabilities) {
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.normal(0, 5), b = rng.normal(0, 5);
    EXPECT_NEAR(std::exp(reward_model_loss(a, b)) + std::exp(reward_model_loss(b, a)), 1.0, 1e-9);
  }
}

TEST(RewardModel, ZeroHeadScoresZeroAndIsDeterministic) {
  const tinylm::Model rm(small_config());
  const auto vul = Tokenizer::encode("strcpy(b,s);");
  const auto cand = Tokenizer::encode("strncpy(b,s,3);");
  EXPECT_EQ(reward_model_score(rm, vul, cand), 0.0);
  tinylm::Model trained = rm;
  trained.tensor("reward_head.w").setConstant(0.3);
  const double s = reward_model_score(trained, vul, cand);
  EXPECT_TRUE(std::isfinite(s));
  EXPECT_EQ(s, reward_model_score(trained, vul, cand));
}

TEST(RewardModel, SequenceLayoutAndOverflow) {
  const tinylm::Model rm(small_config());
  const auto seq = reward_sequence(rm, std::vector<TokenId>{1, 2}, std::vector<TokenId>{3});
  EXPECT_EQ(seq, (std::vector<TokenId>{Tokenizer::kBos, 1, 2, Tokenizer::kSep, 3}));
  EXPECT_THROW(reward_sequence(rm, std::vector<TokenId>(40, 1), std::vector<TokenId>(10, 2)), InputError);
}

TEST(RewardModel, SeparableTriplesReachFullAccuracy) {
  tinylm::Model rm(small_config());
  std::vector<RewardTriple> triples;
  const char* vul[] = {"gets(b);", "strcpy(d,s);", "printf(s);", "system(c);"};
  const char* fix[] = {"fgets(b,n,f);", "strncpy(d,s,n);", "printf(\"%s\",s);", "execv(p,a);"};
  const char* bad[] = {"gets(b)", "strcpy(d,s)", "printf(s)", "system(c)"};
  for (int i = 0; i < 4; ++i) {
    triples.push_back({Tokenizer::encode(vul[i]), Tokenizer::encode(fix[i]), Tokenizer::encode(bad[i])});
  }
  RewardTrainConfig cfg;
  cfg.epochs = 60;
  cfg.lr = 0.05;
  cfg.head_only = true;
  cfg.seed = 1;
  const auto r = train_reward_model(rm, triples, cfg);
  ASSERT_EQ(r.epochs.size(), 60u);
  EXPECT_EQ(r.epochs.back().accuracy, 1.0);
  EXPECT_EQ(pairwise_accuracy(rm, triples), 1.0);
  EXPECT_LT(r.epochs.back().loss, r.epochs.front().loss);

  // Same schedule, same result.
  tinylm::Model again(small_config());
  EXPECT_EQ(train_reward_model(again, triples, cfg).epochs.back().loss, r.epochs.back().loss);
}

TEST(RewardModel, ZeroEpochsLeavesHeadUnchanged) {
  tinylm::Model rm(small_config());
  const auto before = rm.params();
  RewardTrainConfig cfg;
  cfg.epochs = 0;
  train_reward_model(rm, {{{1}, {2}, {3}}}, cfg);
  EXPECT_EQ(rm.params(), before);
  EXPECT_THROW(train_reward_model(rm, {}, cfg), InputError);
}

TEST(Combined, Weights) {
  EXPECT_EQ(combined_reward(0.7, 3.0, {1, 0}), 0.7);
  EXPECT_EQ(combined_reward(0.7, 3.0, {0, 0}), 0.0);
  EXPECT_EQ(combined_reward(1.0, 0.0, {1, 1}), 1.0);
  EXPECT_NEAR(combined_reward(0.0, 100.0, {0, 2}), 2.0, 1e-12);
  EXPECT_THROW(combined_reward(0.5, 0.0, {-1, 0}), InputError);
}
