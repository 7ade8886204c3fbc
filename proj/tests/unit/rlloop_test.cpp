#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "patchlab/error.hpp"
#include "patchlab/rlloop/marker_task.hpp"
#include "patchlab/rlloop/ppo.hpp"
#include "patchlab/rng.hpp"
#include "patchlab/tinylm/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace patchlab;
using namespace patchlab::rlloop;
using tinylm::DecodeState;
using tinylm::LogitSource;
using tinylm::RowVec;

namespace {

// Three-token vocabulary, the same next-token distribution at every step.
// Token 2 is EOS.
class IidSource : public LogitSource {
 public:
  explicit IidSource(std::array<double, 3> probs) : probs_(probs) {}

  class State : public DecodeState {
   public:
    explicit State(const IidSource* s) : src_(s) {}
    RowVec logits() const override {
      RowVec r(3);
      for (int i = 0; i < 3; ++i) r(i) = std::log(src_->probs_[static_cast<std::size_t>(i)]);
      return r;
    }
    void push(TokenId) override {}
    std::unique_ptr<DecodeState> clone() const override { return std::make_unique<State>(*this); }
    std::size_t capacity() const override { return 1000; }

   private:
    const IidSource* src_;
  };

  std::unique_ptr<DecodeState> start(std::span<const TokenId>) const override {
    return std::make_unique<State>(this);
  }
  TokenId eos() const override { return 2; }
  const std::array<double, 3>& probs() const { return probs_; }

 private:
  std::array<double, 3> probs_;
};

class IidPolicy : public Policy {
 public:
  explicit IidPolicy(std::array<double, 3> probs) : source_(probs) {}
  const LogitSource& source() const override { return source_; }
  ActionScores score(std::span<const TokenId>, std::span<const TokenId> actions, double) const override {
    ActionScores out;
    for (TokenId a : actions) {
      out.logprobs.push_back(std::log(source_.probs()[static_cast<std::size_t>(a)]));
      out.values.push_back(0.0);
    }
    return out;
  }

 private:
  IidSource source_;
};

tinylm::DecodeConfig sampling(std::size_t max_new, std::uint64_t seed) {
  tinylm::DecodeConfig d;
  d.temperature = 1.0;
  d.top_p = 1.0;
  d.beam_size = 1;
  d.max_new_tokens = max_new;
  d.seed = seed;
  return d;
}

tinylm::ModelConfig tiny_config() {
  tinylm::ModelConfig c;
  c.d_model = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 16;
  c.context = 32;
  c.init_std = 0.2;
  c.seed = 5;
  return c;
}

std::vector<std::vector<TokenId>> marker_prompts(std::size_t n) {
  std::vector<std::vector<TokenId>> out;
  for (const auto& ex : make_marker_task(n, 3)) out.push_back(marker_prompt(ex));
  return out;
}

double length_reward(std::span<const TokenId>, std::span<const TokenId> gen) {
  return static_cast<double>(gen.size()) / 6.0;
}

// Fraction of generated bytes equal to '0'.
double zeros_reward(std::span<const TokenId>, std::span<const TokenId> gen) {
  if (gen.empty()) return 0.0;
  double hits = 0;
  for (TokenId t : gen) hits += t == '0';
  return hits / static_cast<double>(gen.size());
}

PpoConfig small_ppo() {
  PpoConfig c;
  c.iterations = 3;
  c.rollouts = 4;
  c.minibatch = 2;
  c.epochs = 2;
  c.lr = 1e-2;
  c.decode = sampling(6, 0);
  c.seed = 21;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Rollout, ZeroBetaShapedRewardSumsToTerminal) {
  const IidPolicy pi({0.5, 0.3, 0.2});
  const IidPolicy ref({0.2, 0.2, 0.6});
  const auto batch = rollout(pi, ref, std::vector<std::vector<TokenId>>(20, {7}), sampling(8, 1),
                             [](auto, auto) { return 1.0; }, 0.0);
  for (const auto& s : batch.samples) {
    double total = 0;
    for (double r : s.rewards) total += r;
    EXPECT_DOUBLE_EQ(total, 1.0);
  }
  EXPECT_EQ(batch.mean_reward(), 1.0);
}

TEST(Rollout, IdenticalPoliciesHaveZeroKl) {
  const tinylm::Model m(tiny_config());
  const ModelPolicy a(m), b(m);
  const auto batch = rollout(a, b, marker_prompts(6), sampling(8, 4), zeros_reward, 0.02);
  for (const auto& s : batch.samples) {
    for (double k : s.kl) EXPECT_NEAR(k, 0.0, 1e-6);
    for (double lp : s.logprobs) EXPECT_LE(lp, 0.0);
    EXPECT_LE(s.generated.size(), 8u);
  }
}

TEST(Rollout, StubKlMatchesLogRatioTable) {
  const std::array<double, 3> p{0.5, 0.3, 0.2}, q{0.2, 0.2, 0.6};
  const IidPolicy pi(p), ref(q);
  const auto batch = rollout(pi, ref, std::vector<std::vector<TokenId>>(50, {7}), sampling(5, 9),
                             [](auto, auto) { return 0.5; }, 0.1);
  const double table[3] = {std::log(0.5 / 0.2), std::log(0.3 / 0.2), std::log(0.2 / 0.6)};
  for (const auto& s : batch.samples) {
    ASSERT_EQ(s.kl.size(), s.actions.size());
    for (std::size_t t = 0; t < s.actions.size(); ++t) {
      EXPECT_NEAR(s.kl[t], table[s.actions[t]], 1e-12);
      const double shaped = -0.1 * table[s.actions[t]] + (t + 1 == s.actions.size() ? 0.5 : 0.0);
      EXPECT_NEAR(s.rewards[t], shaped, 1e-12);
    }
  }
}

TEST(Rollout, ImmediateEosKeepsOneAction) {
  const IidPolicy pi({1e-12, 1e-12, 1.0});
  const auto batch = rollout(pi, pi, {{7}}, sampling(5, 2), [](auto, auto gen) {
    return gen.empty() ? -1.0 : 1.0;
  }, 0.02);
  ASSERT_EQ(batch.samples.size(), 1u);
  EXPECT_TRUE(batch.samples[0].generated.empty());
  EXPECT_EQ(batch.samples[0].actions, (std::vector<TokenId>{2}));
  EXPECT_EQ(batch.samples[0].rewards.back(), -1.0);
}

TEST(Rollout, BeamDecodingRejected) {
  const IidPolicy pi({0.4, 0.4, 0.2});
  auto d = sampling(4, 1);
  d.beam_size = 2;
  EXPECT_THROW(rollout(pi, pi, {{7}}, d, zeros_reward, 0.0), InputError);
  d = sampling(4, 1);
  d.temperature = 0.0;
  EXPECT_THROW(rollout(pi, pi, {{7}}, d, zeros_reward, 0.0), InputError);
}

// Exact sequence-level KL by enumerating every sequence the sampler can emit.
TEST(KlProperty, ExactSequenceKlIsNonNegative) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    std::array<double, 3> p{}, q{};
    double sp = 0, sq = 0;
    for (int i = 0; i < 3; ++i) {
      p[i] = 0.05 + rng.uniform01();
      q[i] = 0.05 + rng.uniform01();
      sp += p[i];
      sq += q[i];
    }
    for (int i = 0; i < 3; ++i) {
      p[i] /= sp;
      q[i] /= sq;
    }
    const std::size_t max_new = 1 + rng.uniform_index(5);
    double kl = 0.0, mass = 0.0;
    // Sequences of non-EOS tokens of length L < max_new end in EOS; length
    // max_new stops without it.
    for (std::size_t len = 0; len <= max_new; ++len) {
      const std::size_t combos = std::size_t{1} << len;
      for (std::size_t bits = 0; bits < combos; ++bits) {
        double lp = 0, lq = 0;
        for (std::size_t t = 0; t < len; ++t) {
          const int tok = (bits >> t) & 1;
          lp += std::log(p[tok]);
          lq += std::log(q[tok]);
        }
        if (len < max_new) {
          lp += std::log(p[2]);
          lq += std::log(q[2]);
        }
        mass += std::exp(lp);
        kl += std::exp(lp) * (lp - lq);
      }
    }
    EXPECT_NEAR(mass, 1.0, 1e-9);
    EXPECT_GE(kl, -1e-12);
  }
}

TEST(KlProperty, MonteCarloSequenceKlTracksExactValue) {
  const std::array<double, 3> p{0.5, 0.3, 0.2}, q{0.2, 0.2, 0.6};
  const IidPolicy pi(p), ref(q);
  const std::size_t max_new = 3;
  double exact = 0.0;
  for (std::size_t len = 0; len <= max_new; ++len) {
    for (std::size_t bits = 0; bits < (std::size_t{1} << len); ++bits) {
      double lp = 0, lq = 0;
      for (std::size_t t = 0; t < len; ++t) {
        lp += std::log(p[(bits >> t) & 1]);
        lq += std::log(q[(bits >> t) & 1]);
      }
      if (len < max_new) {
        lp += std::log(p[2]);
        lq += std::log(q[2]);
      }
      exact += std::exp(lp) * (lp - lq);
    }
  }
  const auto batch = rollout(pi, ref, std::vector<std::vector<TokenId>>(20000, {7}),
                             sampling(max_new, 31), [](auto, auto) { return 0.0; }, 0.0);
  double mc = 0;
  for (const auto& s : batch.samples) {
    for (double k : s.kl) mc += k;
  }
  mc /= static_cast<double>(batch.samples.size());
  EXPECT_NEAR(mc, exact, 0.03);
}

TEST(Advantages, UnrolledRecursion) {
  RolloutBatch b;
  Sample s;
  s.actions = {1, 1, 1};
  s.values = {0, 0, 0};
  s.rewards = {0, 0, 1};
  b.samples.push_back(s);
  const auto rep = compute_advantages(b, 1.0, 1.0, false);
  EXPECT_EQ(b.samples[0].advantages, (std::vector<double>{1, 1, 1}));
  EXPECT_EQ(b.samples[0].returns, (std::vector<double>{1, 1, 1}));
  EXPECT_FALSE(rep.whitened);

  // gamma = 0.5, lambda = 0.5 with nonzero values, by hand:
  // d2 = 1 - 0.4 = 0.6; d1 = 0 + 0.5*0.4 - 0.2 = 0; d0 = 0 + 0.5*0.2 - 0.1 = 0
  // A2 = 0.6; A1 = 0 + 0.25*0.6 = 0.15; A0 = 0 + 0.25*0.15 = 0.0375
  b.samples[0].values = {0.1, 0.2, 0.4};
  compute_advantages(b, 0.5, 0.5, false);
  EXPECT_NEAR(b.samples[0].advantages[0], 0.0375, 1e-12);
  EXPECT_NEAR(b.samples[0].advantages[1], 0.15, 1e-12);
  EXPECT_NEAR(b.samples[0].advantages[2], 0.6, 1e-12);
  EXPECT_NEAR(b.samples[0].returns[2], 1.0, 1e-12);
}

TEST(Advantages, ZeroRewardsAndValuesGiveZero) {
  RolloutBatch b;
  for (int i = 0; i < 3; ++i) {
    Sample s;
    s.actions = {1, 2};
    s.values = {0, 0};
    s.rewards = {0, 0};
    b.samples.push_back(s);
  }
  const auto rep = compute_advantages(b, 1.0, 0.95);
  EXPECT_FALSE(rep.whitened);
  for (const auto& s : b.samples) EXPECT_EQ(s.advantages, (std::vector<double>{0, 0}));
}

TEST(Advantages, WhitenedMoments) {
  Rng rng(4);
  RolloutBatch b;
  for (int i = 0; i < 10; ++i) {
    Sample s;
    const std::size_t k = 1 + rng.uniform_index(6);
    for (std::size_t t = 0; t < k; ++t) {
      s.actions.push_back(1);
      s.values.push_back(rng.normal());
      s.rewards.push_back(rng.normal());
    }
    b.samples.push_back(s);
  }
  const auto rep = compute_advantages(b, 1.0, 0.95);
  EXPECT_TRUE(rep.whitened);
  double sum = 0, sq = 0, n = 0;
  for (const auto& s : b.samples) {
    for (double a : s.advantages) {
      sum += a;
      sq += a * a;
      ++n;
    }
  }
  EXPECT_NEAR(sum / n, 0.0, 1e-6);
  EXPECT_NEAR(sq / n - (sum / n) * (sum / n), 1.0, 1e-3);
}

TEST(Advantages, SingleTokenBatchSkipsWhitening) {
  RolloutBatch b;
  Sample s;
  s.actions = {2};
  s.values = {0.25};
  s.rewards = {1.0};
  b.samples.push_back(s);
  const auto rep = compute_advantages(b, 1.0, 0.95);
  EXPECT_FALSE(rep.whitened);
  EXPECT_DOUBLE_EQ(b.samples[0].advantages[0], 0.75);
}

TEST(Advantages, MissingValuesThrow) {
  RolloutBatch b;
  Sample s;
  s.actions = {1, 2};
  s.values = {0};
  s.rewards = {0, 1};
  b.samples.push_back(s);
  EXPECT_THROW(compute_advantages(b, 1.0, 0.95), InputError);
}

TEST(ClippedObjective, HandExamples) {
  EXPECT_NEAR(clipped_objective(1.5, 1.0, 0.2), 1.2, 1e-12);
  EXPECT_NEAR(clipped_objective(0.5, -1.0, 0.2), -0.8, 1e-12);
  EXPECT_NEAR(clipped_objective(1.0, 3.0, 0.2), 3.0, 1e-12);
  // Pessimistic side keeps the unclipped value.
  EXPECT_NEAR(clipped_objective(0.5, 1.0, 0.2), 0.5, 1e-12);
  EXPECT_NEAR(clipped_objective(1.5, -1.0, 0.2), -1.5, 1e-12);
}

TEST(ClippedObjectiveProperty, BoundedByUnclippedTerm) {
  Rng rng(99);
  for (int i = 0; i < 10000; ++i) {
    const double ratio = std::exp(rng.normal(0, 1));
    const double adv = rng.normal(0, 2);
    const double eps = 0.05 + 0.9 * rng.uniform01();
    EXPECT_LE(clipped_objective(ratio, adv, eps), ratio * adv + 1e-12);
  }
}

TEST(ClippedObjectiveProperty, FlatOutsideTrustRegion) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double eps = 0.05 + 0.5 * rng.uniform01();
    const double adv = 0.01 + rng.uniform01() * 5;
    const double ratio = 1.0 + eps + 1e-3 + rng.uniform01() * 3;
    const double h = 1e-6;
    const double fd = (clipped_objective(ratio + h, adv, eps) - clipped_objective(ratio - h, adv, eps)) / (2 * h);
    EXPECT_EQ(fd, 0.0);
  }
}

TEST(PpoStep, FreshRolloutsHaveUnitRatio) {
  tinylm::Model m(tiny_config());
  const tinylm::Model ref = m;
  const ModelPolicy pi(m), frozen(ref);
  auto batch = rollout(pi, frozen, marker_prompts(5), sampling(6, 8), length_reward, 0.02);
  compute_advantages(batch, 1.0, 0.95);
  double mean_adv = 0.0;
  for (const auto& s : batch.samples) {
    for (double a : s.advantages) mean_adv += a;
  }
  mean_adv /= static_cast<double>(batch.token_count());

  PpoConfig cfg = small_ppo();
  cfg.epochs = 1;
  cfg.minibatch = batch.samples.size();
  tinylm::AdamW opt(m.parameter_count(), cfg.optimizer);
  const auto before = m.params();
  const auto stats = ppo_step(m, opt, batch, cfg, 1);
  EXPECT_EQ(stats.clip_fraction, 0.0);
  EXPECT_EQ(stats.dropped, 0u);
  EXPECT_EQ(stats.minibatches, 1u);
  EXPECT_NEAR(stats.policy_loss, -mean_adv, 1e-9);
  EXPECT_NE(m.params(), before);
}

TEST(PpoStep, NonFiniteRatioDropsSample) {
  tinylm::Model m(tiny_config());
  const ModelPolicy pi(m);
  auto batch = rollout(pi, pi, marker_prompts(3), sampling(4, 8), zeros_reward, 0.0);
  compute_advantages(batch, 1.0, 0.95, false);
  batch.samples[0].logprobs[0] = -std::numeric_limits<double>::infinity();
  PpoConfig cfg = small_ppo();
  cfg.epochs = 1;
  tinylm::AdamW opt(m.parameter_count(), cfg.optimizer);
  const auto stats = ppo_step(m, opt, batch, cfg, 1);
  EXPECT_EQ(stats.dropped, 1u);
}

TEST(PpoConfig, Validation) {
  PpoConfig c;
  EXPECT_NO_THROW(c.validate());
  c.clip = 1.0;
  EXPECT_THROW(c.validate(), InputError);
  c = PpoConfig{};
  c.kl_coef = -0.1;
  EXPECT_THROW(c.validate(), InputError);
  c = PpoConfig{};
  c.decode.beam_size = 4;
  EXPECT_THROW(c.validate(), InputError);
}

TEST(TrainRl, ZeroIterationsKeepsSftParameters) {
  tinylm::Model m(tiny_config());
  const tinylm::Model ref = m;
  PpoConfig cfg = small_ppo();
  cfg.iterations = 0;
  const auto r = train_rl(m, ref, marker_prompts(4), length_reward, cfg);
  EXPECT_EQ(m.params(), ref.params());
  ASSERT_EQ(r.curve.size(), 1u);
  EXPECT_EQ(r.curve[0].iteration, 0u);
}

TEST(TrainRl, EqualSeedsGiveByteIdenticalCurves) {
  const fs::path dir = fs::temp_directory_path() / "patchlab_rl_curves";
  fs::create_directories(dir);
  const tinylm::Model ref(tiny_config());
  for (int run = 0; run < 2; ++run) {
    tinylm::Model m = ref;
    const auto r = train_rl(m, ref, marker_prompts(4), zeros_reward, small_ppo(),
                            dir / ("policy" + std::to_string(run) + ".ckpt"));
    EXPECT_EQ(r.curve.size(), 4u);
    write_reward_curve(dir / ("curve" + std::to_string(run) + ".csv"), r.curve);
  }
  const std::string a = slurp(dir / "curve0.csv");
  EXPECT_EQ(a, slurp(dir / "curve1.csv"));
  EXPECT_EQ(a.substr(0, a.find('\n')), "iteration,mean_reward,mean_kl,clip_fraction");
  EXPECT_EQ(slurp(dir / "policy0.ckpt"), slurp(dir / "policy1.ckpt"));
  fs::remove_all(dir);
}

TEST(TrainRl, NanRewardAbortsAndRestoresLastGood) {
  const tinylm::Model ref(tiny_config());
  tinylm::Model m = ref;
  int calls = 0;
  // Finite for the first batch, NaN afterwards.
  auto reward = [&](auto, auto) { return ++calls <= 4 ? 0.5 : std::nan(""); };
  const fs::path ckpt = fs::temp_directory_path() / "patchlab_rl_nan.ckpt";
  EXPECT_THROW(train_rl(m, ref, marker_prompts(4), reward, small_ppo(), ckpt), NumericError);
  // Iteration 0 was the last good one; its rollout preceded any update.
  EXPECT_EQ(m.params(), ref.params());
  const auto saved = tinylm::load_checkpoint(ckpt);
  EXPECT_EQ(saved.parameter_count(), ref.parameter_count());
  fs::remove(ckpt);
}

TEST(TrainRl, LargeKlCoefficientStaysCloserToReference) {
  const tinylm::Model ref(tiny_config());
  auto final_kl = [&](double beta) {
    tinylm::Model m = ref;
    PpoConfig cfg = small_ppo();
    cfg.kl_coef = beta;
    cfg.iterations = 20;
    cfg.rollouts = 8;
    cfg.lr = 2e-3;
    const auto curve = train_rl(m, ref, marker_prompts(8), length_reward, cfg).curve;
    double kl = 0;
    for (std::size_t i = curve.size() - 5; i < curve.size(); ++i) kl += curve[i].mean_kl / 5;
    return kl;
  };
  EXPECT_LT(final_kl(10.0), final_kl(0.0));
}
