#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "patchlab/tinylm/decode.hpp"
#include "patchlab/tinylm/model.hpp"
#include "patchlab/tinylm/optimizer.hpp"

namespace patchlab::rlloop {

using tinylm::Model;
using tinylm::TokenId;

struct ActionScores {
  std::vector<double> logprobs;  // one per action
  std::vector<double> values;    // value estimate at the state emitting each action
};

// A policy that can be sampled and can score a fixed continuation.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual const tinylm::LogitSource& source() const = 0;
  // Scores use the same distribution sampling draws from: temperature
  // scaling and the source's banned ids.
  virtual ActionScores score(std::span<const TokenId> prompt, std::span<const TokenId> actions,
                             double temperature) const = 0;
};

class ModelPolicy : public Policy {
 public:
  explicit ModelPolicy(const Model& model) : model_(&model), source_(model) {}
  const tinylm::LogitSource& source() const override { return source_; }
  ActionScores score(std::span<const TokenId> prompt, std::span<const TokenId> actions,
                     double temperature) const override;

 private:
  const Model* model_;
  tinylm::ModelLogitSource source_;
};

struct Sample {
  std::vector<TokenId> prompt;
  std::vector<TokenId> generated;  // decoded text tokens, EOS excluded
  std::vector<TokenId> actions;    // generated, plus EOS when it was emitted
  std::vector<double> logprobs;    // acting policy
  std::vector<double> ref_logprobs;
  std::vector<double> values;
  std::vector<double> kl;       // logprob - ref_logprob per action
  std::vector<double> rewards;  // shaped: -beta * kl, plus the terminal reward on the last action
  double terminal_reward = 0.0;
  std::vector<double> advantages;
  std::vector<double> returns;
};

struct RolloutBatch {
  std::vector<Sample> samples;
  double temperature = 1.0;

  std::size_t token_count() const;
  double mean_reward() const;  // mean terminal reward
  double mean_kl() const;      // mean per-action KL estimate
};

using RewardFn = std::function<double(std::span<const TokenId> prompt,
                                      std::span<const TokenId> generated)>;

struct PpoConfig {
  double clip = 0.2;
  double kl_coef = 0.02;
  double gamma = 1.0;
  double lambda = 0.95;
  std::size_t epochs = 4;
  std::size_t minibatch = 8;
  double lr = 1e-4;
  std::size_t iterations = 50;
  std::size_t rollouts = 8;  // samples per iteration
  double value_coef = 0.5;
  tinylm::DecodeConfig decode{1.0, 1.0, 1, 32, 0};
  std::uint64_t seed = 0;
  tinylm::AdamWConfig optimizer;

  void validate() const;
};

// Samples one continuation per prompt. Every sample keeps at least one
// action: an immediate EOS is a single-action sample.
RolloutBatch rollout(const Policy& policy, const Policy& reference,
                     const std::vector<std::vector<TokenId>>& prompts,
                     const tinylm::DecodeConfig& decode, const RewardFn& reward_fn, double kl_coef);

struct AdvantageReport {
  bool whitened = false;
  double mean = 0.0;    // before whitening
  double stddev = 0.0;  // before whitening
};

// GAE with V = 0 past the last action; returns = advantages + values before
// whitening. Whitening is skipped when the spread is degenerate.
AdvantageReport compute_advantages(RolloutBatch& batch, double gamma, double lambda,
                                   bool whiten = true);

// min(rho * A, clip(rho, 1 - eps, 1 + eps) * A)
double clipped_objective(double ratio, double advantage, double clip);

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double kl = 0.0;
  double clip_fraction = 0.0;
  std::size_t dropped = 0;  // samples with a non-finite ratio
  std::size_t minibatches = 0;
};

// cfg.epochs passes over the batch in shuffled minibatches, one optimizer
// step per minibatch. Stats average over every minibatch token.
PpoStats ppo_step(Model& policy, tinylm::AdamW& optimizer, const RolloutBatch& batch,
                  const PpoConfig& cfg, std::uint64_t shuffle_seed);

struct RlPoint {
  std::size_t iteration = 0;
  double mean_reward = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
};

struct RlResult {
  std::vector<RlPoint> curve;  // iterations 0..N; row N is an evaluation-only rollout
};

// When `checkpoint` is non-empty the policy is saved there after every
// iteration with a finite reward. On a non-finite reward the policy is
// restored to the last good parameters and NumericError is thrown.
RlResult train_rl(Model& policy, const Model& reference,
                  const std::vector<std::vector<TokenId>>& prompts, const RewardFn& reward_fn,
                  const PpoConfig& cfg, const std::filesystem::path& checkpoint = {});

void write_reward_curve(const std::filesystem::path& path, const std::vector<RlPoint>& curve);

}  // namespace patchlab::rlloop
