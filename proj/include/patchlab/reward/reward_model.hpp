#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "patchlab/tinylm/model.hpp"
#include "patchlab/tinylm/optimizer.hpp"

namespace patchlab::reward {

using tinylm::Model;
using tinylm::TokenId;

// [BOS, f_vul, SEP, candidate]; throws when it exceeds the model context.
std::vector<TokenId> reward_sequence(const Model& rm, std::span<const TokenId> vulnerable,
                                     std::span<const TokenId> candidate);

// Reward head at the final position of reward_sequence.
double reward_model_score(const Model& rm, std::span<const TokenId> vulnerable,
                          std::span<const TokenId> candidate);

// log sigmoid(score_ref - score_gen); training maximizes it.
double reward_model_loss(double score_ref, double score_gen);

struct RewardTriple {
  std::vector<TokenId> vulnerable;
  std::vector<TokenId> repaired;   // reference repair
  std::vector<TokenId> generated;  // policy sample
};

struct RewardTrainConfig {
  double lr = 1e-3;
  std::size_t epochs = 3;
  std::size_t batch = 4;
  bool head_only = false;  // freeze the backbone, train the scalar head
  std::uint64_t seed = 0;
  tinylm::AdamWConfig optimizer;
};

struct RewardEpoch {
  std::size_t epoch = 0;
  double loss = 0.0;      // mean negative log sigmoid over triples
  double accuracy = 0.0;  // fraction with score_ref > score_gen after the epoch
};

struct RewardTrainResult {
  std::vector<RewardEpoch> epochs;
  double initial_accuracy = 0.0;
};

double pairwise_accuracy(const Model& rm, const std::vector<RewardTriple>& triples);

RewardTrainResult train_reward_model(Model& rm, const std::vector<RewardTriple>& triples,
                                     const RewardTrainConfig& cfg);

struct RewardWeights {
  double semantic = 1.0;
  double model = 0.0;
};

// w_s * semantic_f1 + w_r * tanh(rm_score)
double combined_reward(double semantic_f1, double rm_score, const RewardWeights& weights = {});

}  // namespace patchlab::reward
