#pragma once

#include <span>

#include "patchlab/reward/embedding.hpp"

namespace patchlab::reward {

struct SemanticScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Which component is used as the scalar reward.
enum class RewardForm { f1, recall };

// Greedy matching over unit vectors: recall averages, over reference rows,
// the best cosine against any candidate row; precision the converse.
SemanticScore greedy_match(const Mat& candidate, const Mat& reference);

SemanticScore semantic_reward(std::span<const TokenId> candidate,
                              std::span<const TokenId> reference,
                              const EmbeddingProvider& provider);

double scalar_reward(const SemanticScore& score, RewardForm form = RewardForm::f1);

}  // namespace patchlab::reward
