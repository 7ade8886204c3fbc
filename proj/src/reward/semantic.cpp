#include "patchlab/reward/semantic.hpp"

#include <limits>

#include "patchlab/error.hpp"

namespace patchlab::reward {

namespace {

double mean_best(const Mat& sims, bool over_rows) {
  // sims(i, j) = <candidate_i, reference_j>
  const Eigen::Index outer = over_rows ? sims.rows() : sims.cols();
  const Eigen::Index inner = over_rows ? sims.cols() : sims.rows();
  double total = 0.0;
  for (Eigen::Index a = 0; a < outer; ++a) {
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index b = 0; b < inner; ++b) {
      best = std::max(best, over_rows ? sims(a, b) : sims(b, a));
    }
    total += best;
  }
  return total / static_cast<double>(outer);
}

}  // namespace

SemanticScore greedy_match(const Mat& candidate, const Mat& reference) {
  if (candidate.rows() == 0 || reference.rows() == 0) {
    throw InputError("semantic similarity needs non-empty candidate and reference");
  }
  if (candidate.cols() != reference.cols()) throw InputError("embedding dimensions differ");
  // Explicit dot products, so swapping the arguments transposes the table exactly.
  Mat sims(candidate.rows(), reference.rows());
  for (Eigen::Index i = 0; i < candidate.rows(); ++i) {
    for (Eigen::Index j = 0; j < reference.rows(); ++j) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < candidate.cols(); ++k) s += candidate(i, k) * reference(j, k);
      sims(i, j) = s;
    }
  }
  SemanticScore out;
  out.precision = mean_best(sims, true);
  out.recall = mean_best(sims, false);
  const double denom = out.precision + out.recall;
  out.f1 = denom == 0.0 ? 0.0 : 2.0 * out.precision * out.recall / denom;
  return out;
}

SemanticScore semantic_reward(std::span<const TokenId> candidate,
                              std::span<const TokenId> reference,
                              const EmbeddingProvider& provider) {
  if (candidate.empty() || reference.empty()) {
    throw InputError("semantic_reward needs non-empty candidate and reference");
  }
  return greedy_match(provider.embed(candidate), provider.embed(reference));
}

double scalar_reward(const SemanticScore& score, RewardForm form) {
  return form == RewardForm::recall ? score.recall : score.f1;
}

}  // namespace patchlab::reward
