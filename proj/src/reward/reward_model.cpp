#include "patchlab/reward/reward_model.hpp"

#include <cmath>
#include <numeric>

#include "patchlab/error.hpp"
#include "patchlab/rng.hpp"

namespace patchlab::reward {

std::vector<TokenId> reward_sequence(const Model& rm, std::span<const TokenId> vulnerable,
                                     std::span<const TokenId> candidate) {
  std::vector<TokenId> seq;
  seq.reserve(vulnerable.size() + candidate.size() + 2);
  seq.push_back(tinylm::Tokenizer::kBos);
  seq.insert(seq.end(), vulnerable.begin(), vulnerable.end());
  seq.push_back(tinylm::Tokenizer::kSep);
  seq.insert(seq.end(), candidate.begin(), candidate.end());
  if (seq.size() > static_cast<std::size_t>(rm.config().context)) {
    throw InputError("reward input of " + std::to_string(seq.size()) +
                     " tokens exceeds context " + std::to_string(rm.config().context));
  }
  return seq;
}

double reward_model_score(const Model& rm, std::span<const TokenId> vulnerable,
                          std::span<const TokenId> candidate) {
  const auto seq = reward_sequence(rm, vulnerable, candidate);
  const auto pass = rm.forward(seq);
  return pass.rewards(pass.rewards.size() - 1);
}

double reward_model_loss(double score_ref, double score_gen) {
  const double d = score_ref - score_gen;
  // log sigmoid(d) without overflow on either tail.
  return d >= 0.0 ? -std::log1p(std::exp(-d)) : d - std::log1p(std::exp(d));
}

double pairwise_accuracy(const Model& rm, const std::vector<RewardTriple>& triples) {
  if (triples.empty()) return 0.0;
  std::size_t wins = 0;
  for (const auto& t : triples) {
    if (reward_model_score(rm, t.vulnerable, t.repaired) >
        reward_model_score(rm, t.vulnerable, t.generated)) {
      ++wins;
    }
  }
  return static_cast<double>(wins) / static_cast<double>(triples.size());
}

namespace {

// Accumulates coef * d(score)/d(params) into grad.
void score_gradient(const Model& rm, const tinylm::ForwardPass& pass, double coef, bool head_only,
                    std::vector<double>& grad) {
  const auto last = static_cast<Eigen::Index>(pass.length()) - 1;
  if (head_only) {
    const auto& w = rm.layout().find("reward_head.w");
    for (int k = 0; k < w.rows; ++k) grad[w.offset + static_cast<std::size_t>(k)] += coef * pass.hidden(last, k);
    grad[rm.layout().find("reward_head.b").offset] += coef;
    return;
  }
  tinylm::Vec d_rewards = tinylm::Vec::Zero(static_cast<Eigen::Index>(pass.length()));
  d_rewards(last) = coef;
  rm.backward(pass, tinylm::Mat(), tinylm::Vec(), d_rewards, grad);
}

}  // namespace

RewardTrainResult train_reward_model(Model& rm, const std::vector<RewardTriple>& triples,
                                     const RewardTrainConfig& cfg) {
  if (triples.empty()) throw InputError("train_reward_model needs at least one triple");
  if (cfg.batch == 0) throw InputError("batch size must be positive");
  RewardTrainResult result;
  result.initial_accuracy = pairwise_accuracy(rm, triples);

  Rng rng(cfg.seed);
  tinylm::AdamW opt(rm.parameter_count(), cfg.optimizer);
  std::vector<double> grad(rm.parameter_count());
  std::vector<std::size_t> order(triples.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        const RewardTriple& t = triples[order[i]];
        const auto ref_pass = rm.forward(reward_sequence(rm, t.vulnerable, t.repaired));
        const auto gen_pass = rm.forward(reward_sequence(rm, t.vulnerable, t.generated));
        const double s_ref = ref_pass.rewards(ref_pass.rewards.size() - 1);
        const double s_gen = gen_pass.rewards(gen_pass.rewards.size() - 1);
        const double ll = reward_model_loss(s_ref, s_gen);
        if (!std::isfinite(ll)) {
          throw NumericError("non-finite reward-model loss at epoch " + std::to_string(epoch) +
                             " (scores " + std::to_string(s_ref) + ", " + std::to_string(s_gen) + ")");
        }
        loss_sum -= ll;
        // d(-log sigmoid(d))/dd = -(1 - sigmoid(d))
        const double g = -(1.0 - std::exp(ll)) * scale;
        score_gradient(rm, ref_pass, g, cfg.head_only, grad);
        score_gradient(rm, gen_pass, -g, cfg.head_only, grad);
      }
      opt.step(rm.params(), grad, cfg.lr);
    }
    result.epochs.push_back(
        {epoch, loss_sum / static_cast<double>(triples.size()), pairwise_accuracy(rm, triples)});
  }
  return result;
}

double combined_reward(double semantic_f1, double rm_score, const RewardWeights& weights) {
  if (weights.semantic < 0.0 || weights.model < 0.0) throw InputError("reward weights must be non-negative");
  return weights.semantic * semantic_f1 + weights.model * std::tanh(rm_score);
}

}  // namespace patchlab::reward
