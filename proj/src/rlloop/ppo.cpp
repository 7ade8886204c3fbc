#include "patchlab/rlloop/ppo.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "patchlab/error.hpp"
#include "patchlab/rng.hpp"
#include "patchlab/tinylm/checkpoint.hpp"

namespace patchlab::rlloop {

namespace {

std::vector<TokenId> scoring_input(std::span<const TokenId> prompt, std::span<const TokenId> actions) {
  std::vector<TokenId> seq(prompt.begin(), prompt.end());
  seq.insert(seq.end(), actions.begin(), actions.end() - 1);
  return seq;
}

}  // namespace

ActionScores ModelPolicy::score(std::span<const TokenId> prompt, std::span<const TokenId> actions,
                                double temperature) const {
  ActionScores out;
  if (actions.empty()) return out;
  if (prompt.empty()) throw InputError("prompt must not be empty");
  const auto seq = scoring_input(prompt, actions);
  const auto pass = model_->forward(seq);
  const auto banned = source_.banned();
  for (std::size_t j = 0; j < actions.size(); ++j) {
    const auto pos = static_cast<Eigen::Index>(prompt.size() - 1 + j);
    const auto logp = tinylm::next_token_log_probs(pass.logits.row(pos), temperature, banned);
    out.logprobs.push_back(logp(actions[j]));
    out.values.push_back(pass.values(pos));
  }
  return out;
}

std::size_t RolloutBatch::token_count() const {
  std::size_t n = 0;
  for (const auto& s : samples) n += s.actions.size();
  return n;
}

double RolloutBatch::mean_reward() const {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) total += s.terminal_reward;
  return total / static_cast<double>(samples.size());
}

double RolloutBatch::mean_kl() const {
  const std::size_t n = token_count();
  if (n == 0) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) total += std::accumulate(s.kl.begin(), s.kl.end(), 0.0);
  return total / static_cast<double>(n);
}

void PpoConfig::validate() const {
  if (!(clip > 0.0 && clip < 1.0)) throw InputError("ppo clip must be in (0, 1)");
  if (!(kl_coef >= 0.0)) throw InputError("ppo kl_coef must be non-negative");
  if (!(gamma >= 0.0 && gamma <= 1.0) || !(lambda >= 0.0 && lambda <= 1.0)) {
    throw InputError("gamma and lambda must be in [0, 1]");
  }
  if (minibatch == 0 || rollouts == 0) throw InputError("minibatch and rollouts must be positive");
  if (!(lr > 0.0)) throw InputError("ppo learning rate must be positive");
  decode.validate();
  if (!decode.sampling()) {
    throw InputError("rollouts need sampling: beam_size 1 and temperature > 0");
  }
}

RolloutBatch rollout(const Policy& policy, const Policy& reference,
                     const std::vector<std::vector<TokenId>>& prompts,
                     const tinylm::DecodeConfig& decode, const RewardFn& reward_fn, double kl_coef) {
  if (!decode.sampling()) throw InputError("rollouts need sampling: beam_size 1 and temperature > 0");
  RolloutBatch batch;
  batch.temperature = decode.temperature;
  Rng seeds(decode.seed);
  const TokenId eos = policy.source().eos();
  for (const auto& prompt : prompts) {
    tinylm::DecodeConfig cfg = decode;
    cfg.seed = seeds.next();
    const tinylm::Generation gen = tinylm::sample_decode(policy.source(), prompt, cfg);

    Sample s;
    s.prompt = prompt;
    s.generated = gen.ids;
    s.actions = gen.ids;
    if (gen.finished || s.actions.empty()) s.actions.push_back(eos);
    const ActionScores mine = policy.score(prompt, s.actions, decode.temperature);
    const ActionScores ref = reference.score(prompt, s.actions, decode.temperature);
    s.logprobs = mine.logprobs;
    s.values = mine.values;
    s.ref_logprobs = ref.logprobs;
    s.terminal_reward = reward_fn(prompt, s.generated);
    const std::size_t k = s.actions.size();
    s.kl.resize(k);
    s.rewards.resize(k);
    for (std::size_t t = 0; t < k; ++t) {
      s.kl[t] = s.logprobs[t] - s.ref_logprobs[t];
      s.rewards[t] = -kl_coef * s.kl[t];
    }
    s.rewards[k - 1] += s.terminal_reward;
    batch.samples.push_back(std::move(s));
  }
  return batch;
}

AdvantageReport compute_advantages(RolloutBatch& batch, double gamma, double lambda, bool whiten) {
  AdvantageReport report;
  std::size_t n = 0;
  double sum = 0.0;
  for (auto& s : batch.samples) {
    const std::size_t k = s.actions.size();
    if (s.values.size() != k || s.rewards.size() != k) {
      throw InputError("sample is missing values or rewards for some actions");
    }
    s.advantages.assign(k, 0.0);
    s.returns.assign(k, 0.0);
    double next_adv = 0.0;
    for (std::size_t i = k; i-- > 0;) {
      const double next_value = i + 1 < k ? s.values[i + 1] : 0.0;
      const double delta = s.rewards[i] + gamma * next_value - s.values[i];
      next_adv = delta + gamma * lambda * next_adv;
      s.advantages[i] = next_adv;
      s.returns[i] = next_adv + s.values[i];
    }
    for (double a : s.advantages) sum += a;
    n += k;
  }
  if (n == 0) return report;
  report.mean = sum / static_cast<double>(n);
  double sq = 0.0;
  for (const auto& s : batch.samples) {
    for (double a : s.advantages) sq += (a - report.mean) * (a - report.mean);
  }
  report.stddev = std::sqrt(sq / static_cast<double>(n));
  if (!whiten || n < 2 || report.stddev < 1e-8) return report;
  for (auto& s : batch.samples) {
    for (double& a : s.advantages) a = (a - report.mean) / report.stddev;
  }
  report.whitened = true;
  return report;
}

double clipped_objective(double ratio, double advantage, double clip) {
  const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
  return std::min(ratio * advantage, clipped * advantage);
}

PpoStats ppo_step(Model& policy, tinylm::AdamW& optimizer, const RolloutBatch& batch,
                  const PpoConfig& cfg, std::uint64_t shuffle_seed) {
  PpoStats stats;
  if (batch.samples.empty()) return stats;
  const double temp = batch.temperature > 0.0 ? batch.temperature : 1.0;
  const tinylm::ModelLogitSource source(policy);
  const auto banned = source.banned();
  Rng rng(shuffle_seed);
  std::vector<std::size_t> order(batch.samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad(policy.parameter_count());
  std::size_t tokens_seen = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.minibatch) {
      const std::size_t stop = std::min(order.size(), start + cfg.minibatch);
      std::size_t tokens = 0;
      for (std::size_t i = start; i < stop; ++i) tokens += batch.samples[order[i]].actions.size();
      if (tokens == 0) continue;
      const double inv = 1.0 / static_cast<double>(tokens);
      std::fill(grad.begin(), grad.end(), 0.0);
      std::size_t used = 0;

      for (std::size_t i = start; i < stop; ++i) {
        const Sample& s = batch.samples[order[i]];
        if (s.advantages.size() != s.actions.size()) {
          throw InputError("ppo_step needs advantages; call compute_advantages first");
        }
        const auto seq = scoring_input(s.prompt, s.actions);
        const auto pass = policy.forward(seq);
        const std::size_t k = s.actions.size();
        tinylm::Mat d_logits = tinylm::Mat::Zero(pass.logits.rows(), pass.logits.cols());
        tinylm::Vec d_values = tinylm::Vec::Zero(pass.values.size());
        double pl = 0.0, vl = 0.0, kl = 0.0;
        std::size_t clipped = 0;
        bool finite = true;
        for (std::size_t j = 0; j < k && finite; ++j) {
          const auto pos = static_cast<Eigen::Index>(s.prompt.size() - 1 + j);
          const tinylm::RowVec logp = tinylm::next_token_log_probs(pass.logits.row(pos), batch.temperature, banned);
          const double lp = logp(s.actions[j]);
          const double ratio = std::exp(lp - s.logprobs[j]);
          if (!std::isfinite(ratio)) {
            finite = false;
            break;
          }
          const double adv = s.advantages[j];
          pl -= clipped_objective(ratio, adv, cfg.clip);
          if (std::abs(ratio - 1.0) > cfg.clip) ++clipped;
          kl += lp - s.ref_logprobs[j];
          // The min picks the unclipped term unless the ratio left the trust
          // region in the direction the advantage rewards.
          const bool flat = (adv > 0.0 && ratio > 1.0 + cfg.clip) || (adv < 0.0 && ratio < 1.0 - cfg.clip);
          if (!flat) {
            const double c = -ratio * adv * inv / temp;
            d_logits.row(pos) = -c * logp.array().exp();
            d_logits(pos, s.actions[j]) += c;
          }
          const double err = pass.values(pos) - s.returns[j];
          vl += err * err;
          d_values(pos) = cfg.value_coef * 2.0 * err * inv;
        }
        if (!finite) {
          ++stats.dropped;
          continue;
        }
        policy.backward(pass, d_logits, d_values, tinylm::Vec(), grad);
        stats.policy_loss += pl;
        stats.value_loss += vl;
        stats.kl += kl;
        stats.clip_fraction += static_cast<double>(clipped);
        tokens_seen += k;
        ++used;
      }
      if (used > 0) {
        optimizer.step(policy.params(), grad, cfg.lr);
        ++stats.minibatches;
      }
    }
  }
  if (tokens_seen > 0) {
    const double n = static_cast<double>(tokens_seen);
    stats.policy_loss /= n;
    stats.value_loss /= n;
    stats.kl /= n;
    stats.clip_fraction /= n;
  }
  return stats;
}

RlResult train_rl(Model& policy, const Model& reference,
                  const std::vector<std::vector<TokenId>>& prompts, const RewardFn& reward_fn,
                  const PpoConfig& cfg, const std::filesystem::path& checkpoint) {
  cfg.validate();
  if (prompts.empty()) throw InputError("train_rl needs at least one prompt");
  if (!(policy.config() == reference.config())) {
    throw InputError("policy and reference must share one architecture");
  }
  RlResult result;
  tinylm::AdamW optimizer(policy.parameter_count(), cfg.optimizer);
  Rng seeds(cfg.seed);
  const ModelPolicy acting(policy);
  const ModelPolicy frozen(reference);
  std::vector<double> last_good = policy.params();

  for (std::size_t it = 0; it <= cfg.iterations; ++it) {
    std::vector<std::vector<TokenId>> batch_prompts;
    for (std::size_t j = 0; j < cfg.rollouts; ++j) {
      batch_prompts.push_back(prompts[(it * cfg.rollouts + j) % prompts.size()]);
    }
    tinylm::DecodeConfig decode = cfg.decode;
    decode.seed = seeds.next();
    const std::uint64_t shuffle_seed = seeds.next();
    RolloutBatch batch = rollout(acting, frozen, batch_prompts, decode, reward_fn, cfg.kl_coef);

    RlPoint point{it, batch.mean_reward(), batch.mean_kl(), 0.0};
    if (!std::isfinite(point.mean_reward) || !std::isfinite(point.mean_kl)) {
      policy.params() = last_good;
      throw NumericError("reward collapsed to a non-finite value at iteration " + std::to_string(it) +
                         "; policy restored to the last good parameters");
    }
    last_good = policy.params();
    if (!checkpoint.empty()) tinylm::save_checkpoint(checkpoint, policy);
    if (it < cfg.iterations) {
      compute_advantages(batch, cfg.gamma, cfg.lambda);
      const PpoStats stats = ppo_step(policy, optimizer, batch, cfg, shuffle_seed);
      point.clip_fraction = stats.clip_fraction;
    }
    result.curve.push_back(point);
  }
  return result;
}

void write_reward_curve(const std::filesystem::path& path, const std::vector<RlPoint>& curve) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "iteration,mean_reward,mean_kl,clip_fraction\n";
  out.precision(10);
  for (const auto& p : curve) {
    out << p.iteration << ',' << p.mean_reward << ',' << p.mean_kl << ',' << p.clip_fraction << '\n';
  }
}

}  // namespace patchlab::rlloop
