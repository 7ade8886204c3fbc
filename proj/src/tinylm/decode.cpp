#include "patchlab/tinylm/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "patchlab/error.hpp"
#include "patchlab/rng.hpp"

namespace patchlab::tinylm {

void DecodeConfig::validate() const {
  if (!(temperature >= 0.0 && temperature <= 2.0)) throw InputError("temperature must be in [0, 2]");
  if (!(top_p >= 0.0 && top_p <= 1.0)) throw InputError("top_p must be in [0, 1]");
  if (beam_size < 1) throw InputError("beam_size must be at least 1");
}

namespace {

class ModelState : public DecodeState {
 public:
  explicit ModelState(Model::Session s, std::size_t context)
      : session_(std::move(s)), context_(context) {}
  RowVec logits() const override { return session_.logits(); }
  void push(TokenId token) override { session_.push(token); }
  std::unique_ptr<DecodeState> clone() const override {
    return std::make_unique<ModelState>(*this);
  }
  std::size_t capacity() const override { return context_ - session_.length(); }

 private:
  Model::Session session_;
  std::size_t context_;
};

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

RowVec log_softmax(const RowVec& logits, double temperature) {
  const RowVec z = temperature > 0.0 ? RowVec(logits / temperature) : logits;
  const double mx = z.maxCoeff();
  if (!std::isfinite(mx)) throw NumericError("decoder produced non-finite logits");
  const double lse = mx + std::log((z.array() - mx).exp().sum());
  return z.array() - lse;
}

void apply_bans(RowVec& logits, const std::vector<TokenId>& banned) {
  for (TokenId b : banned) {
    if (b >= 0 && b < logits.size()) logits(b) = kNegInf;
  }
}

TokenId argmax(const RowVec& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return static_cast<TokenId>(best);
}

}  // namespace

RowVec next_token_log_probs(const RowVec& logits, double temperature,
                            const std::vector<TokenId>& banned) {
  RowVec z = logits;
  apply_bans(z, banned);
  return log_softmax(z, temperature);
}

std::unique_ptr<DecodeState> ModelLogitSource::start(std::span<const TokenId> prompt) const {
  if (prompt.empty()) throw InputError("prompt must not be empty");
  const auto context = static_cast<std::size_t>(model_->config().context);
  if (prompt.size() > context) throw InputError("prompt does not fit the context");
  auto session = model_->start_session();
  for (TokenId t : prompt) session.push(t);
  return std::make_unique<ModelState>(std::move(session), context);
}

bool better_hypothesis(const Generation& a, const Generation& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.ids.size() != b.ids.size()) return a.ids.size() < b.ids.size();
  return a.ids < b.ids;
}

Generation greedy_decode(const LogitSource& source, std::span<const TokenId> prompt,
                         std::size_t max_new_tokens) {
  auto state = source.start(prompt);
  const auto banned = source.banned();
  Generation g;
  while (g.ids.size() < max_new_tokens) {
    RowVec logits = state->logits();
    apply_bans(logits, banned);
    const RowVec logp = log_softmax(logits, 0.0);
    const TokenId next = argmax(logp);
    g.score += logp(next);
    if (next == source.eos()) {
      g.finished = true;
      break;
    }
    g.ids.push_back(next);
    if (g.ids.size() == max_new_tokens || state->capacity() == 0) break;
    state->push(next);
  }
  return g;
}

Generation sample_decode(const LogitSource& source, std::span<const TokenId> prompt,
                         const DecodeConfig& cfg) {
  cfg.validate();
  auto state = source.start(prompt);
  const auto banned = source.banned();
  Rng rng(cfg.seed);
  Generation g;
  while (g.ids.size() < cfg.max_new_tokens) {
    RowVec logits = state->logits();
    apply_bans(logits, banned);
    const RowVec logp = log_softmax(logits, cfg.temperature);

    // Nucleus: smallest prefix of the sorted distribution reaching top_p.
    std::vector<TokenId> order(static_cast<std::size_t>(logp.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](TokenId a, TokenId b) { return logp(a) > logp(b); });
    std::size_t keep = 0;
    double mass = 0.0;
    while (keep < order.size()) {
      mass += std::exp(logp(order[keep]));
      ++keep;
      if (mass >= cfg.top_p) break;
    }
    double u = rng.uniform01() * mass;
    TokenId next = order[keep - 1];
    for (std::size_t i = 0; i < keep; ++i) {
      u -= std::exp(logp(order[i]));
      if (u < 0.0) {
        next = order[i];
        break;
      }
    }
    g.score += logp(next);
    if (next == source.eos()) {
      g.finished = true;
      break;
    }
    g.ids.push_back(next);
    if (g.ids.size() == cfg.max_new_tokens || state->capacity() == 0) break;
    state->push(next);
  }
  return g;
}

namespace {

struct Hypothesis {
  Generation gen;
  std::unique_ptr<DecodeState> state;  // state after gen.ids have been pushed
};

}  // namespace

Generation beam_search(const LogitSource& source, std::span<const TokenId> prompt,
                       const DecodeConfig& cfg) {
  cfg.validate();
  const auto banned = source.banned();
  const TokenId eos = source.eos();
  std::vector<Hypothesis> alive;
  alive.push_back({Generation{}, source.start(prompt)});
  std::vector<Generation> finished;

  struct Candidate {
    std::size_t parent;
    TokenId token;
    Generation gen;
  };

  for (std::size_t step = 0; step < cfg.max_new_tokens && !alive.empty(); ++step) {
    std::vector<Candidate> candidates;
    for (std::size_t h = 0; h < alive.size(); ++h) {
      RowVec logits = alive[h].state->logits();
      apply_bans(logits, banned);
      const RowVec logp = log_softmax(logits, cfg.temperature);
      for (Eigen::Index v = 0; v < logp.size(); ++v) {
        if (!std::isfinite(logp(v))) continue;
        Candidate c{h, static_cast<TokenId>(v), alive[h].gen};
        c.gen.score += logp(v);
        if (c.token == eos) {
          c.gen.finished = true;
        } else {
          c.gen.ids.push_back(c.token);
        }
        candidates.push_back(std::move(c));
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      if (a.gen.score != b.gen.score) return a.gen.score > b.gen.score;
      // Among equal scores an EOS extension is the shorter hypothesis.
      const std::size_t la = a.gen.ids.size() + (a.gen.finished ? 0 : 1);
      const std::size_t lb = b.gen.ids.size() + (b.gen.finished ? 0 : 1);
      if (la != lb) return la < lb;
      return a.gen.ids < b.gen.ids;
    });
    if (candidates.size() > cfg.beam_size) candidates.resize(cfg.beam_size);

    std::vector<Hypothesis> next;
    for (auto& c : candidates) {
      if (c.gen.finished) {
        finished.push_back(std::move(c.gen));
        continue;
      }
      const bool out_of_budget = c.gen.ids.size() == cfg.max_new_tokens ||
                                 alive[c.parent].state->capacity() == 0;
      if (out_of_budget) {
        finished.push_back(std::move(c.gen));
        continue;
      }
      auto state = alive[c.parent].state->clone();
      state->push(c.token);
      next.push_back({std::move(c.gen), std::move(state)});
    }
    alive = std::move(next);

    // Scores only decrease, so no live hypothesis can overtake the best finished one.
    if (!finished.empty() && !alive.empty()) {
      const auto best = std::min_element(finished.begin(), finished.end(), better_hypothesis);
      double best_alive = kNegInf;
      for (const auto& h : alive) best_alive = std::max(best_alive, h.gen.score);
      if (best->score >= best_alive) break;
    }
  }
  for (auto& h : alive) finished.push_back(std::move(h.gen));
  if (finished.empty()) return Generation{};
  return *std::min_element(finished.begin(), finished.end(), better_hypothesis);
}

Generation generate(const LogitSource& source, std::span<const TokenId> prompt,
                    const DecodeConfig& cfg) {
  cfg.validate();
  if (cfg.greedy()) return greedy_decode(source, prompt, cfg.max_new_tokens);
  if (cfg.sampling()) return sample_decode(source, prompt, cfg);
  return beam_search(source, prompt, cfg);
}

Generation generate(const Model& model, std::span<const TokenId> prompt, const DecodeConfig& cfg) {
  return generate(ModelLogitSource(model), prompt, cfg);
}

}  // namespace patchlab::tinylm
