#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "patchlab/tinylm/model.hpp"

namespace patchlab::tinylm {

struct DecodeConfig {
  double temperature = 0.5;
  double top_p = 1.0;
  std::size_t beam_size = 4;
  std::size_t max_new_tokens = 128;
  std::uint64_t seed = 0;  // sampling only

  void validate() const;
  bool greedy() const { return beam_size == 1 && temperature == 0.0; }
  bool sampling() const { return beam_size == 1 && temperature > 0.0; }
};

// Incremental next-token distribution after a prefix.
class DecodeState {
 public:
  virtual ~DecodeState() = default;
  virtual RowVec logits() const = 0;
  virtual void push(TokenId token) = 0;
  virtual std::unique_ptr<DecodeState> clone() const = 0;
  // Remaining room for new tokens.
  virtual std::size_t capacity() const = 0;
};

class LogitSource {
 public:
  virtual ~LogitSource() = default;
  virtual std::unique_ptr<DecodeState> start(std::span<const TokenId> prompt) const = 0;
  virtual TokenId eos() const = 0;
  // Tokens never emitted.
  virtual std::vector<TokenId> banned() const { return {}; }
};

class ModelLogitSource : public LogitSource {
 public:
  explicit ModelLogitSource(const Model& model) : model_(&model) {}
  std::unique_ptr<DecodeState> start(std::span<const TokenId> prompt) const override;
  TokenId eos() const override { return Tokenizer::kEos; }
  std::vector<TokenId> banned() const override {
    return {Tokenizer::kPad, Tokenizer::kBos, Tokenizer::kSep};
  }

 private:
  const Model* model_;
};

struct Generation {
  std::vector<TokenId> ids;  // new tokens, EOS excluded
  double score = 0.0;        // cumulative log-probability under the scoring distribution
  bool finished = false;     // true when EOS was produced
};

// Dispatches on the config: greedy, sampling, or beam search.
Generation generate(const LogitSource& source, std::span<const TokenId> prompt,
                    const DecodeConfig& cfg);
Generation generate(const Model& model, std::span<const TokenId> prompt, const DecodeConfig& cfg);

Generation greedy_decode(const LogitSource& source, std::span<const TokenId> prompt,
                         std::size_t max_new_tokens);
Generation sample_decode(const LogitSource& source, std::span<const TokenId> prompt,
                         const DecodeConfig& cfg);
// Scores are log_softmax(logits / T) for T > 0 and log_softmax(logits) at T = 0.
Generation beam_search(const LogitSource& source, std::span<const TokenId> prompt,
                       const DecodeConfig& cfg);

// log_softmax(logits / T) with banned ids removed; T = 0 scores at T = 1.
RowVec next_token_log_probs(const RowVec& logits, double temperature,
                            const std::vector<TokenId>& banned);

// Strict ordering used to pick among finished hypotheses: higher score, then
// shorter, then lexicographically smaller ids.
bool better_hypothesis(const Generation& a, const Generation& b);

}  // namespace patchlab::tinylm
