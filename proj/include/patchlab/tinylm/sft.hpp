#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "patchlab/instructions/records.hpp"
#include "patchlab/tinylm/model.hpp"
#include "patchlab/tinylm/optimizer.hpp"
#include "patchlab/tinylm/tokenizer.hpp"

namespace patchlab::tinylm {

enum class LossMask { output_only, all };

LossMask parse_loss_mask(const std::string& s);
std::string to_string(LossMask mask);

struct LossTerms {
  double sum = 0.0;       // summed negative log-likelihood, nats
  std::size_t count = 0;  // supervised positions

  double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
};

// Positions predicting the next token that the mask supervises. With
// output_only these are the positions from SEP up to the one predicting EOS.
std::size_t supervised_count(const TokenSequence& seq, LossMask mask);

// Cross-entropy of one sequence. When `grad` is non-null the gradient of
// `grad_scale * sum` is accumulated into it.
LossTerms sequence_loss(const Model& model, const TokenSequence& seq, LossMask mask,
                        std::vector<double>* grad = nullptr, double grad_scale = 1.0);

struct SftConfig {
  double lr = 3e-4;
  std::size_t batch = 8;
  std::size_t epochs = 3;
  LossMask loss_mask = LossMask::output_only;
  std::uint64_t seed = 0;
  AdamWConfig optimizer;
};

struct LossPoint {
  std::size_t epoch = 0;
  std::string split;  // "train" or "validation"
  double loss = 0.0;
};

struct SftResult {
  std::vector<LossPoint> curve;
  std::size_t steps = 0;
  std::vector<std::string> rejected;  // records whose output did not fit the context
  std::size_t truncated = 0;
};

SftResult sft_train(Model& model, const std::vector<TokenSequence>& train,
                    const std::vector<TokenSequence>& validation, const SftConfig& cfg);

// Builds sequences with the model's context, collecting rejections.
SftResult sft_train(Model& model, const std::vector<instructions::InstructionRecord>& train,
                    const std::vector<instructions::InstructionRecord>& validation,
                    const SftConfig& cfg);

void write_loss_curve(const std::filesystem::path& path, const std::vector<LossPoint>& curve);

}  // namespace patchlab::tinylm
