#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "patchlab/corpus/corpus.hpp"
#include "patchlab/evalsuite/compile.hpp"
#include "patchlab/instructions/dataset.hpp"
#include "patchlab/reward/reward_model.hpp"
#include "patchlab/reward/semantic.hpp"
#include "patchlab/rlloop/ppo.hpp"
#include "patchlab/tinylm/decode.hpp"
#include "patchlab/tinylm/model.hpp"
#include "patchlab/tinylm/sft.hpp"

namespace patchlab::harness {

struct PathConfig {
  std::filesystem::path corpus;  // directory of <id>_vuln / <id>_fixed files
  std::filesystem::path labels;
  std::filesystem::path seeds;
  std::filesystem::path out = "patchlab-run";
};

struct RewardConfig {
  reward::RewardWeights weights;
  reward::RewardForm form = reward::RewardForm::f1;
  int layer = -1;  // embedding layer of the frozen SFT model
  bool non_negative = false;
  bool train = false;  // also trained whenever weights.model > 0
  reward::RewardTrainConfig training;
};

struct EvalConfig {
  evalsuite::CheckMode mode = evalsuite::CheckMode::parse_only;
  std::string compiler_cmd = "gcc -fsyntax-only -x c";
  bool bleu_smoothing = true;
  double rouge_beta = 1.0;
};

struct SweepConfig {
  std::string axis = "temperature";
  std::vector<double> grid;  // empty selects the axis default
  std::size_t max_samples = 0;  // 0 means the whole evaluation split
};

// Every field has a default; the defaults run the bundled micro-corpus.
struct RunConfig {
  std::uint64_t seed = 1234;
  PathConfig paths;
  corpus::SplitRatios split;
  instructions::DatasetOptions dataset;
  tinylm::ModelConfig model;
  tinylm::SftConfig sft;
  RewardConfig reward;
  rlloop::PpoConfig ppo;
  tinylm::DecodeConfig decode;
  EvalConfig eval;
  SweepConfig sweep;

  RunConfig();
};

// Applies one `key = value` assignment; unknown keys and bad values throw
// InputError naming the key.
void set_value(RunConfig& cfg, const std::string& key, const std::string& value);

// Flat text: one `dotted.key = value` per line, `#` comments, blank lines.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin = "<memory>");
RunConfig load_config(const std::filesystem::path& path);

// Canonical rendering, sorted by key, without paths.out; the config hash is
// taken over this.
std::string render_config(const RunConfig& cfg);
std::vector<std::string> config_keys();

// Propagates the global seed into the per-stage seeds.
void derive_seeds(RunConfig& cfg);

}  // namespace patchlab::harness
