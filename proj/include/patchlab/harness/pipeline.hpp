#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "patchlab/error.hpp"
#include "patchlab/evalsuite/report.hpp"
#include "patchlab/harness/config.hpp"

namespace patchlab::harness {

// A failure tagged with the pipeline stage that raised it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error("stage " + stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

template <typename F>
auto run_stage(const std::string& stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

// Output directory that remembers every file written through it.
class RunDirectory {
 public:
  explicit RunDirectory(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  // Registers `name` and returns its full path; the caller writes the file.
  std::filesystem::path file(const std::string& name);
  void write(const std::string& name, const std::string& content);
  const std::vector<std::string>& files() const { return files_; }

  // manifest.json: config hash, seed and the SHA-256 of every registered file.
  std::filesystem::path write_manifest(const std::string& config_hash, std::uint64_t seed);

 private:
  std::filesystem::path root_;
  std::vector<std::string> files_;
};

std::string config_hash(const RunConfig& cfg);

struct PreparedData {
  corpus::Corpus corpus;
  std::vector<corpus::SkipReport> skipped;
  instructions::DatasetBuild dataset;
  corpus::SplitSet split;
  std::vector<instructions::InstructionRecord> train;
  std::vector<instructions::InstructionRecord> validation;
  std::vector<instructions::InstructionRecord> test;
};

// ingest -> build-dataset -> split.
PreparedData prepare_data(const RunConfig& cfg);

std::string split_json(const corpus::SplitSet& split);

// New tokens allowed per task; identification needs only a verdict.
std::size_t generation_budget(instructions::Task task, const tinylm::DecodeConfig& decode);

struct EvalItem {
  std::string id;
  instructions::Task task;
  std::vector<tinylm::TokenId> prompt;
  std::string reference;
};

std::vector<EvalItem> make_eval_items(const std::vector<instructions::InstructionRecord>& records,
                                      const tinylm::ModelConfig& model,
                                      const tinylm::DecodeConfig& decode);

std::string generate_text(const tinylm::Model& model, const EvalItem& item,
                          const tinylm::DecodeConfig& decode);

struct Evaluation {
  evalsuite::MetricReport identify;
  evalsuite::MetricReport describe;
  evalsuite::MetricReport repair;
  std::vector<std::pair<std::string, std::string>> generations;  // id, text
};

// Decodes every item and scores it. `provider` backs the cosine and
// greedy-match metrics; pass nullptr to skip them.
Evaluation evaluate_policy(const tinylm::Model& model, const std::vector<EvalItem>& items,
                           const RunConfig& cfg, const reward::EmbeddingProvider* provider,
                           const std::string& label);

// One {"id", "output"} object per line.
std::string generations_jsonl(const std::vector<std::pair<std::string, std::string>>& generations);

// report_<slug>_<task>.json for each task plus generations_<slug>.jsonl.
void write_evaluation(RunDirectory& dir, const std::string& slug, const Evaluation& ev);

std::string render_evaluations(const std::vector<std::pair<std::string, Evaluation>>& runs);

// Model embeddings for texts of any length: inputs longer than the model
// context are embedded in consecutive windows, each with its own BOS.
class WindowedEmbeddingProvider : public reward::EmbeddingProvider {
 public:
  WindowedEmbeddingProvider(std::shared_ptr<const tinylm::Model> model, int layer = -1,
                            bool non_negative = false);
  reward::Mat embed(std::span<const tinylm::TokenId> ids) const override;
  int dimension() const override { return inner_.dimension(); }

 private:
  reward::ModelEmbeddingProvider inner_;
};

// The reward used during PPO: semantic score against the reference repair,
// optionally mixed with a learned reward model.
struct RewardContext {
  std::shared_ptr<const tinylm::Model> embedder;
  std::shared_ptr<const tinylm::Model> reward_model;  // may be null
  RewardConfig config;
};

struct RlTask {
  std::vector<std::vector<tinylm::TokenId>> prompts;
  std::vector<std::vector<tinylm::TokenId>> references;
  std::vector<std::vector<tinylm::TokenId>> inputs;  // the vulnerable code, for the reward model
};

RlTask make_rl_task(const std::vector<instructions::InstructionRecord>& records,
                    const tinylm::ModelConfig& model, std::size_t max_new_tokens);

rlloop::RewardFn make_reward_fn(const RlTask& task, const RewardContext& ctx);

// Reward-model triples from repair records, negatives sampled from `policy`.
std::vector<reward::RewardTriple> make_reward_triples(const tinylm::Model& policy,
                                                      const RlTask& task,
                                                      const tinylm::DecodeConfig& sampling);

struct SweepRow {
  double value = 0.0;
  double bleu = 0.0;
  double rouge_l = 0.0;
  double wall_seconds = 0.0;
  std::optional<double> normalized_time;  // beam axis only
  bool failed = false;
  std::string error;
};

struct SweepResult {
  std::string axis;
  std::vector<double> grid;
  std::vector<SweepRow> rows;
};

std::vector<double> default_grid(const std::string& axis);

// (t - min) / (max - min); all-equal input maps to zeros.
std::vector<double> normalize_times(const std::vector<double>& times);

SweepResult run_sweep(const std::string& axis, std::vector<double> grid, const tinylm::Model& model,
                      const std::vector<EvalItem>& eval_set, const RunConfig& cfg);

std::string sweep_csv(const SweepResult& result);

struct RunSummary {
  std::filesystem::path out;
  std::filesystem::path manifest;
  std::vector<std::string> files;
  std::string config_hash;
};

// ingest -> build-dataset -> split -> SFT -> (reward model) -> PPO -> evaluate.
// `log` receives one progress line per stage.
RunSummary end_to_end(const RunConfig& cfg, std::ostream* log = nullptr);

}  // namespace patchlab::harness
