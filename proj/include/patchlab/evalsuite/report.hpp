#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "patchlab/evalsuite/compile.hpp"
#include "patchlab/evalsuite/metrics.hpp"

namespace patchlab::evalsuite {

struct SampleScores {
  std::string id;
  double bleu = 0.0;
  double rouge_l = 0.0;
  double cosine = 0.0;
  double greedy_f1 = 0.0;
  double exact_match = 0.0;
};

struct GenerationMeans {
  double bleu = 0.0;
  double rouge_l = 0.0;
  double cosine = 0.0;
  double greedy_f1 = 0.0;
  double exact_match = 0.0;
};

struct MetricReport {
  std::string task;
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<SampleScores> samples;
  GenerationMeans means;
  std::optional<ClassificationMetrics> classification;
  std::optional<CompileTally> compile;
};

struct ScoringOptions {
  // The cosine and greedy-match metrics may use different providers.
  const reward::EmbeddingProvider* cosine_provider = nullptr;
  const reward::EmbeddingProvider* greedy_provider = nullptr;
  bool bleu_smoothing = true;
  double rouge_beta = 1.0;
};

GenerationMeans mean_scores(const std::vector<SampleScores>& samples);

// Per-sample BLEU, ROUGE-L F, cosine, greedy-match F1 and exact match.
// Embedding metrics are 0 when no provider is given or either text is empty.
std::vector<SampleScores> score_generations(const std::vector<std::string>& ids,
                                            const std::vector<std::string>& candidates,
                                            const std::vector<std::string>& references,
                                            const ScoringOptions& options);

std::string report_json(const MetricReport& report);

// Left-aligned first column, right-aligned numeric columns, two-space gaps.
std::string render_table(const std::vector<std::string>& header,
                         const std::vector<std::vector<std::string>>& rows);

std::string format_score(double v);

// Columns: Model, Acc, Pre, Rec, F1, Acc(Vul.), Acc(Ben)
std::string classification_table(
    const std::vector<std::pair<std::string, ClassificationMetrics>>& rows);
// Columns: Model, BLEU, Rouge-L, Cosine, CodeBERTScore-F1, Exact
std::string generation_table(const std::vector<std::pair<std::string, GenerationMeans>>& rows);
// One "n/N" cell per setting.
std::string tally_table(const std::vector<std::string>& settings,
                        const std::vector<std::pair<std::string, std::vector<CompileTally>>>& rows);

}  // namespace patchlab::evalsuite
