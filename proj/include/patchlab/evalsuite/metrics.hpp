#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "patchlab/reward/embedding.hpp"
#include "patchlab/reward/semantic.hpp"

namespace patchlab::evalsuite {

using Tokens = std::vector<std::string>;

// Identifier-like runs ([A-Za-z0-9_] plus non-ASCII bytes) and single
// punctuation characters; whitespace separates and is dropped.
Tokens tokenize_code(std::string_view text);

// Sentence BLEU with uniform weights over n = 1..min(max_n, |candidate|).
// Add-one smoothing, when on, applies to every order.
double bleu(const Tokens& candidate, const Tokens& reference, int max_n = 4, bool smoothing = false);

std::size_t lcs_length(const Tokens& a, const Tokens& b);

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

// F = (1 + beta^2) P R / (R + beta^2 P).
RougeScore rouge_l(const Tokens& candidate, const Tokens& reference, double beta = 1.0);

// Mean-pooled token embeddings compared by normalized inner product.
double pooled_cosine(const reward::Mat& candidate, const reward::Mat& reference);
double cosine_similarity(std::string_view candidate, std::string_view reference,
                         const reward::EmbeddingProvider& provider);

reward::SemanticScore greedy_match_score(std::string_view candidate, std::string_view reference,
                                         const reward::EmbeddingProvider& provider);

// Trailing whitespace is ignored.
int exact_match(std::string_view candidate, std::string_view reference);

struct ClassificationMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double acc_vul = 0.0;
  double acc_ben = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t malformed = 0;  // predictions other than exact YES / NO
};

// Labels must be YES or NO. A malformed prediction is wrong for both
// restricted accuracies and counts as NO in the confusion matrix.
ClassificationMetrics classification_metrics(const std::vector<std::string>& predictions,
                                             const std::vector<std::string>& labels);

}  // namespace patchlab::evalsuite
