#include "patchlab/evalsuite/metrics.hpp"

#include <cctype>
#include <cmath>
#include <map>

#include "patchlab/error.hpp"
#include "patchlab/instructions/records.hpp"
#include "patchlab/tinylm/tokenizer.hpp"

namespace patchlab::evalsuite {

namespace {

bool is_word_byte(unsigned char c) {
  return std::isalnum(c) || c == '_' || c >= 0x80;
}

std::map<Tokens, std::size_t> ngram_counts(const Tokens& tokens, std::size_t n) {
  std::map<Tokens, std::size_t> counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                    tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

std::string_view rstrip(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

Tokens tokenize_code(std::string_view text) {
  Tokens out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (is_word_byte(c)) {
      const std::size_t start = i;
      while (i < text.size() && is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
      out.emplace_back(text.substr(start, i - start));
    } else {
      out.emplace_back(1, text[i]);
      ++i;
    }
  }
  return out;
}

double bleu(const Tokens& candidate, const Tokens& reference, int max_n, bool smoothing) {
  if (reference.empty()) throw InputError("bleu needs a non-empty reference");
  if (max_n < 1) throw InputError("bleu max_n must be at least 1");
  if (candidate.empty()) return 0.0;
  // Orders longer than the candidate have no n-grams to score; they are left
  // out of the mean rather than zeroing it.
  const int orders = std::min(max_n, static_cast<int>(candidate.size()));
  double log_sum = 0.0;
  for (int n = 1; n <= orders; ++n) {
    const auto cand = ngram_counts(candidate, static_cast<std::size_t>(n));
    const auto ref = ngram_counts(reference, static_cast<std::size_t>(n));
    std::size_t matched = 0;
    std::size_t total = 0;
    for (const auto& [gram, count] : cand) {
      total += count;
      const auto it = ref.find(gram);
      if (it != ref.end()) matched += std::min(count, it->second);
    }
    double p;
    if (smoothing) {
      p = static_cast<double>(matched + 1) / static_cast<double>(total + 1);
    } else {
      if (matched == 0) return 0.0;
      p = static_cast<double>(matched) / static_cast<double>(total);
    }
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return bp * std::exp(log_sum / orders);
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rouge_l(const Tokens& candidate, const Tokens& reference, double beta) {
  if (candidate.empty() || reference.empty()) throw InputError("rouge_l needs non-empty inputs");
  if (!(beta > 0.0)) throw InputError("rouge_l beta must be positive");
  RougeScore s;
  const std::size_t l = lcs_length(candidate, reference);
  if (l == 0) return s;
  s.precision = static_cast<double>(l) / static_cast<double>(candidate.size());
  s.recall = static_cast<double>(l) / static_cast<double>(reference.size());
  const double b2 = beta * beta;
  s.f = (1.0 + b2) * s.precision * s.recall / (s.recall + b2 * s.precision);
  return s;
}

double pooled_cosine(const reward::Mat& candidate, const reward::Mat& reference) {
  if (candidate.rows() == 0 || reference.rows() == 0) throw InputError("cosine needs non-empty inputs");
  const reward::RowVec a = candidate.colwise().mean();
  const reward::RowVec b = reference.colwise().mean();
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw NumericError("pooled embedding has zero norm");
  return a.dot(b) / (na * nb);
}

double cosine_similarity(std::string_view candidate, std::string_view reference,
                         const reward::EmbeddingProvider& provider) {
  const auto c = tinylm::Tokenizer::encode(candidate);
  const auto r = tinylm::Tokenizer::encode(reference);
  if (c.empty() || r.empty()) throw InputError("cosine_similarity needs non-empty texts");
  return pooled_cosine(provider.embed(c), provider.embed(r));
}

reward::SemanticScore greedy_match_score(std::string_view candidate, std::string_view reference,
                                         const reward::EmbeddingProvider& provider) {
  return reward::semantic_reward(tinylm::Tokenizer::encode(candidate),
                                 tinylm::Tokenizer::encode(reference), provider);
}

int exact_match(std::string_view candidate, std::string_view reference) {
  return rstrip(candidate) == rstrip(reference) ? 1 : 0;
}

ClassificationMetrics classification_metrics(const std::vector<std::string>& predictions,
                                             const std::vector<std::string>& labels) {
  if (predictions.size() != labels.size()) {
    throw InputError("classification_metrics: " + std::to_string(predictions.size()) +
                     " predictions for " + std::to_string(labels.size()) + " labels");
  }
  ClassificationMetrics m;
  std::size_t vul = 0, ben = 0, vul_right = 0, ben_right = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool label_yes = labels[i] == instructions::kYes;
    if (!label_yes && labels[i] != instructions::kNo) {
      throw InputError("label " + std::to_string(i) + " is '" + labels[i] + "', expected YES or NO");
    }
    const bool pred_yes = predictions[i] == instructions::kYes;
    const bool pred_no = predictions[i] == instructions::kNo;
    if (!pred_yes && !pred_no) ++m.malformed;
    if (label_yes) {
      ++vul;
      pred_yes ? ++m.tp : ++m.fn;
      if (pred_yes) ++vul_right;
    } else {
      ++ben;
      pred_yes ? ++m.fp : ++m.tn;
      if (pred_no) ++ben_right;
    }
  }
  const auto ratio = [](std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  m.accuracy = ratio(vul_right + ben_right, labels.size());
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.recall = ratio(m.tp, m.tp + m.fn);
  m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  m.acc_vul = ratio(vul_right, vul);
  m.acc_ben = ratio(ben_right, ben);
  return m;
}

}  // namespace patchlab::evalsuite
