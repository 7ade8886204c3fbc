#include "patchlab/evalsuite/report.hpp"

#include <algorithm>
#include <cstdio>
#include <json.hpp>

#include "patchlab/error.hpp"

namespace patchlab::evalsuite {

using json = nlohmann::ordered_json;

GenerationMeans mean_scores(const std::vector<SampleScores>& samples) {
  GenerationMeans m;
  if (samples.empty()) return m;
  for (const auto& s : samples) {
    m.bleu += s.bleu;
    m.rouge_l += s.rouge_l;
    m.cosine += s.cosine;
    m.greedy_f1 += s.greedy_f1;
    m.exact_match += s.exact_match;
  }
  const double n = static_cast<double>(samples.size());
  m.bleu /= n;
  m.rouge_l /= n;
  m.cosine /= n;
  m.greedy_f1 /= n;
  m.exact_match /= n;
  return m;
}

std::vector<SampleScores> score_generations(const std::vector<std::string>& ids,
                                            const std::vector<std::string>& candidates,
                                            const std::vector<std::string>& references,
                                            const ScoringOptions& options) {
  if (ids.size() != candidates.size() || candidates.size() != references.size()) {
    throw InputError("score_generations: ids, candidates and references differ in length");
  }
  std::vector<SampleScores> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    SampleScores s;
    s.id = ids[i];
    const Tokens cand = tokenize_code(candidates[i]);
    const Tokens ref = tokenize_code(references[i]);
    if (!ref.empty()) s.bleu = bleu(cand, ref, 4, options.bleu_smoothing);
    if (!cand.empty() && !ref.empty()) s.rouge_l = rouge_l(cand, ref, options.rouge_beta).f;
    const bool texts = !candidates[i].empty() && !references[i].empty();
    if (texts && options.cosine_provider) {
      s.cosine = cosine_similarity(candidates[i], references[i], *options.cosine_provider);
    }
    if (texts && options.greedy_provider) {
      s.greedy_f1 = greedy_match_score(candidates[i], references[i], *options.greedy_provider).f1;
    }
    s.exact_match = exact_match(candidates[i], references[i]);
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

json means_json(const GenerationMeans& m) {
  return json{{"bleu", m.bleu},
              {"rouge_l", m.rouge_l},
              {"cosine", m.cosine},
              {"greedy_f1", m.greedy_f1},
              {"exact_match", m.exact_match}};
}

}  // namespace

std::string report_json(const MetricReport& report) {
  json j;
  j["task"] = report.task;
  json meta = json::object();
  for (const auto& [k, v] : report.metadata) meta[k] = v;
  j["metadata"] = std::move(meta);
  j["aggregates"] = means_json(report.means);
  if (report.classification) {
    const auto& c = *report.classification;
    j["classification"] = json{{"accuracy", c.accuracy}, {"precision", c.precision},
                               {"recall", c.recall},     {"f1", c.f1},
                               {"acc_vul", c.acc_vul},   {"acc_ben", c.acc_ben},
                               {"tp", c.tp},             {"fp", c.fp},
                               {"tn", c.tn},             {"fn", c.fn},
                               {"malformed", c.malformed}};
  }
  if (report.compile) {
    const auto& t = *report.compile;
    json samples = json::array();
    for (const auto& d : t.samples) {
      samples.push_back({{"index", d.index}, {"passed", d.passed}, {"detail", d.detail}});
    }
    j["compile"] = json{{"mode", to_string(t.mode)}, {"passed", t.passed}, {"total", t.total},
                        {"tally", t.render()},       {"warnings", t.warnings},
                        {"samples", std::move(samples)}};
  }
  json samples = json::array();
  for (const auto& s : report.samples) {
    samples.push_back({{"id", s.id},
                       {"bleu", s.bleu},
                       {"rouge_l", s.rouge_l},
                       {"cosine", s.cosine},
                       {"greedy_f1", s.greedy_f1},
                       {"exact_match", s.exact_match}});
  }
  j["samples"] = std::move(samples);
  // Generated text can hold arbitrary bytes.
  return j.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string render_table(const std::vector<std::string>& header,
                         const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& row : rows) {
    if (row.size() != header.size()) throw InputError("table row has the wrong number of cells");
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  auto emit = [&](const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string pad(width[c] - cells[c].size(), ' ');
      if (c > 0) line += "  ";
      line += c == 0 ? cells[c] + pad : pad + cells[c];
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  };
  emit(header);
  for (const auto& row : rows) emit(row);
  return out;
}

std::string classification_table(
    const std::vector<std::pair<std::string, ClassificationMetrics>>& rows) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& [name, m] : rows) {
    cells.push_back({name, format_score(m.accuracy), format_score(m.precision),
                     format_score(m.recall), format_score(m.f1), format_score(m.acc_vul),
                     format_score(m.acc_ben)});
  }
  return render_table({"Model", "Acc", "Pre", "Rec", "F1", "Acc(Vul.)", "Acc(Ben)"}, cells);
}

std::string generation_table(const std::vector<std::pair<std::string, GenerationMeans>>& rows) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& [name, m] : rows) {
    cells.push_back({name, format_score(m.bleu), format_score(m.rouge_l), format_score(m.cosine),
                     format_score(m.greedy_f1), format_score(m.exact_match)});
  }
  return render_table({"Model", "BLEU", "Rouge-L", "Cosine", "CodeBERTScore-F1", "Exact"}, cells);
}

std::string tally_table(const std::vector<std::string>& settings,
                        const std::vector<std::pair<std::string, std::vector<CompileTally>>>& rows) {
  std::vector<std::string> header{"Model"};
  header.insert(header.end(), settings.begin(), settings.end());
  std::vector<std::vector<std::string>> cells;
  for (const auto& [name, tallies] : rows) {
    if (tallies.size() != settings.size()) throw InputError("tally row for " + name + " has the wrong width");
    std::vector<std::string> row{name};
    for (const auto& t : tallies) row.push_back(t.render());
    cells.push_back(std::move(row));
  }
  return render_table(header, cells);
}

}  // namespace patchlab::evalsuite
