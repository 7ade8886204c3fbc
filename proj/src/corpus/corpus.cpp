#include "patchlab/corpus/corpus.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "patchlab/error.hpp"
#include "patchlab/rng.hpp"

namespace patchlab::corpus {

namespace fs = std::filesystem;

std::string to_string(LanguageTag tag) {
  return tag == LanguageTag::c ? "c" : "cpp";
}

LanguageTag language_from_extension(const std::string& ext) {
  if (ext == ".c" || ext == ".h") return LanguageTag::c;
  return LanguageTag::cpp;
}

const FunctionPair& Corpus::at(const std::string& id) const {
  auto it = std::lower_bound(
      pairs.begin(), pairs.end(), id,
      [](const FunctionPair& p, const std::string& key) { return p.id < key; });
  if (it == pairs.end() || it->id != id) {
    throw InputError("unknown pair id: " + id);
  }
  return *it;
}

bool is_valid_cwe(const std::string& cwe) {
  static const std::regex pattern("CWE-[0-9]+");
  return std::regex_match(cwe, pattern);
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::map<std::string, std::string> read_labels(const fs::path& labels) {
  std::ifstream in(labels);
  if (!in) throw InputError("cannot read label file " + labels.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto comma = t.find(',');
    const std::string where = labels.string() + ":" + std::to_string(lineno);
    if (comma == std::string::npos) {
      throw InputError(where + ": expected 'id,CWE-N'");
    }
    std::string id = trim(t.substr(0, comma));
    std::string cwe = trim(t.substr(comma + 1));
    if (id.empty() || !is_valid_cwe(cwe)) {
      throw InputError(where + ": malformed label line '" + t + "'");
    }
    if (!out.emplace(id, cwe).second) {
      throw InputError(where + ": duplicate id '" + id + "'");
    }
  }
  return out;
}

struct PairFiles {
  fs::path vuln;
  fs::path fixed;
};

}  // namespace

Corpus make_corpus(std::vector<FunctionPair> pairs, Provenance provenance) {
  std::sort(pairs.begin(), pairs.end(),
            [](const FunctionPair& a, const FunctionPair& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (i > 0 && pairs[i - 1].id == p.id) throw InputError("duplicate pair id: " + p.id);
    if (!is_valid_cwe(p.cwe)) throw InputError("pair " + p.id + ": bad CWE '" + p.cwe + "'");
    if (p.vulnerable_source == p.repaired_source) {
      throw InputError("pair " + p.id + ": vulnerable and repaired sources are identical");
    }
  }
  return Corpus{std::move(pairs), std::move(provenance)};
}

IngestResult ingest_pairs(const fs::path& root_dir, const fs::path& labels) {
  if (!fs::is_directory(root_dir)) {
    throw InputError("not a directory: " + root_dir.string());
  }
  const auto label_map = read_labels(labels);

  std::map<std::string, PairFiles> files;
  for (const auto& entry : fs::directory_iterator(root_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string stem = entry.path().stem().string();
    if (stem.size() > 5 && stem.ends_with("_vuln")) {
      files[stem.substr(0, stem.size() - 5)].vuln = entry.path();
    } else if (stem.size() > 6 && stem.ends_with("_fixed")) {
      files[stem.substr(0, stem.size() - 6)].fixed = entry.path();
    }
  }

  IngestResult result;
  std::vector<FunctionPair> pairs;
  for (const auto& [id, pf] : files) {
    std::string reason;
    if (pf.vuln.empty()) {
      reason = "missing _vuln counterpart";
    } else if (pf.fixed.empty()) {
      reason = "missing _fixed counterpart";
    } else if (!label_map.contains(id)) {
      reason = "no label";
    }
    FunctionPair pair;
    if (reason.empty()) {
      pair.id = id;
      pair.vulnerable_source = read_file(pf.vuln);
      pair.repaired_source = read_file(pf.fixed);
      pair.cwe = label_map.at(id);
      pair.language = language_from_extension(pf.vuln.extension().string());
      if (pair.vulnerable_source == pair.repaired_source) {
        reason = "vulnerable and repaired sources are identical";
      }
    }
    if (!reason.empty()) {
      std::cerr << "SKIP " << id << " " << reason << "\n";
      result.skipped.push_back({id, reason});
      continue;
    }
    pairs.push_back(std::move(pair));
  }
  for (const auto& [id, cwe] : label_map) {
    if (!files.contains(id)) {
      std::cerr << "SKIP " << id << " labelled but no source files\n";
      result.skipped.push_back({id, "labelled but no source files"});
    }
  }
  if (pairs.empty()) {
    throw InputError("no complete pairs found under " + root_dir.string());
  }
  result.corpus = make_corpus(std::move(pairs), Provenance{root_dir, utc_now()});
  return result;
}

SplitSet split_ids(std::vector<std::string> ids, SplitRatios ratios, std::uint64_t seed) {
  if (ids.empty()) throw InputError("cannot split an empty corpus");
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    throw InputError("split ratios must be non-negative and sum to 1");
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  Rng rng(seed);
  rng.shuffle(ids);

  const double n = static_cast<double>(ids.size());
  // A tiny epsilon keeps exact products such as 10 * 0.8 from flooring to 7.
  const auto n_train = static_cast<std::size_t>(std::floor(n * ratios.train + 1e-9));
  const auto n_val = std::min(ids.size() - n_train,
                              static_cast<std::size_t>(std::floor(n * ratios.validation + 1e-9)));
  SplitSet s;
  s.seed = seed;
  s.ratios = ratios;
  s.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.validation.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                      ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
  return s;
}

SplitSet split(const Corpus& corpus, SplitRatios ratios, std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(corpus.size());
  for (const auto& p : corpus.pairs) ids.push_back(p.id);
  return split_ids(std::move(ids), ratios, seed);
}

std::vector<CweCount> cwe_histogram(const Corpus& corpus) {
  std::map<std::string, std::size_t> counts;
  for (const auto& p : corpus.pairs) ++counts[p.cwe];
  std::vector<CweCount> rows(counts.begin(), counts.end());
  std::stable_sort(rows.begin(), rows.end(), [](const CweCount& a, const CweCount& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return rows;
}

std::string render_histogram(const std::vector<CweCount>& rows) {
  std::ostringstream out;
  out << "CWE Number\tCount\n";
  for (const auto& [cwe, count] : rows) out << cwe << "\t" << count << "\n";
  return out.str();
}

}  // namespace patchlab::corpus
