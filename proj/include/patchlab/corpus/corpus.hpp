#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace patchlab::corpus {

enum class LanguageTag { c, cpp };

std::string to_string(LanguageTag tag);
LanguageTag language_from_extension(const std::string& ext);

// A vulnerable function, its repaired counterpart and the CWE label.
struct FunctionPair {
  std::string id;
  std::string vulnerable_source;
  std::string repaired_source;
  std::string cwe;
  LanguageTag language = LanguageTag::c;

  bool operator==(const FunctionPair&) const = default;
};

struct Provenance {
  std::filesystem::path source;
  std::string ingested_at;  // ISO-8601 UTC
};

struct Corpus {
  std::vector<FunctionPair> pairs;  // sorted by id
  Provenance provenance;

  const FunctionPair& at(const std::string& id) const;
  bool empty() const { return pairs.empty(); }
  std::size_t size() const { return pairs.size(); }
};

struct SkipReport {
  std::string id;
  std::string reason;
};

struct IngestResult {
  Corpus corpus;
  std::vector<SkipReport> skipped;
};

bool is_valid_cwe(const std::string& cwe);

// Reads `<id>_vuln.<ext>` / `<id>_fixed.<ext>` pairs from root_dir and the
// `id,CWE-N` label file. Skips are returned and echoed to stderr as
// `SKIP <id> <reason>`.
IngestResult ingest_pairs(const std::filesystem::path& root_dir,
                          const std::filesystem::path& labels);

// Builds a corpus from in-memory pairs, enforcing the FunctionPair
// invariants and sorting by id.
Corpus make_corpus(std::vector<FunctionPair> pairs, Provenance provenance = {});

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct SplitSet {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
  SplitRatios ratios;
};

SplitSet split(const Corpus& corpus, SplitRatios ratios, std::uint64_t seed);
SplitSet split_ids(std::vector<std::string> ids, SplitRatios ratios,
                   std::uint64_t seed);

using CweCount = std::pair<std::string, std::size_t>;

// Sorted by descending count, ties by CWE string ascending.
std::vector<CweCount> cwe_histogram(const Corpus& corpus);

std::string render_histogram(const std::vector<CweCount>& rows);

}  // namespace patchlab::corpus
