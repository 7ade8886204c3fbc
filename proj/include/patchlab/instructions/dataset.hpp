#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "patchlab/corpus/corpus.hpp"
#include "patchlab/instructions/augment.hpp"
#include "patchlab/instructions/records.hpp"

namespace patchlab::instructions {

struct DatasetOptions {
  bool obfuscate = true;
  bool rename_variables = false;
  bool strip_comments = true;
  std::uint64_t seed = 1234;
  AugmentationConfig augmentation;  // offline unless an endpoint is set
};

struct DatasetBuild {
  std::vector<InstructionRecord> records;
  // The pairs as the model sees them (renamed and comment-stripped).
  corpus::Corpus prepared;
  std::vector<std::string> warnings;
};

// Applies comment stripping and shared-map renaming to both sides of a pair.
corpus::FunctionPair prepare_pair(const corpus::FunctionPair& pair, const DatasetOptions& options);

// Emits, per pair in id order: identify (vulnerable), identify (fixed),
// describe, repair.
DatasetBuild build_dataset(const corpus::Corpus& corpus, const std::vector<SeedInstruction>& seeds,
                           const DatasetOptions& options);

std::vector<InstructionRecord> filter_records(const std::vector<InstructionRecord>& records,
                                              Task task);
std::vector<InstructionRecord> filter_by_pairs(const std::vector<InstructionRecord>& records,
                                               const std::vector<std::string>& pair_ids);

}  // namespace patchlab::instructions
