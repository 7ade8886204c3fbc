#include "patchlab/instructions/dataset.hpp"

#include <algorithm>
#include <set>

#include "patchlab/codeprep/transforms.hpp"
#include "patchlab/rng.hpp"

namespace patchlab::instructions {

corpus::FunctionPair prepare_pair(const corpus::FunctionPair& pair, const DatasetOptions& options) {
  corpus::FunctionPair out = pair;
  if (options.strip_comments) {
    out.vulnerable_source = codeprep::strip_comments(out.vulnerable_source, out.language);
    out.repaired_source = codeprep::strip_comments(out.repaired_source, out.language);
  }
  if (options.obfuscate) {
    // Seed per pair so one pair's rename map does not depend on corpus order.
    std::uint64_t pair_seed = options.seed;
    for (unsigned char ch : pair.id) pair_seed = pair_seed * 1099511628211ULL ^ ch;
    auto joint = codeprep::obfuscate_together({out.vulnerable_source, out.repaired_source},
                                              pair_seed, options.rename_variables, out.language);
    out.vulnerable_source = std::move(joint.texts[0]);
    out.repaired_source = std::move(joint.texts[1]);
  }
  return out;
}

DatasetBuild build_dataset(const corpus::Corpus& corpus, const std::vector<SeedInstruction>& seeds,
                           const DatasetOptions& options) {
  DatasetBuild build;
  Rng rng(options.seed);
  std::vector<corpus::FunctionPair> prepared_pairs;
  for (const auto& original : corpus.pairs) {
    corpus::FunctionPair pair = prepare_pair(original, options);
    if (pair.vulnerable_source == pair.repaired_source) {
      build.warnings.push_back("pair " + pair.id + " differs only in comments; skipped");
      continue;
    }
    auto ident = assemble_identification(pair, seeds, rng);
    build.records.push_back(std::move(ident[0]));
    build.records.push_back(std::move(ident[1]));

    // Descriptions are drafted from the original text, where the comments live.
    DescriptionResult desc = augment_description(original, options.augmentation);
    build.warnings.insert(build.warnings.end(), desc.warnings.begin(), desc.warnings.end());
    build.records.push_back(assemble_description(pair, desc.text, seeds, rng));

    build.records.push_back(assemble_repair(pair, seeds, rng));
    prepared_pairs.push_back(std::move(pair));
  }
  build.prepared = corpus::make_corpus(std::move(prepared_pairs), corpus.provenance);
  return build;
}

std::vector<InstructionRecord> filter_records(const std::vector<InstructionRecord>& records,
                                              Task task) {
  std::vector<InstructionRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [task](const InstructionRecord& r) { return r.task == task; });
  return out;
}

std::vector<InstructionRecord> filter_by_pairs(const std::vector<InstructionRecord>& records,
                                               const std::vector<std::string>& pair_ids) {
  const std::set<std::string> wanted(pair_ids.begin(), pair_ids.end());
  std::vector<InstructionRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [&](const InstructionRecord& r) { return wanted.contains(r.source_pair_id); });
  return out;
}

}  // namespace patchlab::instructions
