#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "patchlab/corpus/corpus.hpp"
#include "patchlab/instructions/records.hpp"

namespace patchlab::instructions {

// Client settings for the chat-completion style text service used to
// paraphrase seeds and draft vulnerability descriptions. An empty endpoint
// means offline mode.
struct AugmentationConfig {
  std::string endpoint;  // e.g. http://127.0.0.1:8080/v1/chat/completions
  std::string model = "gpt-4";
  std::string prompt_template_id = "seed-variants";
  std::chrono::milliseconds timeout{10000};
  int max_variants = 20;
  int max_concurrency = 4;
};

void validate(const AugmentationConfig& cfg);

struct AugmentResult {
  std::vector<SeedInstruction> variants;
  std::vector<std::string> warnings;
};

// Builds the request prompt asking for `max_variants` rewrites of a seed.
std::string seed_variant_prompt(const SeedInstruction& seed, int max_variants);
// Prompt asking for a CWE-prefixed description of comment-stripped code.
std::string description_prompt(const std::string& cwe, const std::string& stripped_code,
                               const std::vector<std::string>& comments);

// Deterministic rewrites used when no service is configured or reachable.
std::vector<SeedInstruction> offline_variants(const SeedInstruction& seed, int max_variants);

AugmentResult augment_seeds(const SeedInstruction& seed, const AugmentationConfig& cfg);

// Augments many seeds with at most cfg.max_concurrency requests in flight.
// Results are concatenated in input order.
AugmentResult augment_all(const std::vector<SeedInstruction>& seeds, const AugmentationConfig& cfg);

struct DescriptionResult {
  std::string text;  // always starts with CWE-<digits>
  bool from_service = false;
  std::vector<std::string> warnings;
};

std::string cwe_title(const std::string& cwe);

// Drafts the description for a pair from its comments and its
// comment-stripped vulnerable code, falling back to an offline template.
DescriptionResult augment_description(const corpus::FunctionPair& pair,
                                      const AugmentationConfig& cfg);

// Posts {model, messages:[{role:"user", content}]} and returns the first
// text payload of the reply. Exposed for tests.
struct CompletionReply {
  enum class Status { ok, unreachable, timeout, malformed };
  Status status = Status::ok;
  std::string text;
  std::string detail;
};

CompletionReply request_completion(const AugmentationConfig& cfg, const std::string& prompt);

}  // namespace patchlab::instructions
