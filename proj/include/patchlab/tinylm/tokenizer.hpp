#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "patchlab/instructions/records.hpp"

namespace patchlab::tinylm {

using TokenId = int;

// Byte-level vocabulary: ids 0..255 are raw bytes, followed by four specials.
struct Tokenizer {
  static constexpr TokenId kPad = 256;
  static constexpr TokenId kBos = 257;
  static constexpr TokenId kEos = 258;
  static constexpr TokenId kSep = 259;
  static constexpr std::size_t kVocabSize = 260;
  static constexpr const char* kVersion = "byte260-v1";

  static std::vector<TokenId> encode(std::string_view text);
  // Specials are dropped.
  static std::string decode(std::span<const TokenId> ids);
  static bool is_special(TokenId id) { return id >= 256; }
};

// [BOS, input..., SEP, output..., EOS]; sep_index is the position of SEP,
// which equals the input span length p (counting BOS).
struct TokenSequence {
  std::vector<TokenId> ids;
  std::size_t sep_index = 0;

  std::size_t input_length() const { return sep_index; }
  // Output tokens excluding the trailing EOS.
  std::size_t output_length() const;
  std::span<const TokenId> output_span() const;

  bool operator==(const TokenSequence&) const = default;
};

struct SequenceBuild {
  std::optional<TokenSequence> sequence;
  bool truncated = false;
  std::string rejection;  // set when sequence is empty
};

// Joins instruction and input with a newline. When the whole sequence does
// not fit `context`, input bytes are dropped from the left; the output span is
// never cut, and a record whose output alone does not fit is rejected.
SequenceBuild build_training_sequence(const instructions::InstructionRecord& record,
                                      std::size_t context);

// [BOS, instruction + "\n" + input, SEP], left-truncated to max_length.
std::vector<TokenId> build_prompt(std::string_view instruction, std::string_view input,
                                  std::size_t max_length);

}  // namespace patchlab::tinylm
