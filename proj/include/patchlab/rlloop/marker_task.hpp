#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "patchlab/tinylm/tokenizer.hpp"

namespace patchlab::rlloop {

// A toy repair task: the input is a short statement containing a marker
// token, and the repair replaces the marker with a fixed safe token.
struct MarkerExample {
  std::string input;      // e.g. "n = @;"
  std::string reference;  // e.g. "n = 0;"
};

inline constexpr char kMarker = '@';
inline constexpr char kReplacement = '0';

std::vector<MarkerExample> make_marker_task(std::size_t count, std::uint64_t seed);

// [BOS, input, SEP]
std::vector<tinylm::TokenId> marker_prompt(const MarkerExample& ex);
// [BOS, input, SEP, reference, EOS] with sep_index set.
tinylm::TokenSequence marker_sequence(const MarkerExample& ex);

}  // namespace patchlab::rlloop
