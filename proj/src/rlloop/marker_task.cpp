#include "patchlab/rlloop/marker_task.hpp"

#include <algorithm>

#include "patchlab/rng.hpp"

namespace patchlab::rlloop {

std::vector<MarkerExample> make_marker_task(std::size_t count, std::uint64_t seed) {
  static const char* const kNames[] = {"n", "len", "idx", "buf", "p", "sz", "k", "off"};
  static const char* const kShapes[] = {"%s = @;", "%s[@] = 0;", "f(%s, @);", "%s += @;"};
  Rng rng(seed);
  std::vector<MarkerExample> out;
  while (out.size() < count) {
    const char* name = kNames[rng.uniform_index(std::size(kNames))];
    const std::string shape = kShapes[rng.uniform_index(std::size(kShapes))];
    std::string input;
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (shape[i] == '%' && i + 1 < shape.size() && shape[i + 1] == 's') {
        input += name;
        ++i;
      } else {
        input += shape[i];
      }
    }
    std::string reference = input;
    std::replace(reference.begin(), reference.end(), kMarker, kReplacement);
    out.push_back({std::move(input), std::move(reference)});
  }
  return out;
}

std::vector<tinylm::TokenId> marker_prompt(const MarkerExample& ex) {
  std::vector<tinylm::TokenId> ids{tinylm::Tokenizer::kBos};
  const auto body = tinylm::Tokenizer::encode(ex.input);
  ids.insert(ids.end(), body.begin(), body.end());
  ids.push_back(tinylm::Tokenizer::kSep);
  return ids;
}

tinylm::TokenSequence marker_sequence(const MarkerExample& ex) {
  tinylm::TokenSequence seq;
  seq.ids = marker_prompt(ex);
  seq.sep_index = seq.ids.size() - 1;
  const auto out = tinylm::Tokenizer::encode(ex.reference);
  seq.ids.insert(seq.ids.end(), out.begin(), out.end());
  seq.ids.push_back(tinylm::Tokenizer::kEos);
  return seq;
}

}  // namespace patchlab::rlloop
