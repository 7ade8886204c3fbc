#include "patchlab/tinylm/tokenizer.hpp"

#include "patchlab/error.hpp"

namespace patchlab::tinylm {

std::vector<TokenId> Tokenizer::encode(std::string_view text) {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (unsigned char ch : text) ids.push_back(static_cast<TokenId>(ch));
  return ids;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) {
  std::string out;
  out.reserve(ids.size());
  for (TokenId id : ids) {
    if (id >= 0 && id < 256) out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
  }
  return out;
}

std::size_t TokenSequence::output_length() const {
  if (ids.empty()) return 0;
  std::size_t q = ids.size() - sep_index - 1;
  if (ids.back() == Tokenizer::kEos && q > 0) --q;
  return q;
}

std::span<const TokenId> TokenSequence::output_span() const {
  return std::span<const TokenId>(ids).subspan(sep_index + 1, output_length());
}

SequenceBuild build_training_sequence(const instructions::InstructionRecord& record,
                                      std::size_t context) {
  SequenceBuild out;
  const auto input = Tokenizer::encode(record.instruction + "\n" + record.input);
  const auto output = Tokenizer::encode(record.output);
  // BOS + SEP + EOS around the spans.
  if (output.size() + 3 > context) {
    out.rejection = "record " + record.id + ": output span of " + std::to_string(output.size()) +
                    " tokens does not fit context " + std::to_string(context);
    return out;
  }
  const std::size_t room = context - output.size() - 3;
  const std::size_t keep = std::min(room, input.size());
  out.truncated = keep < input.size();

  TokenSequence seq;
  seq.ids.reserve(keep + output.size() + 3);
  seq.ids.push_back(Tokenizer::kBos);
  seq.ids.insert(seq.ids.end(), input.end() - static_cast<std::ptrdiff_t>(keep), input.end());
  seq.sep_index = seq.ids.size();
  seq.ids.push_back(Tokenizer::kSep);
  seq.ids.insert(seq.ids.end(), output.begin(), output.end());
  seq.ids.push_back(Tokenizer::kEos);
  out.sequence = std::move(seq);
  return out;
}

std::vector<TokenId> build_prompt(std::string_view instruction, std::string_view input,
                                  std::size_t max_length) {
  if (max_length < 2) throw InputError("prompt budget must allow BOS and SEP");
  std::string joined(instruction);
  joined += "\n";
  joined += input;
  const auto body = Tokenizer::encode(joined);
  const std::size_t keep = std::min(body.size(), max_length - 2);
  std::vector<TokenId> ids;
  ids.reserve(keep + 2);
  ids.push_back(Tokenizer::kBos);
  ids.insert(ids.end(), body.end() - static_cast<std::ptrdiff_t>(keep), body.end());
  ids.push_back(Tokenizer::kSep);
  return ids;
}

}  // namespace patchlab::tinylm
