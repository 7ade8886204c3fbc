#include "patchlab/tinylm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "patchlab/error.hpp"

namespace patchlab::tinylm {

namespace {

using json = nlohmann::ordered_json;

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
  return v;
}

json hyperparameters(const ModelConfig& c) {
  return json{{"vocab_size", c.vocab_size}, {"d_model", c.d_model}, {"n_layers", c.n_layers},
              {"n_heads", c.n_heads},       {"d_ff", c.d_ff},       {"context", c.context},
              {"init_std", c.init_std},     {"seed", c.seed}};
}

}  // namespace

std::vector<double> quantize_float32(const std::vector<double>& params) {
  std::vector<double> out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    out[i] = static_cast<double>(static_cast<float>(params[i]));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  json header;
  header["format"] = kCheckpointFormat;
  header["dtype"] = "float32";
  header["byte_order"] = "little";
  header["tokenizer"] = Tokenizer::kVersion;
  header["hyperparameters"] = hyperparameters(model.config());
  header["parameter_count"] = model.parameter_count();
  json tensors = json::array();
  for (const auto& t : model.layout().tensors()) {
    tensors.push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}});
  }
  header["tensors"] = std::move(tensors);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << header.dump() << '\n';
  const auto& p = model.params();
  std::vector<std::uint32_t> words(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    words[i] = to_little(std::bit_cast<std::uint32_t>(static_cast<float>(p[i])));
  }
  out.write(reinterpret_cast<const char*>(words.data()),
            static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InputError(path.string() + ": missing header line");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": malformed header: " + e.what());
  }
  auto field = [&](const char* key) -> const json& {
    if (!header.contains(key)) throw InputError(path.string() + ": header lacks '" + key + "'");
    return header.at(key);
  };
  if (field("format") != kCheckpointFormat) throw InputError(path.string() + ": unknown format");
  if (field("dtype") != "float32") throw InputError(path.string() + ": unsupported dtype");
  if (field("tokenizer") != Tokenizer::kVersion) {
    throw InputError(path.string() + ": tokenizer " + field("tokenizer").dump() +
                     " does not match " + Tokenizer::kVersion);
  }
  ModelConfig cfg;
  try {
    const json& h = field("hyperparameters");
    cfg.vocab_size = h.at("vocab_size");
    cfg.d_model = h.at("d_model");
    cfg.n_layers = h.at("n_layers");
    cfg.n_heads = h.at("n_heads");
    cfg.d_ff = h.at("d_ff");
    cfg.context = h.at("context");
    cfg.init_std = h.at("init_std");
    cfg.seed = h.at("seed");
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": bad hyperparameters: " + e.what());
  }
  const ParameterLayout layout(cfg);
  const json& tensors = field("tensors");
  if (!tensors.is_array() || tensors.size() != layout.tensors().size()) {
    throw InputError(path.string() + ": tensor list does not match the model layout");
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& expect = layout.tensors()[i];
    const auto& got = tensors[i];
    if (got.value("name", "") != expect.name || got.at("shape") != json({expect.rows, expect.cols})) {
      throw InputError(path.string() + ": tensor " + std::to_string(i) + " is " + got.dump() +
                       ", expected " + expect.name);
    }
  }

  std::vector<std::uint32_t> words(layout.total());
  in.read(reinterpret_cast<char*>(words.data()),
          static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
  if (static_cast<std::size_t>(in.gcount()) != words.size() * sizeof(std::uint32_t)) {
    throw InputError(path.string() + ": truncated tensor payload");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw InputError(path.string() + ": trailing bytes after tensor payload");
  }
  std::vector<double> params(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    params[i] = static_cast<double>(std::bit_cast<float>(to_little(words[i])));
  }
  return Model(cfg, std::move(params));
}

}  // namespace patchlab::tinylm
