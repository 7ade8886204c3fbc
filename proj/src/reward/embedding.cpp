#include "patchlab/reward/embedding.hpp"

#include <fstream>
#include <sstream>

#include "patchlab/error.hpp"

namespace patchlab::reward {

void normalize_rows(Mat& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (n > 0.0) {
      m.row(i) /= n;
    } else {
      m.row(i).setConstant(1.0 / std::sqrt(static_cast<double>(m.cols())));
    }
  }
}

ModelEmbeddingProvider::ModelEmbeddingProvider(std::shared_ptr<const tinylm::Model> model,
                                               int layer, bool non_negative)
    : model_(std::move(model)), layer_(layer), non_negative_(non_negative) {
  if (!model_) throw InputError("embedding provider needs a model");
  if (layer_ > model_->config().n_layers) {
    throw InputError("layer " + std::to_string(layer_) + " exceeds model depth " +
                     std::to_string(model_->config().n_layers));
  }
}

Mat ModelEmbeddingProvider::embed(std::span<const TokenId> ids) const {
  if (ids.size() > max_tokens()) {
    throw InputError("embedding input of " + std::to_string(ids.size()) +
                     " tokens exceeds provider capacity " + std::to_string(max_tokens()));
  }
  if (ids.empty()) return Mat(0, dimension());
  std::vector<TokenId> seq;
  seq.reserve(ids.size() + 1);
  seq.push_back(tinylm::Tokenizer::kBos);
  seq.insert(seq.end(), ids.begin(), ids.end());
  const tinylm::ForwardPass pass = model_->forward(seq);
  const Mat& states = pass.layer_states(layer_);
  Mat out = states.bottomRows(static_cast<Eigen::Index>(ids.size()));
  if (non_negative_) out = out.cwiseMax(0.0);
  normalize_rows(out);
  return out;
}

StubEmbeddingProvider::StubEmbeddingProvider(std::map<TokenId, RowVec> vectors)
    : vectors_(std::move(vectors)) {
  if (vectors_.empty()) throw InputError("stub provider needs at least one vector");
  dim_ = static_cast<int>(vectors_.begin()->second.size());
  for (auto& [id, v] : vectors_) {
    if (v.size() != dim_) throw InputError("stub vector for token " + std::to_string(id) + " has wrong dimension");
    const double n = v.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw InputError("stub vector for token " + std::to_string(id) + " has zero or non-finite norm");
    }
    v /= n;
  }
}

StubEmbeddingProvider StubEmbeddingProvider::parse(const std::string& text, const std::string& origin) {
  std::map<TokenId, RowVec> vectors;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream row(line);
    TokenId id = 0;
    if (!(row >> id)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      throw InputError(origin + ":" + std::to_string(lineno) + ": expected a token id");
    }
    std::vector<double> values;
    double v = 0.0;
    while (row >> v) values.push_back(v);
    if (!row.eof()) throw InputError(origin + ":" + std::to_string(lineno) + ": bad vector component");
    if (values.empty()) throw InputError(origin + ":" + std::to_string(lineno) + ": empty vector");
    if (vectors.contains(id)) {
      throw InputError(origin + ":" + std::to_string(lineno) + ": duplicate token " + std::to_string(id));
    }
    vectors[id] = Eigen::Map<const RowVec>(values.data(), static_cast<Eigen::Index>(values.size()));
  }
  return StubEmbeddingProvider(std::move(vectors));
}

StubEmbeddingProvider StubEmbeddingProvider::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open embedding table " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

Mat StubEmbeddingProvider::embed(std::span<const TokenId> ids) const {
  Mat out(static_cast<Eigen::Index>(ids.size()), dim_);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = vectors_.find(ids[i]);
    if (it == vectors_.end()) throw InputError("stub provider has no vector for token " + std::to_string(ids[i]));
    out.row(static_cast<Eigen::Index>(i)) = it->second;
  }
  return out;
}

}  // namespace patchlab::reward
