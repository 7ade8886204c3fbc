#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <span>

#include "patchlab/tinylm/model.hpp"

namespace patchlab::reward {

using tinylm::Mat;
using tinylm::RowVec;
using tinylm::TokenId;

// Maps a token sequence to one unit-norm vector per token.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  // Rows are L2-normalized, one per input id.
  virtual Mat embed(std::span<const TokenId> ids) const = 0;
  virtual int dimension() const = 0;
};

// Contextual embeddings from a frozen model. The sequence is prefixed with BOS
// and that row is dropped, so every input token gets its own vector.
class ModelEmbeddingProvider : public EmbeddingProvider {
 public:
  // layer < 0 selects the final normalized hidden states; 0..n_layers selects
  // the residual stream entering that block (n_layers is the final residual).
  explicit ModelEmbeddingProvider(std::shared_ptr<const tinylm::Model> model, int layer = -1,
                                  bool non_negative = false);

  Mat embed(std::span<const TokenId> ids) const override;
  int dimension() const override { return model_->config().d_model; }
  std::size_t max_tokens() const { return static_cast<std::size_t>(model_->config().context) - 1; }

 private:
  std::shared_ptr<const tinylm::Model> model_;
  int layer_;
  bool non_negative_;
};

// Fixed per-token vectors, for tests and oracles.
class StubEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit StubEmbeddingProvider(std::map<TokenId, RowVec> vectors);

  // Whitespace-separated rows: `<token-id> <v1> ... <vd>`; `#` starts a comment.
  static StubEmbeddingProvider load(const std::filesystem::path& path);
  static StubEmbeddingProvider parse(const std::string& text, const std::string& origin = "<memory>");

  Mat embed(std::span<const TokenId> ids) const override;
  int dimension() const override { return dim_; }

 private:
  std::map<TokenId, RowVec> vectors_;
  int dim_ = 0;
};

// Row-wise L2 normalization; zero rows become the uniform unit vector.
void normalize_rows(Mat& m);

}  // namespace patchlab::reward
