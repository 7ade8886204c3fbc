#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "patchlab/tinylm/tokenizer.hpp"

namespace patchlab::tinylm {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;

struct ModelConfig {
  int vocab_size = static_cast<int>(Tokenizer::kVocabSize);
  int d_model = 128;
  int n_layers = 4;
  int n_heads = 4;
  int d_ff = 512;
  int context = 256;
  double init_std = 0.02;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct TensorInfo {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

// Flat parameter buffer with a named tensor layout. Gradients and optimizer
// moments use the same layout.
class ParameterLayout {
 public:
  explicit ParameterLayout(const ModelConfig& cfg);

  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  const TensorInfo& find(const std::string& name) const;
  std::size_t total() const { return total_; }

 private:
  std::size_t add(std::string name, int rows, int cols);

  std::vector<TensorInfo> tensors_;
  std::size_t total_ = 0;

  friend class Model;
};

// Per-layer activations kept for the backward pass.
struct BlockCache {
  Mat input;        // residual stream entering the block
  Mat ln1_hat;      // normalized, before gain/bias
  Vec ln1_rstd;
  Mat ln1_out;
  Mat qkv;
  std::vector<Mat> attn_probs;  // one T x T matrix per head
  Mat attn_concat;
  Mat mid;          // residual after attention
  Mat ln2_hat;
  Vec ln2_rstd;
  Mat ln2_out;
  Mat ff_pre;
  Mat ff_act;
};

struct ForwardPass {
  std::vector<TokenId> ids;
  std::vector<BlockCache> blocks;
  Mat residual;     // final residual stream, T x d
  Mat lnf_hat;
  Vec lnf_rstd;
  Mat hidden;       // final normalized hidden states, T x d
  Mat logits;       // T x vocab
  Vec values;       // value head, one per position
  Vec rewards;      // reward head, one per position

  std::size_t length() const { return ids.size(); }
  // Residual stream entering layer `layer`; layer == n_layers gives the
  // final residual, layer < 0 gives the normalized final hidden states.
  const Mat& layer_states(int layer) const;
};

// Per-position log-softmax of a logits matrix.
Mat log_softmax_rows(const Mat& logits);

class Model {
 public:
  explicit Model(ModelConfig cfg);
  Model(ModelConfig cfg, std::vector<double> params);

  const ModelConfig& config() const { return cfg_; }
  const ParameterLayout& layout() const { return layout_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  MatMap tensor(const std::string& name);
  ConstMatMap tensor(const std::string& name) const;

  // Causal forward over ids; positions may only attend to earlier ones.
  ForwardPass forward(std::span<const TokenId> ids) const;

  // Accumulates into `grad` (same layout as params) the gradient of
  //   sum(d_logits .* logits) + sum(d_values .* values) + sum(d_rewards .* rewards).
  // Empty d_values / d_rewards are treated as zero.
  void backward(const ForwardPass& pass, const Mat& d_logits, const Vec& d_values,
                const Vec& d_rewards, std::vector<double>& grad) const;

  // Incremental decoding with a key/value cache.
  class Session {
   public:
    void push(TokenId token);
    const RowVec& logits() const { return logits_; }
    const RowVec& hidden() const { return hidden_; }
    double value() const { return value_; }
    std::size_t length() const { return length_; }

   private:
    friend class Model;
    explicit Session(const Model& model);

    const Model* model_;
    std::vector<Mat> keys_;
    std::vector<Mat> values_;
    std::size_t length_ = 0;
    RowVec logits_;
    RowVec hidden_;
    double value_ = 0.0;
  };

  Session start_session() const { return Session(*this); }

 private:
  void initialize();

  ModelConfig cfg_;
  ParameterLayout layout_;
  std::vector<double> params_;
};

}  // namespace patchlab::tinylm
