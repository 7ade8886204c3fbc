#include "patchlab/tinylm/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "patchlab/error.hpp"
#include "patchlab/rng.hpp"

namespace patchlab::tinylm {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

std::string block_name(int layer, const char* leaf) {
  return "blocks." + std::to_string(layer) + "." + leaf;
}

// Offsets of one block's tensors inside the flat buffer.
struct BlockOffsets {
  std::size_t ln1_g, ln1_b, wqkv, bqkv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
};

BlockOffsets block_offsets(const ParameterLayout& layout, int layer) {
  auto off = [&](const char* leaf) { return layout.find(block_name(layer, leaf)).offset; };
  return BlockOffsets{off("ln1.g"),     off("ln1.b"),  off("attn.wqkv"), off("attn.bqkv"),
                      off("attn.wo"),   off("attn.bo"), off("ln2.g"),    off("ln2.b"),
                      off("mlp.w1"),    off("mlp.b1"), off("mlp.w2"),    off("mlp.b2")};
}

ConstMatMap cmap(const std::vector<double>& buf, std::size_t offset, int rows, int cols) {
  return ConstMatMap(buf.data() + offset, rows, cols);
}

MatMap mmap(std::vector<double>& buf, std::size_t offset, int rows, int cols) {
  return MatMap(buf.data() + offset, rows, cols);
}

void layer_norm(const Mat& x, const double* gain, const double* bias, Mat& hat, Vec& rstd,
                Mat& out) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index d = x.cols();
  Eigen::Map<const RowVec> g(gain, d);
  Eigen::Map<const RowVec> b(bias, d);
  hat.resize(rows, d);
  rstd.resize(rows);
  out.resize(rows, d);
  for (Eigen::Index t = 0; t < rows; ++t) {
    const double mu = x.row(t).mean();
    const RowVec centered = x.row(t).array() - mu;
    const double var = centered.squaredNorm() / static_cast<double>(d);
    const double r = 1.0 / std::sqrt(var + kLnEps);
    hat.row(t) = centered * r;
    rstd(t) = r;
    out.row(t) = hat.row(t).cwiseProduct(g) + b;
  }
}

// Returns dx; accumulates gain/bias gradients.
Mat layer_norm_backward(const Mat& dy, const Mat& hat, const Vec& rstd, const double* gain,
                        double* d_gain, double* d_bias) {
  const Eigen::Index rows = dy.rows();
  const Eigen::Index d = dy.cols();
  Eigen::Map<const RowVec> g(gain, d);
  Eigen::Map<RowVec> dg(d_gain, d);
  Eigen::Map<RowVec> db(d_bias, d);
  dg += dy.cwiseProduct(hat).colwise().sum();
  db += dy.colwise().sum();
  Mat dx(rows, d);
  for (Eigen::Index t = 0; t < rows; ++t) {
    const RowVec dhat = dy.row(t).cwiseProduct(g);
    const double m1 = dhat.mean();
    const double m2 = dhat.cwiseProduct(hat.row(t)).mean();
    dx.row(t) = rstd(t) * (dhat.array() - m1 - hat.row(t).array() * m2).matrix();
  }
  return dx;
}

double gelu(double u) {
  return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + kGeluA * u * u * u)));
}

double gelu_grad(double u) {
  const double inner = kGeluC * (u + kGeluA * u * u * u);
  const double th = std::tanh(inner);
  return 0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * u * u);
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 1 || d_model < 1 || n_layers < 0 || n_heads < 1 || d_ff < 1 || context < 1) {
    throw InputError("model dimensions must be positive");
  }
  if (d_model % n_heads != 0) throw InputError("d_model must be divisible by n_heads");
}

ParameterLayout::ParameterLayout(const ModelConfig& cfg) {
  cfg.validate();
  const int d = cfg.d_model;
  add("tok_emb", cfg.vocab_size, d);
  add("pos_emb", cfg.context, d);
  for (int l = 0; l < cfg.n_layers; ++l) {
    add(block_name(l, "ln1.g"), 1, d);
    add(block_name(l, "ln1.b"), 1, d);
    add(block_name(l, "attn.wqkv"), d, 3 * d);
    add(block_name(l, "attn.bqkv"), 1, 3 * d);
    add(block_name(l, "attn.wo"), d, d);
    add(block_name(l, "attn.bo"), 1, d);
    add(block_name(l, "ln2.g"), 1, d);
    add(block_name(l, "ln2.b"), 1, d);
    add(block_name(l, "mlp.w1"), d, cfg.d_ff);
    add(block_name(l, "mlp.b1"), 1, cfg.d_ff);
    add(block_name(l, "mlp.w2"), cfg.d_ff, d);
    add(block_name(l, "mlp.b2"), 1, d);
  }
  add("lnf.g", 1, d);
  add("lnf.b", 1, d);
  add("lm_head.w", d, cfg.vocab_size);
  add("lm_head.b", 1, cfg.vocab_size);
  add("value_head.w", d, 1);
  add("value_head.b", 1, 1);
  add("reward_head.w", d, 1);
  add("reward_head.b", 1, 1);
}

std::size_t ParameterLayout::add(std::string name, int rows, int cols) {
  TensorInfo info{std::move(name), rows, cols, total_};
  total_ += info.size();
  tensors_.push_back(std::move(info));
  return tensors_.back().offset;
}

const TensorInfo& ParameterLayout::find(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw InputError("unknown tensor " + name);
}

const Mat& ForwardPass::layer_states(int layer) const {
  if (layer < 0) return hidden;
  if (static_cast<std::size_t>(layer) >= blocks.size()) return residual;
  return blocks[static_cast<std::size_t>(layer)].input;
}

Mat log_softmax_rows(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const double mx = logits.row(t).maxCoeff();
    const double lse = mx + std::log((logits.row(t).array() - mx).exp().sum());
    out.row(t) = logits.row(t).array() - lse;
  }
  return out;
}

Model::Model(ModelConfig cfg) : cfg_(cfg), layout_(cfg_), params_(layout_.total(), 0.0) {
  initialize();
}

Model::Model(ModelConfig cfg, std::vector<double> params)
    : cfg_(cfg), layout_(cfg_), params_(std::move(params)) {
  if (params_.size() != layout_.total()) {
    throw InputError("parameter buffer has " + std::to_string(params_.size()) +
                     " values, layout expects " + std::to_string(layout_.total()));
  }
}

void Model::initialize() {
  Rng rng(cfg_.seed);
  const double residual_std = cfg_.init_std / std::sqrt(2.0 * std::max(1, cfg_.n_layers));
  for (const auto& t : layout_.tensors()) {
    double* p = params_.data() + t.offset;
    const std::string& n = t.name;
    double stddev = 0.0;
    double fill = 0.0;
    if (n.ends_with(".g")) {
      fill = 1.0;
    } else if (n == "tok_emb" || n == "pos_emb" || n.ends_with("wqkv") || n.ends_with("w1") ||
               n == "lm_head.w") {
      stddev = cfg_.init_std;
    } else if (n.ends_with("attn.wo") || n.ends_with("mlp.w2")) {
      stddev = residual_std;
    }
    for (std::size_t i = 0; i < t.size(); ++i) p[i] = stddev > 0 ? rng.normal(0.0, stddev) : fill;
  }
}

MatMap Model::tensor(const std::string& name) {
  const auto& t = layout_.find(name);
  return mmap(params_, t.offset, t.rows, t.cols);
}

ConstMatMap Model::tensor(const std::string& name) const {
  const auto& t = layout_.find(name);
  return cmap(params_, t.offset, t.rows, t.cols);
}

ForwardPass Model::forward(std::span<const TokenId> ids) const {
  const auto T = static_cast<Eigen::Index>(ids.size());
  if (T == 0) throw InputError("forward needs at least one token");
  if (T > cfg_.context) {
    throw InputError("sequence of " + std::to_string(T) + " tokens exceeds context " +
                     std::to_string(cfg_.context));
  }
  const int d = cfg_.d_model;
  const int H = cfg_.n_heads;
  const int dh = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  ForwardPass pass;
  pass.ids.assign(ids.begin(), ids.end());
  const auto tok = cmap(params_, layout_.find("tok_emb").offset, cfg_.vocab_size, d);
  const auto pos = cmap(params_, layout_.find("pos_emb").offset, cfg_.context, d);
  Mat x(T, d);
  for (Eigen::Index t = 0; t < T; ++t) {
    const TokenId id = ids[static_cast<std::size_t>(t)];
    if (id < 0 || id >= cfg_.vocab_size) throw InputError("token id out of range");
    x.row(t) = tok.row(id) + pos.row(t);
  }

  pass.blocks.resize(static_cast<std::size_t>(cfg_.n_layers));
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const BlockOffsets o = block_offsets(layout_, l);
    BlockCache& c = pass.blocks[static_cast<std::size_t>(l)];
    c.input = x;
    layer_norm(x, params_.data() + o.ln1_g, params_.data() + o.ln1_b, c.ln1_hat, c.ln1_rstd,
               c.ln1_out);
    c.qkv.noalias() = c.ln1_out * cmap(params_, o.wqkv, d, 3 * d);
    c.qkv.rowwise() += cmap(params_, o.bqkv, 1, 3 * d).row(0);

    c.attn_concat.resize(T, d);
    c.attn_probs.resize(static_cast<std::size_t>(H));
    for (int h = 0; h < H; ++h) {
      const auto q = c.qkv.middleCols(h * dh, dh);
      const auto k = c.qkv.middleCols(d + h * dh, dh);
      const auto v = c.qkv.middleCols(2 * d + h * dh, dh);
      Mat scores = (q * k.transpose()) * scale;
      Mat& p = c.attn_probs[static_cast<std::size_t>(h)];
      p.setZero(T, T);
      for (Eigen::Index i = 0; i < T; ++i) {
        const auto row = scores.row(i).head(i + 1);
        const double mx = row.maxCoeff();
        const RowVec e = (row.array() - mx).exp();
        p.row(i).head(i + 1) = e / e.sum();
      }
      c.attn_concat.middleCols(h * dh, dh).noalias() = p * v;
    }
    c.mid = x;
    c.mid.noalias() += c.attn_concat * cmap(params_, o.wo, d, d);
    c.mid.rowwise() += cmap(params_, o.bo, 1, d).row(0);

    layer_norm(c.mid, params_.data() + o.ln2_g, params_.data() + o.ln2_b, c.ln2_hat, c.ln2_rstd,
               c.ln2_out);
    c.ff_pre.noalias() = c.ln2_out * cmap(params_, o.w1, d, cfg_.d_ff);
    c.ff_pre.rowwise() += cmap(params_, o.b1, 1, cfg_.d_ff).row(0);
    c.ff_act = c.ff_pre.unaryExpr(&gelu);
    x = c.mid;
    x.noalias() += c.ff_act * cmap(params_, o.w2, cfg_.d_ff, d);
    x.rowwise() += cmap(params_, o.b2, 1, d).row(0);
  }
  pass.residual = x;
  layer_norm(x, params_.data() + layout_.find("lnf.g").offset,
             params_.data() + layout_.find("lnf.b").offset, pass.lnf_hat, pass.lnf_rstd,
             pass.hidden);

  const auto& lm = layout_.find("lm_head.w");
  pass.logits.noalias() = pass.hidden * cmap(params_, lm.offset, d, cfg_.vocab_size);
  pass.logits.rowwise() += cmap(params_, layout_.find("lm_head.b").offset, 1, cfg_.vocab_size).row(0);

  const auto vw = cmap(params_, layout_.find("value_head.w").offset, d, 1);
  const double vb = params_[layout_.find("value_head.b").offset];
  pass.values = (pass.hidden * vw).col(0).array() + vb;
  const auto rw = cmap(params_, layout_.find("reward_head.w").offset, d, 1);
  const double rb = params_[layout_.find("reward_head.b").offset];
  pass.rewards = (pass.hidden * rw).col(0).array() + rb;
  return pass;
}

void Model::backward(const ForwardPass& pass, const Mat& d_logits, const Vec& d_values,
                     const Vec& d_rewards, std::vector<double>& grad) const {
  if (grad.size() != params_.size()) grad.assign(params_.size(), 0.0);
  const auto T = static_cast<Eigen::Index>(pass.length());
  const int d = cfg_.d_model;
  const int H = cfg_.n_heads;
  const int dh = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // Heads.
  const auto& lm = layout_.find("lm_head.w");
  const auto& lmb = layout_.find("lm_head.b");
  Mat d_hidden = Mat::Zero(T, d);
  if (d_logits.size() > 0) {
    mmap(grad, lm.offset, d, cfg_.vocab_size).noalias() += pass.hidden.transpose() * d_logits;
    mmap(grad, lmb.offset, 1, cfg_.vocab_size) += d_logits.colwise().sum();
    d_hidden.noalias() += d_logits * cmap(params_, lm.offset, d, cfg_.vocab_size).transpose();
  }
  auto scalar_head = [&](const Vec& dv, const char* w_name, const char* b_name) {
    if (dv.size() == 0) return;
    const auto& w = layout_.find(w_name);
    mmap(grad, w.offset, d, 1).noalias() += pass.hidden.transpose() * dv;
    grad[layout_.find(b_name).offset] += dv.sum();
    d_hidden.noalias() += dv * cmap(params_, w.offset, d, 1).transpose();
  };
  scalar_head(d_values, "value_head.w", "value_head.b");
  scalar_head(d_rewards, "reward_head.w", "reward_head.b");

  const auto& lnf_g = layout_.find("lnf.g");
  Mat dx = layer_norm_backward(d_hidden, pass.lnf_hat, pass.lnf_rstd, params_.data() + lnf_g.offset,
                               grad.data() + lnf_g.offset,
                               grad.data() + layout_.find("lnf.b").offset);

  for (int l = cfg_.n_layers - 1; l >= 0; --l) {
    const BlockOffsets o = block_offsets(layout_, l);
    const BlockCache& c = pass.blocks[static_cast<std::size_t>(l)];

    // Feed-forward branch: x = mid + act * W2 + b2.
    mmap(grad, o.w2, cfg_.d_ff, d).noalias() += c.ff_act.transpose() * dx;
    mmap(grad, o.b2, 1, d) += dx.colwise().sum();
    Mat d_act = dx * cmap(params_, o.w2, cfg_.d_ff, d).transpose();
    Mat d_pre = d_act.cwiseProduct(c.ff_pre.unaryExpr(&gelu_grad));
    mmap(grad, o.w1, d, cfg_.d_ff).noalias() += c.ln2_out.transpose() * d_pre;
    mmap(grad, o.b1, 1, cfg_.d_ff) += d_pre.colwise().sum();
    Mat d_ln2 = d_pre * cmap(params_, o.w1, d, cfg_.d_ff).transpose();
    Mat d_mid = dx + layer_norm_backward(d_ln2, c.ln2_hat, c.ln2_rstd, params_.data() + o.ln2_g,
                                         grad.data() + o.ln2_g, grad.data() + o.ln2_b);

    // Attention branch: mid = input + concat * Wo + bo.
    mmap(grad, o.wo, d, d).noalias() += c.attn_concat.transpose() * d_mid;
    mmap(grad, o.bo, 1, d) += d_mid.colwise().sum();
    Mat d_concat = d_mid * cmap(params_, o.wo, d, d).transpose();
    Mat d_qkv = Mat::Zero(T, 3 * d);
    for (int h = 0; h < H; ++h) {
      const Mat& p = c.attn_probs[static_cast<std::size_t>(h)];
      const auto q = c.qkv.middleCols(h * dh, dh);
      const auto k = c.qkv.middleCols(d + h * dh, dh);
      const auto v = c.qkv.middleCols(2 * d + h * dh, dh);
      const auto d_out = d_concat.middleCols(h * dh, dh);
      Mat d_p = d_out * v.transpose();
      d_qkv.middleCols(2 * d + h * dh, dh).noalias() += p.transpose() * d_out;
      Mat d_s = p.cwiseProduct(d_p);
      const Vec row_dot = d_s.rowwise().sum();
      d_s -= p.cwiseProduct(row_dot.replicate(1, T));
      d_qkv.middleCols(h * dh, dh).noalias() += (d_s * k) * scale;
      d_qkv.middleCols(d + h * dh, dh).noalias() += (d_s.transpose() * q) * scale;
    }
    mmap(grad, o.wqkv, d, 3 * d).noalias() += c.ln1_out.transpose() * d_qkv;
    mmap(grad, o.bqkv, 1, 3 * d) += d_qkv.colwise().sum();
    Mat d_ln1 = d_qkv * cmap(params_, o.wqkv, d, 3 * d).transpose();
    dx = d_mid + layer_norm_backward(d_ln1, c.ln1_hat, c.ln1_rstd, params_.data() + o.ln1_g,
                                     grad.data() + o.ln1_g, grad.data() + o.ln1_b);
  }

  auto d_tok = mmap(grad, layout_.find("tok_emb").offset, cfg_.vocab_size, d);
  auto d_pos = mmap(grad, layout_.find("pos_emb").offset, cfg_.context, d);
  for (Eigen::Index t = 0; t < T; ++t) {
    d_tok.row(pass.ids[static_cast<std::size_t>(t)]) += dx.row(t);
    d_pos.row(t) += dx.row(t);
  }
}

Model::Session::Session(const Model& model)
    : model_(&model),
      keys_(static_cast<std::size_t>(model.cfg_.n_layers)),
      values_(static_cast<std::size_t>(model.cfg_.n_layers)) {}

void Model::Session::push(TokenId token) {
  const Model& m = *model_;
  const ModelConfig& cfg = m.cfg_;
  const auto& P = m.params_;
  if (length_ >= static_cast<std::size_t>(cfg.context)) {
    throw InputError("decode session exceeded context " + std::to_string(cfg.context));
  }
  if (token < 0 || token >= cfg.vocab_size) throw InputError("token id out of range");
  const int d = cfg.d_model;
  const int H = cfg.n_heads;
  const int dh = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto pos = static_cast<Eigen::Index>(length_);
  const auto n = pos + 1;

  Mat x = cmap(P, m.layout_.find("tok_emb").offset, cfg.vocab_size, d).row(token) +
          cmap(P, m.layout_.find("pos_emb").offset, cfg.context, d).row(pos);
  Mat hat;
  Vec rstd;
  Mat normed;
  for (int l = 0; l < cfg.n_layers; ++l) {
    const BlockOffsets o = block_offsets(m.layout_, l);
    layer_norm(x, P.data() + o.ln1_g, P.data() + o.ln1_b, hat, rstd, normed);
    Mat qkv = normed * cmap(P, o.wqkv, d, 3 * d);
    qkv += cmap(P, o.bqkv, 1, 3 * d);
    auto& kc = keys_[static_cast<std::size_t>(l)];
    auto& vc = values_[static_cast<std::size_t>(l)];
    kc.conservativeResize(n, d);
    vc.conservativeResize(n, d);
    kc.row(pos) = qkv.block(0, d, 1, d);
    vc.row(pos) = qkv.block(0, 2 * d, 1, d);

    Mat concat(1, d);
    for (int h = 0; h < H; ++h) {
      const RowVec q = qkv.block(0, h * dh, 1, dh);
      RowVec scores = (q * kc.middleCols(h * dh, dh).transpose()) * scale;
      const double mx = scores.maxCoeff();
      RowVec e = (scores.array() - mx).exp();
      e /= e.sum();
      concat.middleCols(h * dh, dh) = e * vc.middleCols(h * dh, dh);
    }
    x += concat * cmap(P, o.wo, d, d);
    x += cmap(P, o.bo, 1, d);
    layer_norm(x, P.data() + o.ln2_g, P.data() + o.ln2_b, hat, rstd, normed);
    Mat pre = normed * cmap(P, o.w1, d, cfg.d_ff);
    pre += cmap(P, o.b1, 1, cfg.d_ff);
    x += pre.unaryExpr(&gelu) * cmap(P, o.w2, cfg.d_ff, d);
    x += cmap(P, o.b2, 1, d);
  }
  layer_norm(x, P.data() + m.layout_.find("lnf.g").offset, P.data() + m.layout_.find("lnf.b").offset,
             hat, rstd, normed);
  hidden_ = normed.row(0);
  logits_ = hidden_ * cmap(P, m.layout_.find("lm_head.w").offset, d, cfg.vocab_size);
  logits_ += cmap(P, m.layout_.find("lm_head.b").offset, 1, cfg.vocab_size).row(0);
  value_ = hidden_.dot(cmap(P, m.layout_.find("value_head.w").offset, d, 1).col(0)) +
           P[m.layout_.find("value_head.b").offset];
  ++length_;
}

}  // namespace patchlab::tinylm
