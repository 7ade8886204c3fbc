#include "patchlab/tinylm/optimizer.hpp"

#include <cmath>

#include "patchlab/error.hpp"

namespace patchlab::tinylm {

double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

AdamW::AdamW(std::size_t size, AdamWConfig cfg) : cfg_(cfg), m_(size, 0.0), v_(size, 0.0) {}

double AdamW::step(std::vector<double>& params, std::vector<double>& grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw InputError("optimizer size mismatch");
  }
  const double norm = l2_norm(grad);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) {
    const double s = cfg_.clip_norm / norm;
    for (double& g : grad) g *= s;
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    const double mh = m_[i] / c1;
    const double vh = v_[i] / c2;
    params[i] -= lr * (mh / (std::sqrt(vh) + cfg_.eps) + cfg_.weight_decay * params[i]);
  }
  return norm;
}

}  // namespace patchlab::tinylm
