#pragma once

#include <cstddef>
#include <vector>

namespace patchlab::tinylm {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

// AdamW over a flat parameter buffer.
class AdamW {
 public:
  AdamW(std::size_t size, AdamWConfig cfg = {});

  // Clips `grad` in place to the configured global norm, then updates
  // `params`. Returns the gradient norm before clipping.
  double step(std::vector<double>& params, std::vector<double>& grad, double lr);

  std::size_t steps() const { return t_; }

 private:
  AdamWConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

double l2_norm(const std::vector<double>& v);

}  // namespace patchlab::tinylm
