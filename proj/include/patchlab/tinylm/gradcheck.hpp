#pragma once

#include <cstdint>
#include <string>

#include "patchlab/tinylm/model.hpp"
#include "patchlab/tinylm/sft.hpp"

namespace patchlab::tinylm {

struct GradCheckConfig {
  std::size_t samples = 64;  // parameters probed; all of them when >= count
  double step = 1e-4;
  double tolerance = 1e-3;
  std::uint64_t seed = 0;
  LossMask mask = LossMask::output_only;
  std::size_t max_parameters = 10000;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;  // "tensor[row,col]"
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  double gradient_norm = 0.0;
  bool passed = true;

  std::string describe() const;
};

// |a - n| / max(|a| + |n|, 1e-6)
double relative_error(double analytic, double numeric);

// Compares the analytic SFT-loss gradient with central differences.
GradCheckResult grad_check(const Model& model, const TokenSequence& sample,
                           const GradCheckConfig& cfg = {});

}  // namespace patchlab::tinylm
