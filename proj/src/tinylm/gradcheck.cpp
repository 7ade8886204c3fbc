#include "patchlab/tinylm/gradcheck.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "patchlab/error.hpp"
#include "patchlab/rng.hpp"
#include "patchlab/tinylm/optimizer.hpp"

namespace patchlab::tinylm {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), 1e-6);
}

std::string GradCheckResult::describe() const {
  std::ostringstream out;
  out.precision(6);
  out << (passed ? "ok" : "FAILED") << ": max relative error " << max_rel_error << " over "
      << checked << " parameters";
  if (!worst_parameter.empty()) {
    out << "; worst " << worst_parameter << " analytic " << worst_analytic << " numeric "
        << worst_numeric;
  }
  return out.str();
}

namespace {

std::string locate(const ParameterLayout& layout, std::size_t index) {
  for (const auto& t : layout.tensors()) {
    if (index >= t.offset && index < t.offset + t.size()) {
      const std::size_t local = index - t.offset;
      return t.name + "[" + std::to_string(local / static_cast<std::size_t>(t.cols)) + "," +
             std::to_string(local % static_cast<std::size_t>(t.cols)) + "]";
    }
  }
  return "?";
}

}  // namespace

GradCheckResult grad_check(const Model& model, const TokenSequence& sample,
                           const GradCheckConfig& cfg) {
  if (model.parameter_count() > cfg.max_parameters) {
    throw InputError("grad_check needs a model with at most " + std::to_string(cfg.max_parameters) +
                     " parameters, got " + std::to_string(model.parameter_count()));
  }
  if (supervised_count(sample, cfg.mask) == 0) throw InputError("sample has no supervised tokens");

  std::vector<double> grad(model.parameter_count(), 0.0);
  sequence_loss(model, sample, cfg.mask, &grad, 1.0);

  std::vector<std::size_t> indices(model.parameter_count());
  std::iota(indices.begin(), indices.end(), 0);
  Rng rng(cfg.seed);
  rng.shuffle(indices);
  if (cfg.samples < indices.size()) indices.resize(cfg.samples);

  GradCheckResult result;
  result.gradient_norm = l2_norm(grad);
  Model probe = model;
  auto& p = probe.params();
  for (std::size_t i : indices) {
    const double saved = p[i];
    p[i] = saved + cfg.step;
    const double up = sequence_loss(probe, sample, cfg.mask).sum;
    p[i] = saved - cfg.step;
    const double down = sequence_loss(probe, sample, cfg.mask).sum;
    p[i] = saved;
    const double numeric = (up - down) / (2.0 * cfg.step);
    const double err = relative_error(grad[i], numeric);
    ++result.checked;
    if (err > result.max_rel_error || result.worst_parameter.empty()) {
      result.max_rel_error = err;
      result.worst_parameter = locate(model.layout(), i);
      result.worst_analytic = grad[i];
      result.worst_numeric = numeric;
    }
  }
  result.passed = result.max_rel_error <= cfg.tolerance;
  return result;
}

}  // namespace patchlab::tinylm
