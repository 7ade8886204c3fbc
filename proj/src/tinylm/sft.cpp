#include "patchlab/tinylm/sft.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "patchlab/error.hpp"
#include "patchlab/rng.hpp"

namespace patchlab::tinylm {

LossMask parse_loss_mask(const std::string& s) {
  if (s == "output_only") return LossMask::output_only;
  if (s == "all") return LossMask::all;
  throw InputError("unknown loss mask '" + s + "' (expected output_only or all)");
}

std::string to_string(LossMask mask) {
  return mask == LossMask::all ? "all" : "output_only";
}

namespace {

std::size_t first_supervised(const TokenSequence& seq, LossMask mask) {
  return mask == LossMask::all ? 0 : seq.sep_index;
}

}  // namespace

std::size_t supervised_count(const TokenSequence& seq, LossMask mask) {
  if (seq.ids.size() < 2) return 0;
  const std::size_t first = first_supervised(seq, mask);
  const std::size_t last = seq.ids.size() - 1;  // exclusive
  return first < last ? last - first : 0;
}

LossTerms sequence_loss(const Model& model, const TokenSequence& seq, LossMask mask,
                        std::vector<double>* grad, double grad_scale) {
  LossTerms terms;
  if (supervised_count(seq, mask) == 0) return terms;
  const ForwardPass pass = model.forward(seq.ids);
  const Mat logp = log_softmax_rows(pass.logits);
  const auto T = static_cast<Eigen::Index>(seq.ids.size());
  const auto first = static_cast<Eigen::Index>(first_supervised(seq, mask));
  Mat d_logits;
  if (grad) d_logits = Mat::Zero(T, logp.cols());
  for (Eigen::Index t = first; t + 1 < T; ++t) {
    const TokenId target = seq.ids[static_cast<std::size_t>(t + 1)];
    terms.sum -= logp(t, target);
    ++terms.count;
    if (grad) {
      d_logits.row(t) = logp.row(t).array().exp() * grad_scale;
      d_logits(t, target) -= grad_scale;
    }
  }
  if (grad) model.backward(pass, d_logits, Vec(), Vec(), *grad);
  return terms;
}

namespace {

double mean_loss(const Model& model, const std::vector<TokenSequence>& seqs, LossMask mask) {
  LossTerms total;
  for (const auto& s : seqs) {
    const LossTerms t = sequence_loss(model, s, mask);
    total.sum += t.sum;
    total.count += t.count;
  }
  return total.mean();
}

}  // namespace

SftResult sft_train(Model& model, const std::vector<TokenSequence>& train,
                    const std::vector<TokenSequence>& validation, const SftConfig& cfg) {
  if (train.empty()) throw InputError("sft_train needs at least one training record");
  if (cfg.batch == 0) throw InputError("batch size must be positive");
  if (!(cfg.lr > 0.0)) throw InputError("learning rate must be positive");

  SftResult result;
  Rng rng(cfg.seed);
  AdamW opt(model.parameter_count(), cfg.optimizer);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad(model.parameter_count());

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    LossTerms epoch_terms;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch);
      std::size_t tokens = 0;
      for (std::size_t i = start; i < stop; ++i) tokens += supervised_count(train[order[i]], cfg.loss_mask);
      if (tokens == 0) continue;
      std::fill(grad.begin(), grad.end(), 0.0);
      const double scale = 1.0 / static_cast<double>(tokens);
      LossTerms batch_terms;
      for (std::size_t i = start; i < stop; ++i) {
        const LossTerms t = sequence_loss(model, train[order[i]], cfg.loss_mask, &grad, scale);
        batch_terms.sum += t.sum;
        batch_terms.count += t.count;
      }
      if (!std::isfinite(batch_terms.sum)) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch << ", step " << result.steps
            << " (batch of " << (stop - start) << " sequences, " << tokens << " tokens)";
        throw NumericError(msg.str());
      }
      opt.step(model.params(), grad, cfg.lr);
      ++result.steps;
      epoch_terms.sum += batch_terms.sum;
      epoch_terms.count += batch_terms.count;
    }
    result.curve.push_back({epoch, "train", epoch_terms.mean()});
    if (!validation.empty()) {
      const double v = mean_loss(model, validation, cfg.loss_mask);
      if (!std::isfinite(v)) {
        throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
      }
      result.curve.push_back({epoch, "validation", v});
    }
  }
  return result;
}

namespace {

std::vector<TokenSequence> build_all(const std::vector<instructions::InstructionRecord>& records,
                                     std::size_t context, SftResult& report) {
  std::vector<TokenSequence> out;
  for (const auto& r : records) {
    SequenceBuild b = build_training_sequence(r, context);
    if (!b.sequence) {
      report.rejected.push_back(b.rejection);
      continue;
    }
    if (b.truncated) ++report.truncated;
    out.push_back(std::move(*b.sequence));
  }
  return out;
}

}  // namespace

SftResult sft_train(Model& model, const std::vector<instructions::InstructionRecord>& train,
                    const std::vector<instructions::InstructionRecord>& validation,
                    const SftConfig& cfg) {
  SftResult report;
  const auto context = static_cast<std::size_t>(model.config().context);
  const auto train_seqs = build_all(train, context, report);
  const auto val_seqs = build_all(validation, context, report);
  SftResult result = sft_train(model, train_seqs, val_seqs, cfg);
  result.rejected = std::move(report.rejected);
  result.truncated = report.truncated;
  return result;
}

void write_loss_curve(const std::filesystem::path& path, const std::vector<LossPoint>& curve) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,split,loss\n";
  out.precision(10);
  for (const auto& p : curve) out << p.epoch << ',' << p.split << ',' << p.loss << '\n';
}

}  // namespace patchlab::tinylm
