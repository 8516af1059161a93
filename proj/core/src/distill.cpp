#include "stkd/distill.hpp"

#include <algorithm>
#include <cmath>

#include "stkd/error.hpp"
#include "stkd/ops.hpp"

namespace stkd {

std::string to_string(AdaptiveMode mode) {
  return mode == AdaptiveMode::uniform ? "uniform" : "error_softmax";
}

std::string to_string(RhoMode mode) { return mode == RhoMode::median ? "median" : "fixed"; }

AdaptiveMode adaptive_mode_from(const std::string& name) {
  if (name == "uniform") return AdaptiveMode::uniform;
  if (name == "error_softmax") return AdaptiveMode::error_softmax;
  throw ParameterError("unknown adaptive_mode `" + name + "` (uniform | error_softmax)");
}

RhoMode rho_mode_from(const std::string& name) {
  if (name == "median") return RhoMode::median;
  if (name == "fixed") return RhoMode::fixed;
  throw ParameterError("unknown rho_mode `" + name + "` (median | fixed)");
}

void DistillConfig::validate() const {
  if (!(lambda_spatial >= 0.0) || !std::isfinite(lambda_spatial)) {
    throw ParameterError("lambda_spatial must be a finite value >= 0");
  }
  if (!(lambda_temporal >= 0.0) || !std::isfinite(lambda_temporal)) {
    throw ParameterError("lambda_temporal must be a finite value >= 0");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ParameterError("temperature must be > 0");
  }
  if (rho_mode == RhoMode::fixed && (!(rho > 0.0) || !std::isfinite(rho))) {
    throw ParameterError("rho must be > 0");
  }
  if (teacher_rep_layer < -1) throw ParameterError("teacher_rep_layer must be -1 or a block index >= 1");
}

AdaptiveWeights adaptive_weights(std::span<const double> errors, AdaptiveMode mode, double rho) {
  if (errors.empty()) throw ParameterError("adaptive_weights: no nodes");
  for (double e : errors) {
    if (!std::isfinite(e)) throw DataError("adaptive_weights: non-finite teacher error");
    if (e < 0.0) throw DataError("adaptive_weights: negative teacher error");
  }
  const auto n = static_cast<double>(errors.size());
  AdaptiveWeights w;
  if (mode == AdaptiveMode::uniform) {
    w.values.assign(errors.size(), 1.0);
    return w;
  }
  if (!(rho > 0.0) || !std::isfinite(rho)) throw ParameterError("adaptive_weights: rho must be > 0");
  const double lowest = *std::min_element(errors.begin(), errors.end());
  double z = 0.0;
  w.values.resize(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) {
    w.values[i] = std::exp(-(errors[i] - lowest) / rho);
    z += w.values[i];
  }
  for (auto& v : w.values) v = n * v / z;
  return w;
}

double resolve_rho(const DistillConfig& cfg, std::span<const double> errors) {
  if (cfg.rho_mode == RhoMode::fixed) return cfg.rho;
  if (errors.empty()) throw ParameterError("median rho needs at least one error");
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  const auto mid = sorted.size() / 2;
  const double median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  if (!(median > 0.0)) throw DataError("median teacher error is zero; use rho_mode fixed");
  return median;
}

Tensor prediction_loss(Tape& tape, const Tensor& pred, const Tensor& target) {
  return mean(tape, abs(tape, sub(tape, pred, target)));
}

Tensor spatial_kd_loss(Tape& tape, const Tensor& student_projected, const Tensor& teacher_rep,
                       std::span<const double> weights) {
  if (teacher_rep.requires_grad()) {
    throw ContractError("spatial_kd_loss: teacher representation must be detached");
  }
  if (student_projected.shape() != teacher_rep.shape() || student_projected.rank() != 2) {
    throw DimensionError("spatial_kd_loss: shape mismatch " + shape_str(student_projected.shape()) +
                         " vs " + shape_str(teacher_rep.shape()));
  }
  const auto rows = student_projected.dim(0), width = student_projected.dim(1);
  if (weights.size() != rows) {
    throw DimensionError("spatial_kd_loss: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(rows) + " rows");
  }
  const Tensor diff = sub(tape, student_projected, teacher_rep);
  const Tensor per_row = row_sum(tape, square(tape, diff));
  const Tensor w = Tensor::from({rows}, weights);
  return scale(tape, sum(tape, mul(tape, per_row, w)),
               1.0 / (static_cast<double>(rows) * static_cast<double>(width)));
}

Tensor temporal_kd_loss_rows(Tape& tape, const Tensor& student_rows, const Tensor& teacher_rows,
                             double temperature, std::span<const double> weights) {
  if (!(temperature > 0.0)) throw ParameterError("temporal_kd_loss: temperature must be > 0");
  if (teacher_rows.requires_grad()) {
    throw ContractError("temporal_kd_loss: teacher predictions must be detached");
  }
  if (student_rows.shape() != teacher_rows.shape() || student_rows.rank() != 2) {
    throw DimensionError("temporal_kd_loss: shape mismatch " + shape_str(student_rows.shape()) +
                         " vs " + shape_str(teacher_rows.shape()));
  }
  const auto rows = student_rows.dim(0);
  if (weights.size() != rows) {
    throw DimensionError("temporal_kd_loss: " + std::to_string(weights.size()) +
                         " weights for " + std::to_string(rows) + " nodes");
  }
  Tape constant = Tape::no_grad();
  const Tensor log_p = log_softmax(constant, teacher_rows, temperature);
  Buffer p(log_p.numel());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(log_p.data()[i]);
  const Tensor probs = Tensor::adopt(log_p.shape(), std::move(p));

  const Tensor log_q = log_softmax(tape, student_rows, temperature);
  const Tensor kl = row_sum(tape, mul(tape, probs, sub(tape, log_p, log_q)));
  const Tensor w = Tensor::from({rows}, weights);
  return scale(tape, sum(tape, mul(tape, kl, w)),
               temperature * temperature / static_cast<double>(rows));
}

Tensor temporal_kd_loss(Tape& tape, const Tensor& student_pred, const Tensor& teacher_pred,
                        double temperature, std::span<const double> weights) {
  if (student_pred.rank() != 2 || teacher_pred.rank() != 2) {
    throw DimensionError("temporal_kd_loss: expected [horizon x n] predictions");
  }
  Tape constant = Tape::no_grad();
  return temporal_kd_loss_rows(tape, transpose(tape, student_pred),
                               transpose(constant, teacher_pred), temperature, weights);
}

Tensor total_loss(Tape& tape, const Tensor& pred_loss, const Tensor& spatial,
                  const Tensor& temporal, const DistillConfig& cfg) {
  Tensor total = pred_loss;
  if (cfg.lambda_spatial != 0.0 && spatial.defined()) {
    total = add(tape, total, scale(tape, spatial, cfg.lambda_spatial));
  }
  if (cfg.lambda_temporal != 0.0 && temporal.defined()) {
    total = add(tape, total, scale(tape, temporal, cfg.lambda_temporal));
  }
  return total;
}

MadResult mad_metric(const Tensor& reps) {
  if (reps.rank() != 2) throw DimensionError("mad_metric: expected [n x h], got " + shape_str(reps.shape()));
  const auto n = reps.dim(0), h = reps.dim(1);
  if (n < 2) throw ParameterError("mad_metric needs at least two rows");
  const auto v = reps.data();
  std::vector<double> norms(n);
  std::vector<std::size_t> usable;
  MadResult out;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < h; ++k) s += v[i * h + k] * v[i * h + k];
    norms[i] = std::sqrt(s);
    if (norms[i] > 0.0) {
      usable.push_back(i);
    } else {
      ++out.zero_rows;
    }
  }
  double total = 0.0;
  for (std::size_t a = 0; a < usable.size(); ++a) {
    const auto i = usable[a];
    for (std::size_t b = a + 1; b < usable.size(); ++b) {
      const auto j = usable[b];
      double dot = 0.0;
      for (std::size_t k = 0; k < h; ++k) dot += v[i * h + k] * v[j * h + k];
      const double cosine = std::clamp(dot / (norms[i] * norms[j]), -1.0, 1.0);
      total += 1.0 - cosine;
      ++out.pairs;
    }
  }
  out.value = out.pairs ? total / static_cast<double>(out.pairs) : 0.0;
  return out;
}

}  // namespace stkd
