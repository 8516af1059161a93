#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stkd/tensor.hpp"

namespace stkd {

enum class AdaptiveMode { uniform, error_softmax };
enum class RhoMode { median, fixed };

std::string to_string(AdaptiveMode mode);
std::string to_string(RhoMode mode);
AdaptiveMode adaptive_mode_from(const std::string& name);
RhoMode rho_mode_from(const std::string& name);

/// Weights and knobs of the dual-level objective
///   L = L_pred + lambda_spatial · L_spatial + lambda_temporal · L_temporal.
struct DistillConfig {
  double lambda_spatial = 1.0;
  double lambda_temporal = 1.0;
  double temperature = 2.0;
  AdaptiveMode adaptive_mode = AdaptiveMode::error_softmax;
  /// median: rho is the median of the teacher's per-node errors.
  RhoMode rho_mode = RhoMode::median;
  double rho = 1.0;
  /// Teacher representation matched by the spatial term; -1 selects the last block.
  int teacher_rep_layer = -1;

  /// Throws ParameterError on out-of-range fields.
  void validate() const;
  bool kd_enabled() const noexcept { return lambda_spatial != 0.0 || lambda_temporal != 0.0; }
};

/// Per-node distillation weights, non-negative with mean one.
struct AdaptiveWeights {
  std::vector<double> values;
};

/// uniform: all ones. error_softmax: n · softmax(-errors / rho), so nodes on
/// which the teacher is less reliable receive less distillation pressure.
AdaptiveWeights adaptive_weights(std::span<const double> errors, AdaptiveMode mode, double rho);

/// rho actually used for a configuration and a vector of teacher errors.
double resolve_rho(const DistillConfig& cfg, std::span<const double> errors);

/// Mean absolute error over all entries.
Tensor prediction_loss(Tape& tape, const Tensor& pred, const Tensor& target);

/// (1/R) Σ_i w_i ‖s_i − t_i‖² / width over rows i of [R x width] matrices.
/// The teacher side must not require gradients.
Tensor spatial_kd_loss(Tape& tape, const Tensor& student_projected, const Tensor& teacher_rep,
                       std::span<const double> weights);

/// Horizon-profile distillation for [horizon x n] predictions: each node's
/// profile is softened by a temperature softmax over the horizon axis and
/// the loss is (1/n) Σ_i w_i τ² KL(teacher_i ‖ student_i).
Tensor temporal_kd_loss(Tape& tape, const Tensor& student_pred, const Tensor& teacher_pred,
                        double temperature, std::span<const double> weights);
/// Same objective on node-major [R x horizon] rows.
Tensor temporal_kd_loss_rows(Tape& tape, const Tensor& student_rows, const Tensor& teacher_rows,
                             double temperature, std::span<const double> weights);

/// Undefined spatial/temporal tensors are treated as absent terms. A term
/// whose lambda is zero is skipped outright, so L == L_pred exactly.
Tensor total_loss(Tape& tape, const Tensor& pred_loss, const Tensor& spatial,
                  const Tensor& temporal, const DistillConfig& cfg);

struct MadResult {
  double value = 0.0;
  std::size_t zero_rows = 0;
  std::size_t pairs = 0;
};

/// Mean over unordered row pairs of the cosine distance 1 − cos(h_i, h_j).
/// Zero-norm rows are excluded and counted; with fewer than two usable rows
/// the value is 0. Throws ParameterError for fewer than two rows.
MadResult mad_metric(const Tensor& reps);

}  // namespace stkd
