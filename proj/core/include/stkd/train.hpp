#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "stkd/data.hpp"
#include "stkd/distill.hpp"
#include "stkd/graph.hpp"
#include "stkd/models.hpp"
#include "stkd/tensor.hpp"

namespace stkd {

struct TrainConfig {
  std::size_t epochs = 50;
  /// Windows per optimizer step; every step covers all nodes.
  std::size_t batch_size = 16;
  double lr = 1e-3;
  /// Training stops once the validation MAE has not improved for more than
  /// this many consecutive epochs.
  std::size_t patience = 10;
  std::uint64_t seed = 42;
  /// Global-norm gradient clipping threshold; 0 disables clipping.
  double clip_norm = 5.0;
  /// Shuffled training windows visited per epoch; 0 means all of them.
  std::size_t windows_per_epoch = 0;

  void validate() const;
};

/// Adam with bias correction; moment buffers mirror the parameter list.
class AdamState {
 public:
  AdamState(std::span<const Tensor> params, double lr);

  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// θ ← θ − lr · m̂ / (√v̂ + ε) using each parameter's accumulated gradient
/// (a missing gradient counts as zero). Non-finite gradients abort the step
/// with NumericError before anything is modified.
void adam_step(std::span<Tensor> params, AdamState& state);

/// Rescales gradients so their global L2 norm is at most max_norm; returns
/// the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

struct EpochRecord {
  std::size_t epoch = 0;
  /// Mean total objective over the epoch's batches.
  double train_loss = 0.0;
  /// Validation MAE in original units.
  double val_mae = 0.0;
  double pred_loss = 0.0;
  double spatial_loss = 0.0;
  double temporal_loss = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_mae = 0.0;
  bool early_stopped = false;
};

/// Minimizes the prediction loss on the training windows. The model ends up
/// holding the parameters of the best validation epoch. On a non-finite loss
/// those parameters are restored and DivergenceError is thrown.
TrainHistory train_teacher(TeacherModel& model, const TrainConfig& cfg, const WindowedDataset& data,
                           const NormalizedAdjacency& adj);

/// Plain supervised student training; no distillation term is ever built.
TrainHistory train_student(StudentModel& model, const TrainConfig& cfg, const WindowedDataset& data);

/// Frozen-teacher signals for every training window plus the per-node
/// validation errors used for adaptive weighting.
struct TeacherTargets {
  std::size_t n_nodes = 0;
  std::size_t rep_layer = 0;
  std::size_t rep_width = 0;
  std::size_t horizon = 0;
  /// Indexed by window id; only training windows are populated.
  std::vector<std::vector<double>> pred_rows;
  std::vector<std::vector<double>> rep_rows;
  std::vector<double> val_errors;
  double val_mae = 0.0;
};

TeacherTargets compute_teacher_targets(const TeacherModel& teacher, const WindowedDataset& data,
                                       const NormalizedAdjacency& adj, int rep_layer = -1);

/// Optimizes L_pred + λ_s L_spatial + λ_t L_temporal against a frozen
/// teacher. Throws ContractError if the teacher's parameters change.
TrainHistory distill_student(StudentModel& model, const TrainConfig& cfg, const DistillConfig& dcfg,
                             const TeacherModel& teacher, const WindowedDataset& data,
                             const NormalizedAdjacency& adj);
/// Same, reusing precomputed teacher signals.
TrainHistory distill_student(StudentModel& model, const TrainConfig& cfg, const DistillConfig& dcfg,
                             const TeacherTargets& targets, const WindowedDataset& data);

}  // namespace stkd
