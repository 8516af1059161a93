#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "stkd/data.hpp"
#include "stkd/graph.hpp"
#include "stkd/models.hpp"
#include "stkd/tensor.hpp"

namespace stkd {

inline constexpr double kMapeMaskThreshold = 1e-3;

struct HorizonMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  /// Absent when every target at this step is masked.
  std::optional<double> mape;
};

struct MetricsReport {
  double mae = 0.0;
  double rmse = 0.0;
  std::optional<double> mape;
  std::vector<HorizonMetrics> per_horizon;
  std::size_t count = 0;
  /// Entries excluded from MAPE because |target| < kMapeMaskThreshold.
  std::size_t masked = 0;
};

/// Metrics in original units. pred and target are normalized values of shape
/// [horizon x n] or [windows x horizon x n]; both are inverted through the
/// normalizer before comparison.
MetricsReport compute_metrics(const Tensor& pred, const Tensor& target, const Normalizer& normalizer);

/// Model predictions for the given windows, [windows x horizon x n],
/// evaluated without recording gradients.
Tensor predict(const TeacherModel& teacher, const NormalizedAdjacency& adj,
               const WindowedDataset& data, std::span<const std::size_t> windows,
               std::size_t batch_size = 32);
Tensor predict(const StudentModel& student, const WindowedDataset& data,
               std::span<const std::size_t> windows, std::size_t batch_size = 64);

/// Targets for the given windows, [windows x horizon x n].
Tensor gather_targets(const WindowedDataset& data, std::span<const std::size_t> windows);

/// Per-node MAE in original units, averaged over windows and horizon steps.
std::vector<double> per_node_mae(const Tensor& pred, const Tensor& target, const Normalizer& normalizer);

/// Converts node-major batch rows [B*n x horizon] into [B x horizon x n].
Tensor rows_to_windows(const Tensor& rows, std::size_t n_nodes);

}  // namespace stkd
