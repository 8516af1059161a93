#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stkd/graph.hpp"
#include "stkd/tensor.hpp"

namespace stkd {

/// Node-by-time flow readings, stored time-major: values[t * n_nodes + i].
struct TrafficSeries {
  std::size_t n_nodes = 0;
  std::size_t n_steps = 0;
  double step_minutes = 5.0;
  std::vector<double> values;
  /// Timestamps as they appeared in the source file (empty for synthetic).
  std::vector<std::string> timestamps;
  /// Cells that were missing on ingest and had to be filled.
  std::size_t filled = 0;

  double at(std::size_t t, std::size_t node) const { return values[t * n_nodes + node]; }
  std::size_t steps_per_day() const;
};

struct GeneratorParams {
  double alpha = 0.85;
  double amplitude_min = 10.0;
  double amplitude_max = 30.0;
  /// Standard deviation of the per-step innovation.
  double noise = 8.0;
  /// Initial level for every node; defaults to amplitude / (1 - alpha).
  std::optional<double> initial_level;
};

/// x_{t+1} = alpha · Â x_t + beta_i · (1 + sin(2πt/day + phase_i)) + noise · ε,
/// clipped at 0. Per-node amplitude and phase come from the seed.
TrafficSeries generate_synthetic(const Graph& g, std::size_t n_steps, double step_minutes,
                                 std::uint64_t seed, const GeneratorParams& params = {});

/// Header `timestamp,node_0,...,node_{N-1}`. Missing cells (empty or NaN)
/// are forward-filled per node, then leading gaps are zero-filled.
TrafficSeries load_readings_csv(const std::filesystem::path& path);
void save_readings_csv(const TrafficSeries& series, const std::filesystem::path& path);

enum class Split : std::uint8_t { train, val, test, gap };

struct SplitFractions {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

/// Global z-score statistics, fitted on training steps only.
struct Normalizer {
  double mean = 0.0;
  double std = 1.0;

  double apply(double x) const { return (x - mean) / std; }
  double invert(double z) const { return z * std + mean; }
};

/// Stride-1 (history, horizon) windows over a series with a time-ordered
/// train/val/test split.
///
/// Window w reads steps [w, w + history) and predicts [w + history,
/// w + history + horizon). Split s owns a contiguous step range; a window
/// belongs to s only when its whole span lies inside that range, so windows
/// straddling a boundary are tagged Split::gap and never used.
class WindowedDataset {
 public:
  std::size_t history() const noexcept { return history_; }
  std::size_t horizon() const noexcept { return horizon_; }
  std::size_t n_nodes() const noexcept { return n_nodes_; }
  std::size_t n_steps() const noexcept { return n_steps_; }
  std::size_t n_windows() const noexcept { return split_.size(); }
  std::size_t steps_per_day() const noexcept { return steps_per_day_; }

  Split split_of(std::size_t window) const { return split_.at(window); }
  const std::vector<std::size_t>& windows(Split s) const;
  /// Half-open step range [first, last) owned by a split.
  std::pair<std::size_t, std::size_t> step_range(Split s) const;

  /// Series values (normalized once normalize() has been applied).
  double value(std::size_t t, std::size_t node) const { return values_[t * n_nodes_ + node]; }
  std::span<const double> values() const noexcept { return values_; }
  const std::optional<Normalizer>& normalizer() const noexcept { return normalizer_; }

  /// [history x n_nodes x 1].
  Tensor input(std::size_t window) const;
  /// [horizon x n_nodes].
  Tensor target(std::size_t window) const;
  /// Time-of-day slot of the window's last input step.
  std::size_t slot(std::size_t window) const;

  friend WindowedDataset make_windows(const TrafficSeries&, std::size_t, std::size_t,
                                      SplitFractions);
  friend WindowedDataset normalize(const WindowedDataset&);

 private:
  std::size_t history_ = 0;
  std::size_t horizon_ = 0;
  std::size_t n_nodes_ = 0;
  std::size_t n_steps_ = 0;
  std::size_t steps_per_day_ = 288;
  std::array<std::size_t, 4> boundaries_{};  // 0, train end, val end, n_steps
  std::vector<Split> split_;
  std::array<std::vector<std::size_t>, 3> members_;
  std::vector<double> values_;
  std::optional<Normalizer> normalizer_;
};

WindowedDataset make_windows(const TrafficSeries& series, std::size_t history,
                             std::size_t horizon, SplitFractions fractions = {});

/// Fits a Normalizer on the training steps and returns the dataset with every
/// value transformed by it.
WindowedDataset normalize(const WindowedDataset& raw);

}  // namespace stkd
