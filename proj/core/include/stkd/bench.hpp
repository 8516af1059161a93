#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stkd/graph.hpp"
#include "stkd/models.hpp"

namespace stkd {

inline constexpr std::size_t kMinBenchReps = 30;

struct LatencySeries {
  std::string kind;
  std::size_t n_nodes = 0;
  std::size_t reps = 0;
  std::size_t warmup = 0;
  std::vector<double> samples_ns;
  double median_ns = 0.0;
  double p10_ns = 0.0;
  double p90_ns = 0.0;
};

/// speedup = baseline.median_ns / candidate.median_ns.
struct LatencyReport {
  LatencySeries baseline;
  LatencySeries candidate;
  double speedup = 0.0;
};

/// Linear-interpolated percentile (q in [0, 1]) of unsorted samples.
double percentile(std::span<const double> samples, double q);

/// Times two callables with interleaved repetitions (baseline, candidate,
/// baseline, ...) after `warmup` untimed calls of each, on a monotonic clock.
/// Throws ParameterError when reps < kMinBenchReps.
LatencyReport bench_pair(const std::function<void()>& baseline, const std::function<void()>& candidate,
                         std::size_t reps, std::size_t warmup);

/// Teacher (baseline) vs student (candidate) single-window inference on the
/// same input window.
LatencyReport bench_latency(const TeacherModel& teacher, const StudentModel& student,
                            const NormalizedAdjacency& adj, const Tensor& window, std::size_t slot,
                            std::size_t reps, std::size_t warmup);

}  // namespace stkd
