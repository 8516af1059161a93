#include "stkd/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "stkd/error.hpp"

namespace stkd {
namespace {

template <class T>
void do_not_optimize(const T& value) {
  asm volatile("" : : "g"(&value) : "memory");
}

void summarize(LatencySeries& s) {
  s.median_ns = percentile(s.samples_ns, 0.5);
  s.p10_ns = percentile(s.samples_ns, 0.1);
  s.p90_ns = percentile(s.samples_ns, 0.9);
}

}  // namespace

double percentile(std::span<const double> samples, double q) {
  if (samples.empty()) throw ParameterError("percentile of an empty sample");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

LatencyReport bench_pair(const std::function<void()>& baseline, const std::function<void()>& candidate,
                         std::size_t reps, std::size_t warmup) {
  if (reps < kMinBenchReps) {
    throw ParameterError("benchmark needs at least " + std::to_string(kMinBenchReps) +
                         " repetitions, got " + std::to_string(reps));
  }
  using clock = std::chrono::steady_clock;
  static_assert(clock::is_steady);
  for (std::size_t i = 0; i < warmup; ++i) {
    baseline();
    candidate();
  }
  LatencyReport report;
  report.baseline.reps = report.candidate.reps = reps;
  report.baseline.warmup = report.candidate.warmup = warmup;
  report.baseline.samples_ns.reserve(reps);
  report.candidate.samples_ns.reserve(reps);
  auto time_one = [](const std::function<void()>& fn) {
    const auto t0 = clock::now();
    fn();
    const auto t1 = clock::now();
    return static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
  };
  for (std::size_t i = 0; i < reps; ++i) {
    report.baseline.samples_ns.push_back(time_one(baseline));
    report.candidate.samples_ns.push_back(time_one(candidate));
  }
  summarize(report.baseline);
  summarize(report.candidate);
  report.speedup = report.baseline.median_ns / report.candidate.median_ns;
  return report;
}

LatencyReport bench_latency(const TeacherModel& teacher, const StudentModel& student,
                            const NormalizedAdjacency& adj, const Tensor& window, std::size_t slot,
                            std::size_t reps, std::size_t warmup) {
  auto run_teacher = [&] {
    Tape tape = Tape::no_grad();
    const auto out = teacher.forward(tape, adj, window, slot);
    do_not_optimize(out.pred.data()[0]);
  };
  auto run_student = [&] {
    Tape tape = Tape::no_grad();
    const auto out = student.forward(tape, window, slot);
    do_not_optimize(out.pred.data()[0]);
  };
  LatencyReport report = bench_pair(run_teacher, run_student, reps, warmup);
  report.baseline.kind = "teacher";
  report.candidate.kind = "student";
  report.baseline.n_nodes = teacher.config().n_nodes;
  report.candidate.n_nodes = student.config().n_nodes;
  return report;
}

}  // namespace stkd
