#include "stkd/oversmoothing.hpp"

#include <algorithm>
#include <cmath>

#include "stkd/data.hpp"
#include "stkd/distill.hpp"
#include "stkd/error.hpp"
#include "stkd/models.hpp"

namespace stkd {

namespace {
constexpr std::size_t kBurnIn = 64;
}

Tensor probe_window(const Graph& g, std::size_t history, std::uint64_t seed) {
  const auto n = g.n_nodes();
  const auto series = generate_synthetic(g, history + kBurnIn, 5.0, seed);
  const auto first = series.values.begin() + static_cast<std::ptrdiff_t>(kBurnIn * n);
  std::vector<double> values(first, series.values.end());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(values.size()));
  for (auto& v : values) v = sd > 0.0 ? (v - mean) / sd : 0.0;
  return Tensor::from({history, n, 1}, std::move(values));
}

std::vector<DepthMad> oversmoothing_study(std::span<const std::size_t> depths, const Graph& g,
                                          std::uint64_t seed, const OversmoothingConfig& cfg) {
  if (!std::is_sorted(depths.begin(), depths.end())) {
    throw ParameterError("oversmoothing depths must be sorted ascending");
  }
  const auto adj = symmetric_normalize(g);
  const Tensor window = probe_window(g, cfg.history, seed);
  std::vector<DepthMad> table;
  for (auto depth : depths) {
    TeacherConfig tc;
    tc.n_nodes = g.n_nodes();
    tc.history = cfg.history;
    tc.horizon = 1;
    tc.blocks = depth;
    tc.hidden = cfg.hidden;
    tc.kernel = cfg.kernel;
    tc.embed_dim = 0;
    tc.time_features = false;
    TeacherModel teacher(tc);
    teacher.init_params(seed);
    Tape tape = Tape::no_grad();
    const auto out = teacher.forward(tape, adj, window, 0);
    const auto mad = mad_metric(out.reps.back());
    table.push_back(DepthMad{depth, mad.value, mad.zero_rows});
  }
  return table;
}

}  // namespace stkd
