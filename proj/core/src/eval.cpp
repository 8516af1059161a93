#include "stkd/eval.hpp"

#include <algorithm>
#include <cmath>

#include "stkd/error.hpp"

namespace stkd {
namespace {

struct Layout {
  std::size_t windows, horizon, nodes;
};

Layout layout_of(const Tensor& t) {
  if (t.rank() == 2) return {1, t.dim(0), t.dim(1)};
  if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
  throw DimensionError("expected [horizon x n] or [windows x horizon x n], got " + shape_str(t.shape()));
}

template <class Model, class Forward>
Tensor predict_impl(const Model& model, const WindowedDataset& data,
                    std::span<const std::size_t> windows, std::size_t batch_size, Forward fwd) {
  const auto n = data.n_nodes();
  const auto horizon = data.horizon();
  Buffer out;
  out.reserve(windows.size() * horizon * n);
  batch_size = std::max<std::size_t>(1, batch_size);
  for (std::size_t start = 0; start < windows.size(); start += batch_size) {
    const auto stop = std::min(windows.size(), start + batch_size);
    std::vector<Tensor> inputs;
    std::vector<std::size_t> slots;
    for (auto k = start; k < stop; ++k) {
      inputs.push_back(data.input(windows[k]));
      slots.push_back(data.slot(windows[k]));
    }
    Tape tape = Tape::no_grad();
    const Tensor rows = fwd(tape, model, stack_windows(inputs), slots);
    const Tensor block = rows_to_windows(rows, n);
    out.insert(out.end(), block.data().begin(), block.data().end());
  }
  return Tensor::adopt({windows.size(), horizon, n}, std::move(out));
}

}  // namespace

MetricsReport compute_metrics(const Tensor& pred, const Tensor& target, const Normalizer& normalizer) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("compute_metrics: shape mismatch " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
  }
  const auto [windows, horizon, nodes] = layout_of(pred);
  const auto p = pred.data();
  const auto y = target.data();

  struct Acc {
    double abs = 0.0, sq = 0.0, pct = 0.0;
    std::size_t count = 0, pct_count = 0;
  };
  std::vector<Acc> steps(horizon);
  for (std::size_t w = 0; w < windows; ++w) {
    for (std::size_t h = 0; h < horizon; ++h) {
      auto& acc = steps[h];
      for (std::size_t i = 0; i < nodes; ++i) {
        const auto idx = (w * horizon + h) * nodes + i;
        const double truth = normalizer.invert(y[idx]);
        const double delta = normalizer.invert(p[idx]) - truth;
        acc.abs += std::abs(delta);
        acc.sq += delta * delta;
        ++acc.count;
        if (std::abs(truth) >= kMapeMaskThreshold) {
          acc.pct += std::abs(delta) / std::abs(truth);
          ++acc.pct_count;
        }
      }
    }
  }
  MetricsReport report;
  Acc all;
  for (const auto& acc : steps) {
    HorizonMetrics m;
    m.mae = acc.abs / static_cast<double>(acc.count);
    m.rmse = std::sqrt(acc.sq / static_cast<double>(acc.count));
    if (acc.pct_count) m.mape = acc.pct / static_cast<double>(acc.pct_count);
    report.per_horizon.push_back(m);
    all.abs += acc.abs;
    all.sq += acc.sq;
    all.pct += acc.pct;
    all.count += acc.count;
    all.pct_count += acc.pct_count;
  }
  report.count = all.count;
  report.masked = all.count - all.pct_count;
  report.mae = all.abs / static_cast<double>(all.count);
  report.rmse = std::sqrt(all.sq / static_cast<double>(all.count));
  if (all.pct_count) report.mape = all.pct / static_cast<double>(all.pct_count);
  return report;
}

Tensor rows_to_windows(const Tensor& rows, std::size_t n_nodes) {
  if (rows.rank() != 2 || n_nodes == 0 || rows.dim(0) % n_nodes != 0) {
    throw DimensionError("rows_to_windows: " + shape_str(rows.shape()) + " is not [B*" +
                         std::to_string(n_nodes) + " x horizon]");
  }
  const auto batch = rows.dim(0) / n_nodes, horizon = rows.dim(1);
  Buffer out(rows.numel());
  const auto r = rows.data();
  for (std::size_t w = 0; w < batch; ++w) {
    for (std::size_t i = 0; i < n_nodes; ++i) {
      for (std::size_t h = 0; h < horizon; ++h) {
        out[(w * horizon + h) * n_nodes + i] = r[(w * n_nodes + i) * horizon + h];
      }
    }
  }
  return Tensor::adopt({batch, horizon, n_nodes}, std::move(out));
}

Tensor predict(const TeacherModel& teacher, const NormalizedAdjacency& adj,
               const WindowedDataset& data, std::span<const std::size_t> windows,
               std::size_t batch_size) {
  return predict_impl(teacher, data, windows, batch_size,
                      [&adj](Tape& tape, const TeacherModel& m, const Tensor& x,
                             std::span<const std::size_t> slots) { return m.forward_batch(tape, adj, x, slots).pred; });
}

Tensor predict(const StudentModel& student, const WindowedDataset& data,
               std::span<const std::size_t> windows, std::size_t batch_size) {
  return predict_impl(student, data, windows, batch_size,
                      [](Tape& tape, const StudentModel& m, const Tensor& x,
                         std::span<const std::size_t> slots) { return m.forward_batch(tape, x, slots).pred; });
}

Tensor gather_targets(const WindowedDataset& data, std::span<const std::size_t> windows) {
  Buffer out;
  out.reserve(windows.size() * data.horizon() * data.n_nodes());
  for (auto w : windows) {
    const Tensor t = data.target(w);
    out.insert(out.end(), t.data().begin(), t.data().end());
  }
  return Tensor::adopt({windows.size(), data.horizon(), data.n_nodes()}, std::move(out));
}

std::vector<double> per_node_mae(const Tensor& pred, const Tensor& target, const Normalizer& normalizer) {
  if (pred.shape() != target.shape()) throw DimensionError("per_node_mae: shape mismatch");
  const auto [windows, horizon, nodes] = layout_of(pred);
  std::vector<double> err(nodes, 0.0);
  const auto p = pred.data();
  const auto y = target.data();
  for (std::size_t w = 0; w < windows; ++w) {
    for (std::size_t h = 0; h < horizon; ++h) {
      for (std::size_t i = 0; i < nodes; ++i) {
        const auto idx = (w * horizon + h) * nodes + i;
        err[i] += std::abs(normalizer.invert(p[idx]) - normalizer.invert(y[idx]));
      }
    }
  }
  for (auto& e : err) e /= static_cast<double>(windows * horizon);
  return err;
}

}  // namespace stkd
