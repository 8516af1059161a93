#include "stkd/train.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "stkd/error.hpp"
#include "stkd/eval.hpp"
#include "stkd/ops.hpp"
#include "stkd/rng.hpp"

namespace stkd {
namespace {

struct StepLosses {
  Tensor total;
  double pred = 0.0;
  double spatial = 0.0;
  double temporal = 0.0;
};

using StepFn = std::function<StepLosses(Tape&, std::span<const std::size_t>)>;
using ValFn = std::function<double()>;

using Snapshot = std::vector<std::vector<double>>;

Snapshot snapshot(std::span<const Tensor> params) {
  Snapshot out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.data().begin(), p.data().end());
  return out;
}

void restore(std::span<Tensor> params, const Snapshot& snap) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(snap[i].begin(), snap[i].end(), params[i].mutable_data().begin());
  }
}

Tensor batch_inputs(const WindowedDataset& data, std::span<const std::size_t> windows) {
  std::vector<Tensor> inputs;
  inputs.reserve(windows.size());
  for (auto w : windows) inputs.push_back(data.input(w));
  return stack_windows(inputs);
}

std::vector<std::size_t> batch_slots(const WindowedDataset& data, std::span<const std::size_t> windows) {
  std::vector<std::size_t> slots;
  slots.reserve(windows.size());
  for (auto w : windows) slots.push_back(data.slot(w));
  return slots;
}

/// Node-major [B*n x horizon] targets matching forward_batch predictions.
Tensor target_rows(const WindowedDataset& data, std::span<const std::size_t> windows) {
  const auto n = data.n_nodes(), horizon = data.horizon();
  Buffer out(windows.size() * n * horizon);
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const auto start = windows[b] + data.history();
    for (std::size_t h = 0; h < horizon; ++h) {
      for (std::size_t i = 0; i < n; ++i) out[(b * n + i) * horizon + h] = data.value(start + h, i);
    }
  }
  return Tensor::adopt({windows.size() * n, horizon}, std::move(out));
}

double mae_original_units(const Tensor& pred, const Tensor& target, const WindowedDataset& data) {
  const Normalizer norm = data.normalizer().value_or(Normalizer{});
  return compute_metrics(pred, target, norm).mae;
}

TrainHistory fit(std::vector<Tensor> params, const TrainConfig& cfg, const WindowedDataset& data,
                 const StepFn& step, const ValFn& validate) {
  cfg.validate();
  if (data.windows(Split::train).empty() || data.windows(Split::val).empty()) {
    throw DataError("training needs non-empty train and validation splits");
  }
  AdamState adam(params, cfg.lr);
  Snapshot best = snapshot(params);
  TrainHistory history;
  history.best_val_mae = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  auto diverge = [&](const std::string& why, std::size_t epoch) {
    restore(params, best);
    for (auto& p : params) p.drop_grad();
    throw DivergenceError(why, static_cast<int>(epoch));
  };

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = data.windows(Split::train);
    Rng rng(cfg.seed, epoch);
    rng.shuffle(std::span<std::size_t>(order));
    if (cfg.windows_per_epoch > 0 && cfg.windows_per_epoch < order.size()) {
      order.resize(cfg.windows_per_epoch);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const auto stop = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      for (auto& p : params) p.drop_grad();
      Tape tape;
      const StepLosses losses = step(tape, batch);
      const double total = losses.total.item();
      if (!std::isfinite(total)) diverge("training loss became non-finite", epoch);
      tape.backward(losses.total);
      tape.clear();
      try {
        if (cfg.clip_norm > 0.0) clip_grad_norm(params, cfg.clip_norm);
        adam_step(params, adam);
      } catch (const NumericError& e) {
        diverge(e.what(), epoch);
      }
      rec.train_loss += total;
      rec.pred_loss += losses.pred;
      rec.spatial_loss += losses.spatial;
      rec.temporal_loss += losses.temporal;
      ++batches;
    }
    for (auto& p : params) p.drop_grad();
    const auto denom = static_cast<double>(std::max<std::size_t>(1, batches));
    rec.train_loss /= denom;
    rec.pred_loss /= denom;
    rec.spatial_loss /= denom;
    rec.temporal_loss /= denom;
    rec.val_mae = validate();
    if (!std::isfinite(rec.val_mae)) diverge("validation error became non-finite", epoch);
    history.epochs.push_back(rec);

    if (rec.val_mae < history.best_val_mae) {
      history.best_val_mae = rec.val_mae;
      history.best_epoch = epoch;
      best = snapshot(params);
      since_best = 0;
    } else if (++since_best > cfg.patience) {
      history.early_stopped = true;
      break;
    }
  }
  restore(params, best);
  return history;
}

Tensor tiled(std::span<const double> per_node, std::size_t batch) {
  Buffer out;
  out.reserve(per_node.size() * batch);
  for (std::size_t b = 0; b < batch; ++b) out.insert(out.end(), per_node.begin(), per_node.end());
  const std::size_t len = out.size();
  return Tensor::adopt({len}, std::move(out));
}

Tensor gather_cached(const std::vector<std::vector<double>>& cache, std::span<const std::size_t> windows,
                     std::size_t rows_per_window, std::size_t width) {
  Buffer out;
  out.reserve(windows.size() * rows_per_window * width);
  for (auto w : windows) {
    const auto& block = cache.at(w);
    if (block.empty()) throw ContractError("no teacher signal cached for window " + std::to_string(w));
    out.insert(out.end(), block.begin(), block.end());
  }
  return Tensor::adopt({windows.size() * rows_per_window, width}, std::move(out));
}

std::vector<std::size_t> resolve_rep_layer(const TeacherModel& teacher, int rep_layer) {
  const auto blocks = teacher.config().blocks;
  if (blocks == 0) throw ParameterError("distillation needs a teacher with at least one block");
  const auto layer = rep_layer < 0 ? blocks : static_cast<std::size_t>(rep_layer);
  if (layer < 1 || layer > blocks) {
    throw ParameterError("teacher_rep_layer " + std::to_string(rep_layer) + " outside [1, " +
                         std::to_string(blocks) + "]");
  }
  return {layer};
}

TrainHistory fit_student(StudentModel& model, const TrainConfig& cfg, const WindowedDataset& data,
                         const DistillConfig* dcfg, const TeacherTargets* targets) {
  if (model.config().n_nodes != data.n_nodes() || model.config().history != data.history() ||
      model.config().horizon != data.horizon()) {
    throw DimensionError("student dimensions do not match the dataset");
  }
  std::vector<double> weights;
  if (dcfg && dcfg->kd_enabled()) {
    dcfg->validate();
    if (targets->rep_width != model.config().teacher_hidden) {
      throw DimensionError("teacher representation width " + std::to_string(targets->rep_width) +
                           " differs from student projection width " +
                           std::to_string(model.config().teacher_hidden));
    }
    weights = adaptive_weights(targets->val_errors, dcfg->adaptive_mode,
                               resolve_rho(*dcfg, targets->val_errors))
                  .values;
  }
  const auto n = data.n_nodes();
  StepFn step = [&](Tape& tape, std::span<const std::size_t> batch) {
    const auto slots = batch_slots(data, batch);
    const auto out = model.forward_batch(tape, batch_inputs(data, batch), slots);
    StepLosses l;
    const Tensor pred = prediction_loss(tape, out.pred, target_rows(data, batch));
    l.pred = pred.item();
    if (!dcfg || !dcfg->kd_enabled()) {
      l.total = pred;
      return l;
    }
    const Tensor w = tiled(weights, batch.size());
    Tensor spatial, temporal;
    if (dcfg->lambda_spatial != 0.0) {
      spatial = spatial_kd_loss(tape, out.projected,
                                gather_cached(targets->rep_rows, batch, n, targets->rep_width), w.data());
      l.spatial = spatial.item();
    }
    if (dcfg->lambda_temporal != 0.0) {
      temporal = temporal_kd_loss_rows(tape, out.pred,
                                       gather_cached(targets->pred_rows, batch, n, targets->horizon),
                                       dcfg->temperature, w.data());
      l.temporal = temporal.item();
    }
    l.total = total_loss(tape, pred, spatial, temporal, *dcfg);
    return l;
  };
  const auto& val = data.windows(Split::val);
  const Tensor val_targets = gather_targets(data, val);
  ValFn validate = [&] { return mae_original_units(predict(model, data, val), val_targets, data); };
  return fit(model.param_tensors(), cfg, data, step, validate);
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ParameterError("epochs must be positive");
  if (batch_size == 0) throw ParameterError("batch_size must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ParameterError("lr must be positive");
  if (!(clip_norm >= 0.0)) throw ParameterError("clip_norm must be >= 0");
}

AdamState::AdamState(std::span<const Tensor> params, double learning_rate) : lr(learning_rate) {
  for (const auto& p : params) {
    m.emplace_back(p.numel(), 0.0);
    v.emplace_back(p.numel(), 0.0);
  }
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (params.size() != state.m.size()) throw ContractError("adam_step: parameter list changed");
  for (const auto& p : params) {
    for (double g : p.grad()) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_data();
    const auto grad = params[k].grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("clip_grad_norm: non-finite gradient norm");
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (auto& g : p.grad_buffer()) g *= factor;
    }
  }
  return norm;
}

TrainHistory train_teacher(TeacherModel& model, const TrainConfig& cfg, const WindowedDataset& data,
                           const NormalizedAdjacency& adj) {
  if (model.config().n_nodes != data.n_nodes() || model.config().history != data.history() ||
      model.config().horizon != data.horizon()) {
    throw DimensionError("teacher dimensions do not match the dataset");
  }
  StepFn step = [&](Tape& tape, std::span<const std::size_t> batch) {
    const auto out = model.forward_batch(tape, adj, batch_inputs(data, batch), batch_slots(data, batch));
    StepLosses l;
    l.total = prediction_loss(tape, out.pred, target_rows(data, batch));
    l.pred = l.total.item();
    return l;
  };
  const auto& val = data.windows(Split::val);
  const Tensor val_targets = gather_targets(data, val);
  ValFn validate = [&] { return mae_original_units(predict(model, adj, data, val), val_targets, data); };
  return fit(model.param_tensors(), cfg, data, step, validate);
}

TrainHistory train_student(StudentModel& model, const TrainConfig& cfg, const WindowedDataset& data) {
  return fit_student(model, cfg, data, nullptr, nullptr);
}

TeacherTargets compute_teacher_targets(const TeacherModel& teacher, const WindowedDataset& data,
                                       const NormalizedAdjacency& adj, int rep_layer) {
  const auto layer = resolve_rep_layer(teacher, rep_layer).front();
  const auto n = data.n_nodes();
  TeacherTargets t;
  t.n_nodes = n;
  t.rep_layer = layer;
  t.rep_width = teacher.config().hidden;
  t.horizon = data.horizon();
  t.pred_rows.resize(data.n_windows());
  t.rep_rows.resize(data.n_windows());

  const auto& train = data.windows(Split::train);
  constexpr std::size_t kBatch = 32;
  for (std::size_t start = 0; start < train.size(); start += kBatch) {
    const auto stop = std::min(train.size(), start + kBatch);
    const std::span<const std::size_t> batch(train.data() + start, stop - start);
    Tape tape = Tape::no_grad();
    const auto out = teacher.forward_batch(tape, adj, batch_inputs(data, batch), batch_slots(data, batch));
    const auto pred = out.pred.data();
    const auto rep = out.reps[layer].data();
    const auto pred_stride = n * t.horizon, rep_stride = n * t.rep_width;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      t.pred_rows[batch[b]].assign(pred.begin() + static_cast<std::ptrdiff_t>(b * pred_stride),
                                   pred.begin() + static_cast<std::ptrdiff_t>((b + 1) * pred_stride));
      t.rep_rows[batch[b]].assign(rep.begin() + static_cast<std::ptrdiff_t>(b * rep_stride),
                                  rep.begin() + static_cast<std::ptrdiff_t>((b + 1) * rep_stride));
    }
  }
  const auto& val = data.windows(Split::val);
  if (val.empty()) throw DataError("teacher error estimation needs a non-empty validation split");
  const Tensor val_pred = predict(teacher, adj, data, val);
  const Tensor val_target = gather_targets(data, val);
  const Normalizer norm = data.normalizer().value_or(Normalizer{});
  t.val_errors = per_node_mae(val_pred, val_target, norm);
  t.val_mae = compute_metrics(val_pred, val_target, norm).mae;
  return t;
}

TrainHistory distill_student(StudentModel& model, const TrainConfig& cfg, const DistillConfig& dcfg,
                             const TeacherModel& teacher, const WindowedDataset& data,
                             const NormalizedAdjacency& adj) {
  dcfg.validate();
  const auto before = snapshot(teacher.param_tensors());
  TrainHistory history;
  if (dcfg.kd_enabled()) {
    const auto targets = compute_teacher_targets(teacher, data, adj, dcfg.teacher_rep_layer);
    history = fit_student(model, cfg, data, &dcfg, &targets);
  } else {
    history = fit_student(model, cfg, data, &dcfg, nullptr);
  }
  if (snapshot(teacher.param_tensors()) != before) {
    throw ContractError("teacher parameters changed during distillation");
  }
  return history;
}

TrainHistory distill_student(StudentModel& model, const TrainConfig& cfg, const DistillConfig& dcfg,
                             const TeacherTargets& targets, const WindowedDataset& data) {
  dcfg.validate();
  return fit_student(model, cfg, data, &dcfg, &targets);
}

}  // namespace stkd
