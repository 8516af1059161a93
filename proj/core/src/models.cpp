#include "stkd/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "stkd/error.hpp"
#include "stkd/ops.hpp"
#include "stkd/rng.hpp"

namespace stkd {
namespace {

constexpr std::uint64_t kHeadSalt = 0x68656164;       // "head"
constexpr std::uint64_t kEmbeddingSalt = 0x656d6264;  // "embd"
constexpr std::uint64_t kProjectionSalt = 0x70726f6a; // "proj"

void glorot(Tensor& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : w.mutable_data()) v = rng.uniform(-bound, bound);
}

void add_param(std::vector<NamedParam>& params, std::string name, Shape shape) {
  params.push_back(NamedParam{std::move(name), Tensor::zeros(std::move(shape), true)});
}

Tensor& find(std::vector<NamedParam>& params, const std::string& name) {
  for (auto& p : params) {
    if (p.name == name) return p.value;
  }
  throw ContractError("no parameter named " + name);
}

const Tensor& find(const std::vector<NamedParam>& params, const std::string& name) {
  for (const auto& p : params) {
    if (p.name == name) return p.value;
  }
  throw ContractError("no parameter named " + name);
}

std::size_t count(const std::vector<NamedParam>& params) {
  std::size_t total = 0;
  for (const auto& p : params) total += p.value.numel();
  return total;
}

std::vector<Tensor> tensors(const std::vector<NamedParam>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.value);
  return out;
}

std::string block_name(std::size_t b, const char* leaf) {
  return "block" + std::to_string(b) + "." + leaf;
}

std::size_t check_batch(const Tensor& windows, std::size_t history, std::size_t n_nodes) {
  if (windows.rank() != 3 || windows.dim(1) != n_nodes || windows.dim(2) != 1 ||
      windows.dim(0) == 0 || windows.dim(0) % history != 0) {
    throw DimensionError("expected windows of shape [B*" + std::to_string(history) + " x " +
                         std::to_string(n_nodes) + " x 1], got " + shape_str(windows.shape()));
  }
  return windows.dim(0) / history;
}

std::size_t input_channels(const TeacherConfig& c) {
  return 1 + c.embed_dim + (c.time_features ? 2 : 0);
}

std::size_t head_channels(const TeacherConfig& c) {
  if (c.blocks == 0) return input_channels(c);
  return c.hidden + (c.input_skip ? input_channels(c) : 0);
}

void check_slots(std::span<const std::size_t> slots, std::size_t batch, std::size_t steps_per_day) {
  if (slots.size() != batch) {
    throw DimensionError("batch of " + std::to_string(batch) + " windows got " +
                         std::to_string(slots.size()) + " time slots");
  }
  for (auto s : slots) {
    if (s >= steps_per_day) {
      throw ParameterError("time slot " + std::to_string(s) + " outside [0, " +
                           std::to_string(steps_per_day) + ")");
    }
  }
}

// (sin, cos) of the time of day, one row per (window, node), or per
// (window, step, node) when steps > 1, the last step sitting at the slot.
Tensor time_of_day(std::span<const std::size_t> slots, std::size_t steps, std::size_t n,
                   std::size_t steps_per_day) {
  Buffer tf(slots.size() * steps * n * 2);
  std::size_t r = 0;
  for (auto slot : slots) {
    for (std::size_t t = 0; t < steps; ++t) {
      const auto back = (steps - 1 - t) % steps_per_day;
      const auto s = (slot + steps_per_day - back) % steps_per_day;
      const double angle =
          2.0 * std::numbers::pi * static_cast<double>(s) / static_cast<double>(steps_per_day);
      const double sn = std::sin(angle), cs = std::cos(angle);
      for (std::size_t i = 0; i < n; ++i, ++r) {
        tf[2 * r] = sn;
        tf[2 * r + 1] = cs;
      }
    }
  }
  const std::size_t rows = r;
  return Tensor::adopt({rows, 2}, std::move(tf));
}

}  // namespace

TeacherModel::TeacherModel(TeacherConfig config) : config_(config) {
  if (config_.n_nodes == 0 || config_.history == 0 || config_.horizon == 0 ||
      config_.kernel == 0 || (config_.blocks > 0 && config_.hidden == 0) ||
      config_.steps_per_day == 0) {
    throw ParameterError("teacher dimensions must be positive");
  }
  if (config_.embed_dim > 0) add_param(params_, "embedding", {config_.n_nodes, config_.embed_dim});
  std::size_t c_in = input_channels(config_);
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    const auto h = config_.hidden;
    add_param(params_, block_name(b, "temporal_a.weight"), {config_.kernel * c_in, h});
    add_param(params_, block_name(b, "temporal_a.bias"), {h});
    add_param(params_, block_name(b, "temporal_b.weight"), {config_.kernel * c_in, h});
    add_param(params_, block_name(b, "temporal_b.bias"), {h});
    add_param(params_, block_name(b, "graph.weight"), {h, h});
    add_param(params_, block_name(b, "graph.bias"), {h});
    c_in = h;
  }
  auto head_in = config_.history * head_channels(config_);
  if (config_.head_hidden > 0) {
    add_param(params_, "head.hidden.weight", {head_in, config_.head_hidden});
    add_param(params_, "head.hidden.bias", {config_.head_hidden});
    head_in = config_.head_hidden;
  }
  add_param(params_, "head.weight", {head_in, config_.horizon});
  add_param(params_, "head.bias", {config_.horizon});
}

std::vector<Tensor> TeacherModel::param_tensors() const { return tensors(params_); }
std::size_t TeacherModel::param_count() const { return count(params_); }
const Tensor& TeacherModel::param(const std::string& name) const { return find(params_, name); }

void TeacherModel::init_params(std::uint64_t seed) {
  for (auto& p : params_) std::fill(p.value.mutable_data().begin(), p.value.mutable_data().end(), 0.0);
  if (config_.embed_dim > 0) {
    Rng rng(mix_seed(seed, kEmbeddingSalt));
    glorot(find(params_, "embedding"), config_.n_nodes, config_.embed_dim, rng);
  }
  std::size_t c_in = input_channels(config_);
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    Rng rng(mix_seed(seed, b + 1));
    const auto h = config_.hidden;
    glorot(find(params_, block_name(b, "temporal_a.weight")), config_.kernel * c_in, h, rng);
    glorot(find(params_, block_name(b, "temporal_b.weight")), config_.kernel * c_in, h, rng);
    glorot(find(params_, block_name(b, "graph.weight")), h, h, rng);
    c_in = h;
  }
  Rng rng(mix_seed(seed, kHeadSalt));
  auto head_in = config_.history * head_channels(config_);
  if (config_.head_hidden > 0) {
    glorot(find(params_, "head.hidden.weight"), head_in, config_.head_hidden, rng);
    head_in = config_.head_hidden;
  }
  glorot(find(params_, "head.weight"), head_in, config_.horizon, rng);
}

TeacherModel::Output TeacherModel::forward_batch(Tape& tape, const NormalizedAdjacency& adj,
                                                 const Tensor& windows,
                                                 std::span<const std::size_t> slots,
                                                 bool message_passing) const {
  const auto n = config_.n_nodes;
  const auto T = config_.history;
  const auto batch = check_batch(windows, T, n);
  if (config_.time_features) check_slots(slots, batch, config_.steps_per_day);
  if (message_passing && adj.n != n) {
    throw DimensionError("adjacency has " + std::to_string(adj.n) + " nodes, teacher expects " +
                         std::to_string(n));
  }
  std::vector<std::size_t> last_steps(batch);
  for (std::size_t w = 0; w < batch; ++w) last_steps[w] = w * T + T - 1;

  Output out;
  out.reps.push_back(fold_time(tape, windows, T));
  Tensor x = windows;
  const auto c_in = input_channels(config_);
  const auto rows = batch * T * n;
  if (c_in > 1) {
    std::vector<Tensor> parts{reshape(tape, windows, {rows, 1})};
    if (config_.embed_dim > 0) {
      std::vector<std::size_t> ids(rows);
      for (std::size_t r = 0; r < rows; ++r) ids[r] = r % n;
      parts.push_back(gather_rows(tape, param("embedding"), ids));
    }
    if (config_.time_features) parts.push_back(time_of_day(slots, T, n, config_.steps_per_day));
    x = reshape(tape, concat_cols(tape, parts), {batch * T, n, c_in});
  }
  const Tensor input = x;
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    const auto h = config_.hidden;
    // Both gate branches run as one convolution over the stacked kernels.
    const Tensor wa = param(block_name(b, "temporal_a.weight"));
    const Tensor wb = param(block_name(b, "temporal_b.weight"));
    const Tensor w_ab = concat_cols(tape, std::vector<Tensor>{wa, wb});
    const Tensor bias_ab =
        reshape(tape,
                concat_cols(tape, std::vector<Tensor>{reshape(tape, param(block_name(b, "temporal_a.bias")), {1, h}),
                                                      reshape(tape, param(block_name(b, "temporal_b.bias")), {1, h})}),
                {2 * h});
    const Tensor conv = causal_conv(tape, x, w_ab, bias_ab, T);
    Tensor gated = reshape(tape, tanh_sigmoid_gate(tape, reshape(tape, conv, {rows, 2 * h})), {batch * T, n, h});
    if (message_passing) gated = spmm(tape, adj, gated);
    Tensor mixed = linear(tape, reshape(tape, gated, {rows, h}), param(block_name(b, "graph.weight")),
                          param(block_name(b, "graph.bias")));
    x = reshape(tape, relu(tape, mixed), {batch * T, n, h});
    out.reps.push_back(reshape(tape, gather_rows(tape, x, last_steps), {batch * n, h}));
  }
  if (config_.blocks > 0 && config_.input_skip) {
    x = reshape(tape,
                concat_cols(tape, std::vector<Tensor>{reshape(tape, x, {rows, config_.hidden}),
                                                      reshape(tape, input, {rows, c_in})}),
                {batch * T, n, config_.hidden + c_in});
  }
  Tensor head_in = fold_time(tape, x, T);
  if (config_.head_hidden > 0) {
    head_in = relu(tape, linear(tape, head_in, param("head.hidden.weight"), param("head.hidden.bias")));
  }
  out.pred = linear(tape, head_in, param("head.weight"), param("head.bias"));
  return out;
}

TeacherModel::Output TeacherModel::forward(Tape& tape, const NormalizedAdjacency& adj,
                                           const Tensor& window, std::size_t slot,
                                           bool message_passing) const {
  if (window.rank() != 3 || window.dim(0) != config_.history) {
    throw DimensionError("teacher window must be [" + std::to_string(config_.history) + " x " +
                         std::to_string(config_.n_nodes) + " x 1], got " +
                         shape_str(window.shape()));
  }
  const std::size_t slots[] = {slot};
  Output out = forward_batch(tape, adj, window, slots, message_passing);
  out.pred = transpose(tape, out.pred);
  return out;
}

StudentModel::StudentModel(StudentConfig config) : config_(config) {
  if (config_.n_nodes == 0 || config_.history == 0 || config_.horizon == 0 ||
      config_.hidden == 0 || config_.hidden_layers == 0 || config_.teacher_hidden == 0 ||
      config_.steps_per_day == 0) {
    throw ParameterError("student dimensions must be positive");
  }
  if (config_.embed_dim > 0) add_param(params_, "embedding", {config_.n_nodes, config_.embed_dim});
  std::size_t in = config_.history + config_.embed_dim + (config_.time_features ? 2 : 0);
  for (std::size_t k = 0; k < config_.hidden_layers; ++k) {
    add_param(params_, "mlp" + std::to_string(k) + ".weight", {in, config_.hidden});
    add_param(params_, "mlp" + std::to_string(k) + ".bias", {config_.hidden});
    in = config_.hidden;
  }
  add_param(params_, "out.weight", {config_.hidden, config_.horizon});
  add_param(params_, "out.bias", {config_.horizon});
  add_param(params_, "proj.weight", {config_.hidden, config_.teacher_hidden});
}

std::vector<Tensor> StudentModel::param_tensors() const { return tensors(params_); }
std::size_t StudentModel::param_count() const { return count(params_); }
const Tensor& StudentModel::param(const std::string& name) const { return find(params_, name); }

void StudentModel::init_params(std::uint64_t seed) {
  for (auto& p : params_) std::fill(p.value.mutable_data().begin(), p.value.mutable_data().end(), 0.0);
  if (config_.embed_dim > 0) {
    Rng rng(mix_seed(seed, kEmbeddingSalt));
    glorot(find(params_, "embedding"), config_.n_nodes, config_.embed_dim, rng);
  }
  std::size_t in = config_.history + config_.embed_dim + (config_.time_features ? 2 : 0);
  for (std::size_t k = 0; k < config_.hidden_layers; ++k) {
    Rng rng(mix_seed(seed, k + 1));
    glorot(find(params_, "mlp" + std::to_string(k) + ".weight"), in, config_.hidden, rng);
    in = config_.hidden;
  }
  Rng head_rng(mix_seed(seed, kHeadSalt));
  glorot(find(params_, "out.weight"), config_.hidden, config_.horizon, head_rng);
  Rng proj_rng(mix_seed(seed, kProjectionSalt));
  glorot(find(params_, "proj.weight"), config_.hidden, config_.teacher_hidden, proj_rng);
}

StudentModel::Output StudentModel::forward_batch(Tape& tape, const Tensor& windows,
                                                 std::span<const std::size_t> slots) const {
  const auto n = config_.n_nodes;
  const auto batch = check_batch(windows, config_.history, n);
  check_slots(slots, batch, config_.steps_per_day);
  const auto rows = batch * n;
  std::vector<Tensor> parts;
  parts.push_back(fold_time(tape, windows, config_.history));
  if (config_.embed_dim > 0) {
    std::vector<std::size_t> ids(rows);
    for (std::size_t r = 0; r < rows; ++r) ids[r] = r % n;
    parts.push_back(gather_rows(tape, param("embedding"), ids));
  }
  if (config_.time_features) parts.push_back(time_of_day(slots, 1, n, config_.steps_per_day));
  Tensor x = parts.size() == 1 ? parts.front() : concat_cols(tape, parts);
  for (std::size_t k = 0; k < config_.hidden_layers; ++k) {
    const auto prefix = "mlp" + std::to_string(k);
    x = relu(tape, linear(tape, x, param(prefix + ".weight"), param(prefix + ".bias")));
  }
  Output out;
  out.hidden = x;
  out.pred = linear(tape, x, param("out.weight"), param("out.bias"));
  out.projected = matmul(tape, x, param("proj.weight"));
  return out;
}

StudentModel::Output StudentModel::forward(Tape& tape, const Tensor& window,
                                           std::size_t slot) const {
  if (window.rank() != 3 || window.dim(0) != config_.history) {
    throw DimensionError("student window must be [" + std::to_string(config_.history) + " x " +
                         std::to_string(config_.n_nodes) + " x 1], got " +
                         shape_str(window.shape()));
  }
  const std::size_t slots[] = {slot};
  Output out = forward_batch(tape, window, slots);
  out.pred = transpose(tape, out.pred);
  return out;
}

Tensor stack_windows(std::span<const Tensor> windows) {
  if (windows.empty()) throw DimensionError("stack_windows: no windows");
  const Shape& first = windows.front().shape();
  if (first.size() != 3) throw DimensionError("stack_windows: expected rank-3 windows");
  Buffer out;
  out.reserve(windows.size() * windows.front().numel());
  for (const auto& w : windows) {
    if (w.shape() != first) throw DimensionError("stack_windows: windows differ in shape");
    out.insert(out.end(), w.data().begin(), w.data().end());
  }
  return Tensor::adopt({first[0] * windows.size(), first[1], first[2]}, std::move(out));
}

}  // namespace stkd
