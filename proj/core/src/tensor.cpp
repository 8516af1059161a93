#include "stkd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "stkd/error.hpp"

namespace stkd {

struct Tensor::Storage {
  Buffer data;
  Buffer grad;
  bool requires_grad = false;
};

std::size_t shape_numel(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor Tensor::from(Shape shape, std::span<const double> values, bool requires_grad) {
  return adopt(std::move(shape), Buffer(values.begin(), values.end()), requires_grad);
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values, bool requires_grad) {
  return adopt(std::move(shape), Buffer(values), requires_grad);
}

Tensor Tensor::adopt(Shape shape, Buffer values, bool requires_grad) {
  if (shape.size() > kMaxRank) {
    throw DimensionError("tensor rank " + std::to_string(shape.size()) + " exceeds " +
                         std::to_string(kMaxRank));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto impl = std::make_shared<Storage>();
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl), std::move(shape));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return adopt(std::move(shape), Buffer(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return shape_;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const {
  shape();
  return impl_->data.size();
}

std::span<const double> Tensor::data() const {
  shape();
  return impl_->data;
}

std::span<double> Tensor::mutable_data() {
  shape();
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  shape();
  impl_->requires_grad = on;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  shape();
  return impl_->grad;
}

std::span<double> Tensor::grad_buffer() const {
  shape();
  if (impl_->grad.empty()) impl_->grad.resize(impl_->data.size());
  return impl_->grad;
}

void Tensor::zero_grad() {
  shape();
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::drop_grad() {
  shape();
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
}

Tensor Tensor::view(Shape shape) const {
  if (shape.size() > kMaxRank) {
    throw DimensionError("tensor rank " + std::to_string(shape.size()) + " exceeds " +
                         std::to_string(kMaxRank));
  }
  if (shape_numel(shape) != numel()) {
    throw DimensionError("view: " + shape_str(shape_) + " -> " + shape_str(shape) +
                         " changes element count");
  }
  return Tensor(impl_, std::move(shape));
}

Tensor Tensor::detach() const { return from(shape(), impl_->data, false); }

Tensor Tensor::clone() const { return from(shape(), impl_->data, impl_->requires_grad); }

void Tensor::check_finite(std::string_view what) const {
  for (std::size_t i = 0; i < data().size(); ++i) {
    if (!std::isfinite(impl_->data[i])) {
      throw NumericError(std::string(what) + ": non-finite value at flat index " +
                         std::to_string(i));
    }
  }
}

Tape Tape::no_grad() {
  Tape t;
  t.recording_ = false;
  return t;
}

Tensor Tape::record(Tensor output, std::initializer_list<Tensor> inputs, BackwardFn fn) {
  if (!recording_) return output;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return output;
  output.set_requires_grad(true);
  entries_.push_back(Entry{output, std::vector<Tensor>(inputs), std::move(fn)});
  return output;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (entries_.empty()) throw ContractError("backward on an empty tape");

  std::unordered_set<const void*> produced;
  for (auto& e : entries_) {
    if (!produced.insert(e.output.data().data()).second) continue;
    if (e.output.has_grad()) {
      e.output.zero_grad();
    } else {
      e.output.grad_buffer();
    }
  }
  if (!produced.contains(loss.data().data())) {
    throw ContractError("loss was not produced on this tape");
  }

  // Leaves start from zero and get their previous gradient added back at the
  // end, so a repeated sweep contributes an identical increment.
  std::vector<Tensor> leaves;
  std::vector<std::vector<double>> saved;
  std::unordered_set<const void*> seen;
  for (auto& e : entries_) {
    for (auto& in : e.inputs) {
      if (!in.requires_grad()) continue;
      const void* key = in.data().data();
      if (produced.contains(key) || !seen.insert(key).second) continue;
      leaves.push_back(in);
      auto g = leaves.back().grad_buffer();
      saved.emplace_back(g.begin(), g.end());
      std::fill(g.begin(), g.end(), 0.0);
    }
  }

  Tensor seed = loss;
  seed.grad_buffer()[0] = 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->fn();

  for (std::size_t i = 0; i < leaves.size(); ++i) {
    auto g = leaves[i].grad_buffer();
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += saved[i][j];
  }
}

}  // namespace stkd
