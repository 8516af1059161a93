#include "stkd/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "stkd/error.hpp"

namespace stkd {
namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const MatR>;
using MutMap = Eigen::Map<MatR>;

ConstMap as_mat(std::span<const double> v, std::size_t rows, std::size_t cols) {
  return ConstMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
MutMap as_mat(std::span<double> v, std::size_t rows, std::size_t cols) {
  return MutMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

using ConstVec = Eigen::Map<const Eigen::ArrayXd>;
using MutVec = Eigen::Map<Eigen::ArrayXd>;

ConstVec vec(std::span<const double> v) { return ConstVec(v.data(), static_cast<Eigen::Index>(v.size())); }
MutVec vec(std::span<double> v) { return MutVec(v.data(), static_cast<Eigen::Index>(v.size())); }

// 1 / (1 + e^-x); saturates to exactly 0 or 1 instead of overflowing.
template <class Expr>
auto logistic(const Expr& x) {
  return (1.0 + (-x.max(-700.0)).exp()).inverse();
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_str(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

template <class Fwd, class Deriv>
Tensor unary(Tape& tape, const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto in = x.data();
  Buffer out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  Tensor y = Tensor::adopt(x.shape(), std::move(out));
  return tape.record(y, {x}, [x, y, deriv]() mutable {
    const auto g = y.grad();
    const auto xv = x.data();
    const auto yv = y.data();
    auto dx = x.grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i] * deriv(xv[i], yv[i]);
  });
}

void check_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ParameterError("softmax temperature must be > 0, got " + std::to_string(temperature));
  }
}

// Rows and columns of the last-axis view used by the softmax family.
std::pair<std::size_t, std::size_t> softmax_view(const Tensor& x) {
  if (x.rank() == 1) return {1, x.dim(0)};
  if (x.rank() == 2) return {x.dim(0), x.dim(1)};
  throw DimensionError("softmax: expected rank 1 or 2, got " + shape_str(x.shape()));
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Tensor c = Tensor::zeros({m, n});
  as_mat(c.mutable_data(), m, n).noalias() = as_mat(a.data(), m, k) * as_mat(b.data(), k, n);
  return tape.record(c, {a, b}, [a, b, c, m, k, n]() mutable {
    const auto g = as_mat(c.grad(), m, n);
    if (a.requires_grad()) {
      as_mat(a.grad_buffer(), m, k).noalias() += g * as_mat(b.data(), k, n).transpose();
    }
    if (b.requires_grad()) {
      as_mat(b.grad_buffer(), k, n).noalias() += as_mat(a.data(), m, k).transpose() * g;
    }
  });
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  require_rank(bias, 1, "linear");
  const auto m = x.dim(0), k = x.dim(1), n = w.dim(1);
  if (w.dim(0) != k || bias.dim(0) != n) {
    throw DimensionError("linear: incompatible shapes " + shape_str(x.shape()) + ", " +
                         shape_str(w.shape()) + ", " + shape_str(bias.shape()));
  }
  Tensor y = Tensor::zeros({m, n});
  auto ym = as_mat(y.mutable_data(), m, n);
  ym.noalias() = as_mat(x.data(), m, k) * as_mat(w.data(), k, n);
  ym.rowwise() += as_mat(bias.data(), 1, n).row(0);
  return tape.record(y, {x, w, bias}, [x, w, bias, y, m, k, n]() mutable {
    const auto g = as_mat(y.grad(), m, n);
    if (x.requires_grad()) {
      as_mat(x.grad_buffer(), m, k).noalias() += g * as_mat(w.data(), k, n).transpose();
    }
    if (w.requires_grad()) {
      as_mat(w.grad_buffer(), k, n).noalias() += as_mat(x.data(), m, k).transpose() * g;
    }
    if (bias.requires_grad()) {
      as_mat(bias.grad_buffer(), 1, n) += g.colwise().sum();
    }
  });
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  Tensor y = Tensor::adopt(a.shape(), std::move(out));
  return tape.record(y, {a, b}, [a, b, y]() mutable {
    const auto g = y.grad();
    for (const Tensor* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto d = t->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
  });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  Tensor y = Tensor::adopt(a.shape(), std::move(out));
  return tape.record(y, {a, b}, [a, b, y]() mutable {
    const auto g = y.grad();
    if (a.requires_grad()) {
      auto d = a.grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
    if (b.requires_grad()) {
      auto d = b.grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
    }
  });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  Tensor y = Tensor::adopt(a.shape(), std::move(out));
  return tape.record(y, {a, b}, [a, b, y]() mutable {
    const auto g = y.grad();
    if (a.requires_grad()) {
      auto d = a.grad_buffer();
      const auto bv = b.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (b.requires_grad()) {
      auto d = b.grad_buffer();
      const auto av = a.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

Tensor relu(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  Tensor y = Tensor::zeros(x.shape());
  vec(y.mutable_data()) = logistic(vec(x.data()));
  return tape.record(y, {x}, [x, y]() mutable {
    const auto yv = vec(y.data());
    vec(x.grad_buffer()) += vec(y.grad()) * yv * (1.0 - yv);
  });
}

Tensor tanh(Tape& tape, const Tensor& x) {
  Tensor y = Tensor::zeros(x.shape());
  vec(y.mutable_data()) = 2.0 * logistic(2.0 * vec(x.data())) - 1.0;
  return tape.record(y, {x}, [x, y]() mutable {
    const auto yv = vec(y.data());
    vec(x.grad_buffer()) += vec(y.grad()) * (1.0 - yv.square());
  });
}

Tensor tanh_sigmoid_gate(Tape& tape, const Tensor& x) {
  require_rank(x, 2, "tanh_sigmoid_gate");
  if (x.dim(1) % 2 != 0) {
    throw DimensionError("tanh_sigmoid_gate: odd width " + shape_str(x.shape()));
  }
  const auto r = x.dim(0), h = x.dim(1) / 2;
  // Cached activations, [r x 2h]: tanh half then sigmoid half.
  auto act = std::make_shared<Buffer>(x.numel());
  Tensor y = Tensor::zeros({r, h});
  {
    const auto in = as_mat(x.data(), r, 2 * h);
    auto a = as_mat(std::span<double>(*act), r, 2 * h);
    a.leftCols(h).array() = 2.0 * logistic(2.0 * in.leftCols(h).array()) - 1.0;
    a.rightCols(h).array() = logistic(in.rightCols(h).array());
    as_mat(y.mutable_data(), r, h).array() = a.leftCols(h).array() * a.rightCols(h).array();
  }
  return tape.record(y, {x}, [x, y, act, r, h]() mutable {
    const auto g = as_mat(y.grad(), r, h).array();
    const auto a = as_mat(std::span<const double>(*act), r, 2 * h);
    const auto t = a.leftCols(h).array();
    const auto s = a.rightCols(h).array();
    auto d = as_mat(x.grad_buffer(), r, 2 * h);
    d.leftCols(h).array() += g * s * (1.0 - t.square());
    d.rightCols(h).array() += g * t * s * (1.0 - s);
  });
}

Tensor abs(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor square(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  return unary(
      tape, x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor sum(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor y = Tensor::scalar(s);
  return tape.record(y, {x}, [x, y]() mutable {
    const double g = y.grad()[0];
    for (auto& d : x.grad_buffer()) d += g;
  });
}

Tensor mean(Tape& tape, const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.numel());
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor y = Tensor::scalar(s * inv);
  return tape.record(y, {x}, [x, y, inv]() mutable {
    const double g = y.grad()[0] * inv;
    for (auto& d : x.grad_buffer()) d += g;
  });
}

Tensor row_sum(Tape& tape, const Tensor& x) {
  require_rank(x, 2, "row_sum");
  const auto r = x.dim(0), c = x.dim(1);
  Buffer out(r, 0.0);
  const auto xv = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += xv[i * c + j];
    out[i] = s;
  }
  Tensor y = Tensor::adopt({r}, std::move(out));
  return tape.record(y, {x}, [x, y, r, c]() mutable {
    const auto g = y.grad();
    auto d = x.grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) d[i * c + j] += g[i];
    }
  });
}

Tensor softmax(Tape& tape, const Tensor& x, double temperature) {
  check_temperature(temperature);
  const auto [rows, cols] = softmax_view(x);
  const auto xv = x.data();
  Buffer out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * cols;
    double* o = out.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      o[j] = std::exp((in[j] - mx) / temperature);
      z += o[j];
    }
    for (std::size_t j = 0; j < cols; ++j) o[j] /= z;
  }
  Tensor y = Tensor::adopt(x.shape(), std::move(out));
  return tape.record(y, {x}, [x, y, rows, cols, temperature]() mutable {
    const auto g = y.grad();
    const auto yv = y.data();
    auto d = x.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t off = r * cols;
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += g[off + j] * yv[off + j];
      for (std::size_t j = 0; j < cols; ++j) {
        d[off + j] += yv[off + j] * (g[off + j] - dot) / temperature;
      }
    }
  });
}

Tensor log_softmax(Tape& tape, const Tensor& x, double temperature) {
  check_temperature(temperature);
  const auto [rows, cols] = softmax_view(x);
  const auto xv = x.data();
  Buffer out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * cols;
    double* o = out.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp((in[j] - mx) / temperature);
    const double lse = std::log(z);
    for (std::size_t j = 0; j < cols; ++j) o[j] = (in[j] - mx) / temperature - lse;
  }
  Tensor y = Tensor::adopt(x.shape(), std::move(out));
  return tape.record(y, {x}, [x, y, rows, cols, temperature]() mutable {
    const auto g = y.grad();
    const auto yv = y.data();
    auto d = x.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t off = r * cols;
      double gs = 0.0;
      for (std::size_t j = 0; j < cols; ++j) gs += g[off + j];
      for (std::size_t j = 0; j < cols; ++j) {
        d[off + j] += (g[off + j] - std::exp(yv[off + j]) * gs) / temperature;
      }
    }
  });
}

Tensor transpose(Tape& tape, const Tensor& x) {
  require_rank(x, 2, "transpose");
  const auto m = x.dim(0), n = x.dim(1);
  Tensor y = Tensor::zeros({n, m});
  as_mat(y.mutable_data(), n, m) = as_mat(x.data(), m, n).transpose();
  return tape.record(y, {x}, [x, y, m, n]() mutable {
    as_mat(x.grad_buffer(), m, n) += as_mat(y.grad(), n, m).transpose();
  });
}

Tensor reshape(Tape&, const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                         " changes element count");
  }
  return x.view(std::move(shape));
}

Tensor tile(Tape& tape, const Tensor& x, std::size_t reps) {
  require_rank(x, 1, "tile");
  const auto n = x.dim(0);
  Buffer out;
  out.reserve(reps * n);
  for (std::size_t r = 0; r < reps; ++r) out.insert(out.end(), x.data().begin(), x.data().end());
  Tensor y = Tensor::adopt({reps, n}, std::move(out));
  return tape.record(y, {x}, [x, y, reps, n]() mutable {
    const auto g = y.grad();
    auto d = x.grad_buffer();
    for (std::size_t r = 0; r < reps; ++r) {
      for (std::size_t j = 0; j < n; ++j) d[j] += g[r * n + j];
    }
  });
}

Tensor concat_cols(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const auto rows = parts[0].rank() == 2 ? parts[0].dim(0) : 0;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != rows) {
      throw DimensionError("concat_cols: row count mismatch " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  Buffer out(rows * total);
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].data();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(pv.data() + r * widths[k], widths[k], out.data() + r * total + col);
    }
    col += widths[k];
  }
  Tensor y = Tensor::adopt({rows, total}, std::move(out));
  if (!tape.recording()) return y;
  // The tape's record() takes a fixed initializer list; chain per part so
  // each input gets its own entry.
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  bool any = false;
  for (const auto& p : inputs) any = any || p.requires_grad();
  if (!any) return y;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto width = widths[k];
    Tensor part = inputs[k];
    if (part.requires_grad()) {
      tape.record(y, {part}, [part, y, rows, total, width, offset]() mutable {
        const auto g = y.grad();
        auto d = part.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < width; ++j) d[r * width + j] += g[r * total + offset + j];
        }
      });
    }
    offset += width;
  }
  return y;
}

Tensor gather_rows(Tape& tape, const Tensor& x, std::span<const std::size_t> rows) {
  if (x.rank() < 1) throw DimensionError("gather_rows: scalar input");
  const auto n0 = x.dim(0);
  const auto stride = x.numel() / n0;
  Shape shape = x.shape();
  shape[0] = rows.size();
  Buffer out(rows.size() * stride);
  const auto xv = x.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n0) {
      throw DimensionError("gather_rows: index " + std::to_string(rows[i]) + " out of range " +
                           std::to_string(n0));
    }
    std::copy_n(xv.data() + rows[i] * stride, stride, out.data() + i * stride);
  }
  Tensor y = Tensor::adopt(std::move(shape), std::move(out));
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return tape.record(y, {x}, [x, y, idx = std::move(idx), stride]() mutable {
    const auto g = y.grad();
    auto d = x.grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < stride; ++j) d[idx[i] * stride + j] += g[i * stride + j];
    }
  });
}

Tensor causal_unfold(Tape& tape, const Tensor& x, std::size_t window_len, std::size_t kernel) {
  require_rank(x, 3, "causal_unfold");
  if (window_len == 0 || kernel == 0 || x.dim(0) % window_len != 0) {
    throw DimensionError("causal_unfold: " + shape_str(x.shape()) +
                         " is not a whole number of windows of length " +
                         std::to_string(window_len));
  }
  const auto slices = x.dim(0), n = x.dim(1), c = x.dim(2);
  const auto kc = kernel * c;
  Buffer out(slices * n * kc, 0.0);
  const auto xv = x.data();
  for (std::size_t s = 0; s < slices; ++s) {
    const auto t = s % window_len;
    for (std::size_t k = 0; k < kernel; ++k) {
      const auto lag = kernel - 1 - k;
      if (lag > t) continue;
      const double* src = xv.data() + (s - lag) * n * c;
      for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(src + i * c, c, out.data() + (s * n + i) * kc + k * c);
      }
    }
  }
  Tensor y = Tensor::adopt({slices, n, kc}, std::move(out));
  return tape.record(y, {x}, [x, y, window_len, kernel, slices, n, c, kc]() mutable {
    const auto g = y.grad();
    auto d = x.grad_buffer();
    for (std::size_t s = 0; s < slices; ++s) {
      const auto t = s % window_len;
      for (std::size_t k = 0; k < kernel; ++k) {
        const auto lag = kernel - 1 - k;
        if (lag > t) continue;
        double* dst = d.data() + (s - lag) * n * c;
        for (std::size_t i = 0; i < n; ++i) {
          const double* src = g.data() + (s * n + i) * kc + k * c;
          for (std::size_t ch = 0; ch < c; ++ch) dst[i * c + ch] += src[ch];
        }
      }
    }
  });
}

Tensor causal_conv(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias,
                   std::size_t window_len) {
  require_rank(x, 3, "causal_conv");
  require_rank(w, 2, "causal_conv");
  require_rank(bias, 1, "causal_conv");
  const auto slices = x.dim(0), n = x.dim(1), c = x.dim(2);
  const auto out = w.dim(1);
  if (window_len == 0 || slices % window_len != 0 || w.dim(0) % c != 0 || w.dim(0) == 0 ||
      bias.dim(0) != out) {
    throw DimensionError("causal_conv: incompatible shapes " + shape_str(x.shape()) + ", " +
                         shape_str(w.shape()) + ", " + shape_str(bias.shape()) +
                         " for window length " + std::to_string(window_len));
  }
  const auto kernel = w.dim(0) / c;
  const auto windows = slices / window_len;
  const auto T = window_len;
  // For every window and tap: rows [lag, T) of the output take rows [0, T - lag) of x.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t win = 0; win < windows; ++win) {
      for (std::size_t k = 0; k < kernel; ++k) {
        const auto lag = kernel - 1 - k;
        if (lag >= T) continue;
        fn(win * T * n, (T - lag) * n, lag * n, k);
      }
    }
  };
  Tensor y = Tensor::zeros({slices, n, out});
  {
    auto ym = as_mat(y.mutable_data(), slices * n, out);
    const auto xm = as_mat(x.data(), slices * n, c);
    const auto wm = as_mat(w.data(), kernel * c, out);
    for_each_tap([&](std::size_t base, std::size_t len, std::size_t shift, std::size_t k) {
      const auto b = static_cast<Eigen::Index>(base), l = static_cast<Eigen::Index>(len);
      const auto sh = static_cast<Eigen::Index>(shift);
      ym.middleRows(b + sh, l).noalias() +=
          xm.middleRows(b, l) * wm.middleRows(static_cast<Eigen::Index>(k * c), static_cast<Eigen::Index>(c));
    });
    ym.rowwise() += as_mat(bias.data(), 1, out).row(0);
  }
  return tape.record(y, {x, w, bias}, [x, w, bias, y, for_each_tap, slices, n, c, out, kernel]() mutable {
    const auto g = as_mat(y.grad(), slices * n, out);
    const auto xm = as_mat(x.data(), slices * n, c);
    const auto wm = as_mat(w.data(), kernel * c, out);
    const bool dx = x.requires_grad(), dw = w.requires_grad();
    auto gx = dx ? x.grad_buffer() : std::span<double>();
    auto gw = dw ? w.grad_buffer() : std::span<double>();
    for_each_tap([&](std::size_t base, std::size_t len, std::size_t shift, std::size_t k) {
      const auto b = static_cast<Eigen::Index>(base), l = static_cast<Eigen::Index>(len);
      const auto sh = static_cast<Eigen::Index>(shift);
      const auto kc = static_cast<Eigen::Index>(k * c), ci = static_cast<Eigen::Index>(c);
      if (dx) {
        as_mat(gx, slices * n, c).middleRows(b, l).noalias() +=
            g.middleRows(b + sh, l) * wm.middleRows(kc, ci).transpose();
      }
      if (dw) {
        as_mat(gw, kernel * c, out).middleRows(kc, ci).noalias() +=
            xm.middleRows(b, l).transpose() * g.middleRows(b + sh, l);
      }
    });
    if (bias.requires_grad()) as_mat(bias.grad_buffer(), 1, out) += g.colwise().sum();
  });
}

Tensor fold_time(Tape& tape, const Tensor& x, std::size_t window_len) {
  require_rank(x, 3, "fold_time");
  if (window_len == 0 || x.dim(0) % window_len != 0) {
    throw DimensionError("fold_time: " + shape_str(x.shape()) +
                         " is not a whole number of windows of length " +
                         std::to_string(window_len));
  }
  const auto windows = x.dim(0) / window_len, n = x.dim(1), c = x.dim(2);
  const auto width = window_len * c;
  Buffer out(x.numel());
  const auto xv = x.data();
  for (std::size_t w = 0; w < windows; ++w) {
    for (std::size_t t = 0; t < window_len; ++t) {
      for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(xv.data() + ((w * window_len + t) * n + i) * c, c,
                    out.data() + (w * n + i) * width + t * c);
      }
    }
  }
  Tensor y = Tensor::adopt({windows * n, width}, std::move(out));
  return tape.record(y, {x}, [x, y, windows, window_len, n, c, width]() mutable {
    const auto g = y.grad();
    auto d = x.grad_buffer();
    for (std::size_t w = 0; w < windows; ++w) {
      for (std::size_t t = 0; t < window_len; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
          double* dst = d.data() + ((w * window_len + t) * n + i) * c;
          const double* src = g.data() + (w * n + i) * width + t * c;
          for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
        }
      }
    }
  });
}

}  // namespace stkd
