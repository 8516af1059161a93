#include "stkd/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stkd/error.hpp"

namespace stkd {
namespace {

double evaluate(const ScalarFn& f) {
  Tape tape = Tape::no_grad();
  const double v = f(tape).item();
  if (!std::isfinite(v)) throw NumericError("grad_check: function returned a non-finite value");
  return v;
}

}  // namespace

double grad_check(const ScalarFn& f, std::span<Tensor> params, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-4)) {
    throw ParameterError("grad_check: eps must be in [1e-7, 1e-4], got " + std::to_string(eps));
  }
  for (auto& p : params) p.drop_grad();

  Tape tape;
  const Tensor loss = f(tape);
  if (!std::isfinite(loss.item())) {
    throw NumericError("grad_check: function returned a non-finite value");
  }
  if (loss.requires_grad()) tape.backward(loss);

  double worst = 0.0;
  for (auto& p : params) {
    const auto analytic = p.grad();
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = evaluate(f);
      values[i] = saved - eps;
      const double down = evaluate(f);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace stkd
