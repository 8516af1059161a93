#include <gtest/gtest.h>

#include <cmath>

#include "stkd/error.hpp"
#include "stkd/grad_check.hpp"
#include "stkd/ops.hpp"
#include "support.hpp"

namespace stkd {
namespace {

using testing::random_tensor;
using testing::values;

TEST(Tensor, ShapeAndNumel) {
  const auto t = Tensor::zeros({2, 3, 4});
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_EQ(t.dim(1), 3u);
  EXPECT_THROW(t.dim(3), DimensionError);
  EXPECT_THROW(Tensor::zeros({1, 1, 1, 1}), DimensionError);
  EXPECT_THROW(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
}

TEST(Tensor, HandlesShareStorageClonesDoNot) {
  Tensor a = Tensor::from({2}, {1.0, 2.0});
  Tensor b = a;
  b.mutable_data()[0] = 5.0;
  EXPECT_EQ(a.data()[0], 5.0);
  Tensor c = a.clone();
  c.mutable_data()[0] = 7.0;
  EXPECT_EQ(a.data()[0], 5.0);
  EXPECT_FALSE(c.same_storage(a));
}

TEST(Tensor, CheckFiniteNamesTheProblem) {
  Tensor a = Tensor::from({2}, {1.0, std::nan("")});
  try {
    a.check_finite("activations");
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("activations"), std::string::npos);
  }
}

TEST(Tensor, GradBufferMatchesShape) {
  Tensor a = Tensor::zeros({3, 2}, true);
  EXPECT_FALSE(a.has_grad());
  EXPECT_EQ(a.grad_buffer().size(), 6u);
  a.drop_grad();
  EXPECT_FALSE(a.has_grad());
}

TEST(Tape, SquareGradient) {
  Tensor x = Tensor::scalar(3.0, true);
  Tape tape;
  Tensor loss = square(tape, x);
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Tape, BackwardTwiceDoublesGradient) {
  Tensor a = random_tensor({3, 4}, 1);
  Tensor b = random_tensor({4, 2}, 2);
  Tape tape;
  Tensor loss = sum(tape, tanh(tape, matmul(tape, a, b)));
  tape.backward(loss);
  const auto once = values(a);
  const std::vector<double> g1(a.grad().begin(), a.grad().end());
  tape.backward(loss);
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_EQ(a.grad()[i], 2.0 * g1[i]);
  EXPECT_EQ(values(a), once);
}

TEST(Tape, ContractErrors) {
  Tensor x = random_tensor({2}, 3);
  Tape tape;
  EXPECT_THROW(tape.backward(Tensor::scalar(1.0)), ContractError);
  Tensor y = relu(tape, x);
  EXPECT_THROW(tape.backward(y), ContractError);
  Tape other;
  Tensor z = sum(other, x);
  EXPECT_THROW(tape.backward(z), ContractError);
}

TEST(Tape, NoGradRecordsNothing) {
  Tensor x = random_tensor({2, 2}, 4);
  Tape tape = Tape::no_grad();
  Tensor y = matmul(tape, x, x);
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Tape, ConstantInputsRecordNothing) {
  Tensor x = random_tensor({2, 2}, 5, -1.0, 1.0, false);
  Tape tape;
  (void)relu(tape, x);
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Tape, SoftmaxCrossEntropyGradientIsPMinusY) {
  Tensor logits = Tensor::from({4}, {0.3, -1.2, 2.0, 0.5}, true);
  const std::vector<double> y{0.0, 0.0, 1.0, 0.0};
  Tape tape;
  Tensor lp = log_softmax(tape, logits);
  Tensor loss = scale(tape, sum(tape, mul(tape, lp, Tensor::from({4}, y))), -1.0);
  tape.backward(loss);
  Tape probe = Tape::no_grad();
  const Tensor p = softmax(probe, logits);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(logits.grad()[i], p.data()[i] - y[i], 1e-12);
  std::vector<Tensor> params{logits};
  const double err = grad_check(
      [&](Tape& t) {
        return scale(t, sum(t, mul(t, log_softmax(t, logits), Tensor::from({4}, y))), -1.0);
      },
      params);
  EXPECT_LE(err, 1e-7);
}

TEST(Tape, SumOfProductGradientIsOnesTimesBTransposed) {
  Tensor a = random_tensor({3, 2}, 6);
  Tensor b = random_tensor({2, 4}, 7, -1.0, 1.0, false);
  Tape tape;
  tape.backward(sum(tape, matmul(tape, a, b)));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 2; ++k) {
      double expected = 0.0;
      for (std::size_t j = 0; j < 4; ++j) expected += b.data()[k * 4 + j];
      EXPECT_NEAR(a.grad()[i * 2 + k], expected, 1e-14);
    }
  }
}

TEST(Reshape, IsAViewSharingGradient) {
  Tensor x = random_tensor({2, 3}, 8);
  Tape tape;
  Tensor v = reshape(tape, x, {3, 2});
  EXPECT_TRUE(v.same_storage(x));
  EXPECT_EQ(tape.size(), 0u);
  tape.backward(sum(tape, square(tape, v)));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2.0 * x.data()[i]);
  EXPECT_THROW(reshape(tape, x, {4}), DimensionError);
}

TEST(GradCheck, QuadraticAndConstant) {
  Tensor theta = random_tensor({5}, 9);
  std::vector<Tensor> params{theta};
  EXPECT_LE(grad_check([&](Tape& t) { return sum(t, square(t, theta)); }, params), 1e-9);
  EXPECT_LE(grad_check([](Tape&) { return Tensor::scalar(4.0); }, params), 1e-9);
}

TEST(GradCheck, RejectsBadEpsAndNonFinite) {
  Tensor theta = random_tensor({2}, 10);
  std::vector<Tensor> params{theta};
  auto f = [&](Tape& t) { return sum(t, theta); };
  EXPECT_THROW(grad_check(f, params, 1e-3), ParameterError);
  EXPECT_THROW(grad_check(f, params, 1e-8), ParameterError);
  EXPECT_THROW(grad_check([](Tape&) { return Tensor::scalar(std::nan("")); }, params), NumericError);
}

TEST(GradCheck, RestoresParameters) {
  Tensor theta = random_tensor({3}, 11);
  const auto before = values(theta);
  std::vector<Tensor> params{theta};
  (void)grad_check([&](Tape& t) { return sum(t, tanh(t, theta)); }, params);
  EXPECT_EQ(values(theta), before);
}

}  // namespace
}  // namespace stkd
