#include <gtest/gtest.h>

#include <cmath>

#include "gradient_suite.hpp"
#include "patchage/error.hpp"
#include "patchage/ops.hpp"
#include "support.hpp"

using namespace patchage;
using patchage::testing::random_tensor;

TEST(Tensor, RejectsZeroExtentsAndMismatchedData) {
  EXPECT_THROW(Tensor(Shape{2, 0}), ShapeError);
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>(3)), ShapeError);
  Tensor t({2, 3}, true);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.grad().size(), 6u);
}

TEST(Tensor, GradientBufferOnlyWhenRequired) {
  Tensor t({3});
  EXPECT_FALSE(t.requires_grad());
  EXPECT_THROW(t.grad(), ShapeError);
}

TEST(Tape, ClearedAfterBackwardUnlessRetained) {
  Tensor x({3}, {1.0, -2.0, 3.0}, true);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = ops::sum(ops::relu(x));
    EXPECT_EQ(tape.size(), 2u);
    tape.backward(loss, /*retain=*/true);
    EXPECT_EQ(tape.size(), 2u);
    tape.backward(loss);
    EXPECT_EQ(tape.size(), 0u);
  }
  // Leaf gradients accumulate across the two passes.
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{2.0, 0.0, 2.0}));
}

TEST(Tape, NothingRecordedWithoutScope) {
  Tensor x({2}, {1.0, 2.0}, true);
  Tensor y = ops::relu(x);
  EXPECT_EQ(Tape::active(), nullptr);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Tape, GradientOfSumOfLossesIsSumOfGradients) {
  Rng rng(5);
  Tensor x = random_tensor(rng, {2, 3}), w = random_tensor(rng, {1, 3}), b = random_tensor(rng, {1});
  Tensor t1 = random_tensor(rng, {2, 1}, false), t2 = random_tensor(rng, {2, 1}, false);
  auto grads_of = [&](auto make_loss) {
    x.zero_grad();
    w.zero_grad();
    b.zero_grad();
    Tape tape;
    TapeScope scope(tape);
    tape.backward(make_loss());
    std::vector<double> g(x.grad().begin(), x.grad().end());
    g.insert(g.end(), w.grad().begin(), w.grad().end());
    return g;
  };
  const auto g1 = grads_of([&] { return ops::mse_loss(ops::linear(x, w, b), t1); });
  const auto g2 = grads_of([&] { return ops::mse_loss(ops::linear(x, w, b), t2); });
  const auto g12 = grads_of([&] {
    const Tensor y = ops::linear(x, w, b);
    return ops::add(ops::mse_loss(y, t1), ops::mse_loss(y, t2));
  });
  for (std::size_t i = 0; i < g12.size(); ++i) EXPECT_NEAR(g12[i], g1[i] + g2[i], 1e-12);
}

TEST(Conv3d, AllOnesKernelSumsTwentySevenOnes) {
  for (auto algo : {ops::ConvAlgorithm::kDirect, ops::ConvAlgorithm::kIm2col}) {
    Tensor x = Tensor::filled({1, 1, 3, 3, 3}, 1.0);
    Tensor w = Tensor::filled({1, 1, 3, 3, 3}, 1.0);
    Tensor b({1}, {0.0});
    Tensor y = ops::conv3d(x, w, b, 1, 0, algo);
    ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1, 1}));
    EXPECT_DOUBLE_EQ(y.item(), 27.0);
  }
}

TEST(Conv3d, CenteredDeltaKernelIsIdentity) {
  Rng rng(3);
  Tensor x = random_tensor(rng, {2, 1, 4, 5, 3}, false);
  Tensor w({1, 1, 3, 3, 3});
  w.mutable_values()[13] = 1.0;
  for (auto algo : {ops::ConvAlgorithm::kDirect, ops::ConvAlgorithm::kIm2col}) {
    Tensor y = ops::conv3d(x, w, Tensor(), 1, 1, algo);
    ASSERT_EQ(y.shape(), x.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y.values()[i], x.values()[i]);
  }
}

TEST(Conv3d, OutputExtentFormula) {
  Tensor x({1, 2, 7, 6, 5});
  Tensor w({3, 2, 3, 3, 3});
  Tensor y = ops::conv3d(x, w, Tensor(), 2, 1);
  // floor((d + 2 - 3) / 2) + 1
  EXPECT_EQ(y.shape(), (Shape{1, 3, 4, 3, 3}));
}

TEST(Conv3d, ChannelMismatchNamesDimensions) {
  Tensor x({1, 2, 4, 4, 4});
  Tensor w({1, 3, 3, 3, 3});
  try {
    ops::conv3d(x, w, Tensor(), 1, 0);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("C_in"), std::string::npos) << e.what();
  }
}

TEST(Conv3d, KernelLargerThanPaddedInputRejected) {
  Tensor x({1, 1, 2, 4, 4});
  Tensor w({1, 1, 3, 3, 3});
  EXPECT_THROW(ops::conv3d(x, w, Tensor(), 1, 0), ShapeError);
  EXPECT_THROW(ops::conv3d(Tensor({1, 1, 4, 4, 4}), w, Tensor(), 0, 0), ShapeError);
}

TEST(Conv3d, DirectAndIm2colAgree) {
  Rng rng(11);
  for (int c = 0; c < 10; ++c) {
    const std::size_t k = 1 + rng.below(3);
    Tensor x = random_tensor(rng, {2, 3, k + 3, k + 2, k + 4});
    Tensor w = random_tensor(rng, {4, 3, k, k, k});
    Tensor b = random_tensor(rng, {4});
    const int stride = 1 + static_cast<int>(rng.below(2)), pad = static_cast<int>(rng.below(2));
    std::vector<double> out[2], gx[2], gw[2];
    int i = 0;
    for (auto algo : {ops::ConvAlgorithm::kDirect, ops::ConvAlgorithm::kIm2col}) {
      x.zero_grad();
      w.zero_grad();
      b.zero_grad();
      Tape tape;
      TapeScope scope(tape);
      Tensor y = ops::conv3d(x, w, b, stride, pad, algo);
      tape.backward(ops::sum(y));
      out[i].assign(y.values().begin(), y.values().end());
      gx[i].assign(x.grad().begin(), x.grad().end());
      gw[i].assign(w.grad().begin(), w.grad().end());
      ++i;
    }
    for (std::size_t j = 0; j < out[0].size(); ++j) EXPECT_NEAR(out[0][j], out[1][j], 1e-12);
    for (std::size_t j = 0; j < gx[0].size(); ++j) EXPECT_NEAR(gx[0][j], gx[1][j], 1e-12);
    for (std::size_t j = 0; j < gw[0].size(); ++j) EXPECT_NEAR(gw[0][j], gw[1][j], 1e-12);
  }
}

TEST(Conv3d, StrideTwoSumLossGradientMatchesFiniteDifferences) {
  Rng rng(21);
  Tensor x = random_tensor(rng, {2, 2, 5, 5, 5}), w = random_tensor(rng, {3, 2, 3, 3, 3}), b = random_tensor(rng, {3});
  const double err = patchage::testing::gradient_check([&] { return ops::sum(ops::conv3d(x, w, b, 2, 0)); }, {x, w, b}, 1e-5);
  EXPECT_LT(err, 1e-6);
}

TEST(Relu, Examples) {
  Tensor x({3}, {-1.0, 0.0, 2.0}, true);
  Tape tape;
  TapeScope scope(tape);
  Tensor y = ops::relu(x);
  EXPECT_EQ(std::vector<double>(y.values().begin(), y.values().end()), (std::vector<double>{0.0, 0.0, 2.0}));
  tape.backward(ops::sum(y));
  // Subgradient at 0 is 0.
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{0.0, 0.0, 1.0}));
}

TEST(Relu, AllNegativeGivesZeroOutputAndGradient) {
  Tensor x({4}, {-1.0, -2.0, -0.5, -3.0}, true);
  Tape tape;
  TapeScope scope(tape);
  Tensor y = ops::relu(x);
  tape.backward(ops::sum(y));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(BatchNorm, ConstantChannelGivesZeros) {
  Tensor x = Tensor::filled({2, 1, 2, 2, 2}, 3.0);
  ops::RunningStats stats;
  Tensor y = ops::batch_norm(x, Tensor::filled({1}, 1.0), Tensor({1}), ops::NormMode::kTrain, stats);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(BatchNorm, TrainOutputIsStandardizedAndShiftedByBeta) {
  Rng rng(8);
  Tensor x = random_tensor(rng, {3, 2, 3, 4, 2}, false, -4.0, 9.0);
  ops::RunningStats stats;
  Tensor y = ops::batch_norm(x, Tensor::filled({2}, 1.0), Tensor({2}, {0.0, 5.0}), ops::NormMode::kTrain, stats);
  const std::size_t spatial = 3 * 4 * 2;
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0.0, v = 0.0;
    for (std::size_t n = 0; n < 3; ++n) {
      for (std::size_t s = 0; s < spatial; ++s) m += y.values()[(n * 2 + c) * spatial + s];
    }
    m /= 3.0 * spatial;
    for (std::size_t n = 0; n < 3; ++n) {
      for (std::size_t s = 0; s < spatial; ++s) {
        const double d = y.values()[(n * 2 + c) * spatial + s] - m;
        v += d * d;
      }
    }
    v /= 3.0 * spatial;
    EXPECT_NEAR(m, c == 0 ? 0.0 : 5.0, 1e-9);
    EXPECT_NEAR(v, 1.0, 1e-6);
  }
  ASSERT_TRUE(stats.initialized());
}

TEST(BatchNorm, EvalWithoutRunningStatsIsAnError) {
  ops::RunningStats stats;
  EXPECT_THROW(ops::batch_norm(Tensor({1, 1, 2, 2, 2}), Tensor::filled({1}, 1.0), Tensor({1}), ops::NormMode::kEval, stats),
               ConfigError);
}

TEST(BatchNorm, RunningStatsFollowMomentum) {
  ops::RunningStats stats;
  const Tensor gamma = Tensor::filled({1}, 1.0), beta({1});
  ops::batch_norm(Tensor({1, 1, 1, 1, 2}, {0.0, 2.0}), gamma, beta, ops::NormMode::kTrain, stats);
  EXPECT_DOUBLE_EQ(stats.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(stats.var[0], 2.0);  // unbiased
  ops::batch_norm(Tensor({1, 1, 1, 1, 2}, {4.0, 6.0}), gamma, beta, ops::NormMode::kTrain, stats);
  EXPECT_DOUBLE_EQ(stats.mean[0], 0.9 * 1.0 + 0.1 * 5.0);
  EXPECT_DOUBLE_EQ(stats.var[0], 0.9 * 2.0 + 0.1 * 2.0);
}

TEST(GlobalAvgPool, ConstantAndSingleVoxel) {
  Tensor c = Tensor::filled({2, 3, 2, 3, 4}, 1.5);
  Tensor y = ops::global_avg_pool(c);
  ASSERT_EQ(y.shape(), (Shape{2, 3}));
  for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 1.5);
  Tensor one({2, 2, 1, 1, 1}, {1.0, 2.0, 3.0, 4.0});
  Tensor z = ops::global_avg_pool(one);
  EXPECT_EQ(std::vector<double>(z.values().begin(), z.values().end()), (std::vector<double>{1.0, 2.0, 3.0, 4.0}));
}

TEST(GlobalAvgPool, GradientIsUniform) {
  Tensor x({1, 1, 2, 2, 3}, true);
  Tape tape;
  TapeScope scope(tape);
  tape.backward(ops::sum(ops::global_avg_pool(x)));
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 1.0 / 12.0);
}

TEST(Linear, Examples) {
  Tensor y = ops::linear(Tensor({1, 2}, {1.0, 2.0}), Tensor({1, 2}, {3.0, 4.0}), Tensor({1}, {1.0}));
  EXPECT_DOUBLE_EQ(y.item(), 12.0);
  Tensor z = ops::linear(Tensor({3, 2}, {1, 2, 3, 4, 5, 6}), Tensor({1, 2}), Tensor({1}, {7.5}));
  for (double v : z.values()) EXPECT_DOUBLE_EQ(v, 7.5);
  EXPECT_THROW(ops::linear(Tensor({1, 3}), Tensor({1, 2}), Tensor({1})), ShapeError);
}

TEST(MseLoss, Examples) {
  EXPECT_DOUBLE_EQ(ops::mse_loss(Tensor({2, 1}, {1.0, 2.0}), Tensor({2, 1}, {1.0, 2.0})).item(), 0.0);
  EXPECT_DOUBLE_EQ(ops::mse_loss(Tensor({1, 1}, {3.0}), Tensor({1, 1}, {1.0})).item(), 4.0);
  EXPECT_THROW(ops::mse_loss(Tensor({2, 1}), Tensor({3, 1})), ShapeError);
}

TEST(MseLoss, GradientClosedForm) {
  Tensor p({3, 1}, {1.0, 4.0, -2.0}, true);
  Tensor t({3, 1}, {0.0, 1.0, 1.0});
  Tape tape;
  TapeScope scope(tape);
  tape.backward(ops::mse_loss(p, t));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(p.grad()[i], 2.0 * (p.values()[i] - t.values()[i]) / 3.0);
}

TEST(Ops, ForwardAndGradientsAreBitIdenticalAcrossRuns) {
  auto run = [] {
    Rng rng(99);
    Tensor x = random_tensor(rng, {2, 2, 4, 4, 4}), w = random_tensor(rng, {3, 2, 3, 3, 3});
    Tape tape;
    TapeScope scope(tape);
    Tensor y = ops::conv3d(x, w, Tensor(), 1, 1);
    tape.backward(ops::sum(ops::relu(y)));
    std::vector<double> out(y.values().begin(), y.values().end());
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    return out;
  };
  EXPECT_EQ(run(), run());
}

using patchage::testing::GradientCase;

void expect_accurate(const GradientCase& r) {
  EXPECT_GE(r.cases, 20);
  EXPECT_LT(r.worst_rel_error, 1e-5) << r.op;
}

TEST(GradientCheck, Conv3dIm2col) { expect_accurate(patchage::testing::check_conv3d(ops::ConvAlgorithm::kIm2col, 20, 1)); }
TEST(GradientCheck, Conv3dDirect) { expect_accurate(patchage::testing::check_conv3d(ops::ConvAlgorithm::kDirect, 20, 2)); }
TEST(GradientCheck, Relu) { expect_accurate(patchage::testing::check_relu(20, 3)); }
TEST(GradientCheck, Add) { expect_accurate(patchage::testing::check_add(20, 4)); }
TEST(GradientCheck, Sum) { expect_accurate(patchage::testing::check_sum(20, 5)); }
TEST(GradientCheck, BatchNormTrain) { expect_accurate(patchage::testing::check_batch_norm(ops::NormMode::kTrain, 20, 6)); }
TEST(GradientCheck, BatchNormEval) { expect_accurate(patchage::testing::check_batch_norm(ops::NormMode::kEval, 20, 7)); }
TEST(GradientCheck, GlobalAvgPool) { expect_accurate(patchage::testing::check_global_avg_pool(20, 8)); }
TEST(GradientCheck, Linear) { expect_accurate(patchage::testing::check_linear(20, 9)); }
TEST(GradientCheck, MseLoss) { expect_accurate(patchage::testing::check_mse_loss(20, 10)); }
