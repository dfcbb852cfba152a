#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "erfseg/error.hpp"
#include "erfseg/ops.hpp"
#include "erfseg/parallel.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace erfseg;
using erfseg::testutil::normal_tensor;
using erfseg::testutil::random_tensor;

namespace {

ConvSpec raw_spec(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad,
                  std::size_t dil, std::size_t groups = 1) {
  ConvSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel_h = s.kernel_w = k;
  s.stride = stride;
  s.pad_h = s.pad_w = pad;
  s.dilation = dil;
  s.groups = groups;
  return s;
}

}  // namespace

TEST(Conv2d, OneByOneIdentityKernel) {
  Tape<double> tape;
  auto x = tape.constant(random_tensor(Shape{1, 1, 3, 3}, 1));
  auto w = tape.constant(Tensor<double>(Shape{1, 1, 1, 1}, 1.0));
  auto y = conv2d(x, w, std::nullopt, raw_spec(1, 1, 1, 1, 0, 1));
  EXPECT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(y.value()[i], x.value()[i]);
}

TEST(Conv2d, DilatedOnesKernelCoversExtentFive) {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>(Shape{1, 1, 5, 5}, 1.0));
  auto w = tape.constant(Tensor<double>(Shape{1, 1, 3, 3}, 1.0));
  auto y = conv2d(x, w, std::nullopt, raw_spec(1, 1, 3, 1, 0, 2));
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(y.value()[0], 9.0);
}

TEST(Conv2d, MatchesNaiveOracleStrideTwo) {
  Tape<double> tape;
  auto xt = random_tensor(Shape{2, 3, 8, 8}, 11);
  auto wt = random_tensor(Shape{4, 3, 3, 3}, 12);
  auto bt = random_tensor(Shape{4}, 13);
  const auto spec = ConvSpec::same(3, 4, 3, 2);
  auto y = conv2d(tape.constant(xt), tape.constant(wt), tape.constant(bt), spec);
  const auto ref = oracle::conv(xt, wt, &bt, spec);
  ASSERT_EQ(y.shape(), ref.shape());
  EXPECT_LE(testutil::max_rel_diff(y.value().data(), ref.data()), 1e-6);
}

TEST(Conv2d, MatchesNaiveOracleGroupedAndDilated) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Tape<double> tape;
    auto xt = random_tensor(Shape{2, 4, 9, 7}, seed);
    const auto dw = ConvSpec::same(4, 8, 3, 1, 2, 4);
    auto wt = random_tensor(Shape{8, 1, 3, 3}, seed + 100);
    auto y = conv2d(tape.constant(xt), tape.constant(wt), std::nullopt, dw);
    EXPECT_LE(testutil::max_rel_diff(y.value().data(), oracle::conv(xt, wt, nullptr, dw).data()), 1e-9);

    const auto grouped = raw_spec(4, 6, 3, 2, 1, 1, 2);
    auto wg = random_tensor(Shape{6, 2, 3, 3}, seed + 200);
    auto yg = conv2d(tape.constant(xt), tape.constant(wg), std::nullopt, grouped);
    EXPECT_LE(testutil::max_rel_diff(yg.value().data(), oracle::conv(xt, wg, nullptr, grouped).data()), 1e-9);
  }
}

TEST(Conv2d, FloatPathAgreesWithDouble) {
  auto xd = random_tensor(Shape{2, 5, 12, 12}, 3);
  auto wd = random_tensor(Shape{7, 5, 3, 3}, 4);
  const auto spec = ConvSpec::same(5, 7, 3, 1, 3);
  Tape<float> tf;
  auto yf = conv2d(tf.constant(xd.cast<float>()), tf.constant(wd.cast<float>()), std::nullopt, spec);
  const auto ref = oracle::conv(xd, wd, nullptr, spec);
  for (std::size_t i = 0; i < ref.numel(); ++i) EXPECT_NEAR(yf.value()[i], ref[i], 1e-4);
}

TEST(Conv2d, ShapeErrors) {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>(Shape{1, 3, 8, 8}));
  auto w = tape.constant(Tensor<double>(Shape{4, 2, 3, 3}));
  EXPECT_THROW(conv2d(x, w, std::nullopt, ConvSpec::same(3, 4, 3)), ShapeError);
  auto w2 = tape.constant(Tensor<double>(Shape{4, 3, 3, 3}));
  EXPECT_THROW(conv2d(x, w2, std::nullopt, ConvSpec::same(2, 4, 3)), ShapeError);
  auto bad_bias = tape.constant(Tensor<double>(Shape{3}));
  EXPECT_THROW(conv2d(x, w2, bad_bias, ConvSpec::same(3, 4, 3)), ShapeError);
  auto small = tape.constant(Tensor<double>(Shape{1, 3, 4, 4}));
  EXPECT_THROW(conv2d(small, w2, std::nullopt, raw_spec(3, 4, 3, 1, 0, 3)), ShapeError);
}

TEST(Conv2d, IsLinearInInput) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Tape<double> tape;
    auto xt = random_tensor(Shape{1, 3, 10, 10}, seed);
    auto zt = random_tensor(Shape{1, 3, 10, 10}, seed + 50);
    auto w = tape.constant(random_tensor(Shape{2, 3, 3, 3}, seed + 70));
    const double a = 1.7;
    Tensor<double> comb(xt.shape());
    for (std::size_t i = 0; i < comb.numel(); ++i) comb[i] = a * xt[i] + zt[i];
    const auto spec = ConvSpec::same(3, 2, 3, 1, 2);
    auto lhs = conv2d(tape.constant(comb), w, std::nullopt, spec);
    auto cx = conv2d(tape.constant(xt), w, std::nullopt, spec);
    auto cz = conv2d(tape.constant(zt), w, std::nullopt, spec);
    std::vector<double> rhs(lhs.value().numel());
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = a * cx.value()[i] + cz.value()[i];
    for (std::size_t i = 0; i < rhs.size(); ++i) {
      EXPECT_NEAR(lhs.value()[i], rhs[i], 1e-6 * std::max(1.0, std::abs(rhs[i])));
    }
  }
}

TEST(Conv2d, DeltaWeightsTouchExactlyTheDilatedExtent) {
  for (std::size_t d : {1u, 2u, 3u, 6u}) {
    const std::size_t size = 2 * d * 2 + 9;
    Tape<double> tape;
    Tensor<double> xt(Shape{1, 1, size, size}, 0.0);
    const std::size_t c = size / 2;
    xt.at(0, 0, c, c) = 1.0;
    // Output at position p sees input at p + (k - 1) * d - pad; the set of
    // outputs reached by a centred delta has the same extent as the kernel.
    auto y = conv2d(tape.constant(xt), tape.constant(Tensor<double>(Shape{1, 1, 3, 3}, 1.0)), std::nullopt,
                    ConvSpec::same(1, 1, 3, 1, d));
    std::size_t lo = size, hi = 0;
    for (std::size_t r = 0; r < size; ++r) {
      if (y.value().at(0, 0, r, c) != 0.0) {
        lo = std::min(lo, r);
        hi = std::max(hi, r);
      }
    }
    EXPECT_EQ(hi - lo + 1, d * 2 + 1) << "dilation " << d;
  }
}

TEST(Conv2d, ThreadCountDoesNotChangeBits) {
  auto xt = random_tensor<float>(Shape{4, 6, 16, 16}, 21);
  auto wt = random_tensor<float>(Shape{8, 6, 3, 3}, 22);
  auto run = [&](int threads) {
    set_num_threads(threads);
    Tape<float> tape;
    Tensor<float> x = xt, w = wt;
    x.set_requires_grad(true);
    w.set_requires_grad(true);
    auto y = conv2d(tape.leaf(x), tape.leaf(w), std::nullopt, ConvSpec::same(6, 8, 3, 1, 2));
    tape.backward(sum(relu(y)));
    std::vector<float> all(y.value().data().begin(), y.value().data().end());
    all.insert(all.end(), x.grad().begin(), x.grad().end());
    all.insert(all.end(), w.grad().begin(), w.grad().end());
    set_num_threads(1);
    return all;
  };
  const auto one = run(1);
  const auto four = run(4);
  ASSERT_EQ(one.size(), four.size());
  EXPECT_EQ(std::memcmp(one.data(), four.data(), one.size() * sizeof(float)), 0);
}

TEST(MaxPool, WindowMax) {
  Tape<double> tape;
  auto y = maxpool2d(tape.constant(Tensor<double>(Shape{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4})));
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(y.value()[0], 4.0);
}

TEST(MaxPool, TiesRouteGradientToTopLeft) {
  Tape<double> tape;
  Tensor<double> xt(Shape{1, 1, 4, 4}, 3.0);
  xt.set_requires_grad(true);
  auto y = maxpool2d(tape.leaf(xt));
  for (double v : y.value().data()) EXPECT_DOUBLE_EQ(v, 3.0);
  tape.backward(sum(y));
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(xt.grad()[r * 4 + c], (r % 2 == 0 && c % 2 == 0) ? 1.0 : 0.0);
}

TEST(MaxPool, MatchesBruteForce) {
  auto xt = random_tensor(Shape{1, 1, 6, 6}, 5);
  Tape<double> tape;
  auto y = maxpool2d(tape.constant(xt));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      double m = -1e300;
      for (std::size_t dr = 0; dr < 2; ++dr)
        for (std::size_t dc = 0; dc < 2; ++dc) m = std::max(m, xt.at(0, 0, 2 * r + dr, 2 * c + dc));
      EXPECT_DOUBLE_EQ(y.value().at(0, 0, r, c), m);
    }
}

TEST(MaxPool, OddExtentIsAnError) {
  Tape<double> tape;
  EXPECT_THROW(maxpool2d(tape.constant(Tensor<double>(Shape{1, 1, 5, 4}))), ShapeError);
}

TEST(Upsample, ConstantStaysConstant) {
  for (std::size_t s : {2u, 4u, 8u}) {
    Tape<double> tape;
    auto y = bilinear_upsample(tape.constant(Tensor<double>(Shape{2, 3, 3, 5}, 0.7)), s);
    ASSERT_EQ(y.shape(), (Shape{2, 3, 3 * s, 5 * s}));
    for (double v : y.value().data()) EXPECT_NEAR(v, 0.7, 1e-15);
  }
}

TEST(Upsample, SinglePixel) {
  Tape<double> tape;
  auto y = bilinear_upsample(tape.constant(Tensor<double>(Shape{1, 1, 1, 1}, 2.5)), 2);
  ASSERT_EQ(y.value().numel(), 4u);
  for (double v : y.value().data()) EXPECT_DOUBLE_EQ(v, 2.5);
}

TEST(Upsample, TwoByTwoMatchesHandWeights) {
  // Half-pixel sources for 2 -> 4: -0.25 (clamped 0), 0.25, 0.75, 1.25 (clamped 1).
  const double m[4][2] = {{1.0, 0.0}, {0.75, 0.25}, {0.25, 0.75}, {0.0, 1.0}};
  const double x[2][2] = {{1.0, 2.0}, {3.0, 4.0}};
  Tape<double> tape;
  auto y = bilinear_upsample(tape.constant(Tensor<double>(Shape{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4})), 2);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      double ref = 0.0;
      for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) ref += m[r][i] * x[i][j] * m[c][j];
      EXPECT_NEAR(y.value().at(0, 0, r, c), ref, 1e-15);
    }
  EXPECT_NEAR(y.value().at(0, 0, 1, 1), 1.75, 1e-15);
}

TEST(Upsample, IsLinear) {
  Tape<double> tape;
  auto a = random_tensor(Shape{1, 2, 3, 4}, 1);
  auto b = random_tensor(Shape{1, 2, 3, 4}, 2);
  Tensor<double> c(a.shape());
  for (std::size_t i = 0; i < c.numel(); ++i) c[i] = 2.0 * a[i] - b[i];
  auto ua = bilinear_upsample(tape.constant(a), 4);
  auto ub = bilinear_upsample(tape.constant(b), 4);
  auto uc = bilinear_upsample(tape.constant(c), 4);
  for (std::size_t i = 0; i < uc.value().numel(); ++i) {
    EXPECT_NEAR(uc.value()[i], 2.0 * ua.value()[i] - ub.value()[i], 1e-12);
  }
}

TEST(InstanceNorm, StandardisesEachPlane) {
  Tape<double> tape;
  auto x = tape.constant(random_tensor(Shape{2, 3, 5, 4}, 8, -3.0, 5.0));
  auto y = instance_norm(x, tape.constant(Tensor<double>(Shape{3}, 1.0)), tape.constant(Tensor<double>(Shape{3}, 0.0)),
                         0.0);
  for (std::size_t p = 0; p < 6; ++p) {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < 20; ++i) mean += y.value()[p * 20 + i];
    mean /= 20;
    for (std::size_t i = 0; i < 20; ++i) var += std::pow(y.value()[p * 20 + i] - mean, 2);
    var /= 20;
    EXPECT_LT(std::abs(mean), 1e-6);
    EXPECT_NEAR(var, 1.0, 1e-9);
  }
}

TEST(InstanceNorm, ConstantPlaneYieldsBeta) {
  Tape<double> tape;
  auto y = instance_norm(tape.constant(Tensor<double>(Shape{1, 2, 3, 3}, 4.0)),
                         tape.constant(Tensor<double>(Shape{2}, std::vector<double>{2.0, 3.0})),
                         tape.constant(Tensor<double>(Shape{2}, std::vector<double>{0.5, -1.0})));
  for (std::size_t i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(y.value()[i], 0.5);
  for (std::size_t i = 9; i < 18; ++i) EXPECT_DOUBLE_EQ(y.value()[i], -1.0);
}

TEST(InstanceNorm, MatchesTwoPassOracle) {
  const auto xt = random_tensor(Shape{2, 3, 4, 4}, 9);
  const auto gt = random_tensor(Shape{3}, 10);
  const auto bt = random_tensor(Shape{3}, 11);
  Tape<double> tape;
  auto y = instance_norm(tape.constant(xt), tape.constant(gt), tape.constant(bt), 1e-5);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c) {
      double mean = 0;
      for (std::size_t i = 0; i < 16; ++i) mean += xt.at(n, c, i / 4, i % 4);
      mean /= 16;
      double var = 0;
      for (std::size_t i = 0; i < 16; ++i) var += std::pow(xt.at(n, c, i / 4, i % 4) - mean, 2);
      var /= 16;
      for (std::size_t i = 0; i < 16; ++i) {
        const double ref = gt[c] * (xt.at(n, c, i / 4, i % 4) - mean) / std::sqrt(var + 1e-5) + bt[c];
        EXPECT_NEAR(y.value().at(n, c, i / 4, i % 4), ref, 1e-12);
      }
    }
}

TEST(InstanceNorm, InvariantToPerPlaneAffineRescaling) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto xt = random_tensor(Shape{2, 3, 6, 6}, seed);
    auto scaled = xt;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> scale(0.2, 5.0), shift(-4.0, 4.0);
    for (std::size_t p = 0; p < 6; ++p) {
      const double a = scale(rng), b = shift(rng);
      for (std::size_t i = 0; i < 36; ++i) scaled[p * 36 + i] = a * xt[p * 36 + i] + b;
    }
    Tape<double> tape;
    auto g = tape.constant(Tensor<double>(Shape{3}, 1.0));
    auto b = tape.constant(Tensor<double>(Shape{3}, 0.0));
    auto y1 = instance_norm(tape.constant(xt), g, b, 0.0);
    auto y2 = instance_norm(tape.constant(scaled), g, b, 0.0);
    for (std::size_t i = 0; i < xt.numel(); ++i) EXPECT_NEAR(y1.value()[i], y2.value()[i], 1e-5);
  }
}

TEST(InstanceNorm, SinglePixelPlaneIsDegenerate) {
  Tape<double> tape;
  EXPECT_THROW(instance_norm(tape.constant(Tensor<double>(Shape{1, 2, 1, 1})),
                             tape.constant(Tensor<double>(Shape{2}, 1.0)), tape.constant(Tensor<double>(Shape{2}))),
               ShapeError);
}

TEST(Pointwise, SigmoidReluAddMul) {
  Tape<double> tape;
  auto z = sigmoid(tape.constant(Tensor<double>(Shape{1}, 0.0)));
  EXPECT_DOUBLE_EQ(z.value()[0], 0.5);
  auto r = relu(tape.constant(Tensor<double>(Shape{3}, std::vector<double>{-2.0, -1e-9, 3.0})));
  EXPECT_DOUBLE_EQ(r.value()[0], 0.0);
  EXPECT_DOUBLE_EQ(r.value()[1], 0.0);
  EXPECT_DOUBLE_EQ(r.value()[2], 3.0);

  auto f = tape.constant(random_tensor(Shape{1, 2, 3, 3}, 4));
  auto a = tape.constant(Tensor<double>(Shape{1, 2, 3, 3}, 0.0));
  auto y = add(mul(f, a), f);
  for (std::size_t i = 0; i < 18; ++i) EXPECT_EQ(y.value()[i], f.value()[i]);

  auto other = tape.constant(Tensor<double>(Shape{1, 2, 3, 2}));
  EXPECT_THROW(add(f, other), ShapeError);
  EXPECT_THROW(mul(f, other), ShapeError);
}

TEST(Pointwise, SigmoidIsStableAndStrict) {
  for (double v : {-1000.0, -40.0, -1.0, 0.0, 1.0, 40.0, 1000.0}) {
    const double s = stable_sigmoid(v);
    EXPECT_TRUE(std::isfinite(s));
  }
  Tape<float> tape;
  auto s = sigmoid(tape.constant(Tensor<float>(Shape{4}, std::vector<float>{-200.f, -30.f, 30.f, 200.f})));
  for (float v : s.value().data()) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
}

TEST(Concat, StacksChannels) {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>(Shape{2, 1, 2, 2}, 1.0));
  auto b = tape.constant(Tensor<double>(Shape{2, 2, 2, 2}, 2.0));
  auto c = concat_channels(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 3, 2, 2}));
  EXPECT_DOUBLE_EQ(c.value().at(1, 0, 1, 1), 1.0);
  EXPECT_DOUBLE_EQ(c.value().at(1, 2, 0, 0), 2.0);
  EXPECT_THROW(concat_channels(a, tape.constant(Tensor<double>(Shape{2, 1, 3, 2}))), ShapeError);
}
