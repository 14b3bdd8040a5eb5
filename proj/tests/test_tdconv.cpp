#include <gtest/gtest.h>

#include "support.hpp"
#include "tdconved/errors.hpp"
#include "tdconved/gradcheck.hpp"
#include "tdconved/tdconv.hpp"

using namespace tdconved;
using namespace testing_support;

namespace {

DeformConvParams zero_params(std::size_t D, std::size_t k) {
  return {Tensor({k, k * D}), Tensor({k}), Tensor({2 * D, k * D}), Tensor({2 * D})};
}

}  // namespace

TEST(PredictOffsets, ZeroBranchGivesZeroOffsets) {
  Rng rng(1);
  const DeformConvParams p = make_deform_conv(4, 3, rng);
  const TapOffsets o = predict_offsets(random_tensor({3, 4}, rng), p);
  ASSERT_EQ(o.values.size(), 3u);
  for (double v : o.values) EXPECT_EQ(v, 0.0);
}

TEST(PredictOffsets, BiasPassthrough) {
  Rng rng(2);
  DeformConvParams p = zero_params(2, 3);
  p.offset_bias = Tensor::vector({0.5, 0.0, -0.5});
  const TapOffsets o = predict_offsets(random_tensor({3, 2}, rng), p);
  EXPECT_EQ(o.values, (std::vector<double>{0.5, 0.0, -0.5}));
}

TEST(PredictOffsets, MatchesHandAffine) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const DeformConvParams p = random_deform_params(3, 3, rng, 1.0);
    const Tensor w = random_tensor({3, 3}, rng);
    const auto ref = naive_affine(p.offset_weight, p.offset_bias, std::vector<double>(w.values().begin(), w.values().end()));
    const TapOffsets o = predict_offsets(w, p);
    for (std::size_t n = 0; n < 3; ++n) EXPECT_NEAR(o.values[n], ref[n], 1e-12);
  }
}

TEST(PredictOffsets, WrongWindowLength) {
  Rng rng(4);
  const DeformConvParams p = make_deform_conv(2, 3, rng);
  EXPECT_THROW(predict_offsets(Tensor({2, 2}), p), ShapeError);
}

TEST(Interp, IntegralPositionIsExact) {
  const Tensor seq = Tensor::matrix({{1}, {3}, {5}});
  EXPECT_EQ(interp(seq, 1.0), std::vector<double>{3.0});
}

TEST(Interp, Midpoint) {
  const Tensor seq = Tensor::matrix({{1}, {3}, {5}});
  EXPECT_DOUBLE_EQ(interp(seq, 1.5)[0], 4.0);
}

TEST(Interp, PartialMassOutsideRange) {
  const Tensor seq = Tensor::matrix({{2}, {4}});
  EXPECT_DOUBLE_EQ(interp(seq, -0.25)[0], 1.5);
  EXPECT_DOUBLE_EQ(interp(seq, 1.5)[0], 2.0);
  EXPECT_EQ(interp(seq, -1.0)[0], 0.0);
  EXPECT_EQ(interp(seq, 7.3)[0], 0.0);
  EXPECT_EQ(interp(seq, -40.0)[0], 0.0);
}

TEST(Interp, MatchesKernelSumOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t L = 1 + rng.below(6), D = 1 + rng.below(4);
    const Tensor seq = random_tensor({L, D}, rng);
    const double pos = rng.uniform(-2.5, static_cast<double>(L) + 1.5);
    const auto got = interp(seq, pos);
    const auto ref = kernel_sum(seq, pos);
    EXPECT_LE(max_abs_diff(got, ref), 1e-12) << "pos " << pos;
  }
}

TEST(Interp, PartitionOfUnityInsideRange) {
  Rng rng(6);
  const Tensor seq = random_tensor({5, 3}, rng);
  for (int trial = 0; trial < 100; ++trial) {
    const double pos = rng.uniform(0.0, 4.0);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min<std::size_t>(lo + 1, 4);
    const auto got = interp(seq, pos);
    double weight_sum = 0.0;
    for (std::size_t s = 0; s < 5; ++s) weight_sum += std::max(0.0, 1.0 - std::abs(static_cast<double>(s) - pos));
    EXPECT_DOUBLE_EQ(weight_sum, 1.0);
    for (std::size_t c = 0; c < 3; ++c) {
      const double a = seq.at(lo, c), b = seq.at(hi, c);
      EXPECT_GE(got[c], std::min(a, b) - 1e-15);
      EXPECT_LE(got[c], std::max(a, b) + 1e-15);
    }
  }
}

TEST(DeformableTap, ZeroOffsetsReadStandardTaps) {
  Rng rng(7);
  const Tensor seq = random_tensor({6, 3}, rng);
  const TapOffsets zero{{0.0, 0.0, 0.0}};
  const auto taps = tap_positions(3);
  EXPECT_EQ(taps, (std::vector<long>{-1, 0, 1}));
  for (long center = 1; center < 5; ++center) {
    for (std::size_t n = 0; n < 3; ++n) {
      EXPECT_EQ(deformable_tap(seq, center, n, zero), row_vec(seq, center + taps[n]));
    }
  }
}

TEST(DeformableTap, IntegralShift) {
  Rng rng(8);
  const Tensor seq = random_tensor({6, 2}, rng);
  const TapOffsets off{{0.0, 1.0, 0.0}};
  EXPECT_EQ(deformable_tap(seq, 2, 1, off), row_vec(seq, 3));
}

TEST(DeformableTap, FractionalMatchesKernelSum) {
  Rng rng(9);
  const Tensor seq = random_tensor({6, 2}, rng);
  for (int trial = 0; trial < 50; ++trial) {
    const TapOffsets off{{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)}};
    const long center = static_cast<long>(rng.below(6));
    const std::size_t n = rng.below(3);
    const double pos = static_cast<double>(center) + (static_cast<double>(n) - 1.0) + off.values[n];
    EXPECT_LE(max_abs_diff(deformable_tap(seq, center, n, off), kernel_sum(seq, pos)), 1e-12);
  }
}

TEST(DeformConvBlock, ZeroParamsAreIdentity) {
  Rng rng(10);
  const Tensor x = random_tensor({5, 3}, rng);
  EXPECT_TRUE(deform_conv_block(x, zero_params(3, 3)) == x);
}

TEST(DeformConvBlock, ZeroOffsetsEqualPlainConvolution) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t L = 1 + rng.below(8), D = 1 + rng.below(5);
    const std::size_t k = 1 + 2 * rng.below(3);
    DeformConvParams p = random_deform_params(D, k, rng, 1.0);
    p.offset_weight.fill(0.0);
    p.offset_bias.fill(0.0);
    const Tensor x = random_tensor({L, D}, rng);
    EXPECT_LE(max_abs_diff(deform_conv_block(x, p), oracle_deform_block(x, p, false)), 1e-12);
  }
}

TEST(DeformConvBlock, MatchesScalarBruteForce) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const DeformConvParams p = random_deform_params(2, 3, rng, 0.8);
    const Tensor x = random_tensor({4, 2}, rng);
    EXPECT_LE(max_abs_diff(deform_conv_block(x, p), oracle_deform_block(x, p)), 1e-12);
  }
}

TEST(DeformConvBlock, LargeOffsetsSampleZeros) {
  Rng rng(13);
  DeformConvParams p = random_deform_params(2, 3, rng, 1.0);
  p.offset_weight.fill(0.0);
  p.offset_bias = Tensor::vector({25.0, -30.0, 100.5});
  const Tensor x = random_tensor({4, 2}, rng);
  EXPECT_LE(max_abs_diff(deform_conv_block(x, p), oracle_deform_block(x, p)), 1e-12);
}

TEST(DeformConvBlock, PreservesLength) {
  Rng rng(14);
  for (std::size_t L = 1; L <= 9; ++L) {
    for (std::size_t k : {1u, 3u, 5u}) {
      const Tensor y = deform_conv_block(random_tensor({L, 3}, rng), random_deform_params(3, k, rng, 0.5));
      EXPECT_EQ(y.rows(), L);
      EXPECT_EQ(y.cols(), 3u);
    }
  }
}

TEST(DeformConvBlock, DimensionMismatch) {
  Rng rng(15);
  EXPECT_THROW(deform_conv_block(random_tensor({4, 3}, rng), random_deform_params(2, 3, rng, 1.0)), ShapeError);
}

TEST(DeformConvBlock, EvenKernelRejected) {
  Rng rng(16);
  EXPECT_THROW(make_deform_conv(2, 4, rng), ConfigError);
  EXPECT_THROW(make_deform_conv(2, 0, rng), ConfigError);
}

TEST(DeformConvBlock, InitialisesOffsetBranchToZero) {
  Rng rng(17);
  const DeformConvParams p = make_deform_conv(5, 3, rng);
  for (double v : p.offset_weight.values()) EXPECT_EQ(v, 0.0);
  for (double v : p.offset_bias.values()) EXPECT_EQ(v, 0.0);
  const double bound = std::sqrt(1.0 / 15.0);
  bool nonzero = false;
  for (double v : p.conv_weight.values()) {
    EXPECT_LE(std::abs(v), bound);
    nonzero |= v != 0.0;
  }
  EXPECT_TRUE(nonzero);
}

TEST(DeformConvBlock, GradientsMatchFiniteDifferences) {
  Rng rng(18);
  int checked = 0;
  while (checked < 10) {
    const std::size_t L = 2 + rng.below(4), D = 1 + rng.below(3), k = rng.below(2) ? 3 : 5;
    DeformConvParams p = random_deform_params(D, k, rng, 0.4);
    const Tensor x = random_tensor({L, D}, rng);
    DeformConvCache cache;
    const Tensor y = deform_conv_forward(x, p, &cache);
    double gap = 1.0;
    for (double v : cache.offsets.values()) gap = std::min(gap, integer_gap(v));
    if (gap < 0.05) continue;  // stay away from the interpolation kinks
    ++checked;

    const Tensor c = random_tensor({L, D}, rng);
    auto loss_of = [&](const Tensor& xx, const DeformConvParams& pp) {
      const Tensor yy = deform_conv_block(xx, pp);
      double s = 0;
      for (std::size_t i = 0; i < yy.numel(); ++i) s += c[i] * yy[i];
      return s;
    };
    Tensor dx({L, D});
    DeformConvParams g{Tensor(p.offset_weight.shape()), Tensor(p.offset_bias.shape()), Tensor(p.conv_weight.shape()),
                       Tensor(p.conv_bias.shape())};
    deform_conv_backward(x, p, cache, c, dx, g);

    EXPECT_LT(max_relative_error(dx.values(), finite_diff_grad([&](const Tensor& t) { return loss_of(t, p); }, x).values()),
              1e-4);
    auto check = [&](Tensor DeformConvParams::*member) {
      const Tensor numeric = finite_diff_grad(
          [&](const Tensor& t) {
            DeformConvParams q = p;
            q.*member = t;
            return loss_of(x, q);
          },
          p.*member);
      EXPECT_LT(max_relative_error((g.*member).values(), numeric.values()), 1e-4);
    };
    check(&DeformConvParams::offset_weight);
    check(&DeformConvParams::offset_bias);
    check(&DeformConvParams::conv_weight);
    check(&DeformConvParams::conv_bias);
  }
}

TEST(DeformConvBlock, OffsetGradientFlowsFromZeroInit) {
  // At zero offsets every tap sits exactly on an integer; the offset branch
  // must still receive a gradient or it could never leave its initial value.
  Rng rng(19);
  DeformConvParams p = random_deform_params(3, 3, rng, 1.0);
  p.offset_weight.fill(0.0);
  p.offset_bias.fill(0.0);
  const Tensor x = random_tensor({5, 3}, rng);
  DeformConvCache cache;
  deform_conv_forward(x, p, &cache);
  Tensor dx({5, 3});
  DeformConvParams g{Tensor(p.offset_weight.shape()), Tensor(p.offset_bias.shape()), Tensor(p.conv_weight.shape()),
                     Tensor(p.conv_bias.shape())};
  deform_conv_backward(x, p, cache, Tensor::filled({5, 3}, 1.0), dx, g);
  double norm = 0;
  for (double v : g.offset_bias.values()) norm += std::abs(v);
  EXPECT_GT(norm, 0.0);

  // The derivative used there is the one-sided slope towards the next frame.
  const double h = 1e-7;
  DeformConvParams q = p;
  q.offset_bias[0] = h;
  double up = 0, base = 0;
  const Tensor y_up = deform_conv_block(x, q);
  const Tensor y_base = deform_conv_block(x, p);
  for (double v : y_up.values()) up += v;
  for (double v : y_base.values()) base += v;
  EXPECT_NEAR(g.offset_bias[0], (up - base) / h, 1e-5);
}
