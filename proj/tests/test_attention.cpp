#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "tdconved/attention.hpp"
#include "tdconved/errors.hpp"
#include "tdconved/gradcheck.hpp"

using namespace tdconved;
using namespace testing_support;

namespace {

AttentionParams random_attention(std::size_t dr, std::size_t df, std::size_t da, Rng& rng) {
  return {random_tensor({1, da}, rng), random_tensor({da, dr}, rng), random_tensor({da, df}, rng),
          random_tensor({da}, rng)};
}

AttentionResult oracle_attend(const Tensor& z, const std::vector<double>& h, const AttentionParams& p) {
  const std::size_t nv = z.rows(), dr = z.cols(), da = p.bias.numel();
  std::vector<double> scores(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    double a = 0;
    for (std::size_t r = 0; r < da; ++r) {
      double pre = p.bias[r];
      for (std::size_t c = 0; c < dr; ++c) pre += p.context_weight.at(r, c) * z.at(i, c);
      for (std::size_t c = 0; c < h.size(); ++c) pre += p.query_weight.at(r, c) * h[c];
      a += p.score_weight.at(0, r) * std::tanh(pre);
    }
    scores[i] = a;
  }
  double mx = scores[0];
  for (double s : scores) mx = std::max(mx, s);
  double total = 0;
  AttentionResult out{std::vector<double>(nv), std::vector<double>(dr, 0.0)};
  for (std::size_t i = 0; i < nv; ++i) total += out.weights[i] = std::exp(scores[i] - mx);
  for (std::size_t i = 0; i < nv; ++i) {
    out.weights[i] /= total;
    for (std::size_t c = 0; c < dr; ++c) out.context[c] += out.weights[i] * z.at(i, c);
  }
  return out;
}

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1, 1);
  return v;
}

}  // namespace

TEST(Attend, SingleSource) {
  Rng rng(1);
  const AttentionParams p = random_attention(3, 4, 5, rng);
  const Tensor z = random_tensor({1, 3}, rng);
  const AttentionResult r = attend(z, random_vec(4, rng), p);
  EXPECT_EQ(r.weights, std::vector<double>{1.0});
  EXPECT_EQ(r.context, row_vec(z, 0));
}

TEST(Attend, IdenticalContextsGiveUniformWeights) {
  Rng rng(2);
  const AttentionParams p = random_attention(3, 4, 5, rng);
  const auto v = random_vec(3, rng);
  Tensor z({4, 3});
  for (std::size_t i = 0; i < 4; ++i) std::copy(v.begin(), v.end(), z.row(i).begin());
  const AttentionResult r = attend(z, random_vec(4, rng), p);
  for (double w : r.weights) EXPECT_NEAR(w, 0.25, 1e-15);
  EXPECT_LE(max_abs_diff(r.context, v), 1e-15);
}

TEST(Attend, MatchesScalarOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const AttentionParams p = random_attention(3, 4, 5, rng);
    const Tensor z = random_tensor({3, 3}, rng);
    const auto h = random_vec(4, rng);
    const AttentionResult got = attend(z, h, p);
    const AttentionResult ref = oracle_attend(z, h, p);
    EXPECT_LE(max_abs_diff(got.weights, ref.weights), 1e-12);
    EXPECT_LE(max_abs_diff(got.context, ref.context), 1e-12);
  }
}

TEST(Attend, ProbabilityConvexHullAndPermutation) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t nv = 1 + rng.below(10);
    const AttentionParams p = random_attention(4, 3, 6, rng);
    const Tensor z = random_tensor({nv, 4}, rng, 3.0);
    const auto h = random_vec(3, rng);
    const AttentionResult r = attend(z, h, p);
    double sum = 0;
    for (double w : r.weights) {
      EXPECT_GE(w, 0.0);
      sum += w;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    for (std::size_t c = 0; c < 4; ++c) {
      double lo = INFINITY, hi = -INFINITY;
      for (std::size_t i = 0; i < nv; ++i) {
        lo = std::min(lo, z.at(i, c));
        hi = std::max(hi, z.at(i, c));
      }
      EXPECT_GE(r.context[c], lo - 1e-12);
      EXPECT_LE(r.context[c], hi + 1e-12);
    }

    std::vector<std::size_t> perm(nv);
    for (std::size_t i = 0; i < nv; ++i) perm[i] = i;
    shuffle(perm, rng);
    Tensor zp({nv, 4});
    for (std::size_t i = 0; i < nv; ++i) std::copy(z.row(perm[i]).begin(), z.row(perm[i]).end(), zp.row(i).begin());
    const AttentionResult rp = attend(zp, h, p);
    for (std::size_t i = 0; i < nv; ++i) EXPECT_NEAR(rp.weights[i], r.weights[perm[i]], 1e-12);
    EXPECT_LE(max_abs_diff(rp.context, r.context), 1e-12);
  }
}

TEST(Attend, ShapeMismatch) {
  Rng rng(5);
  const AttentionParams p = random_attention(3, 4, 5, rng);
  EXPECT_THROW(attend(random_tensor({2, 3}, rng), random_vec(3, rng), p), ShapeError);
  EXPECT_THROW(attend(random_tensor({2, 2}, rng), random_vec(4, rng), p), ShapeError);
}

TEST(AttendAll, RowsEqualPerStepAttendBitwise) {
  Rng rng(6);
  const AttentionParams p = random_attention(5, 4, 6, rng);
  const Tensor z = random_tensor({7, 5}, rng);
  const Tensor q = random_tensor({9, 4}, rng);
  AttentionCache cache;
  const Tensor ctx = attend_all(z, q, p, &cache, 3);
  const AttentionMemory memory = make_attention_memory(z, p);
  for (std::size_t t = 0; t < 9; ++t) {
    const AttentionResult r = attend(memory, q.row(t), p);
    EXPECT_EQ(row_vec(ctx, t), r.context);
    EXPECT_EQ(row_vec(cache.weights, t), r.weights);
  }
}

TEST(AttendAll, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  AttentionParams p = random_attention(3, 4, 5, rng);
  Tensor z = random_tensor({3, 3}, rng);
  Tensor q = random_tensor({4, 4}, rng);
  const Tensor c = random_tensor({4, 3}, rng);
  auto loss = [&] {
    const Tensor ctx = attend_all(z, q, p, nullptr);
    double s = 0;
    for (std::size_t i = 0; i < ctx.numel(); ++i) s += c[i] * ctx[i];
    return s;
  };
  AttentionCache cache;
  attend_all(z, q, p, &cache);
  Tensor dz(z.shape()), dq(q.shape());
  AttentionParams g{Tensor(p.score_weight.shape()), Tensor(p.context_weight.shape()), Tensor(p.query_weight.shape()),
                    Tensor(p.bias.shape())};
  attend_all_backward(p, cache, c, dz, dq, g);

  auto check = [&](Tensor& x, const Tensor& analytic) {
    const Tensor original = x;
    const Tensor numeric = finite_diff_grad(
        [&](const Tensor& t) {
          x = t;
          return loss();
        },
        original);
    x = original;
    EXPECT_LT(max_relative_error(analytic.values(), numeric.values()), 1e-4);
  };
  check(z, dz);
  check(q, dq);
  check(p.score_weight, g.score_weight);
  check(p.context_weight, g.context_weight);
  check(p.query_weight, g.query_weight);
  check(p.bias, g.bias);
}
