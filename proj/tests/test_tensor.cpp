// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#include <cmath>

#include <gtest/gtest.h>

#include "attnkit/error.hpp"
#include "attnkit/rng.hpp"
#include "attnkit/tensor.hpp"

using namespace attnkit;

namespace {

Tensor loop_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
      c.at(i, j) = s;
    }
  }
  return c;
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Rng rng(1);
  const Tensor m = gaussian_init({3, 5}, 1.0, rng);
  EXPECT_EQ(max_abs_diff(matmul(Tensor::identity(3), m), m), 0.0);
}

TEST(Matmul, OneByOne) {
  const Tensor c = matmul(Tensor::from_rows({{2}}), Tensor::from_rows({{3}}));
  EXPECT_EQ(c.at(0, 0), 6.0);
}

TEST(Matmul, MatchesTripleLoopExactly) {
  Rng rng(2);
  const Tensor a = gaussian_init({4, 5}, 1.0, rng), b = gaussian_init({5, 3}, 1.0, rng);
  EXPECT_EQ(max_abs_diff(matmul(a, b), loop_matmul(a, b)), 0.0);
}

TEST(Matmul, TransposedVariantAgrees) {
  Rng rng(3);
  const Tensor a = gaussian_init({4, 6}, 1.0, rng), b = gaussian_init({7, 6}, 1.0, rng);
  EXPECT_LE(max_abs_diff(matmul_bt(a, b), matmul(a, transpose(b))), 1e-14);
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({4, 2})), DimensionError);
}

TEST(Matmul, AbsorptionAssociativity) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor q = gaussian_init({1, 8}, 1.0, rng);
    const Tensor W = gaussian_init({16, 8}, 1.0, rng);  // W_UK^T block: [c, d_h]
    const Tensor C = gaussian_init({5, 16}, 1.0, rng);
    const Tensor lhs = matmul_bt(matmul(q, transpose(W)), C);
    const Tensor rhs = matmul_bt(q, matmul(C, W));
    EXPECT_LE(max_rel_diff(lhs, rhs, 1e-30), 1e-10);
  }
}

TEST(HeadContract, MatchesPerHeadLoop) {
  Rng rng(5);
  const Tensor x = gaussian_init({3, 4}, 1.0, rng), w = gaussian_init({3, 4, 6}, 1.0, rng);
  const Tensor y = head_contract(x, w);
  ASSERT_EQ(y.shape(), (Shape{3, 6}));
  for (std::size_t h = 0; h < 3; ++h) {
    for (std::size_t c = 0; c < 6; ++c) {
      double s = 0.0;
      for (std::size_t p = 0; p < 4; ++p) s += x.at(h, p) * w.at(h, p, c);
      EXPECT_NEAR(y.at(h, c), s, 1e-14);
    }
  }
}

TEST(Softmax, UniformOnEqualLogits) {
  const Tensor p = softmax_rows(Tensor::from_rows({{0, 0}}));
  EXPECT_DOUBLE_EQ(p.at(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(p.at(0, 1), 0.5);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  const Tensor p = softmax_rows(Tensor::from_rows({{1000, 0}}));
  EXPECT_TRUE(std::isfinite(p.at(0, 0)));
  EXPECT_NEAR(p.at(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(p.at(0, 1), 0.0, 1e-15);
}

TEST(Softmax, MatchesNaiveOracle) {
  Rng rng(6);
  const Tensor m = gaussian_init({3, 4}, 1.0, rng);
  const Tensor p = softmax_rows(m);
  for (std::size_t i = 0; i < 3; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < 4; ++j) z += std::exp(m.at(i, j));
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(p.at(i, j), std::exp(m.at(i, j)) / z, 1e-14);
  }
}

TEST(Softmax, NegativeInfinityMasksEntry) {
  const Tensor p = softmax_rows(Tensor::from_rows({{1.0, -INFINITY}}));
  EXPECT_EQ(p.at(0, 1), 0.0);
  EXPECT_EQ(p.at(0, 0), 1.0);
}

TEST(RmsNorm, OnesStayOnes) {
  const Tensor y = rmsnorm(Tensor::full({1, 5}, 1.0), 0.0);
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(RmsNorm, ClosedForm) {
  const Tensor y = rmsnorm(Tensor::from_rows({{3, 4}}), 0.0);
  EXPECT_NEAR(y.at(0, 0), 3.0 / std::sqrt(12.5), 1e-15);
  EXPECT_NEAR(y.at(0, 1), 4.0 / std::sqrt(12.5), 1e-15);
}

TEST(RmsNorm, ZeroRowStaysZero) {
  const Tensor y = rmsnorm(Tensor::zeros({1, 4}), 1e-6);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(GaussianInit, ZeroSigmaGivesZeros) {
  Rng rng(7);
  const Tensor t = gaussian_init({10, 10}, 0.0, rng);
  for (double v : t.data()) EXPECT_EQ(v, 0.0);
}

TEST(GaussianInit, SampleStdWithinOnePercent) {
  Rng rng(8);
  const Tensor t = gaussian_init({1000, 1000}, 0.02, rng);
  double s = 0.0, s2 = 0.0;
  for (double v : t.data()) {
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(t.size());
  const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
  EXPECT_NEAR(sd, 0.02, 0.02 * 0.01);
}

TEST(GaussianInit, SameSeedSameTensor) {
  Rng a(9), b(9);
  EXPECT_EQ(max_abs_diff(gaussian_init({4, 4}, 1.0, a), gaussian_init({4, 4}, 1.0, b)), 0.0);
}

TEST(Rng, SplitStreamsDiffer) {
  const Rng root(10);
  Rng a = root.split(0), b = root.split(1);
  EXPECT_NE(a.next_u64(), b.next_u64());
  Rng c = root.split("x"), d = root.split("x");
  EXPECT_EQ(c.next_u64(), d.next_u64());
}

TEST(Tensor, SliceAndConcatRoundTrip) {
  Rng rng(11);
  const Tensor m = gaussian_init({3, 7}, 1.0, rng);
  const Tensor back = concat_cols(slice_cols(m, 0, 3), slice_cols(m, 3, 7));
  EXPECT_EQ(max_abs_diff(back, m), 0.0);
}

TEST(Tensor, RepeatInterleave) {
  const Tensor m = Tensor::from_rows({{1, 2}});
  const Tensor r = repeat_interleave(m, 2, 1);
  ASSERT_EQ(r.shape(), (Shape{1, 4}));
  EXPECT_EQ(r.at(0, 0), 1.0);
  EXPECT_EQ(r.at(0, 1), 1.0);
  EXPECT_EQ(r.at(0, 2), 2.0);
  EXPECT_EQ(r.at(0, 3), 2.0);
}
