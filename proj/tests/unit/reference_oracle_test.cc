// Copyright 2026 The LASP Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "lasp/errors.h"
#include "lasp/reference.h"
#include "test_util.h"

namespace lasp {
namespace {

using testing::random_like;
using testing::random_problem;

QkvLoss dense_loss(const AttnProblem &p, const Matrix &d_o) {
  return [lambda = p.lambda, d_o](const Matrix &q, const Matrix &k, const Matrix &v) {
    return attention_loss(dense_masked_forward({q, k, v, lambda}), d_o);
  };
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

TEST(DenseMaskedForward, SingleStep) {
  const AttnProblem p = random_problem(1, 1, 5, 0.3);
  const Matrix o = dense_masked_forward(p);
  const double qk = dot(p.q.row(0), p.k.row(0));
  for (std::size_t j = 0; j < 5; ++j) EXPECT_DOUBLE_EQ(o(0, j), qk * p.v(0, j));
}

TEST(DenseMaskedForward, HandRecurrence) {
  const Matrix ones = Matrix::FromRows({{1}, {1}});
  const AttnProblem p{ones, ones, ones, 1.0};
  EXPECT_EQ(dense_masked_forward(p), Matrix::FromRows({{1}, {2}}));
  EXPECT_EQ(serial_forward(p).output, Matrix::FromRows({{1}, {2}}));
}

TEST(DenseMaskedForward, MatchesSerial) {
  const AttnProblem p = random_problem(2, 64, 8, 0.95);
  EXPECT_LE(relative_error(dense_masked_forward(p), serial_forward(p).output), 1e-12);
  const AttnProblem big = random_problem(3, 128, 8, 0.9);
  EXPECT_LE(relative_error(serial_forward(big).output, dense_masked_forward(big)), 1e-12);
}

TEST(DenseMaskedForward, RejectsBadInputs) {
  AttnProblem p = random_problem(4, 4, 2, 0.5);
  p.q(1, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(dense_masked_forward(p), NumericError);
  p = random_problem(4, 4, 2, 1.5);
  EXPECT_THROW(dense_masked_forward(p), DomainError);
  p = random_problem(4, 4, 2, 0.0);
  EXPECT_THROW(serial_forward(p), DomainError);
  p = random_problem(4, 4, 2, 0.5);
  p.v = Matrix(3, 2);
  EXPECT_THROW(serial_forward(p), ShapeError);
}

TEST(SerialForward, FirstStateIsOuterProduct) {
  const AttnProblem p = random_problem(5, 6, 3, 0.7);
  const auto r = serial_forward(p, 1);
  ASSERT_EQ(r.kv_trace.size(), 6u);
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) EXPECT_EQ(r.kv_trace[0](a, b), p.k(0, a) * p.v(0, b));
  }
}

TEST(SerialForward, NoDecayIsPrefixSum) {
  const AttnProblem p = random_problem(6, 20, 4, 1.0);
  const auto r = serial_forward(p, 1);
  Matrix cum(4, 4);
  for (std::size_t s = 0; s < 20; ++s) {
    for (std::size_t a = 0; a < 4; ++a) {
      for (std::size_t b = 0; b < 4; ++b) cum(a, b) += p.k(s, a) * p.v(s, b);
    }
    EXPECT_LE(max_abs_diff(r.kv_trace[s], cum), 1e-13);
    const Matrix q_row = p.q.row_block(s, 1);
    EXPECT_LE(max_abs_diff(matmul(q_row, cum), r.output.row_block(s, 1)), 1e-13);
  }
}

TEST(SerialForward, Causality) {
  AttnProblem p = random_problem(7, 32, 4, 0.9);
  const Matrix full = serial_forward(p).output;
  for (std::size_t s : {0u, 10u, 31u}) {
    AttnProblem cut = p;
    for (std::size_t r = s + 1; r < 32; ++r) {
      for (std::size_t c = 0; c < 4; ++c) cut.k(r, c) = cut.v(r, c) = 0.0;
    }
    const Matrix o = serial_forward(cut).output;
    EXPECT_EQ(o.row_block(0, s + 1), full.row_block(0, s + 1));
  }
}

TEST(SerialBackward, SingleStep) {
  const AttnProblem p = random_problem(8, 1, 4, 0.6);
  const Matrix d_o = random_like(9, p.q);
  const Gradients g = serial_backward(p, d_o);
  const double vdo = dot(p.v.row(0), d_o.row(0));
  const double qk = dot(p.q.row(0), p.k.row(0));
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_NEAR(g.dq(0, j), vdo * p.k(0, j), 1e-15);
    EXPECT_NEAR(g.dk(0, j), vdo * p.q(0, j), 1e-15);
    EXPECT_NEAR(g.dv(0, j), qk * d_o(0, j), 1e-15);
  }
}

TEST(SerialBackward, ZeroUpstream) {
  const AttnProblem p = random_problem(10, 16, 4, 0.9);
  const Gradients g = serial_backward(p, Matrix(16, 4));
  EXPECT_EQ(max_abs(g.dq) + max_abs(g.dk) + max_abs(g.dv), 0.0);
  EXPECT_THROW(serial_backward(p, Matrix(16, 3)), ShapeError);
}

TEST(SerialBackward, MatchesFiniteDifferences) {
  const AttnProblem p = random_problem(11, 64, 8, 0.9);
  const Matrix d_o = random_like(12, p.q);
  const Gradients g = serial_backward(p, d_o);
  const Gradients fd = finite_difference_grads(dense_loss(p, d_o), p, 1e-5);
  EXPECT_LE(relative_error(g.dq, fd.dq), 1e-6);
  EXPECT_LE(relative_error(g.dk, fd.dk), 1e-6);
  EXPECT_LE(relative_error(g.dv, fd.dv), 1e-6);
}

TEST(SerialBackward, MatchesFiniteDifferencesAcrossDecays) {
  std::uint64_t seed = 100;
  for (double lambda : {1.0, 0.99, 0.9}) {
    for (std::size_t n : {8u, 33u}) {
      const AttnProblem p = random_problem(seed++, n, 4, lambda);
      const Matrix d_o = random_like(seed++, p.q);
      const Gradients g = serial_backward(p, d_o);
      const Gradients fd = finite_difference_grads(dense_loss(p, d_o), p, 1e-5);
      EXPECT_LE(relative_error(g.dq, fd.dq), 1e-5) << "lambda=" << lambda << " n=" << n;
      EXPECT_LE(relative_error(g.dk, fd.dk), 1e-5);
      EXPECT_LE(relative_error(g.dv, fd.dv), 1e-5);
    }
  }
}

TEST(FiniteDifference, QuadraticStencil) {
  const double eps = 1e-4;
  const double d = central_difference([](double x) { return x * x; }, 3.0, eps);
  EXPECT_NEAR(d, 6.0, eps * eps + 1e-9);
  EXPECT_THROW(central_difference([](double x) { return x; }, 0.0, 1e-3), DomainError);
  EXPECT_THROW(central_difference([](double x) { return x; }, 0.0, 1e-8), DomainError);
}

TEST(FiniteDifference, AllOnesUpstream) {
  const AttnProblem p = random_problem(13, 16, 4, 0.8);
  const Matrix d_o(16, 4, 1.0);
  const Gradients g = serial_backward(p, d_o);
  const Gradients fd = finite_difference_grads(dense_loss(p, d_o), p, 1e-6);
  EXPECT_LE(relative_error(g.dq, fd.dq), 1e-6);
  EXPECT_LE(relative_error(g.dk, fd.dk), 1e-6);
  EXPECT_LE(relative_error(g.dv, fd.dv), 1e-6);
}

TEST(FiniteDifference, StepSizeRobustness) {
  const AttnProblem p = random_problem(14, 16, 4, 0.95);
  const Matrix d_o = random_like(15, p.q);
  const Gradients a = finite_difference_grads(dense_loss(p, d_o), p, 1e-5);
  const Gradients b = finite_difference_grads(dense_loss(p, d_o), p, 1e-6);
  EXPECT_LE(relative_error(b.dq, a.dq), 1e-4);
  EXPECT_LE(relative_error(b.dk, a.dk), 1e-4);
  EXPECT_LE(relative_error(b.dv, a.dv), 1e-4);
}

}  // namespace
}  // namespace lasp
