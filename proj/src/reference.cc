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

#include "lasp/reference.h"

#include <cmath>

#include "lasp/errors.h"

namespace lasp {

namespace {

void check_epsilon(double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-4)) {
    throw DomainError("finite difference step " + std::to_string(epsilon) +
                      " outside [1e-7, 1e-4]");
  }
}

}  // namespace

void validate_decay(double lambda) {
  if (!(lambda > 0.0 && lambda <= 1.0)) {
    throw DomainError("decay rate " + std::to_string(lambda) + " outside (0, 1]");
  }
}

void AttnProblem::validate() const {
  if (!q.same_shape(k) || !q.same_shape(v)) {
    throw ShapeError("attention problem: Q " + q.shape_string() + ", K " + k.shape_string() +
                     ", V " + v.shape_string() + " must share a shape");
  }
  validate_decay(lambda);
  if (!all_finite(q) || !all_finite(k) || !all_finite(v)) {
    throw NumericError("attention problem contains non-finite values");
  }
}

double attention_loss(const Matrix &o, const Matrix &d_o) {
  if (!o.same_shape(d_o)) {
    throw ShapeError("attention_loss: O " + o.shape_string() + " vs dO " + d_o.shape_string());
  }
  double sum = 0.0;
  auto a = o.data();
  auto b = d_o.data();
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

Matrix dense_masked_forward(const AttnProblem &p) {
  p.validate();
  const std::size_t n = p.seq_len();
  Matrix mask(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double w = 1.0;
    for (std::size_t j = i + 1; j-- > 0;) {
      mask(i, j) = w;
      w *= p.lambda;
    }
  }
  Matrix scores = hadamard(matmul(p.q, transpose(p.k)), mask);
  return matmul(scores, p.v);
}

SerialForwardResult serial_forward(const AttnProblem &p, std::size_t trace_every) {
  p.validate();
  const std::size_t n = p.seq_len(), d = p.head_dim();
  SerialForwardResult result{Matrix(n, d), {}};
  Matrix kv(d, d);
  for (std::size_t s = 0; s < n; ++s) {
    auto ks = p.k.row(s);
    auto vs = p.v.row(s);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) kv(i, j) = p.lambda * kv(i, j) + ks[i] * vs[j];
    }
    auto qs = p.q.row(s);
    auto os = result.output.row(s);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) os[j] += qs[i] * kv(i, j);
    }
    if (trace_every != 0 && (s + 1) % trace_every == 0) result.kv_trace.push_back(kv);
  }
  return result;
}

Gradients serial_backward(const AttnProblem &p, const Matrix &d_o) {
  p.validate();
  if (!d_o.same_shape(p.q)) {
    throw ShapeError("serial_backward: dO " + d_o.shape_string() + " does not match Q " +
                     p.q.shape_string());
  }
  const std::size_t n = p.seq_len(), d = p.head_dim();
  Gradients g{Matrix(n, d), Matrix(n, d), Matrix(n, d)};

  Matrix kv(d, d);
  for (std::size_t s = 0; s < n; ++s) {
    auto ks = p.k.row(s);
    auto vs = p.v.row(s);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) kv(i, j) = p.lambda * kv(i, j) + ks[i] * vs[j];
    }
    auto dos = d_o.row(s);
    auto dqs = g.dq.row(s);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) dqs[i] += kv(i, j) * dos[j];
    }
  }

  Matrix dkv(d, d);
  for (std::size_t s = n; s-- > 0;) {
    auto qs = p.q.row(s);
    auto dos = d_o.row(s);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) dkv(i, j) = p.lambda * dkv(i, j) + qs[i] * dos[j];
    }
    auto ks = p.k.row(s);
    auto vs = p.v.row(s);
    auto dks = g.dk.row(s);
    auto dvs = g.dv.row(s);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        dks[i] += dkv(i, j) * vs[j];
        dvs[j] += dkv(i, j) * ks[i];
      }
    }
  }
  return g;
}

Gradients finite_difference_grads(const QkvLoss &loss, const AttnProblem &p, double epsilon) {
  check_epsilon(epsilon);
  p.validate();
  Matrix q = p.q, k = p.k, v = p.v;
  Gradients g{Matrix(q.rows(), q.cols()), Matrix(k.rows(), k.cols()),
              Matrix(v.rows(), v.cols())};
  auto sweep = [&](Matrix &x, Matrix &grad) {
    auto xs = x.data();
    auto gs = grad.data();
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double orig = xs[i];
      xs[i] = orig + epsilon;
      const double up = loss(q, k, v);
      xs[i] = orig - epsilon;
      const double down = loss(q, k, v);
      xs[i] = orig;
      gs[i] = (up - down) / (2.0 * epsilon);
    }
  };
  sweep(q, g.dq);
  sweep(k, g.dk);
  sweep(v, g.dv);
  return g;
}

double central_difference(const std::function<double(double)> &f, double x, double epsilon) {
  check_epsilon(epsilon);
  return (f(x + epsilon) - f(x - epsilon)) / (2.0 * epsilon);
}

}  // namespace lasp
