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

#ifndef LASP_REFERENCE_H_
#define LASP_REFERENCE_H_

#include <functional>
#include <vector>

#include "lasp/matrix.h"

namespace lasp {

// One head of causal linear attention with scalar decay:
//   o_s = sum_{i <= s} lambda^(s - i) (q_s . k_i) v_i
// Q, K and V are N x d_h; 0 < lambda <= 1.
struct AttnProblem {
  Matrix q;
  Matrix k;
  Matrix v;
  double lambda = 1.0;

  std::size_t seq_len() const { return q.rows(); }
  std::size_t head_dim() const { return q.cols(); }

  // Throws ShapeError / DomainError / NumericError.
  void validate() const;
};

// Throws DomainError unless 0 < lambda <= 1.
void validate_decay(double lambda);

struct Gradients {
  Matrix dq;
  Matrix dk;
  Matrix dv;
};

// L = sum_{s,j} O(s,j) * dO(s,j); with this loss dO is the exact upstream
// gradient of O.
double attention_loss(const Matrix &o, const Matrix &d_o);

// O = ((Q K^T) .* M) V with the explicit N x N mask M(i,j) = lambda^(i-j)
// for i >= j, else 0.
Matrix dense_masked_forward(const AttnProblem &p);

struct SerialForwardResult {
  Matrix output;
  // kv at positions trace_every, 2 * trace_every, ... (empty unless requested).
  std::vector<Matrix> kv_trace;
};

// Step recurrence kv_s = lambda kv_{s-1} + k_s v_s^T, o_s^T = q_s^T kv_s.
SerialForwardResult serial_forward(const AttnProblem &p, std::size_t trace_every = 0);

// Exact gradients of attention_loss via the forward kv recurrence and the
// reverse recurrence dkv_s = lambda dkv_{s+1} + q_s do_s^T:
//   dq_s = kv_s do_s,  dk_s = dkv_s v_s,  dv_s = dkv_s^T k_s.
Gradients serial_backward(const AttnProblem &p, const Matrix &d_o);

using QkvLoss = std::function<double(const Matrix &q, const Matrix &k, const Matrix &v)>;

// Central differences (f(x + eps) - f(x - eps)) / (2 eps) for every entry of
// Q, K and V. eps must lie in [1e-7, 1e-4].
Gradients finite_difference_grads(const QkvLoss &loss, const AttnProblem &p, double epsilon);

// Scalar central difference, exposed for checking the stencil itself.
double central_difference(const std::function<double(double)> &f, double x, double epsilon);

}  // namespace lasp

#endif  // LASP_REFERENCE_H_
