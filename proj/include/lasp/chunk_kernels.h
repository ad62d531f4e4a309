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

#ifndef LASP_CHUNK_KERNELS_H_
#define LASP_CHUNK_KERNELS_H_

#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "lasp/matrix.h"
#include "lasp/reference.h"

namespace lasp {

// Decay tables shared by every kernel operating on chunks of size C.
//   mask(i, j)     = lambda^(i - j) for i >= j, else 0
//   lambda_fwd[i]  = lambda^(i + 1)          (diagonal of Lambda)
//   lambda_rev[i]  = lambda^(C - 1 - i)      (diagonal of lambda^C Lambda^-1)
//   lambda_c       = lambda^C
// All powers come from one table built by repeated multiplication, so
// lambda_rev is never formed by division.
struct DecayStructures {
  std::size_t chunk_size = 0;
  double lambda = 1.0;
  Matrix mask;
  std::vector<double> lambda_fwd;
  std::vector<double> lambda_rev;
  double lambda_c = 1.0;
  // lambda^C < 1e-300: carried history is (numerically) fully decayed.
  bool underflow = false;
};

DecayStructures build_decay(std::size_t chunk_size, double lambda);

// Receives diagnostics such as the lambda^C underflow warning. Returns the
// previous handler. The default handler writes to stderr.
using WarningHandler = std::function<void(std::string_view)>;
WarningHandler set_warning_handler(WarningHandler handler);

// Q_t, K_t, V_t of one chunk (C x d_h). index is the 1-based chunk number.
struct ChunkInputs {
  Matrix q;
  Matrix k;
  Matrix v;
  std::size_t index = 1;

  void validate(const DecayStructures &d) const;
};

// d_h x d_h carried states. Their size never depends on N or C.
struct KvState {
  Matrix state;
  static KvState Zero(std::size_t head_dim) { return {Matrix(head_dim, head_dim)}; }
};

struct DkvState {
  Matrix state;
  static DkvState Zero(std::size_t head_dim) { return {Matrix(head_dim, head_dim)}; }
};

// [(Q_t K_t^T) .* M] V_t
Matrix intra_forward(const ChunkInputs &ci, const DecayStructures &d);

// Lambda Q_t KV_{t-1}
Matrix inter_forward(const Matrix &q, const KvState &kv_prev, const DecayStructures &d);

// KV_t = lambda^C KV_{t-1} + (lambda^C Lambda^-1 K_t)^T V_t
KvState kv_update(const KvState &kv_prev, const Matrix &k, const Matrix &v,
                  const DecayStructures &d);

// dQ = [(dO V^T) .* M] K,  dK = [(dO V^T) .* M]^T Q,  dV = [(Q K^T) .* M]^T dO
Gradients intra_backward(const ChunkInputs &ci, const Matrix &d_o, const DecayStructures &d);

// Lambda dO_t KV_{t-1}^T. kv_prev is the state cached by the forward pass;
// an empty optional raises StateError.
Matrix inter_backward_q(const Matrix &d_o, const std::optional<KvState> &kv_prev,
                        const DecayStructures &d);

// lambda^C Lambda^-1 V_t dKV_{t+1}^T
Matrix inter_backward_k(const Matrix &v, const DkvState &dkv_next, const DecayStructures &d);

// lambda^C Lambda^-1 K_t dKV_{t+1}
Matrix inter_backward_v(const Matrix &k, const DkvState &dkv_next, const DecayStructures &d);

// dKV_t = lambda^C dKV_{t+1} + (Lambda Q_t)^T dO_t; this is what chunk t
// hands to chunk t - 1.
DkvState dkv_update(const DkvState &dkv_next, const Matrix &q, const Matrix &d_o,
                    const DecayStructures &d);

struct ChunkedForwardResult {
  Matrix output;
  // kv_cache[c] is the state entering 0-based chunk c, i.e. serial kv at
  // position c * C; kv_cache[0] is zero.
  std::vector<KvState> kv_cache;
};

// Whole-sequence forward, one chunk after another. Requires C | N.
ChunkedForwardResult chunked_forward_serial(const AttnProblem &p, std::size_t chunk_size);

// Whole-sequence backward reusing the forward's kv_cache.
Gradients chunked_backward_serial(const AttnProblem &p, const Matrix &d_o,
                                  std::size_t chunk_size, std::span<const KvState> kv_cache);

// Number of chunks, or PartitionError when chunk_size does not divide seq_len.
std::size_t chunk_count(std::size_t seq_len, std::size_t chunk_size);

namespace test_hooks {
// Negates every inter_forward result while set. Lets harness self-tests
// confirm that a broken kernel is reported.
void set_flip_inter_forward_sign(bool on);
bool flip_inter_forward_sign();
}  // namespace test_hooks

}  // namespace lasp

#endif  // LASP_CHUNK_KERNELS_H_
