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

#include "lasp/chunk_kernels.h"

#include <atomic>
#include <iostream>
#include <mutex>
#include <string>

#include "lasp/errors.h"

namespace lasp {

namespace {

constexpr double kUnderflowThreshold = 1e-300;

std::atomic<bool> g_flip_inter_sign{false};

std::mutex g_warning_mu;
WarningHandler g_warning_handler;

void warn(const std::string &message) {
  std::lock_guard<std::mutex> lock(g_warning_mu);
  if (g_warning_handler) {
    g_warning_handler(message);
  } else {
    std::cerr << "warning: " << message << "\n";
  }
}

void require_state(const Matrix &state, std::size_t head_dim, const char *op) {
  if (state.rows() != head_dim || state.cols() != head_dim) {
    throw ShapeError(std::string(op) + ": state " + state.shape_string() +
                     " does not match head dimension " + std::to_string(head_dim));
  }
}

void require_chunk(const Matrix &m, const DecayStructures &d, const char *op) {
  if (m.rows() != d.chunk_size) {
    throw ShapeError(std::string(op) + ": chunk " + m.shape_string() +
                     " does not match chunk size " + std::to_string(d.chunk_size));
  }
}

}  // namespace

WarningHandler set_warning_handler(WarningHandler handler) {
  std::lock_guard<std::mutex> lock(g_warning_mu);
  std::swap(handler, g_warning_handler);
  return handler;
}

DecayStructures build_decay(std::size_t chunk_size, double lambda) {
  if (chunk_size == 0) throw DomainError("chunk size must be at least 1");
  validate_decay(lambda);

  // powers[m] = lambda^m for m = 0..C
  std::vector<double> powers(chunk_size + 1);
  powers[0] = 1.0;
  for (std::size_t m = 1; m <= chunk_size; ++m) powers[m] = powers[m - 1] * lambda;

  DecayStructures d;
  d.chunk_size = chunk_size;
  d.lambda = lambda;
  d.mask = Matrix(chunk_size, chunk_size);
  d.lambda_fwd.resize(chunk_size);
  d.lambda_rev.resize(chunk_size);
  for (std::size_t i = 0; i < chunk_size; ++i) {
    for (std::size_t j = 0; j <= i; ++j) d.mask(i, j) = powers[i - j];
    d.lambda_fwd[i] = powers[i + 1];
    d.lambda_rev[i] = powers[chunk_size - 1 - i];
  }
  d.lambda_c = powers[chunk_size];
  d.underflow = d.lambda_c < kUnderflowThreshold;
  if (d.underflow) {
    warn("lambda^C = " + std::to_string(d.lambda_c) + " for lambda=" + std::to_string(lambda) +
         ", C=" + std::to_string(chunk_size) + "; inter-chunk history is fully decayed");
  }
  return d;
}

void ChunkInputs::validate(const DecayStructures &d) const {
  if (!q.same_shape(k) || !q.same_shape(v)) {
    throw ShapeError("chunk " + std::to_string(index) + ": Q " + q.shape_string() + ", K " +
                     k.shape_string() + ", V " + v.shape_string() + " must share a shape");
  }
  if (index < 1) throw ShapeError("chunk index is 1-based");
  require_chunk(q, d, "chunk inputs");
}

Matrix intra_forward(const ChunkInputs &ci, const DecayStructures &d) {
  ci.validate(d);
  return matmul(hadamard(matmul(ci.q, transpose(ci.k)), d.mask), ci.v);
}

Matrix inter_forward(const Matrix &q, const KvState &kv_prev, const DecayStructures &d) {
  require_chunk(q, d, "inter_forward");
  require_state(kv_prev.state, q.cols(), "inter_forward");
  Matrix out = matmul(row_scale(q, d.lambda_fwd), kv_prev.state);
  if (g_flip_inter_sign.load(std::memory_order_relaxed)) out = scale(out, -1.0);
  return out;
}

KvState kv_update(const KvState &kv_prev, const Matrix &k, const Matrix &v,
                  const DecayStructures &d) {
  require_chunk(k, d, "kv_update");
  if (!k.same_shape(v)) {
    throw ShapeError("kv_update: K " + k.shape_string() + " vs V " + v.shape_string());
  }
  require_state(kv_prev.state, k.cols(), "kv_update");
  Matrix next = scale(kv_prev.state, d.lambda_c);
  return {add(next, matmul(transpose(row_scale(k, d.lambda_rev)), v))};
}

Gradients intra_backward(const ChunkInputs &ci, const Matrix &d_o, const DecayStructures &d) {
  ci.validate(d);
  if (!d_o.same_shape(ci.q)) {
    throw ShapeError("intra_backward: dO " + d_o.shape_string() + " vs Q " +
                     ci.q.shape_string());
  }
  Matrix dov = hadamard(matmul(d_o, transpose(ci.v)), d.mask);
  Matrix qk = hadamard(matmul(ci.q, transpose(ci.k)), d.mask);
  return {matmul(dov, ci.k), matmul(transpose(dov), ci.q), matmul(transpose(qk), d_o)};
}

Matrix inter_backward_q(const Matrix &d_o, const std::optional<KvState> &kv_prev,
                        const DecayStructures &d) {
  if (!kv_prev) {
    throw StateError("inter_backward_q: no cached KV state; run the forward pass first");
  }
  require_chunk(d_o, d, "inter_backward_q");
  require_state(kv_prev->state, d_o.cols(), "inter_backward_q");
  return matmul(row_scale(d_o, d.lambda_fwd), transpose(kv_prev->state));
}

Matrix inter_backward_k(const Matrix &v, const DkvState &dkv_next, const DecayStructures &d) {
  require_chunk(v, d, "inter_backward_k");
  require_state(dkv_next.state, v.cols(), "inter_backward_k");
  return matmul(row_scale(v, d.lambda_rev), transpose(dkv_next.state));
}

Matrix inter_backward_v(const Matrix &k, const DkvState &dkv_next, const DecayStructures &d) {
  require_chunk(k, d, "inter_backward_v");
  require_state(dkv_next.state, k.cols(), "inter_backward_v");
  return matmul(row_scale(k, d.lambda_rev), dkv_next.state);
}

DkvState dkv_update(const DkvState &dkv_next, const Matrix &q, const Matrix &d_o,
                    const DecayStructures &d) {
  require_chunk(q, d, "dkv_update");
  if (!q.same_shape(d_o)) {
    throw ShapeError("dkv_update: Q " + q.shape_string() + " vs dO " + d_o.shape_string());
  }
  require_state(dkv_next.state, q.cols(), "dkv_update");
  Matrix next = scale(dkv_next.state, d.lambda_c);
  return {add(next, matmul(transpose(row_scale(q, d.lambda_fwd)), d_o))};
}

std::size_t chunk_count(std::size_t seq_len, std::size_t chunk_size) {
  if (chunk_size == 0 || seq_len % chunk_size != 0) {
    throw PartitionError("chunk size " + std::to_string(chunk_size) +
                         " does not divide sequence length " + std::to_string(seq_len));
  }
  return seq_len / chunk_size;
}

ChunkedForwardResult chunked_forward_serial(const AttnProblem &p, std::size_t chunk_size) {
  p.validate();
  const std::size_t chunks = chunk_count(p.seq_len(), chunk_size);
  const DecayStructures d = build_decay(chunk_size, p.lambda);

  std::vector<ChunkInputs> inputs;
  std::vector<Matrix> intra;
  inputs.reserve(chunks);
  intra.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    inputs.push_back({p.q.row_block(c * chunk_size, chunk_size),
                      p.k.row_block(c * chunk_size, chunk_size),
                      p.v.row_block(c * chunk_size, chunk_size), c + 1});
    intra.push_back(intra_forward(inputs.back(), d));
  }

  ChunkedForwardResult result;
  std::vector<Matrix> outputs;
  outputs.reserve(chunks);
  KvState kv = KvState::Zero(p.head_dim());
  for (std::size_t c = 0; c < chunks; ++c) {
    result.kv_cache.push_back(kv);
    outputs.push_back(add(intra[c], inter_forward(inputs[c].q, kv, d)));
    kv = kv_update(kv, inputs[c].k, inputs[c].v, d);
  }
  result.output = vstack(outputs);
  return result;
}

Gradients chunked_backward_serial(const AttnProblem &p, const Matrix &d_o,
                                  std::size_t chunk_size, std::span<const KvState> kv_cache) {
  p.validate();
  if (!d_o.same_shape(p.q)) {
    throw ShapeError("chunked_backward_serial: dO " + d_o.shape_string() + " vs Q " +
                     p.q.shape_string());
  }
  const std::size_t chunks = chunk_count(p.seq_len(), chunk_size);
  if (kv_cache.size() != chunks) {
    throw StateError("chunked_backward_serial: kv_cache holds " +
                     std::to_string(kv_cache.size()) + " states for " + std::to_string(chunks) +
                     " chunks");
  }
  const DecayStructures d = build_decay(chunk_size, p.lambda);

  std::vector<ChunkInputs> inputs;
  std::vector<Matrix> d_os;
  std::vector<Gradients> partial;
  for (std::size_t c = 0; c < chunks; ++c) {
    inputs.push_back({p.q.row_block(c * chunk_size, chunk_size),
                      p.k.row_block(c * chunk_size, chunk_size),
                      p.v.row_block(c * chunk_size, chunk_size), c + 1});
    d_os.push_back(d_o.row_block(c * chunk_size, chunk_size));
    Gradients g = intra_backward(inputs[c], d_os[c], d);
    g.dq = add(g.dq, inter_backward_q(d_os[c], kv_cache[c], d));
    partial.push_back(std::move(g));
  }

  DkvState dkv = DkvState::Zero(p.head_dim());
  for (std::size_t c = chunks; c-- > 0;) {
    partial[c].dk = add(partial[c].dk, inter_backward_k(inputs[c].v, dkv, d));
    partial[c].dv = add(partial[c].dv, inter_backward_v(inputs[c].k, dkv, d));
    dkv = dkv_update(dkv, inputs[c].q, d_os[c], d);
  }

  std::vector<Matrix> dq, dk, dv;
  for (auto &g : partial) {
    dq.push_back(std::move(g.dq));
    dk.push_back(std::move(g.dk));
    dv.push_back(std::move(g.dv));
  }
  return {vstack(dq), vstack(dk), vstack(dv)};
}

namespace test_hooks {

void set_flip_inter_forward_sign(bool on) { g_flip_inter_sign.store(on); }
bool flip_inter_forward_sign() { return g_flip_inter_sign.load(); }

}  // namespace test_hooks

}  // namespace lasp
