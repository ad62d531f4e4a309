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

#ifndef LASP_GEN_RECURRENCE_H_
#define LASP_GEN_RECURRENCE_H_

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lasp/matrix.h"
#include "lasp/reference.h"

namespace lasp {

// Generalized linear recurrence over a k x d memory:
//   m_t = o_t (*) m_{t-1} + e_t i_t^T,   y_t = m_t^T s_t
// where (*) depends on the oscillation kind: a scalar multiply, a per-row
// scale (o_t in R^k), or an elementwise product (o_t in R^{k x d}).
enum class OscillationKind { kScalar, kRowVector, kElementwise };

std::string_view oscillation_kind_name(OscillationKind kind);

using Oscillation = std::variant<double, std::vector<double>, Matrix>;

OscillationKind kind_of(const Oscillation &o);

// One step. Throws ShapeError if o, e or i disagree with m_prev's k x d.
Matrix general_step(const Matrix &m_prev, const Oscillation &o, std::span<const double> e,
                    std::span<const double> i);

struct RecurrenceSpec {
  std::size_t k = 0;
  std::size_t d = 0;
  std::size_t steps = 0;
  OscillationKind kind = OscillationKind::kScalar;
  // True when o_t is the same for every t (the decay is not data dependent).
  bool constant_oscillation = false;
  std::function<std::vector<double>(std::size_t)> input;    // i_t, length d
  std::function<std::vector<double>(std::size_t)> expand;   // e_t, length k
  std::function<Oscillation(std::size_t)> oscillation;      // o_t
  std::function<std::vector<double>(std::size_t)> shrink;   // s_t, length k
};

struct ModelInstance {
  std::string name;
  RecurrenceSpec spec;
  // Set for constant scalar decay models, which map onto a single attention
  // head (e_t = k_t, i_t = v_t, s_t = q_t, o_t = lambda).
  std::optional<AttnProblem> attention_view;
};

// Sequences consumed by the executable instances. Attention-style models read
// q, k, v (N x d_h) and lambda; HGRN reads x, forget and gate (length N).
struct ModelInputs {
  Matrix q;
  Matrix k;
  Matrix v;
  double lambda = 1.0;
  std::vector<double> x;
  std::vector<double> forget;
  std::vector<double> gate;
};

// Builds an executable instance by registry name ("linear_attention",
// "tnl_retnet", "hgrn"). Unknown names and metadata-only rows raise
// DomainError.
ModelInstance make_instance(std::string_view name, const ModelInputs &inputs);

// Iterates general_step and returns y_1..y_N as an N x d matrix.
Matrix run_model(const ModelInstance &inst);

// Catalogue of linear-complexity models expressible in the general form.
// Only three rows are executable; the rest document their state roles.
struct RegistryEntry {
  std::string name;
  std::string input;
  std::string expand;
  std::string oscillation;
  std::string shrink;
  std::string memory;  // "k x d", "k x 1" or "1 x 1"
  std::string oscillation_kind;
  bool executable = false;
  std::string note;
};

const std::vector<RegistryEntry> &model_registry();
void write_registry_json(std::ostream &out);

struct EquivalenceReport {
  enum class Status { kPass, kFail, kNotChunkable };
  Status status = Status::kNotChunkable;
  double max_error = 0.0;
  std::string message;
};

// Runs the LASP chunked forward on the instance's attention view and
// compares it with run_model. Instances without a constant scalar decay are
// reported as not chunkable.
EquivalenceReport chunked_scalar_equivalence(const ModelInstance &inst, std::size_t chunk_size,
                                             double tolerance = 1e-10);

}  // namespace lasp

#endif  // LASP_GEN_RECURRENCE_H_
