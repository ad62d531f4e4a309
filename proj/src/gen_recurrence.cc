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

#include "lasp/gen_recurrence.h"

#include <ostream>

#include "json.hpp"
#include "lasp/chunk_kernels.h"
#include "lasp/errors.h"

namespace lasp {

namespace {

std::vector<double> row_of(const Matrix &m, std::size_t r) {
  auto row = m.row(r);
  return {row.begin(), row.end()};
}

ModelInstance attention_instance(std::string name, const ModelInputs &in, double lambda) {
  AttnProblem p{in.q, in.k, in.v, lambda};
  if (!in.q.same_shape(in.k) || in.q.rows() != in.v.rows()) {
    throw ShapeError(name + ": Q " + in.q.shape_string() + ", K " + in.k.shape_string() +
                     ", V " + in.v.shape_string() + " are inconsistent");
  }
  validate_decay(lambda);

  ModelInstance inst;
  inst.name = std::move(name);
  RecurrenceSpec &s = inst.spec;
  s.k = in.k.cols();
  s.d = in.v.cols();
  s.steps = in.q.rows();
  s.kind = OscillationKind::kScalar;
  s.constant_oscillation = true;
  // Inputs are copied into the providers so the instance owns its data.
  s.input = [v = in.v](std::size_t t) { return row_of(v, t); };
  s.expand = [k = in.k](std::size_t t) { return row_of(k, t); };
  s.shrink = [q = in.q](std::size_t t) { return row_of(q, t); };
  s.oscillation = [lambda](std::size_t) { return Oscillation(lambda); };
  if (in.q.same_shape(in.v)) inst.attention_view = std::move(p);
  return inst;
}

ModelInstance hgrn_instance(const ModelInputs &in) {
  const std::size_t n = in.x.size();
  if (in.forget.size() != n || in.gate.size() != n) {
    throw ShapeError("hgrn: x, forget and gate must have equal length");
  }
  ModelInstance inst;
  inst.name = "hgrn";
  RecurrenceSpec &s = inst.spec;
  s.k = 1;
  s.d = 1;
  s.steps = n;
  s.kind = OscillationKind::kScalar;
  s.constant_oscillation = false;
  s.input = [x = in.x](std::size_t t) { return std::vector<double>{x[t]}; };
  s.expand = [f = in.forget](std::size_t t) { return std::vector<double>{1.0 - f[t]}; };
  s.oscillation = [f = in.forget](std::size_t t) { return Oscillation(f[t]); };
  s.shrink = [g = in.gate](std::size_t t) { return std::vector<double>{g[t]}; };
  return inst;
}

}  // namespace

std::string_view oscillation_kind_name(OscillationKind kind) {
  switch (kind) {
    case OscillationKind::kScalar: return "scalar";
    case OscillationKind::kRowVector: return "row-vector";
    case OscillationKind::kElementwise: return "elementwise";
  }
  return "?";
}

OscillationKind kind_of(const Oscillation &o) {
  return static_cast<OscillationKind>(o.index());
}

Matrix general_step(const Matrix &m_prev, const Oscillation &o, std::span<const double> e,
                    std::span<const double> i) {
  const std::size_t k = m_prev.rows(), d = m_prev.cols();
  if (e.size() != k || i.size() != d) {
    throw ShapeError("general_step: memory " + m_prev.shape_string() + " with expand of length " +
                     std::to_string(e.size()) + " and input of length " +
                     std::to_string(i.size()));
  }
  Matrix m(k, d);
  if (const double *scalar = std::get_if<double>(&o)) {
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t c = 0; c < d; ++c) m(r, c) = *scalar * m_prev(r, c) + e[r] * i[c];
    }
  } else if (const auto *rows = std::get_if<std::vector<double>>(&o)) {
    if (rows->size() != k) {
      throw ShapeError("general_step: row oscillation of length " +
                       std::to_string(rows->size()) + " for memory " + m_prev.shape_string());
    }
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t c = 0; c < d; ++c) m(r, c) = (*rows)[r] * m_prev(r, c) + e[r] * i[c];
    }
  } else {
    const Matrix &full = std::get<Matrix>(o);
    if (!full.same_shape(m_prev)) {
      throw ShapeError("general_step: oscillation " + full.shape_string() + " for memory " +
                       m_prev.shape_string());
    }
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t c = 0; c < d; ++c) m(r, c) = full(r, c) * m_prev(r, c) + e[r] * i[c];
    }
  }
  return m;
}

ModelInstance make_instance(std::string_view name, const ModelInputs &inputs) {
  if (name == "linear_attention") return attention_instance("linear_attention", inputs, 1.0);
  if (name == "tnl_retnet") return attention_instance("tnl_retnet", inputs, inputs.lambda);
  if (name == "hgrn") return hgrn_instance(inputs);
  for (const auto &entry : model_registry()) {
    if (entry.name == name) {
      throw DomainError("model '" + std::string(name) + "' is catalogued but not executable");
    }
  }
  throw DomainError("unknown model '" + std::string(name) + "'");
}

Matrix run_model(const ModelInstance &inst) {
  const RecurrenceSpec &s = inst.spec;
  Matrix y(s.steps, s.d);
  Matrix m(s.k, s.d);
  for (std::size_t t = 0; t < s.steps; ++t) {
    const Oscillation o = s.oscillation(t);
    if (kind_of(o) != s.kind) {
      throw ShapeError(inst.name + ": step " + std::to_string(t) + " produced a " +
                       std::string(oscillation_kind_name(kind_of(o))) + " oscillation");
    }
    m = general_step(m, o, s.expand(t), s.input(t));
    const auto shrink = s.shrink(t);
    if (shrink.size() != s.k) {
      throw ShapeError(inst.name + ": shrink state of length " + std::to_string(shrink.size()) +
                       " for k=" + std::to_string(s.k));
    }
    auto yt = y.row(t);
    for (std::size_t r = 0; r < s.k; ++r) {
      for (std::size_t c = 0; c < s.d; ++c) yt[c] += shrink[r] * m(r, c);
    }
  }
  return y;
}

const std::vector<RegistryEntry> &model_registry() {
  static const std::vector<RegistryEntry> registry = {
      {"s4", "x_t", "B", "A", "C", "k x 1", "matrix", false,
       "channel-wise SSM; A is a k x k state matrix"},
      {"s5", "x_t", "B", "A", "C", "k x d", "matrix", false, ""},
      {"dss", "x_t", "B", "a 1_k^T", "C", "k x d", "row-vector", false, "A = Diag(a)"},
      {"tnn", "x_t", "B", "A", "C", "k x d", "row-vector", false, "A = Diag(lambda_1..lambda_k)"},
      {"linear_attention", "x_t", "B_t", "J^(kd)", "C_t", "k x d", "scalar", true,
       "all-ones oscillation, i.e. scalar 1"},
      {"tnl_retnet", "x_t", "B_t", "lambda J^(k)", "C_t", "k x d", "scalar", true,
       "fixed scalar decay"},
      {"mamba", "x_t", "B_t", "A_t", "C_t", "k x d", "elementwise", false, "data dependent"},
      {"rwkv4", "x_t", "exp(k_t)", "exp(-w)", "C_t", "1 x 1", "scalar", false,
       "channel-wise; denominator ignored"},
      {"cosformer", "x_t", "B_t", "exp(i theta) J^(kd)", "C_t", "k x d", "complex scalar", false,
       "complex valued"},
      {"lrpe", "x_t", "B_t", "exp(i Theta) 1^(d)T", "C_t", "k x d", "complex row-vector", false,
       "complex valued"},
      {"gla_gateloop", "x_t", "B_t", "g_t 1_d^T", "C_t", "k x d", "row-vector", false,
       "data dependent"},
      {"dur_gfw", "x_t", "B_t", "g_t gbar_t^T", "C_t", "k x d", "elementwise", false,
       "data dependent"},
      {"hgrn", "x_t", "1 - A_t", "A_t", "C_t", "1 x 1", "scalar", true,
       "data dependent forget gate; channel-wise"},
  };
  return registry;
}

void write_registry_json(std::ostream &out) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto &e : model_registry()) {
    nlohmann::ordered_json j;
    j["name"] = e.name;
    j["memory"] = e.memory;
    j["input"] = e.input;
    j["expand"] = e.expand;
    j["oscillation"] = e.oscillation;
    j["shrink"] = e.shrink;
    j["oscillation_kind"] = e.oscillation_kind;
    j["executable"] = e.executable;
    if (!e.note.empty()) j["note"] = e.note;
    arr.push_back(j);
  }
  out << arr.dump(2) << "\n";
}

EquivalenceReport chunked_scalar_equivalence(const ModelInstance &inst, std::size_t chunk_size,
                                             double tolerance) {
  EquivalenceReport report;
  if (!inst.attention_view || !inst.spec.constant_oscillation ||
      inst.spec.kind != OscillationKind::kScalar) {
    report.status = EquivalenceReport::Status::kNotChunkable;
    report.message = "not chunkable by this artifact: " + inst.name +
                     " has no constant scalar decay";
    return report;
  }
  try {
    const Matrix chunked = chunked_forward_serial(*inst.attention_view, chunk_size).output;
    report.max_error = relative_error(chunked, run_model(inst));
  } catch (const Error &e) {
    report.status = EquivalenceReport::Status::kFail;
    report.message = e.what();
    return report;
  }
  const bool ok = report.max_error <= tolerance;
  report.status = ok ? EquivalenceReport::Status::kPass : EquivalenceReport::Status::kFail;
  report.message = inst.name + " chunked vs stepwise relative error " +
                   std::to_string(report.max_error);
  return report;
}

}  // namespace lasp
