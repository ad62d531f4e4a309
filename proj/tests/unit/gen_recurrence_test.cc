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

#include <sstream>

#include "json.hpp"
#include "lasp/errors.h"
#include "lasp/gen_recurrence.h"
#include "test_util.h"

namespace lasp {
namespace {

using testing::divisors;
using testing::random_problem;

ModelInputs attention_inputs(const AttnProblem &p) {
  ModelInputs in;
  in.q = p.q;
  in.k = p.k;
  in.v = p.v;
  in.lambda = p.lambda;
  return in;
}

ModelInputs hgrn_inputs(std::uint64_t seed, std::size_t n) {
  SplitMix64 rng(seed);
  ModelInputs in;
  for (std::size_t t = 0; t < n; ++t) {
    in.x.push_back(rng.uniform(-1, 1));
    in.forget.push_back(rng.uniform(0.05, 0.95));
    in.gate.push_back(rng.uniform(-1, 1));
  }
  return in;
}

TEST(GeneralStepTest, Kinds) {
  const std::vector<double> e = {1, 2}, i = {3, 4, 5};
  const Matrix outer = Matrix::FromRows({{3, 4, 5}, {6, 8, 10}});
  EXPECT_EQ(general_step(Matrix(2, 3), Oscillation(1.0), e, i), outer);
  EXPECT_EQ(general_step(Matrix(2, 3), Oscillation(Matrix(2, 3, 1.0)), e, i), outer);

  const Matrix prev = Matrix::FromRows({{1, 1, 1}, {2, 2, 2}});
  EXPECT_EQ(general_step(prev, Oscillation(0.5), e, i),
            Matrix::FromRows({{3.5, 4.5, 5.5}, {7, 9, 11}}));
  EXPECT_EQ(general_step(prev, Oscillation(std::vector<double>{0, 2}), e, i),
            Matrix::FromRows({{3, 4, 5}, {10, 12, 14}}));
  EXPECT_EQ(general_step(prev, Oscillation(Matrix::FromRows({{0, 1, 0}, {1, 0, 1}})), e, i),
            Matrix::FromRows({{3, 5, 5}, {8, 8, 12}}));

  EXPECT_THROW(general_step(prev, Oscillation(1.0), i, i), ShapeError);
  EXPECT_THROW(general_step(prev, Oscillation(std::vector<double>{1}), e, i), ShapeError);
  EXPECT_THROW(general_step(prev, Oscillation(Matrix(3, 2)), e, i), ShapeError);
}

TEST(GeneralStepTest, ScalarDecayIsTheKvStep) {
  const AttnProblem p = random_problem(1, 1, 4, 0.7);
  const Matrix prev = testing::random_like(2, Matrix(4, 4));
  const Matrix got = general_step(prev, Oscillation(0.7), p.k.row(0), p.v.row(0));
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t b = 0; b < 4; ++b) EXPECT_EQ(got(a, b), 0.7 * prev(a, b) + p.k(0, a) * p.v(0, b));
  }
}

TEST(RunModelTest, AttentionInstancesMatchSerialOracle) {
  const AttnProblem la = random_problem(3, 64, 8, 1.0);
  const ModelInstance lin = make_instance("linear_attention", attention_inputs(la));
  EXPECT_LE(relative_error(run_model(lin), serial_forward(la).output), 1e-12);

  const AttnProblem rt = random_problem(4, 64, 8, 0.9);
  const ModelInstance ret = make_instance("tnl_retnet", attention_inputs(rt));
  EXPECT_LE(relative_error(run_model(ret), serial_forward(rt).output), 1e-12);
}

TEST(RunModelTest, OneStepHandAlgebra) {
  const AttnProblem p = random_problem(5, 1, 3, 0.5);
  const Matrix y = run_model(make_instance("tnl_retnet", attention_inputs(p)));
  double es = 0;
  for (std::size_t a = 0; a < 3; ++a) es += p.k(0, a) * p.q(0, a);
  for (std::size_t b = 0; b < 3; ++b) EXPECT_NEAR(y(0, b), es * p.v(0, b), 1e-15);
}

TEST(RunModelTest, HgrnMatchesHandRecurrence) {
  const ModelInputs in = hgrn_inputs(6, 200);
  const Matrix y = run_model(make_instance("hgrn", in));
  double h = 0;
  for (std::size_t t = 0; t < 200; ++t) {
    h = in.forget[t] * h + (1.0 - in.forget[t]) * in.x[t];
    EXPECT_NEAR(y(t, 0), h * in.gate[t], 1e-14);
  }
}

TEST(RunModelTest, UnknownAndCatalogueOnly) {
  const ModelInputs in = attention_inputs(random_problem(7, 4, 2, 0.9));
  EXPECT_THROW(make_instance("transformer", in), DomainError);
  EXPECT_THROW(make_instance("mamba", in), DomainError);
  ModelInputs bad = hgrn_inputs(8, 4);
  bad.gate.pop_back();
  EXPECT_THROW(make_instance("hgrn", bad), ShapeError);
}

TEST(ChunkedEquivalenceTest, ScalarInstances) {
  const ModelInstance ret = make_instance("tnl_retnet", attention_inputs(random_problem(9, 64, 4, 0.9)));
  EXPECT_EQ(chunked_scalar_equivalence(ret, 8).status, EquivalenceReport::Status::kPass);
  const ModelInstance lin =
      make_instance("linear_attention", attention_inputs(random_problem(10, 64, 4, 1.0)));
  EXPECT_EQ(chunked_scalar_equivalence(lin, 16).status, EquivalenceReport::Status::kPass);
  for (std::size_t c : divisors(64)) {
    const auto r = chunked_scalar_equivalence(ret, c);
    EXPECT_EQ(r.status, EquivalenceReport::Status::kPass) << c << ": " << r.message;
    EXPECT_LE(r.max_error, 1e-10);
  }
  EXPECT_EQ(chunked_scalar_equivalence(ret, 7).status, EquivalenceReport::Status::kFail);
}

TEST(ChunkedEquivalenceTest, DataDependentDecayIsRefused) {
  const auto r = chunked_scalar_equivalence(make_instance("hgrn", hgrn_inputs(11, 16)), 4);
  EXPECT_EQ(r.status, EquivalenceReport::Status::kNotChunkable);
  EXPECT_NE(r.message.find("not chunkable by this artifact"), std::string::npos);
}

TEST(RegistryTest, JsonListing) {
  std::ostringstream out;
  write_registry_json(out);
  const auto j = nlohmann::json::parse(out.str());
  ASSERT_EQ(j.size(), model_registry().size());
  int executable = 0;
  for (const auto &row : j) {
    EXPECT_TRUE(row.contains("memory"));
    EXPECT_TRUE(row.contains("oscillation_kind"));
    if (row["executable"].get<bool>()) ++executable;
  }
  EXPECT_EQ(executable, 3);
}

TEST(RegistryTest, MemoryShapeIsStable) {
  const ModelInstance ret = make_instance("tnl_retnet", attention_inputs(random_problem(12, 8, 3, 0.9)));
  Matrix m(ret.spec.k, ret.spec.d);
  for (std::size_t t = 0; t < ret.spec.steps; ++t) {
    m = general_step(m, ret.spec.oscillation(t), ret.spec.expand(t), ret.spec.input(t));
    EXPECT_EQ(m.rows(), 3u);
    EXPECT_EQ(m.cols(), 3u);
  }
}

}  // namespace
}  // namespace lasp
