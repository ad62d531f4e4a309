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

#ifndef LASP_TOOLS_COMMANDS_H_
#define LASP_TOOLS_COMMANDS_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lasp/runtime.h"

namespace lasp::cli {

inline constexpr int kExitPass = 0;
inline constexpr int kExitPropertyFailure = 1;
inline constexpr int kExitUsage = 2;

// Parameters shared by every subcommand. Defaults are overridden by a JSON
// config file, which is in turn overridden by explicit flags.
struct RunConfig {
  std::size_t n = 256;
  std::size_t d = 64;
  int heads = 4;
  int batch = 1;
  int world = 4;
  int sp_size = 4;
  double lambda = 0.99;
  std::uint64_t seed = 2024;
  Schedule mode = Schedule::kLockstep;
  std::string out;
  // Directory with q.laspt, k.laspt, v.laspt and do.laspt (N x d each);
  // replaces the generated fixtures when set.
  std::string fixtures;
};

// Fixture tensors for one problem. Generated from SplitMix64(seed) in the
// order Q, K, V, dO, each N x d, row-major, uniform in [-1, 1).
struct Fixture {
  Matrix q;
  Matrix k;
  Matrix v;
  Matrix d_o;
};

Fixture make_fixture(const RunConfig &config);

// Entry point shared by the binary and the tests. `args` excludes the
// program name. Returns the process exit code.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

}  // namespace lasp::cli

#endif  // LASP_TOOLS_COMMANDS_H_
