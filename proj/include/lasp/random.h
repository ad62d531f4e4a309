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

#ifndef LASP_RANDOM_H_
#define LASP_RANDOM_H_

#include <cstdint>

#include "lasp/matrix.h"

namespace lasp {

// SplitMix64. Each call advances the state by 0x9e3779b97f4a7c15 and mixes
// it with the (30, 27, 31) xor-shift-multiply finalizer. Uniform doubles use
// the top 53 bits: u = (x >> 11) * 2^-53 in [0, 1).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  double uniform01();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

 private:
  std::uint64_t state_;
};

// Fills a rows x cols matrix in row-major order with draws from [lo, hi).
Matrix random_matrix(SplitMix64 &rng, std::size_t rows, std::size_t cols, double lo = -1.0,
                     double hi = 1.0);

}  // namespace lasp

#endif  // LASP_RANDOM_H_
