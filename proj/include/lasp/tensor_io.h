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

#ifndef LASP_TENSOR_IO_H_
#define LASP_TENSOR_IO_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "lasp/matrix.h"

namespace lasp {

// N-dimensional tensor as stored in LASPT1 fixture files.
//
// Layout (all integers and floats little-endian):
//   6 bytes   magic "LASPT1"
//   u32       number of dimensions r
//   r x u64   dimension sizes
//   f64 ...   row-major payload, product(dims) values
struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<double> data;

  std::uint64_t element_count() const;

  static Tensor FromMatrix(const Matrix &m);
  // Requires a rank-2 tensor.
  Matrix to_matrix() const;
  // Slice along the leading axis of a rank-3 tensor.
  Matrix slice(std::size_t index) const;
  static Tensor Stack(std::span<const Matrix> slices);
};

void write_tensor(std::ostream &out, const Tensor &t);
Tensor read_tensor(std::istream &in);

void write_tensor_file(const std::filesystem::path &path, const Tensor &t);
Tensor read_tensor_file(const std::filesystem::path &path);

}  // namespace lasp

#endif  // LASP_TENSOR_IO_H_
