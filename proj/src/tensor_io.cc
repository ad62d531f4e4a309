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

#include "lasp/tensor_io.h"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "lasp/errors.h"

namespace lasp {

namespace {

constexpr std::array<char, 6> kMagic = {'L', 'A', 'S', 'P', 'T', '1'};

template <typename U>
void put_le(std::ostream &out, U value) {
  std::array<char, sizeof(U)> bytes;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream &in) {
  std::array<unsigned char, sizeof(U)> bytes;
  in.read(reinterpret_cast<char *>(bytes.data()), bytes.size());
  if (!in) throw FormatError("LASPT1: unexpected end of stream");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

std::uint64_t Tensor::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

Tensor Tensor::FromMatrix(const Matrix &m) {
  return Tensor{{m.rows(), m.cols()}, m.storage()};
}

Matrix Tensor::to_matrix() const {
  if (dims.size() != 2) {
    throw ShapeError("LASPT1: expected a rank-2 tensor, got rank " +
                     std::to_string(dims.size()));
  }
  return Matrix(dims[0], dims[1], data);
}

Matrix Tensor::slice(std::size_t index) const {
  if (dims.size() != 3 || index >= dims[0]) {
    throw ShapeError("LASPT1: slice " + std::to_string(index) +
                     " requires a rank-3 tensor with enough leading entries");
  }
  const std::size_t stride = dims[1] * dims[2];
  const auto begin = data.begin() + static_cast<std::ptrdiff_t>(index * stride);
  return Matrix(dims[1], dims[2],
                std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(stride)));
}

Tensor Tensor::Stack(std::span<const Matrix> slices) {
  Tensor t;
  if (slices.empty()) {
    t.dims = {0, 0, 0};
    return t;
  }
  t.dims = {slices.size(), slices.front().rows(), slices.front().cols()};
  for (const auto &m : slices) {
    if (!m.same_shape(slices.front())) throw ShapeError("Tensor::Stack: ragged slices");
    t.data.insert(t.data.end(), m.data().begin(), m.data().end());
  }
  return t;
}

void write_tensor(std::ostream &out, const Tensor &t) {
  if (t.data.size() != t.element_count()) {
    throw ShapeError("LASPT1: payload length does not match dimensions");
  }
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) put_le<std::uint64_t>(out, d);
  for (double v : t.data) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw FormatError("LASPT1: write failed");
}

Tensor read_tensor(std::istream &in) {
  std::array<char, 6> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw FormatError("LASPT1: bad magic");
  Tensor t;
  const auto rank = get_le<std::uint32_t>(in);
  t.dims.reserve(rank);
  for (std::uint32_t i = 0; i < rank; ++i) t.dims.push_back(get_le<std::uint64_t>(in));
  const std::uint64_t n = t.element_count();
  t.data.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    t.data.push_back(std::bit_cast<double>(get_le<std::uint64_t>(in)));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("LASPT1: trailing bytes after payload");
  }
  return t;
}

void write_tensor_file(const std::filesystem::path &path, const Tensor &t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensor(out, t);
}

Tensor read_tensor_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_tensor(in);
}

}  // namespace lasp
