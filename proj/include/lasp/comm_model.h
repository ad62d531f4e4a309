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

#ifndef LASP_COMM_MODEL_H_
#define LASP_COMM_MODEL_H_

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lasp/comm.h"

namespace lasp {

// Exact non-negative rational in lowest terms.
class Rational {
 public:
  Rational(std::int64_t num = 0, std::int64_t den = 1);

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  bool is_integer() const { return den_ == 1; }
  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  std::string to_string() const;

  friend Rational operator+(const Rational &a, const Rational &b);
  friend Rational operator*(const Rational &a, const Rational &b);
  friend Rational operator/(const Rational &a, const Rational &b);
  friend bool operator==(const Rational &a, const Rational &b) = default;
  friend std::strong_ordering operator<=>(const Rational &a, const Rational &b);

 private:
  std::int64_t num_;
  std::int64_t den_;
};

enum class Method { kLasp, kRingAttention, kUlysses, kMegatronSp };

inline constexpr Method kAllMethods[] = {Method::kLasp, Method::kRingAttention,
                                         Method::kUlysses, Method::kMegatronSp};

// Display name ("LASP", "Ring Attention", ...).
std::string_view method_name(Method m);
// Short id ("lasp", "ring", "ulysses", "megatron").
std::string_view method_id(Method m);
// Accepts ids or display names, case-sensitive.
std::optional<Method> parse_method(std::string_view name);

// B, N, d, h, T. All positive, h | d.
struct CommParams {
  std::int64_t batch = 1;
  std::int64_t seq_len = 1;
  std::int64_t model_dim = 1;
  std::int64_t heads = 1;
  std::int64_t sp_size = 1;

  void validate() const;
};

// Per-layer element counts:
//   LASP            B d^2 / h
//   Ring Attention  2 B N d / h
//   Ulysses         4 B N d / T
//   Megatron-SP     2 B N d + 4 B N d / T
Rational analytic_volume(Method m, const CommParams &p);
// Throws DomainError for unknown names.
Rational analytic_volume(std::string_view method, const CommParams &p);

// analytic_volume with the common factor B d removed.
Rational simplified_volume(Method m, const CommParams &p);

struct CrossoverResult {
  // Ascending by simplified volume; ties keep kAllMethods order.
  std::vector<std::pair<Method, Rational>> ranking;
  bool lasp_lowest = false;       // strictly below every other method
  bool lasp_tied_lowest = false;  // equal to the minimum, shared with another
};

CrossoverResult crossover_check(const CommParams &p);

// Volume of one (group, layer, direction) slice of a trace.
struct SliceVolume {
  int group = 0;
  int layer = 0;
  MessageTag tag = MessageTag::kKvForward;
  std::uint64_t messages = 0;
  std::uint64_t elements = 0;
};

struct MeasuredVolume {
  std::uint64_t messages = 0;
  std::uint64_t forward_elements = 0;
  std::uint64_t backward_elements = 0;
  std::uint64_t total_bytes = 0;
  std::vector<SliceVolume> slices;
  // Distinct message sizes with their counts.
  std::vector<std::pair<std::uint64_t, std::uint64_t>> message_sizes;
  // Elements moved by one ring pass: one batch, layer, group and direction.
  std::uint64_t per_pass_elements = 0;
  // (T - 1) h (d / h)^2, the expected per-pass volume.
  std::uint64_t expected_per_pass_elements = 0;
  // per_pass / T: the pass volume spread over the group's ranks.
  Rational per_rank_elements;
  bool matches_convention = false;
};

struct VolumeReport {
  CommParams params;
  struct Row {
    Method method;
    Rational full;
    Rational simplified;
  };
  std::vector<Row> rows;
  CrossoverResult crossover;
  std::optional<MeasuredVolume> measured;
};

// Aggregates a LASP trace. Throws FormatError for records that cross a group
// boundary, name out-of-range ranks, or whose byte count is not 8 x elements.
MeasuredVolume measure_trace(const CommTrace &trace, const CommParams &p);

// Table rows for `methods` (all four when empty) plus the crossover verdict
// and the trace measurement if given.
VolumeReport build_volume_report(const CommParams &p, const std::vector<Method> &methods,
                                 const CommTrace *trace = nullptr);

void write_report_json(std::ostream &out, const VolumeReport &report);
void write_report_csv(std::ostream &out, const VolumeReport &report);
void write_report_table(std::ostream &out, const VolumeReport &report);

}  // namespace lasp

#endif  // LASP_COMM_MODEL_H_
