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

#include "lasp/comm_model.h"

#include <algorithm>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "lasp/errors.h"

namespace lasp {

namespace {

using Wide = __int128;

Rational make_rational(Wide num, Wide den) {
  if (den == 0) throw DomainError("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  Wide a = num < 0 ? -num : num, b = den;
  while (b != 0) {
    Wide t = a % b;
    a = b;
    b = t;
  }
  if (a > 1) {
    num /= a;
    den /= a;
  }
  constexpr Wide kMax = std::numeric_limits<std::int64_t>::max();
  if (num > kMax || -num > kMax || den > kMax) {
    throw DomainError("communication volume overflows 64-bit arithmetic");
  }
  return Rational(static_cast<std::int64_t>(num), static_cast<std::int64_t>(den));
}

}  // namespace

Rational::Rational(std::int64_t num, std::int64_t den) : num_(num), den_(den) {
  if (den_ == 0) throw DomainError("rational with zero denominator");
  if (den_ < 0) {
    num_ = -num_;
    den_ = -den_;
  }
  const std::int64_t g = std::gcd(num_, den_);
  if (g > 1) {
    num_ /= g;
    den_ /= g;
  }
}

std::string Rational::to_string() const {
  return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_);
}

Rational operator+(const Rational &a, const Rational &b) {
  return make_rational(Wide(a.num_) * b.den_ + Wide(b.num_) * a.den_, Wide(a.den_) * b.den_);
}

Rational operator*(const Rational &a, const Rational &b) {
  return make_rational(Wide(a.num_) * b.num_, Wide(a.den_) * b.den_);
}

Rational operator/(const Rational &a, const Rational &b) {
  return make_rational(Wide(a.num_) * b.den_, Wide(a.den_) * b.num_);
}

std::strong_ordering operator<=>(const Rational &a, const Rational &b) {
  const Wide lhs = Wide(a.num_) * b.den_;
  const Wide rhs = Wide(b.num_) * a.den_;
  if (lhs < rhs) return std::strong_ordering::less;
  if (lhs > rhs) return std::strong_ordering::greater;
  return std::strong_ordering::equal;
}

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kLasp: return "LASP";
    case Method::kRingAttention: return "Ring Attention";
    case Method::kUlysses: return "DeepSpeed-Ulysses";
    case Method::kMegatronSp: return "Megatron-SP";
  }
  return "?";
}

std::string_view method_id(Method m) {
  switch (m) {
    case Method::kLasp: return "lasp";
    case Method::kRingAttention: return "ring";
    case Method::kUlysses: return "ulysses";
    case Method::kMegatronSp: return "megatron";
  }
  return "?";
}

std::optional<Method> parse_method(std::string_view name) {
  for (Method m : kAllMethods) {
    if (name == method_id(m) || name == method_name(m)) return m;
  }
  return std::nullopt;
}

void CommParams::validate() const {
  if (batch < 1 || seq_len < 1 || model_dim < 1 || heads < 1 || sp_size < 1) {
    throw DomainError("communication parameters B, N, d, h, T must all be positive");
  }
  if (model_dim % heads != 0) {
    throw PartitionError("head count h=" + std::to_string(heads) +
                         " does not divide model dimension d=" + std::to_string(model_dim));
  }
}

Rational analytic_volume(Method m, const CommParams &p) {
  p.validate();
  const Rational b(p.batch), n(p.seq_len), d(p.model_dim), h(p.heads), t(p.sp_size);
  switch (m) {
    case Method::kLasp: return b * d * d / h;
    case Method::kRingAttention: return Rational(2) * b * n * d / h;
    case Method::kUlysses: return Rational(4) * b * n * d / t;
    case Method::kMegatronSp: return Rational(2) * b * n * d + Rational(4) * b * n * d / t;
  }
  throw DomainError("unknown method");
}

Rational analytic_volume(std::string_view method, const CommParams &p) {
  const auto m = parse_method(method);
  if (!m) throw DomainError("unknown method '" + std::string(method) + "'");
  return analytic_volume(*m, p);
}

Rational simplified_volume(Method m, const CommParams &p) {
  return analytic_volume(m, p) / (Rational(p.batch) * Rational(p.model_dim));
}

CrossoverResult crossover_check(const CommParams &p) {
  CrossoverResult r;
  for (Method m : kAllMethods) r.ranking.emplace_back(m, simplified_volume(m, p));
  std::stable_sort(r.ranking.begin(), r.ranking.end(),
                   [](const auto &a, const auto &b) { return a.second < b.second; });
  const Rational lowest = r.ranking.front().second;
  Rational lasp;
  std::size_t at_min = 0;
  for (const auto &[m, v] : r.ranking) {
    if (m == Method::kLasp) lasp = v;
    if (v == lowest) ++at_min;
  }
  r.lasp_lowest = lasp == lowest && at_min == 1;
  r.lasp_tied_lowest = lasp == lowest && at_min > 1;
  return r;
}

MeasuredVolume measure_trace(const CommTrace &trace, const CommParams &p) {
  p.validate();
  const std::int64_t t = p.sp_size;
  const std::uint64_t dh = static_cast<std::uint64_t>(p.model_dim / p.heads);
  MeasuredVolume mv;

  std::map<std::tuple<int, int, int>, SliceVolume> slices;
  std::map<std::uint64_t, std::uint64_t> sizes;
  for (const auto &r : trace.records()) {
    if (r.src < 0 || r.dst < 0) throw FormatError("trace record with negative rank");
    if (r.bytes != r.elements * sizeof(double)) {
      throw FormatError("trace step " + std::to_string(r.step) + ": " + std::to_string(r.bytes) +
                        " bytes for " + std::to_string(r.elements) + " elements");
    }
    const int group = static_cast<int>(r.src / t);
    if (r.dst / t != group) {
      throw FormatError("trace step " + std::to_string(r.step) + " crosses a group boundary (" +
                        std::to_string(r.src) + " -> " + std::to_string(r.dst) + ")");
    }
    auto &s = slices[{group, r.layer, static_cast<int>(r.tag)}];
    s.group = group;
    s.layer = r.layer;
    s.tag = r.tag;
    ++s.messages;
    s.elements += r.elements;
    ++mv.messages;
    (r.tag == MessageTag::kKvForward ? mv.forward_elements : mv.backward_elements) += r.elements;
    mv.total_bytes += r.bytes;
    ++sizes[r.elements];
  }
  for (auto &[key, s] : slices) mv.slices.push_back(s);
  mv.message_sizes.assign(sizes.begin(), sizes.end());

  mv.expected_per_pass_elements =
      static_cast<std::uint64_t>(t - 1) * static_cast<std::uint64_t>(p.heads) * dh * dh;
  const std::uint64_t msgs_per_pass =
      static_cast<std::uint64_t>(t - 1) * static_cast<std::uint64_t>(p.heads);

  bool uniform = true;
  std::optional<std::uint64_t> pass_volume;
  for (const auto &s : mv.slices) {
    if (msgs_per_pass == 0 || s.messages % msgs_per_pass != 0) {
      uniform = false;
      break;
    }
    const std::uint64_t passes = s.messages / msgs_per_pass;
    if (s.elements % passes != 0) {
      uniform = false;
      break;
    }
    const std::uint64_t v = s.elements / passes;
    if (pass_volume && *pass_volume != v) uniform = false;
    pass_volume = v;
  }
  mv.per_pass_elements = pass_volume.value_or(0);
  mv.per_rank_elements =
      Rational(static_cast<std::int64_t>(mv.per_pass_elements)) / Rational(t);
  const bool sizes_ok = std::all_of(mv.message_sizes.begin(), mv.message_sizes.end(),
                                    [&](const auto &e) { return e.first == dh * dh; });
  mv.matches_convention =
      uniform && sizes_ok && mv.per_pass_elements == mv.expected_per_pass_elements;
  return mv;
}

VolumeReport build_volume_report(const CommParams &p, const std::vector<Method> &methods,
                                 const CommTrace *trace) {
  VolumeReport report;
  report.params = p;
  const std::vector<Method> all(std::begin(kAllMethods), std::end(kAllMethods));
  for (Method m : methods.empty() ? all : methods) {
    report.rows.push_back({m, analytic_volume(m, p), simplified_volume(m, p)});
  }
  report.crossover = crossover_check(p);
  if (trace != nullptr) report.measured = measure_trace(*trace, p);
  return report;
}

namespace {

std::string full_formula(Method m) {
  switch (m) {
    case Method::kLasp: return "Bd^2/h";
    case Method::kRingAttention: return "2BNd/h";
    case Method::kUlysses: return "4BNd/T";
    case Method::kMegatronSp: return "2BNd+4BNd/T";
  }
  return "";
}

std::string simplified_formula(Method m) {
  switch (m) {
    case Method::kLasp: return "d/h";
    case Method::kRingAttention: return "2N/h";
    case Method::kUlysses: return "4N/T";
    case Method::kMegatronSp: return "2N+4N/T";
  }
  return "";
}

}  // namespace

void write_report_json(std::ostream &out, const VolumeReport &report) {
  nlohmann::ordered_json j;
  j["params"] = {{"B", report.params.batch},
                 {"N", report.params.seq_len},
                 {"d", report.params.model_dim},
                 {"h", report.params.heads},
                 {"T", report.params.sp_size}};
  auto rows = nlohmann::ordered_json::array();
  for (const auto &r : report.rows) {
    nlohmann::ordered_json row;
    row["method"] = method_name(r.method);
    row["full_formulation"] = full_formula(r.method);
    row["simplified_formulation"] = simplified_formula(r.method);
    row["full_elements"] = r.full.to_string();
    row["full_bytes"] = (r.full * Rational(8)).to_string();
    row["simplified"] = r.simplified.to_string();
    rows.push_back(row);
  }
  j["methods"] = rows;
  auto ranking = nlohmann::ordered_json::array();
  for (const auto &[m, v] : report.crossover.ranking) ranking.push_back(method_name(m));
  j["crossover"] = {{"ranking", ranking},
                    {"lasp_lowest", report.crossover.lasp_lowest},
                    {"lasp_tied_lowest", report.crossover.lasp_tied_lowest}};
  if (report.measured) {
    const auto &m = *report.measured;
    auto sizes = nlohmann::ordered_json::array();
    for (const auto &[size, count] : m.message_sizes) {
      sizes.push_back({{"elements", size}, {"count", count}});
    }
    j["measured_lasp"] = {{"messages", m.messages},
                          {"forward_elements", m.forward_elements},
                          {"backward_elements", m.backward_elements},
                          {"total_bytes", m.total_bytes},
                          {"message_sizes", sizes},
                          {"per_pass_elements", m.per_pass_elements},
                          {"per_pass_bytes", m.per_pass_elements * sizeof(double)},
                          {"expected_per_pass_elements", m.expected_per_pass_elements},
                          {"per_rank_elements", m.per_rank_elements.to_string()},
                          {"matches_convention", m.matches_convention}};
  }
  out << j.dump(2) << "\n";
}

void write_report_csv(std::ostream &out, const VolumeReport &report) {
  out << "method,full_formulation,simplified_formulation,full_elements,full_bytes,simplified,"
         "measured_per_pass_elements\n";
  for (const auto &r : report.rows) {
    out << method_name(r.method) << "," << full_formula(r.method) << ","
        << simplified_formula(r.method) << "," << r.full.to_string() << ","
        << (r.full * Rational(8)).to_string() << "," << r.simplified.to_string() << ",";
    if (r.method == Method::kLasp && report.measured) out << report.measured->per_pass_elements;
    out << "\n";
  }
}

void write_report_table(std::ostream &out, const VolumeReport &report) {
  const auto &p = report.params;
  out << "B=" << p.batch << " N=" << p.seq_len << " d=" << p.model_dim << " h=" << p.heads
      << " T=" << p.sp_size << "\n";
  out << std::left << std::setw(20) << "method" << std::setw(14) << "full" << std::setw(22)
      << "elements" << std::setw(10) << "simple" << "value\n";
  for (const auto &r : report.rows) {
    out << std::left << std::setw(20) << method_name(r.method) << std::setw(14)
        << full_formula(r.method) << std::setw(22) << r.full.to_string() << std::setw(10)
        << simplified_formula(r.method) << r.simplified.to_string() << "\n";
  }
  out << "LASP lowest: "
      << (report.crossover.lasp_lowest       ? "yes"
          : report.crossover.lasp_tied_lowest ? "tied"
                                              : "no")
      << "\n";
  if (report.measured) {
    const auto &m = *report.measured;
    out << "measured LASP: " << m.messages << " messages, " << m.per_pass_elements
        << " elements per ring pass (expected " << m.expected_per_pass_elements << ")\n";
  }
}

}  // namespace lasp
