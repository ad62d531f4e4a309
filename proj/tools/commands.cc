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

#include "commands.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"
#include "lasp/chunk_kernels.h"
#include "lasp/comm_model.h"
#include "lasp/errors.h"
#include "lasp/gen_recurrence.h"
#include "lasp/random.h"
#include "lasp/reference.h"
#include "lasp/tensor_io.h"
#include "lasp/topology.h"

namespace lasp::cli {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// Bad flags, config values or parameter combinations.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Flags {
  RunConfig config;
  std::string config_path;
  std::string mode = "lockstep";
  std::string format = "table";
  bool tamper = false;
  // gradcheck
  std::vector<double> epsilons = {1e-5, 1e-6};
  // comm-report
  std::vector<std::string> methods;
  std::string trace_path;
  // bench
  std::vector<std::size_t> sweep;
  std::vector<int> bench_sp_sizes = {1, 8};
  int repeats = 3;
};

struct Property {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

Property check(std::string name, double error, double tolerance) {
  return {std::move(name), error, tolerance, error <= tolerance};
}

json config_json(const RunConfig &c) {
  json j;
  j["n"] = c.n;
  j["d"] = c.d;
  j["heads"] = c.heads;
  j["batch"] = c.batch;
  j["world"] = c.world;
  j["sp_size"] = c.sp_size;
  j["lambda"] = c.lambda;
  j["seed"] = c.seed;
  j["mode"] = std::string(schedule_name(c.mode));
  return j;
}

json properties_json(const std::vector<Property> &props) {
  json arr = json::array();
  for (const auto &p : props) {
    arr.push_back({{"name", p.name},
                   {"max_error", p.max_error},
                   {"tolerance", p.tolerance},
                   {"pass", p.pass}});
  }
  return arr;
}

void print_properties(std::ostream &out, const std::vector<Property> &props) {
  std::size_t width = 8;
  for (const auto &p : props) width = std::max(width, p.name.size());
  out << std::left << std::setw(static_cast<int>(width) + 2) << "property" << std::setw(14)
      << "max_error" << std::setw(12) << "tolerance"
      << "status\n";
  for (const auto &p : props) {
    std::ostringstream err, tol;
    err << std::scientific << std::setprecision(3) << p.max_error;
    tol << std::setprecision(3) << p.tolerance;
    out << std::left << std::setw(static_cast<int>(width) + 2) << p.name << std::setw(14)
        << err.str() << std::setw(12) << tol.str() << (p.pass ? "PASS" : "FAIL") << "\n";
  }
}

bool all_pass(const std::vector<Property> &props) {
  return std::all_of(props.begin(), props.end(), [](const Property &p) { return p.pass; });
}

void write_text(const fs::path &path, const std::string &text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string() + " for writing");
  f << text;
}

// Emits the JSON report (stdout in json format, plus <out>/<name> when an
// output directory is configured) and returns the exit code.
int finish(const Flags &f, const std::string &file_name, json report,
           const std::vector<Property> &props, std::ostream &out, std::ostream &err) {
  const bool ok = all_pass(props);
  report["properties"] = properties_json(props);
  report["pass"] = ok;
  if (f.format == "json") {
    out << report.dump(2) << "\n";
  } else {
    print_properties(out, props);
  }
  if (!f.config.out.empty()) {
    fs::create_directories(f.config.out);
    write_text(fs::path(f.config.out) / file_name, report.dump(2) + "\n");
  }
  for (const auto &p : props) {
    if (!p.pass) err << "property failed: " << p.name << "\n";
  }
  return ok ? kExitPass : kExitPropertyFailure;
}

void validate_common(const RunConfig &c) {
  if (c.n == 0 || c.d == 0) throw UsageError("N and d must be positive");
  if (c.heads < 1 || c.d % static_cast<std::size_t>(c.heads) != 0) {
    throw PartitionError("head count h=" + std::to_string(c.heads) +
                         " does not divide model dimension d=" + std::to_string(c.d));
  }
  if (c.sp_size < 1 || c.n % static_cast<std::size_t>(c.sp_size) != 0) {
    throw PartitionError("sequence parallel size T=" + std::to_string(c.sp_size) +
                         " does not divide sequence length N=" + std::to_string(c.n));
  }
  Topology::Make(c.world, c.sp_size);
  validate_decay(c.lambda);
}

std::vector<AttnProblem> head_problems(const Fixture &fx, int heads, double lambda) {
  const auto q = split_heads(fx.q, heads), k = split_heads(fx.k, heads),
             v = split_heads(fx.v, heads);
  std::vector<AttnProblem> out;
  for (std::size_t h = 0; h < q.size(); ++h) out.push_back({q[h], k[h], v[h], lambda});
  return out;
}

// Restores the kernel test hook when a tampered run ends.
class TamperGuard {
 public:
  explicit TamperGuard(bool on) : on_(on) {
    if (on_) test_hooks::set_flip_inter_forward_sign(true);
  }
  ~TamperGuard() {
    if (on_) test_hooks::set_flip_inter_forward_sign(false);
  }
  TamperGuard(const TamperGuard &) = delete;
  TamperGuard &operator=(const TamperGuard &) = delete;

 private:
  bool on_;
};

int cmd_verify(const Flags &f, std::ostream &out, std::ostream &err) {
  const RunConfig &c = f.config;
  validate_common(c);
  const Fixture fx = make_fixture(c);
  const TamperGuard tamper(f.tamper);
  const auto problems = head_problems(fx, c.heads, c.lambda);
  const auto d_o = split_heads(fx.d_o, c.heads);

  std::vector<Matrix> serial_o, serial_dq, serial_dk, serial_dv;
  double oracle = 0, chunk_fwd = 0, chunk_bwd = 0;
  for (std::size_t h = 0; h < problems.size(); ++h) {
    const AttnProblem &p = problems[h];
    serial_o.push_back(serial_forward(p).output);
    const Gradients g = serial_backward(p, d_o[h]);
    serial_dq.push_back(g.dq);
    serial_dk.push_back(g.dk);
    serial_dv.push_back(g.dv);
    oracle = std::max(oracle, relative_error(serial_o.back(), dense_masked_forward(p)));
    for (std::size_t chunk = 1; chunk <= c.n; ++chunk) {
      if (c.n % chunk != 0) continue;
      const auto fwd = chunked_forward_serial(p, chunk);
      chunk_fwd = std::max(chunk_fwd, relative_error(fwd.output, serial_o.back()));
      const Gradients cg = chunked_backward_serial(p, d_o[h], chunk, fwd.kv_cache);
      chunk_bwd = std::max({chunk_bwd, relative_error(cg.dq, g.dq), relative_error(cg.dk, g.dk),
                            relative_error(cg.dv, g.dv)});
    }
  }

  const MultiheadResult par =
      multihead_run(fx.q, fx.k, fx.v, {c.heads, c.sp_size, {c.lambda}, c.mode}, &fx.d_o);
  const double par_fwd = relative_error(par.output, merge_heads(serial_o));
  const double par_bwd = std::max({relative_error(par.grads->dq, merge_heads(serial_dq)),
                                   relative_error(par.grads->dk, merge_heads(serial_dk)),
                                   relative_error(par.grads->dv, merge_heads(serial_dv))});
  const MeasuredVolume mv = measure_trace(
      par.trace, {1, static_cast<std::int64_t>(c.n), static_cast<std::int64_t>(c.d), c.heads,
                  c.sp_size});
  const std::uint64_t expected_messages =
      2 * static_cast<std::uint64_t>(c.sp_size - 1) * static_cast<std::uint64_t>(c.heads);
  const double protocol = (mv.matches_convention && mv.messages == expected_messages) ? 0.0 : 1.0;

  std::vector<Property> props = {
      check("oracle_equivalence", oracle, 1e-12),
      check("chunk_invariance_forward", chunk_fwd, 1e-10),
      check("chunk_invariance_backward", chunk_bwd, 1e-10),
      check("parallel_equivalence_forward", par_fwd, 1e-10),
      check("parallel_equivalence_backward", par_bwd, 1e-10),
      check("protocol_shape", protocol, 0.0),
  };
  json report;
  report["command"] = "verify";
  report["config"] = config_json(c);
  report["messages"] = mv.messages;
  return finish(f, "verify.json", std::move(report), props, out, err);
}

int cmd_gradcheck(const Flags &f, std::ostream &out, std::ostream &err) {
  const RunConfig &c = f.config;
  validate_common(c);
  if (c.n > 128) {
    throw UsageError("gradcheck needs N <= 128 (got " + std::to_string(c.n) +
                     "); finite differences cost O(N d) forward evaluations");
  }
  for (double eps : f.epsilons) {
    if (!(eps >= 1e-7 && eps <= 1e-4)) throw UsageError("epsilon must lie in [1e-7, 1e-4]");
  }
  const Fixture fx = make_fixture(c);
  const TamperGuard tamper(f.tamper);
  std::vector<double> lambdas = {c.lambda};
  if (c.lambda != 1.0) lambdas.push_back(1.0);

  std::vector<Property> props;
  for (double lambda : lambdas) {
    const MultiheadResult par =
        multihead_run(fx.q, fx.k, fx.v, {c.heads, c.sp_size, {lambda}, c.mode}, &fx.d_o);
    const auto problems = head_problems(fx, c.heads, lambda);
    const auto d_o = split_heads(fx.d_o, c.heads);
    const auto dq = split_heads(par.grads->dq, c.heads), dk = split_heads(par.grads->dk, c.heads),
               dv = split_heads(par.grads->dv, c.heads);
    for (double eps : f.epsilons) {
      double worst = 0;
      for (std::size_t h = 0; h < problems.size(); ++h) {
        const QkvLoss loss = [&, h](const Matrix &q, const Matrix &k, const Matrix &v) {
          return attention_loss(serial_forward({q, k, v, lambda}).output, d_o[h]);
        };
        const Gradients fd = finite_difference_grads(loss, problems[h], eps);
        worst = std::max({worst, relative_error(dq[h], fd.dq), relative_error(dk[h], fd.dk),
                          relative_error(dv[h], fd.dv)});
      }
      std::ostringstream name;
      name << "gradcheck lambda=" << lambda << " eps=" << eps;
      props.push_back(check(name.str(), worst, 1e-5));
    }
  }
  json report;
  report["command"] = "gradcheck";
  report["config"] = config_json(c);
  report["epsilons"] = f.epsilons;
  return finish(f, "gradcheck.json", std::move(report), props, out, err);
}

struct SimulationInputs {
  ProjectionWeights weights;
  std::vector<Matrix> x;
  std::vector<Matrix> d_o;
};

// SplitMix64(seed) draws W_Q, W_K, W_V (scaled by 1/sqrt(d)) and then X_b,
// dO_b for every batch in order.
SimulationInputs make_simulation_inputs(const RunConfig &c) {
  SplitMix64 rng(c.seed);
  const double s = 1.0 / std::sqrt(static_cast<double>(c.d));
  SimulationInputs in;
  in.weights.wq = random_matrix(rng, c.d, c.d, -s, s);
  in.weights.wk = random_matrix(rng, c.d, c.d, -s, s);
  in.weights.wv = random_matrix(rng, c.d, c.d, -s, s);
  for (int b = 0; b < c.batch; ++b) {
    in.x.push_back(random_matrix(rng, c.n, c.d));
    in.d_o.push_back(random_matrix(rng, c.n, c.d));
  }
  return in;
}

int cmd_simulate(const Flags &f, std::ostream &out, std::ostream &err) {
  const RunConfig &c = f.config;
  validate_common(c);
  const DistributionPlan plan = plan_distribution(c.n, c.world, c.sp_size, c.batch);
  if (c.out.empty()) throw UsageError("simulate needs --out DIR");
  const SimulationInputs in = make_simulation_inputs(c);
  const TamperGuard tamper(f.tamper);

  const SimulationResult r =
      simulate({c.n, c.world, c.sp_size, c.heads, {c.lambda}, c.mode}, in.x, in.weights, in.d_o);

  // Serial oracle per batch.
  double fwd_err = 0, bwd_err = 0;
  const std::size_t dh = c.d / static_cast<std::size_t>(c.heads);
  for (std::size_t b = 0; b < in.x.size(); ++b) {
    const Matrix q = matmul(in.x[b], in.weights.wq), k = matmul(in.x[b], in.weights.wk),
                 v = matmul(in.x[b], in.weights.wv);
    std::vector<Matrix> o, dq, dk, dv;
    for (int h = 0; h < c.heads; ++h) {
      const std::size_t c0 = static_cast<std::size_t>(h) * dh;
      const AttnProblem p{q.col_block(c0, dh), k.col_block(c0, dh), v.col_block(c0, dh),
                          c.lambda};
      o.push_back(serial_forward(p).output);
      const Gradients g = serial_backward(p, in.d_o[b].col_block(c0, dh));
      dq.push_back(g.dq);
      dk.push_back(g.dk);
      dv.push_back(g.dv);
    }
    fwd_err = std::max(fwd_err, relative_error(r.outputs[b], hstack(o)));
    bwd_err = std::max({bwd_err, relative_error(r.grads[b].dq, hstack(dq)),
                        relative_error(r.grads[b].dk, hstack(dk)),
                        relative_error(r.grads[b].dv, hstack(dv))});
  }

  const fs::path dir(c.out);
  fs::create_directories(dir);
  std::vector<Matrix> dq, dk, dv;
  for (const auto &g : r.grads) {
    dq.push_back(g.dq);
    dk.push_back(g.dk);
    dv.push_back(g.dv);
  }
  write_tensor_file(dir / "O.laspt", Tensor::Stack(r.outputs));
  write_tensor_file(dir / "dQ.laspt", Tensor::Stack(dq));
  write_tensor_file(dir / "dK.laspt", Tensor::Stack(dk));
  write_tensor_file(dir / "dV.laspt", Tensor::Stack(dv));
  write_tensor_file(dir / "mean_dQ.laspt", Tensor::FromMatrix(r.mean_grads.dq));
  write_tensor_file(dir / "mean_dK.laspt", Tensor::FromMatrix(r.mean_grads.dk));
  write_tensor_file(dir / "mean_dV.laspt", Tensor::FromMatrix(r.mean_grads.dv));
  {
    std::ofstream trace(dir / "trace.jsonl", std::ios::binary);
    r.trace.write_jsonl(trace);
  }

  const MeasuredVolume mv = measure_trace(
      r.trace, {c.batch, static_cast<std::int64_t>(c.n), static_cast<std::int64_t>(c.d), c.heads,
                c.sp_size});
  json placement = json::array();
  for (int b = 0; b < plan.batch_count; ++b) {
    placement.push_back({{"batch", b},
                         {"group", plan.group_for_batch(b)},
                         {"round", plan.round_for_batch(b)},
                         {"ranks", plan.placement[static_cast<std::size_t>(b)]}});
  }
  json report;
  report["command"] = "simulate";
  report["config"] = config_json(c);
  report["topology"] = {{"world_size", plan.topology.world_size},
                        {"sp_size", plan.topology.sp_size},
                        {"group_count", plan.topology.group_count},
                        {"src_ranks", plan.topology.src_ranks()},
                        {"chunk_size", plan.chunk_size}};
  report["placement"] = placement;
  report["messages"] = mv.messages;
  report["forward_elements"] = mv.forward_elements;
  report["backward_elements"] = mv.backward_elements;
  report["per_pass_elements"] = mv.per_pass_elements;
  report["files"] = {"O.laspt",       "dQ.laspt",      "dK.laspt",      "dV.laspt",
                     "mean_dQ.laspt", "mean_dK.laspt", "mean_dV.laspt", "trace.jsonl"};

  std::vector<Property> props = {
      check("serial_equivalence_forward", fwd_err, 1e-10),
      check("serial_equivalence_backward", bwd_err, 1e-10),
      check("protocol_shape", mv.matches_convention ? 0.0 : 1.0, 0.0),
  };
  if (f.format != "json") {
    out << "batch  group  round  ranks\n";
    for (int b = 0; b < plan.batch_count; ++b) {
      std::string ranks;
      for (int rank : plan.placement[static_cast<std::size_t>(b)]) {
        ranks += (ranks.empty() ? "" : ",") + std::to_string(rank);
      }
      out << std::left << std::setw(7) << b << std::setw(7) << plan.group_for_batch(b)
          << std::setw(7) << plan.round_for_batch(b) << ranks << "\n";
    }
    out << "\n";
  }
  return finish(f, "summary.json", std::move(report), props, out, err);
}

int cmd_comm_report(const Flags &f, std::ostream &out, std::ostream &err) {
  const RunConfig &c = f.config;
  const CommParams params{c.batch, static_cast<std::int64_t>(c.n),
                          static_cast<std::int64_t>(c.d), c.heads, c.sp_size};
  params.validate();
  std::vector<Method> methods;
  for (const auto &name : f.methods) {
    const auto m = parse_method(name);
    if (!m) throw UsageError("unknown method '" + name + "' (expected lasp, ring, ulysses, megatron)");
    methods.push_back(*m);
  }
  std::optional<CommTrace> trace;
  if (!f.trace_path.empty()) {
    std::ifstream in(f.trace_path, std::ios::binary);
    if (!in) throw UsageError("cannot open trace " + f.trace_path);
    trace = CommTrace::read_jsonl(in);
  }
  const VolumeReport report = build_volume_report(params, methods, trace ? &*trace : nullptr);

  std::ostringstream json_text, csv_text;
  write_report_json(json_text, report);
  write_report_csv(csv_text, report);
  if (f.format == "json") {
    out << json_text.str();
  } else if (f.format == "csv") {
    out << csv_text.str();
  } else {
    write_report_table(out, report);
  }
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    write_text(fs::path(c.out) / "comm_report.json", json_text.str());
    write_text(fs::path(c.out) / "comm_report.csv", csv_text.str());
  }
  if (report.measured && !report.measured->matches_convention) {
    err << "measured trace volume does not match (T-1) h d_h^2 per pass\n";
    return kExitPropertyFailure;
  }
  return kExitPass;
}

int cmd_bench(const Flags &f, std::ostream &out, std::ostream &err) {
  const RunConfig &c = f.config;
  if (f.sweep.empty()) throw UsageError("bench needs a non-empty --sweep of sequence lengths");
  for (std::size_t n : f.sweep) {
    if (n == 0) throw UsageError("--sweep entries must be positive sequence lengths");
  }
  if (f.repeats < 1) throw UsageError("--repeats must be at least 1");
  if (c.heads < 1 || c.d % static_cast<std::size_t>(c.heads) != 0) {
    throw PartitionError("head count h=" + std::to_string(c.heads) +
                         " does not divide model dimension d=" + std::to_string(c.d));
  }
  validate_decay(c.lambda);
  for (int t : f.bench_sp_sizes) {
    for (std::size_t n : f.sweep) {
      if (t < 1 || n % static_cast<std::size_t>(t) != 0) {
        throw PartitionError("sequence parallel size T=" + std::to_string(t) +
                             " does not divide sequence length N=" + std::to_string(n));
      }
    }
  }

  std::ostringstream csv;
  csv << "n,sp_size,d,heads,mode,repeats,seconds,seconds_per_token\n";
  for (std::size_t n : f.sweep) {
    RunConfig rc = c;
    rc.n = n;
    const Fixture fx = make_fixture(rc);
    for (int t : f.bench_sp_sizes) {
      double best = std::numeric_limits<double>::infinity();
      for (int rep = 0; rep < f.repeats; ++rep) {
        const auto start = std::chrono::steady_clock::now();
        multihead_run(fx.q, fx.k, fx.v, {c.heads, t, {c.lambda}, c.mode}, &fx.d_o);
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
        best = std::min(best, dt.count());
      }
      csv << n << "," << t << "," << c.d << "," << c.heads << "," << schedule_name(c.mode) << ","
          << f.repeats << "," << std::setprecision(6) << best << ","
          << best / static_cast<double>(n) << "\n";
    }
  }
  out << csv.str();
  err << "note: CPU wall-times of the in-process simulation, not GPU throughput\n";
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    write_text(fs::path(c.out) / "bench.csv", csv.str());
  }
  return kExitPass;
}

int cmd_models(const Flags &f, std::ostream &out) {
  std::ostringstream text;
  write_registry_json(text);
  out << text.str();
  if (!f.config.out.empty()) {
    fs::create_directories(f.config.out);
    write_text(fs::path(f.config.out) / "models.json", text.str());
  }
  return kExitPass;
}

// Applies config-file values for every key whose flag was not given.
void apply_config_file(Flags &f, const std::map<std::string, CLI::Option *> &options) {
  std::ifstream in(f.config_path);
  if (!in) throw UsageError("cannot open config file " + f.config_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception &e) {
    throw UsageError("config file " + f.config_path + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  RunConfig &c = f.config;
  const std::map<std::string, std::function<void(const json &)>> setters = {
      {"n", [&](const json &v) { c.n = v.get<std::size_t>(); }},
      {"d", [&](const json &v) { c.d = v.get<std::size_t>(); }},
      {"heads", [&](const json &v) { c.heads = v.get<int>(); }},
      {"batch", [&](const json &v) { c.batch = v.get<int>(); }},
      {"world", [&](const json &v) { c.world = v.get<int>(); }},
      {"sp_size", [&](const json &v) { c.sp_size = v.get<int>(); }},
      {"lambda", [&](const json &v) { c.lambda = v.get<double>(); }},
      {"seed", [&](const json &v) { c.seed = v.get<std::uint64_t>(); }},
      {"mode", [&](const json &v) { f.mode = v.get<std::string>(); }},
      {"out", [&](const json &v) { c.out = v.get<std::string>(); }},
      {"fixtures", [&](const json &v) { c.fixtures = v.get<std::string>(); }},
      {"format", [&](const json &v) { f.format = v.get<std::string>(); }},
      {"epsilons", [&](const json &v) { f.epsilons = v.get<std::vector<double>>(); }},
      {"methods", [&](const json &v) { f.methods = v.get<std::vector<std::string>>(); }},
      {"trace", [&](const json &v) { f.trace_path = v.get<std::string>(); }},
      {"sweep", [&](const json &v) { f.sweep = v.get<std::vector<std::size_t>>(); }},
      {"sp_sizes", [&](const json &v) { f.bench_sp_sizes = v.get<std::vector<int>>(); }},
      {"repeats", [&](const json &v) { f.repeats = v.get<int>(); }},
  };
  for (const auto &[key, value] : j.items()) {
    const auto setter = setters.find(key);
    if (setter == setters.end()) throw UsageError("unknown config key '" + key + "'");
    const auto opt = options.find(key);
    if (opt != options.end() && opt->second->count() > 0) continue;
    try {
      setter->second(value);
    } catch (const json::exception &e) {
      throw UsageError("config key '" + key + "': " + e.what());
    }
  }
}

}  // namespace

Fixture make_fixture(const RunConfig &config) {
  Fixture fx;
  if (!config.fixtures.empty()) {
    const fs::path dir(config.fixtures);
    Matrix *targets[] = {&fx.q, &fx.k, &fx.v, &fx.d_o};
    const char *names[] = {"q.laspt", "k.laspt", "v.laspt", "do.laspt"};
    for (int i = 0; i < 4; ++i) {
      *targets[i] = read_tensor_file(dir / names[i]).to_matrix();
      if (targets[i]->rows() != config.n || targets[i]->cols() != config.d) {
        throw ShapeError(std::string(names[i]) + " is " + targets[i]->shape_string() +
                         ", expected " + std::to_string(config.n) + " x " +
                         std::to_string(config.d));
      }
    }
    return fx;
  }
  SplitMix64 rng(config.seed);
  fx.q = random_matrix(rng, config.n, config.d);
  fx.k = random_matrix(rng, config.n, config.d);
  fx.v = random_matrix(rng, config.n, config.d);
  fx.d_o = random_matrix(rng, config.n, config.d);
  return fx;
}

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  Flags f;
  RunConfig &c = f.config;
  CLI::App app{"LASP: chunked linear attention over simulated sequence-parallel ranks"};
  app.name("lasp");
  app.require_subcommand(1, 1);

  std::map<std::string, CLI::Option *> options;
  std::vector<std::string> sweep_text;
  options["n"] = app.add_option("--n", c.n, "Sequence length N");
  options["d"] = app.add_option("--d", c.d, "Model dimension d");
  options["heads"] = app.add_option("--heads", c.heads, "Head count h");
  options["batch"] = app.add_option("--batch", c.batch, "Batch count B");
  options["world"] = app.add_option("--world", c.world, "World size W");
  options["sp_size"] = app.add_option("--sp-size", c.sp_size, "Sequence parallel size T");
  options["lambda"] = app.add_option("--lambda", c.lambda, "Decay rate in (0, 1]");
  options["seed"] = app.add_option("--seed", c.seed, "Fixture seed");
  options["mode"] = app.add_option("--mode", f.mode, "lockstep or concurrent");
  options["out"] = app.add_option("--out", c.out, "Output directory");
  options["fixtures"] = app.add_option("--fixtures", c.fixtures,
                                       "Directory with q/k/v/do.laspt fixtures");
  options["format"] = app.add_option("--format", f.format, "table, json or csv");
  app.add_option("--config", f.config_path, "JSON config file; flags take precedence");
  app.add_flag("--tamper", f.tamper, "Flip the inter-chunk sign (harness self-test)")
      ->group("");

  auto *verify = app.add_subcommand("verify", "Oracle, chunk-invariance and parallel suites");
  auto *gradcheck = app.add_subcommand("gradcheck", "Compare gradients with finite differences");
  options["epsilons"] =
      gradcheck->add_option("--eps", f.epsilons, "Finite-difference steps")->delimiter(',');
  auto *sim = app.add_subcommand("simulate", "Scatter, forward, backward and allreduce");
  auto *report = app.add_subcommand("comm-report", "Communication volume table");
  options["methods"] =
      report->add_option("--methods", f.methods, "Method filter (lasp,ring,ulysses,megatron)")
          ->delimiter(',');
  options["trace"] = report->add_option("--trace", f.trace_path, "Measure a trace.jsonl");
  auto *bench = app.add_subcommand("bench", "Wall-time sweep over N");
  options["sweep"] = bench->add_option("--sweep", sweep_text, "Sequence lengths")
                         ->delimiter(',')
                         ->expected(0, CLI::detail::expected_max_vector_size);
  options["sp_sizes"] =
      bench->add_option("--sp-sizes", f.bench_sp_sizes, "Sequence parallel sizes")
          ->delimiter(',');
  options["repeats"] = bench->add_option("--repeats", f.repeats, "Timed repetitions");
  auto *models = app.add_subcommand("models", "Generalized recurrence registry as JSON");
  for (auto *sub : {verify, gradcheck, sim, report, bench, models}) sub->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return kExitPass;
  } catch (const CLI::ParseError &e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    for (const std::string &item : sweep_text) {
      if (item.empty()) continue;
      std::size_t used = 0;
      unsigned long long n = 0;
      try {
        n = std::stoull(item, &used);
      } catch (const std::logic_error &) {
        used = 0;
      }
      if (used != item.size() || item[0] == '-') {
        throw UsageError("--sweep entry '" + item + "' is not a sequence length");
      }
      f.sweep.push_back(static_cast<std::size_t>(n));
    }
    if (!f.config_path.empty()) apply_config_file(f, options);
    const auto mode = parse_schedule(f.mode);
    if (!mode) throw UsageError("unknown mode '" + f.mode + "' (expected lockstep or concurrent)");
    c.mode = *mode;
    if (f.format != "table" && f.format != "json" && f.format != "csv") {
      throw UsageError("unknown format '" + f.format + "'");
    }
    if (verify->parsed()) return cmd_verify(f, out, err);
    if (gradcheck->parsed()) return cmd_gradcheck(f, out, err);
    if (sim->parsed()) return cmd_simulate(f, out, err);
    if (report->parsed()) return cmd_comm_report(f, out, err);
    if (bench->parsed()) return cmd_bench(f, out, err);
    return cmd_models(f, out);
  } catch (const UsageError &e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const PartitionError &e) {
    err << "usage error: partition error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DomainError &e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ShapeError &e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error &e) {
    err << "error: " << e.what() << "\n";
    return kExitPropertyFailure;
  } catch (const fs::filesystem_error &e) {
    err << "error: " << e.what() << "\n";
    return kExitPropertyFailure;
  }
}

}  // namespace lasp::cli
