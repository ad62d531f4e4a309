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

#include "lasp/runtime.h"

#include <algorithm>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <tuple>

#include "lasp/errors.h"

namespace lasp {

std::string_view schedule_name(Schedule s) {
  return s == Schedule::kLockstep ? "lockstep" : "concurrent";
}

std::optional<Schedule> parse_schedule(std::string_view name) {
  if (name == "lockstep") return Schedule::kLockstep;
  if (name == "concurrent") return Schedule::kConcurrent;
  return std::nullopt;
}

World::World(Topology topology, std::size_t chunk_size, std::size_t head_dim,
             WorldOptions options)
    : topology_(topology),
      chunk_size_(chunk_size),
      head_dim_(head_dim),
      options_(std::move(options)),
      mailbox_(topology.world_size) {
  if (options_.lambdas.empty()) throw DomainError("world needs at least one head");
  if (options_.num_layers < 1) throw DomainError("world needs at least one layer");
  if (head_dim_ == 0) throw DomainError("head dimension must be positive");
  for (double lambda : options_.lambdas) decay_.push_back(build_decay(chunk_size_, lambda));
  const auto layers = static_cast<std::size_t>(options_.num_layers);
  const auto heads = options_.lambdas.size();
  for (int r = 0; r < topology_.world_size; ++r) {
    WorkerState w;
    w.rank = r;
    w.group = topology_.group_of(r);
    w.local_index = topology_.local_index(r);
    w.inputs.assign(layers, std::vector<std::optional<ChunkInputs>>(heads));
    w.kv_cache.assign(layers, std::vector<std::optional<KvState>>(heads));
    w.outputs.assign(layers, std::vector<std::optional<Matrix>>(heads));
    workers_.push_back(std::move(w));
  }
}

void World::load_chunk(int layer, int rank, int head, ChunkInputs ci) {
  if (layer < 0 || layer >= num_layers() || head < 0 || head >= num_heads() || rank < 0 ||
      rank >= topology_.world_size) {
    throw ShapeError("load_chunk: (layer " + std::to_string(layer) + ", rank " +
                     std::to_string(rank) + ", head " + std::to_string(head) +
                     ") outside the world");
  }
  ci.validate(decay(head));
  if (ci.q.cols() != head_dim_) {
    throw ShapeError("load_chunk: chunk " + ci.q.shape_string() + " does not have head dim " +
                     std::to_string(head_dim_));
  }
  const auto l = static_cast<std::size_t>(layer), h = static_cast<std::size_t>(head);
  auto &w = worker(rank);
  w.inputs[l][h] = std::move(ci);
  w.kv_cache[l][h].reset();
  w.outputs[l][h].reset();
}

void World::clear_layer(int layer) {
  const auto l = static_cast<std::size_t>(layer);
  for (auto &w : workers_) {
    for (auto &slot : w.inputs.at(l)) slot.reset();
    for (auto &slot : w.kv_cache.at(l)) slot.reset();
    for (auto &slot : w.outputs.at(l)) slot.reset();
  }
}

// Executes one pass of the protocol over every active rank of the world.
class RingDriver {
 public:
  explicit RingDriver(World &world) : w_(world) {}

  PerRankHeads forward(int layer) {
    check_layer(layer);
    const auto active = active_ranks(layer);
    const auto l = static_cast<std::size_t>(layer);
    const int heads = w_.num_heads();
    std::vector<std::vector<Matrix>> intra(rank_count(), std::vector<Matrix>(heads_sz()));

    auto local = [&](int rank) {
      auto &wk = w_.worker(rank);
      for (int h = 0; h < heads; ++h) {
        const auto hs = static_cast<std::size_t>(h);
        intra[idx(rank)][hs] = intra_forward(*wk.inputs[l][hs], w_.decay(h));
      }
    };
    auto ring = [&](int rank, std::optional<std::chrono::milliseconds> wait) {
      auto &wk = w_.worker(rank);
      const Topology &topo = w_.topology();
      for (int h = 0; h < heads; ++h) {
        const auto hs = static_cast<std::size_t>(h);
        const DecayStructures &d = w_.decay(h);
        const ChunkInputs &ci = *wk.inputs[l][hs];
        KvState kv_prev = topo.is_group_first(rank)
                              ? KvState::Zero(w_.head_dim())
                              : KvState{w_.mailbox_
                                            .take(rank, rank - 1, MessageTag::kKvForward,
                                                  layer, h, wait)
                                            .payload};
        wk.kv_cache[l][hs] = kv_prev;
        wk.outputs[l][hs] = add(intra[idx(rank)][hs], inter_forward(ci.q, kv_prev, d));
        KvState kv = kv_update(kv_prev, ci.k, ci.v, d);
        if (!topo.is_group_last(rank)) {
          w_.mailbox_.post(
              {rank, rank + 1, MessageTag::kKvForward, layer, h, std::move(kv.state)});
        }
      }
    };
    execute(active, /*reverse=*/false, local, ring);

    PerRankHeads out(rank_count());
    for (int rank : active) {
      for (auto &o : w_.worker(rank).outputs[l]) out[idx(rank)].push_back(*o);
    }
    return out;
  }

  PerRankGrads backward(const PerRankHeads &d_o, int layer) {
    check_layer(layer);
    const auto active = active_ranks(layer);
    const auto l = static_cast<std::size_t>(layer);
    const int heads = w_.num_heads();
    if (d_o.size() != rank_count()) {
      throw ShapeError("run_backward: dO given for " + std::to_string(d_o.size()) +
                       " ranks, world has " + std::to_string(rank_count()));
    }
    for (int rank : active) {
      const auto &wk = w_.worker(rank);
      if (d_o[idx(rank)].size() != heads_sz()) {
        throw ShapeError("run_backward: rank " + std::to_string(rank) + " has dO for " +
                         std::to_string(d_o[idx(rank)].size()) + " heads");
      }
      for (int h = 0; h < heads; ++h) {
        const auto hs = static_cast<std::size_t>(h);
        if (!wk.kv_cache[l][hs]) {
          throw StateError("run_backward: rank " + std::to_string(rank) + " layer " +
                           std::to_string(layer) + " head " + std::to_string(h) +
                           " has no cached KV state; run the forward pass first");
        }
        if (!d_o[idx(rank)][hs].same_shape(wk.inputs[l][hs]->q)) {
          throw ShapeError("run_backward: rank " + std::to_string(rank) + " head " +
                           std::to_string(h) + " dO " + d_o[idx(rank)][hs].shape_string() +
                           " vs chunk " + wk.inputs[l][hs]->q.shape_string());
        }
      }
    }

    PerRankGrads grads(rank_count(), std::vector<Gradients>(heads_sz()));
    auto local = [&](int rank) {
      auto &wk = w_.worker(rank);
      for (int h = 0; h < heads; ++h) {
        const auto hs = static_cast<std::size_t>(h);
        const DecayStructures &d = w_.decay(h);
        const Matrix &g_o = d_o[idx(rank)][hs];
        Gradients g = intra_backward(*wk.inputs[l][hs], g_o, d);
        g.dq = add(g.dq, inter_backward_q(g_o, wk.kv_cache[l][hs], d));
        grads[idx(rank)][hs] = std::move(g);
      }
    };
    auto ring = [&](int rank, std::optional<std::chrono::milliseconds> wait) {
      auto &wk = w_.worker(rank);
      const Topology &topo = w_.topology();
      for (int h = 0; h < heads; ++h) {
        const auto hs = static_cast<std::size_t>(h);
        const DecayStructures &d = w_.decay(h);
        const ChunkInputs &ci = *wk.inputs[l][hs];
        DkvState dkv_next = topo.is_group_last(rank)
                                ? DkvState::Zero(w_.head_dim())
                                : DkvState{w_.mailbox_
                                               .take(rank, rank + 1, MessageTag::kDkvBackward,
                                                     layer, h, wait)
                                               .payload};
        Gradients &g = grads[idx(rank)][hs];
        g.dk = add(g.dk, inter_backward_k(ci.v, dkv_next, d));
        g.dv = add(g.dv, inter_backward_v(ci.k, dkv_next, d));
        DkvState dkv = dkv_update(dkv_next, ci.q, d_o[idx(rank)][hs], d);
        if (!topo.is_group_first(rank)) {
          w_.mailbox_.post(
              {rank, rank - 1, MessageTag::kDkvBackward, layer, h, std::move(dkv.state)});
        }
      }
    };
    execute(active, /*reverse=*/true, local, ring);
    return grads;
  }

 private:
  std::size_t rank_count() const { return static_cast<std::size_t>(w_.topology().world_size); }
  std::size_t heads_sz() const { return static_cast<std::size_t>(w_.num_heads()); }
  static std::size_t idx(int rank) { return static_cast<std::size_t>(rank); }

  void check_layer(int layer) const {
    if (layer < 0 || layer >= w_.num_layers()) {
      throw ShapeError("layer " + std::to_string(layer) + " outside the world's " +
                       std::to_string(w_.num_layers()) + " layers");
    }
  }

  // Ranks of every group whose members all hold inputs for the layer.
  std::vector<int> active_ranks(int layer) const {
    const auto l = static_cast<std::size_t>(layer);
    const Topology &topo = w_.topology();
    std::vector<int> active;
    for (int g = 0; g < topo.group_count; ++g) {
      std::size_t loaded = 0, slots = 0;
      for (int rank : topo.group_ranks(g)) {
        for (const auto &slot : w_.worker(rank).inputs[l]) {
          ++slots;
          if (slot) ++loaded;
        }
      }
      if (loaded == 0) continue;
      if (loaded != slots) {
        throw StateError("group " + std::to_string(g) + " is only partially loaded for layer " +
                         std::to_string(layer));
      }
      for (int rank : topo.group_ranks(g)) active.push_back(rank);
    }
    if (active.empty()) {
      throw StateError("no rank holds inputs for layer " + std::to_string(layer));
    }
    return active;
  }

  // Runs the local phase on every active rank, then the ring phase. In
  // lockstep the ring visits ranks in dependency order (ascending within a
  // group for forward, descending for backward) so every receive finds its
  // message already queued.
  void execute(const std::vector<int> &active, bool reverse,
               const std::function<void(int)> &local,
               const std::function<void(int, std::optional<std::chrono::milliseconds>)> &ring) {
    Mailbox &mb = w_.mailbox_;
    mb.reset();
    const std::size_t mark = mb.events().size();
    std::vector<int> order = active;
    const Topology &topo = w_.topology();
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      const int ga = topo.group_of(a), gb = topo.group_of(b);
      if (ga != gb) return ga < gb;
      return reverse ? a > b : a < b;
    });

    if (w_.options().schedule == Schedule::kLockstep) {
      for (int rank : order) local(rank);
      for (int rank : order) ring(rank, std::nullopt);
    } else {
      std::vector<std::exception_ptr> errors(order.size());
      {
        std::vector<std::jthread> threads;
        threads.reserve(order.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
          threads.emplace_back([&, i] {
            try {
              local(order[i]);
              ring(order[i], w_.options().recv_timeout);
            } catch (...) {
              errors[i] = std::current_exception();
              mb.abort();
            }
          });
        }
      }
      // Report the root cause rather than the receivers it aborted.
      std::exception_ptr first;
      for (auto &e : errors) {
        if (!e) continue;
        try {
          std::rethrow_exception(e);
        } catch (const ProtocolError &) {
          if (!first) first = e;
        } catch (...) {
          first = e;
          break;
        }
      }
      if (first) std::rethrow_exception(first);
    }

    if (mb.pending() != 0) {
      throw ProtocolError(std::to_string(mb.pending()) + " message(s) left undelivered");
    }
    append_trace(mb.events(), mark, reverse);
  }

  // Appends this pass's sends to the trace in canonical ring order, which is
  // independent of thread interleaving.
  void append_trace(const std::vector<ProtocolEvent> &events, std::size_t mark, bool reverse) {
    const Topology &topo = w_.topology();
    std::vector<ProtocolEvent> sends;
    for (std::size_t i = mark; i < events.size(); ++i) {
      if (events[i].kind == EventKind::kSend) sends.push_back(events[i]);
    }
    auto key = [&](const ProtocolEvent &e) {
      return std::make_tuple(topo.group_of(e.rank), reverse ? -e.rank : e.rank, e.head);
    };
    std::sort(sends.begin(), sends.end(),
              [&](const ProtocolEvent &a, const ProtocolEvent &b) { return key(a) < key(b); });
    for (const auto &e : sends) {
      w_.trace_.append({0, e.rank, e.peer, e.tag, e.layer, e.head, e.elements,
                        e.elements * sizeof(double)});
    }
  }

  World &w_;
};

PerRankHeads run_forward(World &world, int layer) { return RingDriver(world).forward(layer); }

PerRankGrads run_backward(World &world, const PerRankHeads &d_o, int layer) {
  return RingDriver(world).backward(d_o, layer);
}

namespace {

std::vector<double> per_head_lambdas(const std::vector<double> &lambdas, int heads) {
  if (lambdas.size() == 1) return std::vector<double>(static_cast<std::size_t>(heads), lambdas[0]);
  if (lambdas.size() != static_cast<std::size_t>(heads)) {
    throw ShapeError(std::to_string(lambdas.size()) + " decay rates given for " +
                     std::to_string(heads) + " heads");
  }
  return lambdas;
}

}  // namespace

MultiheadResult multihead_run(const Matrix &q, const Matrix &k, const Matrix &v,
                              const MultiheadOptions &options, const Matrix *d_o) {
  if (!q.same_shape(k) || !q.same_shape(v)) {
    throw ShapeError("multihead_run: Q " + q.shape_string() + ", K " + k.shape_string() +
                     ", V " + v.shape_string() + " must share a shape");
  }
  const auto qh = split_heads(q, options.heads);
  const auto kh = split_heads(k, options.heads);
  const auto vh = split_heads(v, options.heads);
  const DistributionPlan plan =
      plan_distribution(q.rows(), options.sp_size, options.sp_size, /*batch_count=*/1);
  const std::size_t dh = q.cols() / static_cast<std::size_t>(options.heads);

  World world(plan.topology, plan.chunk_size, dh,
              {1, per_head_lambdas(options.lambdas, options.heads), options.schedule});
  for (int h = 0; h < options.heads; ++h) {
    const auto hs = static_cast<std::size_t>(h);
    const auto qs = scatter_sequence(qh[hs], plan, 0);
    const auto ks = scatter_sequence(kh[hs], plan, 0);
    const auto vs = scatter_sequence(vh[hs], plan, 0);
    for (std::size_t t = 0; t < qs.size(); ++t) {
      world.load_chunk(0, qs[t].rank, h, {qs[t].rows, ks[t].rows, vs[t].rows, qs[t].chunk_index});
    }
  }

  const std::size_t ranks = static_cast<std::size_t>(options.sp_size);
  auto assemble = [&](const std::function<const Matrix &(std::size_t rank, std::size_t head)> &at) {
    std::vector<Matrix> heads;
    for (std::size_t h = 0; h < static_cast<std::size_t>(options.heads); ++h) {
      std::vector<Matrix> chunks;
      for (std::size_t r = 0; r < ranks; ++r) chunks.push_back(at(r, h));
      heads.push_back(vstack(chunks));
    }
    return merge_heads(heads);
  };

  MultiheadResult result;
  const PerRankHeads outs = run_forward(world);
  result.output = assemble([&](std::size_t r, std::size_t h) -> const Matrix & { return outs[r][h]; });

  if (d_o != nullptr) {
    if (!d_o->same_shape(q)) {
      throw ShapeError("multihead_run: dO " + d_o->shape_string() + " vs Q " + q.shape_string());
    }
    const auto doh = split_heads(*d_o, options.heads);
    PerRankHeads per_rank(ranks);
    for (std::size_t h = 0; h < doh.size(); ++h) {
      for (const auto &c : scatter_sequence(doh[h], plan, 0)) {
        per_rank[static_cast<std::size_t>(c.rank)].push_back(c.rows);
      }
    }
    const PerRankGrads g = run_backward(world, per_rank);
    result.grads = Gradients{
        assemble([&](std::size_t r, std::size_t h) -> const Matrix & { return g[r][h].dq; }),
        assemble([&](std::size_t r, std::size_t h) -> const Matrix & { return g[r][h].dk; }),
        assemble([&](std::size_t r, std::size_t h) -> const Matrix & { return g[r][h].dv; })};
  }
  result.trace = world.trace();
  return result;
}

std::vector<Gradients> allreduce_mean_gradients(std::span<const Gradients> per_group) {
  if (per_group.empty()) throw ShapeError("allreduce_mean_gradients: no groups");
  const Gradients &first = per_group.front();
  for (std::size_t g = 1; g < per_group.size(); ++g) {
    const Gradients &other = per_group[g];
    if (!other.dq.same_shape(first.dq) || !other.dk.same_shape(first.dk) ||
        !other.dv.same_shape(first.dv)) {
      throw ShapeError("allreduce_mean_gradients: group " + std::to_string(g) +
                       " gradients are shaped differently from group 0");
    }
  }
  if (per_group.size() == 1) return {first};
  Gradients mean = first;
  for (std::size_t g = 1; g < per_group.size(); ++g) {
    mean.dq = add(mean.dq, per_group[g].dq);
    mean.dk = add(mean.dk, per_group[g].dk);
    mean.dv = add(mean.dv, per_group[g].dv);
  }
  const double inv = 1.0 / static_cast<double>(per_group.size());
  mean.dq = scale(mean.dq, inv);
  mean.dk = scale(mean.dk, inv);
  mean.dv = scale(mean.dv, inv);
  return std::vector<Gradients>(per_group.size(), mean);
}

SimulationResult simulate(const SimulationConfig &config, std::span<const Matrix> x,
                          const ProjectionWeights &weights, std::span<const Matrix> d_o) {
  if (x.empty()) throw ShapeError("simulate: no input batches");
  if (d_o.size() != x.size()) {
    throw ShapeError("simulate: " + std::to_string(d_o.size()) + " dO batches for " +
                     std::to_string(x.size()) + " input batches");
  }
  const std::size_t d = x.front().cols();
  for (std::size_t b = 0; b < x.size(); ++b) {
    if (x[b].rows() != config.seq_len || x[b].cols() != d || !d_o[b].same_shape(x[b])) {
      throw ShapeError("simulate: batch " + std::to_string(b) + " X " + x[b].shape_string() +
                       " / dO " + d_o[b].shape_string() + " do not match N=" +
                       std::to_string(config.seq_len) + ", d=" + std::to_string(d));
    }
  }
  weights.validate(d);
  if (config.heads < 1 || d % static_cast<std::size_t>(config.heads) != 0) {
    throw PartitionError("head count h=" + std::to_string(config.heads) +
                         " does not divide model dimension d=" + std::to_string(d));
  }

  SimulationResult result;
  result.plan = plan_distribution(config.seq_len, config.world_size, config.sp_size,
                                  static_cast<int>(x.size()));
  const DistributionPlan &plan = result.plan;
  const Topology &topo = plan.topology;
  const std::size_t dh = d / static_cast<std::size_t>(config.heads);
  World world(topo, plan.chunk_size, dh,
              {1, per_head_lambdas(config.lambdas, config.heads), config.schedule});

  result.outputs.resize(x.size());
  result.grads.resize(x.size());
  std::vector<std::optional<Gradients>> group_sums(static_cast<std::size_t>(topo.group_count));

  for (int round = 0; round < plan.round_count(); ++round) {
    world.clear_layer(0);
    std::vector<int> batches;
    for (int g = 0; g < topo.group_count; ++g) {
      const int b = round * topo.group_count + g;
      if (b < plan.batch_count) batches.push_back(b);
    }

    PerRankHeads d_o_ranks(static_cast<std::size_t>(topo.world_size));
    for (int b : batches) {
      const auto bs = static_cast<std::size_t>(b);
      // The group source rank splits X; every rank projects its own chunk.
      for (const RankChunk &c : scatter_sequence(x[bs], plan, b)) {
        auto per_head = project_qkv(c.rows, weights, config.heads, c.chunk_index);
        for (int h = 0; h < config.heads; ++h) {
          world.load_chunk(0, c.rank, h, std::move(per_head[static_cast<std::size_t>(h)]));
        }
      }
      for (const RankChunk &c : scatter_sequence(d_o[bs], plan, b)) {
        d_o_ranks[static_cast<std::size_t>(c.rank)] = split_heads(c.rows, config.heads);
      }
    }

    const PerRankHeads outs = run_forward(world);
    const PerRankGrads grads = run_backward(world, d_o_ranks);

    for (int b : batches) {
      const auto bs = static_cast<std::size_t>(b);
      std::vector<Matrix> o, dq, dk, dv;
      for (int rank : plan.placement[bs]) {
        const auto r = static_cast<std::size_t>(rank);
        o.push_back(merge_heads(outs[r]));
        std::vector<Matrix> q_parts, k_parts, v_parts;
        for (const auto &g : grads[r]) {
          q_parts.push_back(g.dq);
          k_parts.push_back(g.dk);
          v_parts.push_back(g.dv);
        }
        dq.push_back(merge_heads(q_parts));
        dk.push_back(merge_heads(k_parts));
        dv.push_back(merge_heads(v_parts));
      }
      result.outputs[bs] = vstack(o);
      result.grads[bs] = {vstack(dq), vstack(dk), vstack(dv)};

      auto &sum = group_sums[static_cast<std::size_t>(plan.group_for_batch(b))];
      if (!sum) {
        sum = result.grads[bs];
      } else {
        sum->dq = add(sum->dq, result.grads[bs].dq);
        sum->dk = add(sum->dk, result.grads[bs].dk);
        sum->dv = add(sum->dv, result.grads[bs].dv);
      }
    }
  }

  // Groups accumulate their own batches locally, then average across groups;
  // rescaling by G / B turns the mean of group sums into the mean over batches.
  std::vector<Gradients> sums;
  for (auto &s : group_sums) sums.push_back(std::move(*s));
  Gradients mean = allreduce_mean_gradients(sums).front();
  if (static_cast<int>(x.size()) != topo.group_count) {
    const double factor = static_cast<double>(topo.group_count) / static_cast<double>(x.size());
    mean = {scale(mean.dq, factor), scale(mean.dk, factor), scale(mean.dv, factor)};
  }
  result.mean_grads = std::move(mean);
  result.trace = world.trace();
  return result;
}

}  // namespace lasp
