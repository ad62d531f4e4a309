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

#ifndef LASP_RUNTIME_H_
#define LASP_RUNTIME_H_

#include <chrono>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "lasp/chunk_kernels.h"
#include "lasp/comm.h"
#include "lasp/reference.h"
#include "lasp/topology.h"

namespace lasp {

// kLockstep runs ranks one after another in ring order on the calling
// thread; kConcurrent gives every rank its own thread with blocking receives.
// Both issue identical kernel calls, so results agree bit-for-bit.
enum class Schedule { kLockstep, kConcurrent };

std::string_view schedule_name(Schedule s);
std::optional<Schedule> parse_schedule(std::string_view name);

template <typename T>
using LayerHeadGrid = std::vector<std::vector<T>>;  // [layer][head]

struct WorkerState {
  int rank = 0;
  int group = 0;
  int local_index = 0;
  LayerHeadGrid<std::optional<ChunkInputs>> inputs;
  LayerHeadGrid<std::optional<KvState>> kv_cache;
  LayerHeadGrid<std::optional<Matrix>> outputs;
};

struct WorldOptions {
  int num_layers = 1;
  // One decay rate per head; the head count is lambdas.size().
  std::vector<double> lambdas = {1.0};
  Schedule schedule = Schedule::kLockstep;
  // Receive budget in concurrent mode before reporting a protocol error.
  std::chrono::milliseconds recv_timeout{30000};
};

// W simulated workers plus the transport between them.
class World {
 public:
  World(Topology topology, std::size_t chunk_size, std::size_t head_dim, WorldOptions options);

  const Topology &topology() const { return topology_; }
  const WorldOptions &options() const { return options_; }
  std::size_t chunk_size() const { return chunk_size_; }
  std::size_t head_dim() const { return head_dim_; }
  int num_heads() const { return static_cast<int>(options_.lambdas.size()); }
  int num_layers() const { return options_.num_layers; }

  WorkerState &worker(int rank) { return workers_.at(static_cast<std::size_t>(rank)); }
  const WorkerState &worker(int rank) const {
    return workers_.at(static_cast<std::size_t>(rank));
  }
  const DecayStructures &decay(int head) const {
    return decay_.at(static_cast<std::size_t>(head));
  }

  // Installs a rank's chunk for (layer, head) and drops any state cached
  // from an earlier forward on that slot.
  void load_chunk(int layer, int rank, int head, ChunkInputs ci);
  // Drops every rank's inputs, cached states and outputs for `layer`.
  void clear_layer(int layer);

  const CommTrace &trace() const { return trace_; }
  Mailbox &mailbox() { return mailbox_; }
  const Mailbox &mailbox() const { return mailbox_; }

 private:
  friend class RingDriver;

  Topology topology_;
  std::size_t chunk_size_;
  std::size_t head_dim_;
  WorldOptions options_;
  std::vector<DecayStructures> decay_;
  std::vector<WorkerState> workers_;
  Mailbox mailbox_;
  CommTrace trace_;
};

using PerRankHeads = std::vector<std::vector<Matrix>>;  // [rank][head]
using PerRankGrads = std::vector<std::vector<Gradients>>;

// Groups whose ranks hold no inputs for the layer sit the pass out; a group
// with only some ranks loaded is a StateError.
//
// Forward pass: intra-chunk outputs for every rank first, then the KV ring
// (rank i receives KV_{t-1} from i - 1, caches it, adds the inter-chunk
// term, updates and sends KV_t to i + 1). Group-first ranks start from zero.
PerRankHeads run_forward(World &world, int layer = 0);

// Backward pass: intra terms and the cached-KV dQ term first, then the dKV
// ring in reverse (rank i receives dKV_{t+1} from i + 1 and sends dKV_t to
// i - 1). Group-last ranks start from zero. StateError if the forward for
// this layer has not run.
PerRankGrads run_backward(World &world, const PerRankHeads &d_o, int layer = 0);

// Splits Q, K, V (N x d) into `heads` column blocks, distributes each over a
// single group of T ranks and returns the merged per-head results.
struct MultiheadOptions {
  int heads = 1;
  int sp_size = 1;
  std::vector<double> lambdas = {1.0};  // size 1 (shared) or `heads`
  Schedule schedule = Schedule::kLockstep;
};

struct MultiheadResult {
  Matrix output;
  std::optional<Gradients> grads;
  CommTrace trace;
};

MultiheadResult multihead_run(const Matrix &q, const Matrix &k, const Matrix &v,
                              const MultiheadOptions &options, const Matrix *d_o = nullptr);

// Elementwise mean over groups, returned once per group.
std::vector<Gradients> allreduce_mean_gradients(std::span<const Gradients> per_group);

// Full pipeline for data-sequence hybrid parallelism: per batch, scatter X to
// its group, project Q/K/V on each rank, run forward and backward, then
// average the Q/K/V gradients across groups.
struct SimulationConfig {
  std::size_t seq_len = 0;
  int world_size = 1;
  int sp_size = 1;
  int heads = 1;
  std::vector<double> lambdas = {1.0};
  Schedule schedule = Schedule::kLockstep;
};

struct SimulationResult {
  DistributionPlan plan;
  std::vector<Matrix> outputs;       // per batch, N x d
  std::vector<Gradients> grads;      // per batch, N x d each
  Gradients mean_grads;              // mean over batches via group allreduce
  CommTrace trace;
};

SimulationResult simulate(const SimulationConfig &config, std::span<const Matrix> x,
                          const ProjectionWeights &weights, std::span<const Matrix> d_o);

}  // namespace lasp

#endif  // LASP_RUNTIME_H_
