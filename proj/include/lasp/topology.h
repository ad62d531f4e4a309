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

#ifndef LASP_TOPOLOGY_H_
#define LASP_TOPOLOGY_H_

#include <span>
#include <vector>

#include "lasp/chunk_kernels.h"
#include "lasp/matrix.h"

namespace lasp {

// W ranks arranged in G = W / T sequence-parallel groups of T ranks each.
// Ranks are 0-based; the rank at local index t - 1 of a group holds the
// group's 1-based chunk t.
struct Topology {
  int world_size = 1;
  int sp_size = 1;
  int group_count = 1;

  // Throws PartitionError unless T divides W (both positive).
  static Topology Make(int world_size, int sp_size);

  int group_of(int rank) const { return rank / sp_size; }
  int local_index(int rank) const { return rank % sp_size; }
  // First rank of the rank's group (floor(rank / T) * T).
  int src_rank(int rank) const { return group_of(rank) * sp_size; }
  bool is_group_first(int rank) const { return local_index(rank) == 0; }
  bool is_group_last(int rank) const { return local_index(rank) == sp_size - 1; }

  std::vector<int> src_ranks() const;
  std::vector<int> group_ranks(int group) const;
};

// Placement of every (batch, chunk) pair on a global rank. Batches are dealt
// round-robin to groups: batch b goes to group b mod G and is processed in
// round b / G.
struct DistributionPlan {
  Topology topology;
  std::size_t seq_len = 0;
  std::size_t chunk_size = 0;
  int batch_count = 0;
  // placement[b][t - 1] = global rank holding chunk t of batch b.
  std::vector<std::vector<int>> placement;

  int group_for_batch(int batch) const { return batch % topology.group_count; }
  int round_for_batch(int batch) const { return batch / topology.group_count; }
  int round_count() const {
    return (batch_count + topology.group_count - 1) / topology.group_count;
  }
};

// Requires T | W, T | N and batch_count >= G.
DistributionPlan plan_distribution(std::size_t seq_len, int world_size, int sp_size,
                                   int batch_count);

struct RankChunk {
  int rank = 0;
  std::size_t chunk_index = 1;  // 1-based
  Matrix rows;
};

// Splits one batch's N x d input into T row blocks, one per rank of the
// batch's group.
std::vector<RankChunk> scatter_sequence(const Matrix &x, const DistributionPlan &plan,
                                        int batch);

// Concatenates chunks in chunk order.
Matrix gather_sequence(std::span<const RankChunk> chunks);

struct ProjectionWeights {
  Matrix wq;
  Matrix wk;
  Matrix wv;

  void validate(std::size_t model_dim) const;
};

// Column blocks of width d / heads; PartitionError unless heads | d.
std::vector<Matrix> split_heads(const Matrix &x, int heads);
Matrix merge_heads(std::span<const Matrix> per_head);

// Q = X W_Q, K = X W_K, V = X W_V for one chunk, split into per-head inputs.
std::vector<ChunkInputs> project_qkv(const Matrix &x_chunk, const ProjectionWeights &w,
                                     int heads, std::size_t chunk_index = 1);

}  // namespace lasp

#endif  // LASP_TOPOLOGY_H_
