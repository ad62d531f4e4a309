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

#include "lasp/topology.h"

#include <algorithm>
#include <string>

#include "lasp/errors.h"

namespace lasp {

Topology Topology::Make(int world_size, int sp_size) {
  if (world_size < 1 || sp_size < 1) {
    throw PartitionError("world size " + std::to_string(world_size) +
                         " and sequence parallel size " + std::to_string(sp_size) +
                         " must be positive");
  }
  if (world_size % sp_size != 0) {
    throw PartitionError("sequence parallel size T=" + std::to_string(sp_size) +
                         " does not divide world size W=" + std::to_string(world_size));
  }
  return Topology{world_size, sp_size, world_size / sp_size};
}

std::vector<int> Topology::src_ranks() const {
  std::vector<int> out;
  for (int g = 0; g < group_count; ++g) out.push_back(g * sp_size);
  return out;
}

std::vector<int> Topology::group_ranks(int group) const {
  std::vector<int> out;
  for (int i = 0; i < sp_size; ++i) out.push_back(group * sp_size + i);
  return out;
}

DistributionPlan plan_distribution(std::size_t seq_len, int world_size, int sp_size,
                                   int batch_count) {
  DistributionPlan plan;
  plan.topology = Topology::Make(world_size, sp_size);
  if (seq_len == 0 || seq_len % static_cast<std::size_t>(sp_size) != 0) {
    throw PartitionError("sequence parallel size T=" + std::to_string(sp_size) +
                         " does not divide sequence length N=" + std::to_string(seq_len));
  }
  if (batch_count < plan.topology.group_count) {
    throw PartitionError("batch count " + std::to_string(batch_count) +
                         " is smaller than group count G=" +
                         std::to_string(plan.topology.group_count));
  }
  plan.seq_len = seq_len;
  plan.chunk_size = seq_len / static_cast<std::size_t>(sp_size);
  plan.batch_count = batch_count;
  for (int b = 0; b < batch_count; ++b) {
    const int src = plan.group_for_batch(b) * sp_size;
    std::vector<int> ranks(static_cast<std::size_t>(sp_size));
    for (int t = 0; t < sp_size; ++t) ranks[static_cast<std::size_t>(t)] = src + t;
    plan.placement.push_back(std::move(ranks));
  }
  return plan;
}

std::vector<RankChunk> scatter_sequence(const Matrix &x, const DistributionPlan &plan,
                                        int batch) {
  if (x.rows() != plan.seq_len) {
    throw ShapeError("scatter_sequence: input " + x.shape_string() +
                     " does not have the planned " + std::to_string(plan.seq_len) + " rows");
  }
  if (batch < 0 || batch >= plan.batch_count) {
    throw ShapeError("scatter_sequence: batch " + std::to_string(batch) + " not in plan");
  }
  std::vector<RankChunk> out;
  const auto &ranks = plan.placement[static_cast<std::size_t>(batch)];
  for (std::size_t t = 0; t < ranks.size(); ++t) {
    out.push_back({ranks[t], t + 1, x.row_block(t * plan.chunk_size, plan.chunk_size)});
  }
  return out;
}

Matrix gather_sequence(std::span<const RankChunk> chunks) {
  std::vector<const RankChunk *> ordered;
  for (const auto &c : chunks) ordered.push_back(&c);
  std::sort(ordered.begin(), ordered.end(),
            [](const RankChunk *a, const RankChunk *b) { return a->chunk_index < b->chunk_index; });
  std::vector<Matrix> parts;
  for (const auto *c : ordered) parts.push_back(c->rows);
  return vstack(parts);
}

void ProjectionWeights::validate(std::size_t model_dim) const {
  for (const Matrix *w : {&wq, &wk, &wv}) {
    if (w->rows() != model_dim || w->cols() != model_dim) {
      throw ShapeError("projection weight " + w->shape_string() + " is not " +
                       std::to_string(model_dim) + "x" + std::to_string(model_dim));
    }
  }
}

std::vector<Matrix> split_heads(const Matrix &x, int heads) {
  if (heads < 1 || x.cols() % static_cast<std::size_t>(heads) != 0) {
    throw PartitionError("head count h=" + std::to_string(heads) +
                         " does not divide model dimension d=" + std::to_string(x.cols()));
  }
  const std::size_t dh = x.cols() / static_cast<std::size_t>(heads);
  std::vector<Matrix> out;
  for (int h = 0; h < heads; ++h) out.push_back(x.col_block(static_cast<std::size_t>(h) * dh, dh));
  return out;
}

Matrix merge_heads(std::span<const Matrix> per_head) { return hstack(per_head); }

std::vector<ChunkInputs> project_qkv(const Matrix &x_chunk, const ProjectionWeights &w,
                                     int heads, std::size_t chunk_index) {
  w.validate(x_chunk.cols());
  auto q = split_heads(matmul(x_chunk, w.wq), heads);
  auto k = split_heads(matmul(x_chunk, w.wk), heads);
  auto v = split_heads(matmul(x_chunk, w.wv), heads);
  std::vector<ChunkInputs> out;
  for (std::size_t h = 0; h < q.size(); ++h) {
    out.push_back({std::move(q[h]), std::move(k[h]), std::move(v[h]), chunk_index});
  }
  return out;
}

}  // namespace lasp
