/**********************************************************************************
 * Copyright (c) 2025-2026 SandAI. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *********************************************************************************/

#pragma once

#include <string>
#include <vector>

#include "magiplan/mask.hpp"

namespace magiplan {

/// One fixed-length block of query rows and its exact workload (distinct
/// allowed pairs whose query lies in the block).
struct DispatchChunk {
  std::int64_t index = 0;
  TokenRange rows;
  PairCount area = 0;
};

/// Assignment of dispatch chunks to context-parallel buckets, one bucket per
/// rank, all buckets holding exactly n / cp_size chunks.
struct DispatchPlan {
  RankIndex cp_size = 1;
  TokenIndex chunk_size = 0;
  std::vector<RankIndex> assignment;        // chunk ordinal -> bucket
  std::vector<PairCount> bucket_workloads;  // summed chunk areas per bucket

  PairCount max_workload() const;
  std::vector<std::vector<std::int64_t>> chunks_of_buckets() const;
  /// Query row ranges owned by one bucket, in chunk order.
  std::vector<TokenRange> rows_of_bucket(RankIndex bucket) const;

  void check_valid() const;
};

/// Even query-dimension partition into seqlen_q / chunk_size chunks with
/// exact areas. ConstraintError when chunk_size does not divide seqlen_q.
std::vector<DispatchChunk> shard_into_chunks(const AttnMask& mask,
                                             TokenIndex dispatch_chunk_size);

/// Min-heap greedy: chunks sorted by descending area (ties: lower chunk
/// index) are placed on the least-loaded non-full bucket (ties: lower bucket
/// index). Deterministic. ConstraintError if cp_size does not divide n.
DispatchPlan greedy_dispatch(const std::vector<DispatchChunk>& chunks,
                             RankIndex cp_size);

/// Exhaustive minimizer of the max bucket workload under the equal-cardinality
/// constraint. Guarded to n <= 16 and cp_size <= 4; test oracle only.
DispatchPlan brute_force_dispatch(const std::vector<DispatchChunk>& chunks,
                                  RankIndex cp_size);

/// Causal-mask folding: pair (i, n-1-i) goes to bucket (i mod cp_size).
/// Requires n to be a multiple of 2 * cp_size.
DispatchPlan zigzag_dispatch(const std::vector<DispatchChunk>& chunks,
                             RankIndex cp_size);

/// The mask this rank's kernel would execute: the global mask restricted to
/// the rank's chunk rows.
AttnMask local_mask_of_rank(const AttnMask& mask, const DispatchPlan& plan,
                            RankIndex rank);

/// Default chunk granularity: 1/8 of the per-rank sequence, clamped to >= 1.
TokenIndex default_dispatch_chunk_size(TokenIndex seqlen_q, RankIndex cp_size);

/// JSON export: rank -> chunk ordinals, per-bucket workloads, global max.
std::string plan_to_json(const DispatchPlan& plan);

}  // namespace magiplan
