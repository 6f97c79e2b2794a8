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

#include "magiplan/dispatch.hpp"
#include "magiplan/mask.hpp"

namespace magiplan {

/// Demand set of one key/value chunk: which remote ranks need it. Key/value
/// tokens are hosted by the rank that owns the same chunk's queries.
struct KvDemand {
  std::int64_t kv_chunk = 0;
  RankIndex host_rank = 0;
  std::vector<RankIndex> consumers;  // sorted, never contains host_rank
};

enum class TransferDirection { GROUP_CAST, GROUP_REDUCE };

/// One coalesced wire entry: a token range moving from src_rank to every rank
/// in dest_ranks (cast), or from src_rank back to the reduce host (reduce).
struct TransferEntry {
  TokenRange tokens;
  std::vector<RankIndex> dest_ranks;  // sorted, non-empty
};

struct TransferTable {
  TransferDirection direction = TransferDirection::GROUP_CAST;
  RankIndex cp_size = 1;
  /// entries[src_rank], sorted by token range start.
  std::vector<std::vector<TransferEntry>> entries;

  /// token * transfer count: every (range, dest) edge counts range length.
  std::int64_t total_token_transfers() const;
  std::int64_t send_tokens_of_rank(RankIndex rank) const;
  std::int64_t recv_tokens_of_rank(RankIndex rank) const;
  /// Token ranges arriving at `rank`, sorted by (source, range start).
  std::vector<TokenRange> incoming_ranges_of_rank(RankIndex rank) const;
};

struct RedundancyReport {
  std::int64_t sent_ring = 0;   // token transfers of the ring baseline
  std::int64_t needed = 0;      // distinct demand volume
  std::int64_t sent_group = 0;  // group-cast volume; equals needed
  double redundancy_ratio = 0.0;
};

/// Exact demand sets from UNION membership: consumers of a KV chunk are the
/// ranks (other than the host) owning at least one query row that attends at
/// least one key column of the chunk.
std::vector<KvDemand> compute_kv_demands(const AttnMask& mask,
                                         const DispatchPlan& plan);

/// Group-cast table (host -> consumers, per KV chunk, adjacent ranges with
/// identical destination sets coalesced) and its exact transpose, the
/// group-reduce table (consumer -> host, same ranges).
std::pair<TransferTable, TransferTable> build_transfer_tables(
    const std::vector<KvDemand>& demands, TokenIndex chunk_size,
    RankIndex cp_size);

/// Ring point-to-point baseline: every KV shard traverses cp_size - 1 hops.
std::int64_t ring_baseline_volume(const DispatchPlan& plan);

RedundancyReport redundancy_report(const AttnMask& mask,
                                   const DispatchPlan& plan);

/// JSON export of a transfer table with byte volumes at the given per-token
/// byte width.
std::string transfer_table_to_json(const TransferTable& table,
                                   std::int64_t bytes_per_token);

}  // namespace magiplan
