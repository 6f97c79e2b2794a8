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

#include "magiplan/dispatch.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>

#include <json.hpp>

#include "magiplan/errors.hpp"

namespace magiplan {

PairCount DispatchPlan::max_workload() const {
  PairCount m = 0;
  for (PairCount w : bucket_workloads) m = std::max(m, w);
  return m;
}

std::vector<std::vector<std::int64_t>> DispatchPlan::chunks_of_buckets() const {
  std::vector<std::vector<std::int64_t>> buckets(
      static_cast<std::size_t>(cp_size));
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    buckets[static_cast<std::size_t>(assignment[i])].push_back(
        static_cast<std::int64_t>(i));
  }
  return buckets;
}

std::vector<TokenRange> DispatchPlan::rows_of_bucket(RankIndex bucket) const {
  std::vector<TokenRange> rows;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == bucket) {
      const TokenIndex start = static_cast<TokenIndex>(i) * chunk_size;
      rows.push_back({start, start + chunk_size});
    }
  }
  return rows;
}

void DispatchPlan::check_valid() const {
  MAGIPLAN_INTERNAL_CHECK(cp_size >= 1, "plan cp_size must be >= 1");
  MAGIPLAN_INTERNAL_CHECK(
      assignment.size() % static_cast<std::size_t>(cp_size) == 0,
      "chunk count not divisible by cp_size");
  const std::size_t per_bucket = assignment.size() / static_cast<std::size_t>(cp_size);
  std::vector<std::size_t> counts(static_cast<std::size_t>(cp_size), 0);
  for (RankIndex b : assignment) {
    MAGIPLAN_INTERNAL_CHECK(b >= 0 && b < cp_size, "bucket ordinal out of range");
    counts[static_cast<std::size_t>(b)]++;
  }
  for (std::size_t c : counts) {
    MAGIPLAN_INTERNAL_CHECK(c == per_bucket,
                            "buckets must hold the same number of chunks");
  }
}

std::vector<DispatchChunk> shard_into_chunks(const AttnMask& mask,
                                             TokenIndex dispatch_chunk_size) {
  if (dispatch_chunk_size <= 0) {
    throw ConstraintError("dispatch_chunk_size must be positive");
  }
  if (mask.seqlen_q % dispatch_chunk_size != 0) {
    throw ConstraintError(
        "constraint violated: seqlen % dispatch_chunk_size = 0 (seqlen " +
        std::to_string(mask.seqlen_q) + ", dispatch_chunk_size " +
        std::to_string(dispatch_chunk_size) + ")");
  }
  const std::int64_t n = mask.seqlen_q / dispatch_chunk_size;
  std::vector<DispatchChunk> chunks(static_cast<std::size_t>(n));
  const std::vector<PairCount> row_counts = per_row_union_counts(mask);
  for (std::int64_t i = 0; i < n; ++i) {
    DispatchChunk& c = chunks[static_cast<std::size_t>(i)];
    c.index = i;
    c.rows = {i * dispatch_chunk_size, (i + 1) * dispatch_chunk_size};
    c.area = 0;
    for (TokenIndex q = c.rows.start; q < c.rows.end; ++q) {
      c.area += row_counts[static_cast<std::size_t>(q)];
    }
  }
  return chunks;
}

namespace {

void check_dispatch_inputs(const std::vector<DispatchChunk>& chunks,
                           RankIndex cp_size) {
  if (cp_size <= 0) {
    throw ConstraintError("cp_size must be positive");
  }
  if (chunks.empty() ||
      chunks.size() % static_cast<std::size_t>(cp_size) != 0) {
    throw ConstraintError(
        "constraint violated: seqlen % (cp_size * dispatch_chunk_size) = 0 "
        "(n_chunks " +
        std::to_string(chunks.size()) + ", cp_size " + std::to_string(cp_size) +
        ")");
  }
}

DispatchPlan make_plan(const std::vector<DispatchChunk>& chunks,
                       RankIndex cp_size,
                       const std::vector<RankIndex>& assignment) {
  DispatchPlan plan;
  plan.cp_size = cp_size;
  plan.chunk_size = chunks.empty() ? 0 : chunks.front().rows.length();
  plan.assignment = assignment;
  plan.bucket_workloads.assign(static_cast<std::size_t>(cp_size), 0);
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    plan.bucket_workloads[static_cast<std::size_t>(assignment[i])] +=
        chunks[i].area;
  }
  plan.check_valid();
  return plan;
}

}  // namespace

DispatchPlan greedy_dispatch(const std::vector<DispatchChunk>& chunks,
                             RankIndex cp_size) {
  check_dispatch_inputs(chunks, cp_size);
  const std::int64_t n = static_cast<std::int64_t>(chunks.size());
  const std::int64_t chunk_per_bucket = n / cp_size;

  std::vector<std::size_t> order(chunks.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (chunks[a].area != chunks[b].area) return chunks[a].area > chunks[b].area;
    return chunks[a].index < chunks[b].index;
  });

  using HeapItem = std::pair<PairCount, RankIndex>;  // (workload, bucket)
  std::priority_queue<HeapItem, std::vector<HeapItem>, std::greater<HeapItem>>
      heap;
  for (RankIndex j = 0; j < cp_size; ++j) heap.emplace(0, j);

  std::vector<std::int64_t> counts(static_cast<std::size_t>(cp_size), 0);
  std::vector<PairCount> workloads(static_cast<std::size_t>(cp_size), 0);
  std::vector<RankIndex> assignment(chunks.size(), 0);

  std::vector<HeapItem> set_aside;
  for (std::size_t idx : order) {
    set_aside.clear();
    HeapItem item;
    // select least-loaded bucket that is not full
    for (;;) {
      item = heap.top();
      heap.pop();
      if (counts[static_cast<std::size_t>(item.second)] < chunk_per_bucket) break;
      set_aside.push_back(item);
    }
    const RankIndex j = item.second;
    assignment[idx] = j;
    workloads[static_cast<std::size_t>(j)] += chunks[idx].area;
    counts[static_cast<std::size_t>(j)] += 1;
    heap.emplace(workloads[static_cast<std::size_t>(j)], j);
    for (const HeapItem& it : set_aside) heap.push(it);
  }

  return make_plan(chunks, cp_size, assignment);
}

namespace {

struct BruteState {
  const std::vector<DispatchChunk>* chunks = nullptr;
  RankIndex cp_size = 0;
  std::int64_t chunk_per_bucket = 0;
  std::vector<RankIndex> current;
  std::vector<PairCount> workloads;
  std::vector<std::int64_t> counts;
  std::vector<RankIndex> best;
  PairCount best_max = 0;

  void search(std::size_t i, PairCount current_max) {
    if (current_max >= best_max) return;  // cannot improve
    if (i == chunks->size()) {
      best_max = current_max;
      best = current;
      return;
    }
    const PairCount area = (*chunks)[i].area;
    for (RankIndex j = 0; j < cp_size; ++j) {
      if (counts[static_cast<std::size_t>(j)] == chunk_per_bucket) continue;
      current[i] = j;
      counts[static_cast<std::size_t>(j)]++;
      workloads[static_cast<std::size_t>(j)] += area;
      search(i + 1, std::max(current_max, workloads[static_cast<std::size_t>(j)]));
      workloads[static_cast<std::size_t>(j)] -= area;
      counts[static_cast<std::size_t>(j)]--;
      // buckets are interchangeable: never open more than one empty bucket
      if (counts[static_cast<std::size_t>(j)] == 0) break;
    }
  }
};

}  // namespace

DispatchPlan brute_force_dispatch(const std::vector<DispatchChunk>& chunks,
                                  RankIndex cp_size) {
  check_dispatch_inputs(chunks, cp_size);
  if (chunks.size() > 16 || cp_size > 4) {
    throw UsageError("brute_force_dispatch is guarded to n <= 16, cp_size <= 4");
  }
  BruteState state;
  state.chunks = &chunks;
  state.cp_size = cp_size;
  state.chunk_per_bucket = static_cast<std::int64_t>(chunks.size()) / cp_size;
  state.current.assign(chunks.size(), 0);
  state.workloads.assign(static_cast<std::size_t>(cp_size), 0);
  state.counts.assign(static_cast<std::size_t>(cp_size), 0);
  state.best_max = std::numeric_limits<PairCount>::max();
  state.search(0, 0);
  return make_plan(chunks, cp_size, state.best);
}

DispatchPlan zigzag_dispatch(const std::vector<DispatchChunk>& chunks,
                             RankIndex cp_size) {
  check_dispatch_inputs(chunks, cp_size);
  const std::int64_t n = static_cast<std::int64_t>(chunks.size());
  if (n % (2 * static_cast<std::int64_t>(cp_size)) != 0) {
    throw ConstraintError(
        "zigzag sharding needs n_chunks to be a multiple of 2 * cp_size "
        "(n_chunks " +
        std::to_string(n) + ", cp_size " + std::to_string(cp_size) + ")");
  }
  std::vector<RankIndex> assignment(chunks.size(), 0);
  for (std::int64_t i = 0; i < n / 2; ++i) {
    const RankIndex bucket = static_cast<RankIndex>(i % cp_size);
    assignment[static_cast<std::size_t>(i)] = bucket;
    assignment[static_cast<std::size_t>(n - 1 - i)] = bucket;
  }
  return make_plan(chunks, cp_size, assignment);
}

AttnMask local_mask_of_rank(const AttnMask& mask, const DispatchPlan& plan,
                            RankIndex rank) {
  if (rank < 0 || rank >= plan.cp_size) {
    throw UsageError("rank " + std::to_string(rank) + " out of range for cp_size " +
                     std::to_string(plan.cp_size));
  }
  return restrict_rows(mask, plan.rows_of_bucket(rank));
}

TokenIndex default_dispatch_chunk_size(TokenIndex seqlen_q, RankIndex cp_size) {
  return std::max<TokenIndex>(1, seqlen_q / cp_size / 8);
}

std::string plan_to_json(const DispatchPlan& plan) {
  nlohmann::ordered_json j;
  j["cp_size"] = plan.cp_size;
  j["chunk_size"] = plan.chunk_size;
  j["buckets"] = nlohmann::ordered_json::array();
  const auto buckets = plan.chunks_of_buckets();
  for (RankIndex b = 0; b < plan.cp_size; ++b) {
    nlohmann::ordered_json jb;
    jb["rank"] = b;
    jb["chunks"] = buckets[static_cast<std::size_t>(b)];
    jb["workload"] = plan.bucket_workloads[static_cast<std::size_t>(b)];
    j["buckets"].push_back(jb);
  }
  j["max_workload"] = plan.max_workload();
  return j.dump();
}

}  // namespace magiplan
