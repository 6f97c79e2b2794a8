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

#include "magiplan/comm.hpp"

#include <algorithm>
#include <map>

#include <json.hpp>

#include "magiplan/errors.hpp"

namespace magiplan {

std::int64_t TransferTable::total_token_transfers() const {
  std::int64_t total = 0;
  for (const auto& per_src : entries) {
    for (const TransferEntry& e : per_src) {
      total += e.tokens.length() * static_cast<std::int64_t>(e.dest_ranks.size());
    }
  }
  return total;
}

std::int64_t TransferTable::send_tokens_of_rank(RankIndex rank) const {
  std::int64_t total = 0;
  for (const TransferEntry& e : entries[static_cast<std::size_t>(rank)]) {
    total += e.tokens.length() * static_cast<std::int64_t>(e.dest_ranks.size());
  }
  return total;
}

std::int64_t TransferTable::recv_tokens_of_rank(RankIndex rank) const {
  std::int64_t total = 0;
  for (const auto& per_src : entries) {
    for (const TransferEntry& e : per_src) {
      if (std::binary_search(e.dest_ranks.begin(), e.dest_ranks.end(), rank)) {
        total += e.tokens.length();
      }
    }
  }
  return total;
}

std::vector<TokenRange> TransferTable::incoming_ranges_of_rank(
    RankIndex rank) const {
  std::vector<TokenRange> ranges;
  for (const auto& per_src : entries) {
    for (const TransferEntry& e : per_src) {
      if (std::binary_search(e.dest_ranks.begin(), e.dest_ranks.end(), rank)) {
        ranges.push_back(e.tokens);
      }
    }
  }
  return ranges;
}

std::vector<KvDemand> compute_kv_demands(const AttnMask& mask,
                                         const DispatchPlan& plan) {
  const std::int64_t n = static_cast<std::int64_t>(plan.assignment.size());
  if (n * plan.chunk_size != mask.seqlen_q || mask.seqlen_q != mask.seqlen_k) {
    throw UsageError(
        "plan covers " + std::to_string(n * plan.chunk_size) +
        " tokens but mask is " + std::to_string(mask.seqlen_q) + "x" +
        std::to_string(mask.seqlen_k));
  }
  const TokenIndex cs = plan.chunk_size;

  // consumer flag per (kv chunk, rank), filled by one row sweep
  std::vector<std::uint8_t> flags(
      static_cast<std::size_t>(n) * static_cast<std::size_t>(plan.cp_size), 0);
  for_each_row_union(mask, [&](TokenIndex q, const std::vector<TokenRange>& ivs) {
    const RankIndex owner = plan.assignment[static_cast<std::size_t>(q / cs)];
    for (const TokenRange& iv : ivs) {
      const std::int64_t first = iv.start / cs;
      const std::int64_t last = (iv.end - 1) / cs;
      for (std::int64_t kc = first; kc <= last; ++kc) {
        flags[static_cast<std::size_t>(kc) * plan.cp_size +
              static_cast<std::size_t>(owner)] = 1;
      }
    }
  });

  std::vector<KvDemand> demands(static_cast<std::size_t>(n));
  for (std::int64_t kc = 0; kc < n; ++kc) {
    KvDemand& d = demands[static_cast<std::size_t>(kc)];
    d.kv_chunk = kc;
    d.host_rank = plan.assignment[static_cast<std::size_t>(kc)];
    for (RankIndex r = 0; r < plan.cp_size; ++r) {
      if (r == d.host_rank) continue;
      if (flags[static_cast<std::size_t>(kc) * plan.cp_size +
                static_cast<std::size_t>(r)]) {
        d.consumers.push_back(r);
      }
    }
  }
  return demands;
}

std::pair<TransferTable, TransferTable> build_transfer_tables(
    const std::vector<KvDemand>& demands, TokenIndex chunk_size,
    RankIndex cp_size) {
  TransferTable cast;
  cast.direction = TransferDirection::GROUP_CAST;
  cast.cp_size = cp_size;
  cast.entries.resize(static_cast<std::size_t>(cp_size));

  // per source rank, chunk entries in token order; coalesce adjacent ranges
  // with identical destination sets
  for (const KvDemand& d : demands) {
    if (d.consumers.empty()) continue;
    const TokenRange tokens{d.kv_chunk * chunk_size,
                            (d.kv_chunk + 1) * chunk_size};
    auto& per_src = cast.entries[static_cast<std::size_t>(d.host_rank)];
    if (!per_src.empty() && per_src.back().tokens.end == tokens.start &&
        per_src.back().dest_ranks == d.consumers) {
      per_src.back().tokens.end = tokens.end;
    } else {
      per_src.push_back({tokens, d.consumers});
    }
  }

  TransferTable reduce;
  reduce.direction = TransferDirection::GROUP_REDUCE;
  reduce.cp_size = cp_size;
  reduce.entries.resize(static_cast<std::size_t>(cp_size));
  // transpose: each consumer sends the same range back to the host
  std::vector<std::vector<TransferEntry>> raw(static_cast<std::size_t>(cp_size));
  for (RankIndex src = 0; src < cp_size; ++src) {
    for (const TransferEntry& e : cast.entries[static_cast<std::size_t>(src)]) {
      for (RankIndex dest : e.dest_ranks) {
        raw[static_cast<std::size_t>(dest)].push_back({e.tokens, {src}});
      }
    }
  }
  for (RankIndex src = 0; src < cp_size; ++src) {
    auto& per_src = raw[static_cast<std::size_t>(src)];
    std::sort(per_src.begin(), per_src.end(),
              [](const TransferEntry& a, const TransferEntry& b) {
                return a.tokens.start < b.tokens.start;
              });
    for (const TransferEntry& e : per_src) {
      auto& out = reduce.entries[static_cast<std::size_t>(src)];
      if (!out.empty() && out.back().tokens.end == e.tokens.start &&
          out.back().dest_ranks == e.dest_ranks) {
        out.back().tokens.end = e.tokens.end;
      } else {
        out.push_back(e);
      }
    }
  }

  MAGIPLAN_INTERNAL_CHECK(
      cast.total_token_transfers() == reduce.total_token_transfers(),
      "group-reduce volume must equal group-cast volume");
  return {cast, reduce};
}

std::int64_t ring_baseline_volume(const DispatchPlan& plan) {
  const std::int64_t total_kv_tokens =
      static_cast<std::int64_t>(plan.assignment.size()) * plan.chunk_size;
  return static_cast<std::int64_t>(plan.cp_size - 1) * total_kv_tokens;
}

RedundancyReport redundancy_report(const AttnMask& mask,
                                   const DispatchPlan& plan) {
  const auto demands = compute_kv_demands(mask, plan);
  RedundancyReport report;
  report.sent_ring = ring_baseline_volume(plan);
  for (const KvDemand& d : demands) {
    report.needed +=
        plan.chunk_size * static_cast<std::int64_t>(d.consumers.size());
  }
  report.sent_group = report.needed;
  report.redundancy_ratio =
      report.sent_ring == 0
          ? 0.0
          : static_cast<double>(report.sent_ring - report.needed) /
                static_cast<double>(report.sent_ring);
  MAGIPLAN_INTERNAL_CHECK(report.sent_ring >= report.needed,
                          "ring volume below demand volume");
  return report;
}

std::string transfer_table_to_json(const TransferTable& table,
                                   std::int64_t bytes_per_token) {
  nlohmann::ordered_json j;
  j["direction"] = table.direction == TransferDirection::GROUP_CAST
                       ? "group_cast"
                       : "group_reduce";
  j["cp_size"] = table.cp_size;
  j["bytes_per_token"] = bytes_per_token;
  j["sources"] = nlohmann::ordered_json::array();
  for (RankIndex src = 0; src < table.cp_size; ++src) {
    nlohmann::ordered_json js;
    js["rank"] = src;
    js["entries"] = nlohmann::ordered_json::array();
    for (const TransferEntry& e : table.entries[static_cast<std::size_t>(src)]) {
      nlohmann::ordered_json je;
      je["tokens"] = {e.tokens.start, e.tokens.end};
      je["dest_ranks"] = e.dest_ranks;
      je["bytes"] = e.tokens.length() * bytes_per_token *
                    static_cast<std::int64_t>(e.dest_ranks.size());
      js["entries"].push_back(je);
    }
    js["send_tokens"] = table.send_tokens_of_rank(src);
    js["recv_tokens"] = table.recv_tokens_of_rank(src);
    j["sources"].push_back(js);
  }
  j["total_token_transfers"] = table.total_token_transfers();
  return j.dump();
}

}  // namespace magiplan
