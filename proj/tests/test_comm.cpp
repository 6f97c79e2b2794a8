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

#include <doctest.h>

#include <map>
#include <random>
#include <set>

#include "magiplan/comm.hpp"
#include "magiplan/errors.hpp"
#include "oracle.hpp"

using namespace magiplan;
using namespace magiplan::testing;

namespace {

// Brute-force demand sets straight from the dense mask.
std::vector<KvDemand> dense_demands(const DenseMask& dense,
                                    const DispatchPlan& plan) {
  const TokenIndex cs = plan.chunk_size;
  const std::int64_t n = static_cast<std::int64_t>(plan.assignment.size());
  std::vector<KvDemand> out;
  for (std::int64_t kc = 0; kc < n; ++kc) {
    KvDemand d;
    d.kv_chunk = kc;
    d.host_rank = plan.assignment[static_cast<std::size_t>(kc)];
    for (RankIndex r = 0; r < plan.cp_size; ++r) {
      if (r == d.host_rank) continue;
      bool needs = false;
      for (TokenIndex q = 0; q < dense.rows() && !needs; ++q) {
        if (plan.assignment[static_cast<std::size_t>(q / cs)] != r) continue;
        for (TokenIndex k = kc * cs; k < (kc + 1) * cs && !needs; ++k) {
          needs = dense.get(q, k);
        }
      }
      if (needs) d.consumers.push_back(r);
    }
    out.push_back(d);
  }
  return out;
}

// (from, to) -> merged token ranges, for structural transpose comparison.
using EdgeMap = std::map<std::pair<RankIndex, RankIndex>, std::vector<TokenRange>>;

EdgeMap edges_of(const TransferTable& table, bool flip) {
  EdgeMap edges;
  for (RankIndex src = 0; src < table.cp_size; ++src) {
    for (const TransferEntry& e : table.entries[static_cast<std::size_t>(src)]) {
      for (RankIndex dest : e.dest_ranks) {
        const auto key = flip ? std::make_pair(dest, src) : std::make_pair(src, dest);
        edges[key].push_back(e.tokens);
      }
    }
  }
  for (auto& [key, ranges] : edges) {
    std::sort(ranges.begin(), ranges.end(),
              [](const TokenRange& a, const TokenRange& b) {
                return a.start < b.start;
              });
    std::vector<TokenRange> merged;
    for (const TokenRange& r : ranges) {
      if (!merged.empty() && merged.back().end == r.start) {
        merged.back().end = r.end;
      } else {
        merged.push_back(r);
      }
    }
    ranges = merged;
  }
  return edges;
}

AttnMask random_square_mask(std::mt19937_64& rng, TokenIndex s, int max_slices) {
  AttnMask mask{s, s, {}};
  const int n = 1 + static_cast<int>(rng() % max_slices);
  for (int i = 0; i < n; ++i) {
    const TokenIndex q0 = static_cast<TokenIndex>(rng() % s);
    const TokenIndex q1 = q0 + 1 + static_cast<TokenIndex>(rng() % (s - q0));
    const TokenIndex k0 = static_cast<TokenIndex>(rng() % s);
    const TokenIndex k1 = k0 + 1 + static_cast<TokenIndex>(rng() % (s - k0));
    mask.slices.push_back({{q0, q1}, {k0, k1}, static_cast<SliceMaskType>(rng() % 4)});
  }
  return mask;
}

}  // namespace

TEST_CASE("causal zigzag demands match the known distribution") {
  const AttnMask causal = build_named_mask({NamedPattern::CAUSAL, 8});
  const auto plan = zigzag_dispatch(shard_into_chunks(causal, 1), 4);
  const auto demands = compute_kv_demands(causal, plan);

  REQUIRE(demands.size() == 8);
  CHECK(demands[0].consumers == std::vector<RankIndex>{1, 2, 3});
  CHECK(demands[7].consumers.empty());
  CHECK(demands[5].host_rank == 2);
  CHECK(demands[5].consumers == std::vector<RankIndex>{0, 1});

  std::int64_t needed = 0;
  for (const auto& d : demands) needed += static_cast<std::int64_t>(d.consumers.size());
  CHECK(needed == 18);
}

TEST_CASE("full mask demands everything from everyone") {
  const AttnMask full = build_named_mask({NamedPattern::FULL, 8});
  const auto plan = greedy_dispatch(shard_into_chunks(full, 2), 4);
  for (const auto& d : compute_kv_demands(full, plan)) {
    CHECK(d.consumers.size() == 3);
  }
}

TEST_CASE("transfer tables: chunk volumes, coalescing, transpose") {
  const AttnMask causal = build_named_mask({NamedPattern::CAUSAL, 8});
  const auto plan = zigzag_dispatch(shard_into_chunks(causal, 1), 4);
  const auto demands = compute_kv_demands(causal, plan);
  const auto [cast, reduce] = build_transfer_tables(demands, plan.chunk_size, 4);

  CHECK(cast.total_token_transfers() == 18);
  CHECK(reduce.total_token_transfers() == 18);

  // KV_7 has no consumers: no entry mentions token 7 in either direction
  for (const auto& table : {cast, reduce}) {
    for (const auto& per_src : table.entries) {
      for (const auto& e : per_src) {
        CHECK_FALSE(e.tokens.contains(7));
        CHECK_FALSE(e.dest_ranks.empty());
      }
    }
  }

  CHECK(edges_of(cast, false) == edges_of(reduce, true));
}

TEST_CASE("adjacent chunks with identical destinations coalesce") {
  // one rank owning the first half of a full mask casts one merged range
  const AttnMask full = build_named_mask({NamedPattern::FULL, 8});
  const auto chunks = shard_into_chunks(full, 2);
  DispatchPlan plan;
  plan.cp_size = 2;
  plan.chunk_size = 2;
  plan.assignment = {0, 0, 1, 1};
  plan.bucket_workloads = {32, 32};
  const auto demands = compute_kv_demands(full, plan);
  const auto [cast, reduce] = build_transfer_tables(demands, 2, 2);
  REQUIRE(cast.entries[0].size() == 1);
  CHECK(cast.entries[0][0].tokens == TokenRange{0, 4});
  CHECK(cast.entries[0][0].dest_ranks == std::vector<RankIndex>{1});
}

TEST_CASE("ring baseline volume") {
  const AttnMask causal = build_named_mask({NamedPattern::CAUSAL, 8});
  const auto plan = zigzag_dispatch(shard_into_chunks(causal, 1), 4);
  CHECK(ring_baseline_volume(plan) == 24);

  const auto solo = greedy_dispatch(shard_into_chunks(causal, 1), 1);
  CHECK(ring_baseline_volume(solo) == 0);
}

TEST_CASE("redundancy reports") {
  const AttnMask causal = build_named_mask({NamedPattern::CAUSAL, 8});
  const auto plan = zigzag_dispatch(shard_into_chunks(causal, 1), 4);
  const auto report = redundancy_report(causal, plan);
  CHECK(report.sent_ring == 24);
  CHECK(report.needed == 18);
  CHECK(report.sent_group == 18);
  CHECK(report.redundancy_ratio == doctest::Approx(0.25));

  const AttnMask full = build_named_mask({NamedPattern::FULL, 8});
  const auto full_plan = zigzag_dispatch(shard_into_chunks(full, 1), 4);
  const auto full_report = redundancy_report(full, full_plan);
  CHECK(full_report.redundancy_ratio == 0.0);
  CHECK(full_report.sent_ring == full_report.needed);
}

TEST_CASE("varlen block-causal with last global block exceeds 1/3 redundancy") {
  PatternSpec spec{NamedPattern::VARLEN_BLOCK_CAUSAL_LAST_GLOBAL, 64};
  spec.sample_lengths = {32, 32};
  spec.block_size = 8;
  const AttnMask mask = build_named_mask(spec);
  const auto plan = zigzag_dispatch(shard_into_chunks(mask, 8), 4);
  const auto report = redundancy_report(mask, plan);
  CHECK(report.sent_ring == 24 * 8);
  CHECK(report.needed == 15 * 8);
  CHECK(report.redundancy_ratio == doctest::Approx(0.375));
  CHECK(report.redundancy_ratio > 0.33);
}

TEST_CASE("demand soundness and completeness against the dense oracle") {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 80; ++trial) {
    const RankIndex cp = 1 + static_cast<RankIndex>(rng() % 8);
    const TokenIndex cs = 1 + static_cast<TokenIndex>(rng() % 4);
    const std::int64_t per_bucket = 1 + static_cast<std::int64_t>(rng() % 4);
    const TokenIndex s = cp * per_bucket * cs;
    if (s > 256) continue;
    const AttnMask mask = random_square_mask(rng, s, 6);
    const auto plan = greedy_dispatch(shard_into_chunks(mask, cs), cp);
    const auto got = compute_kv_demands(mask, plan);
    const auto expect = dense_demands(dense_from_slices(mask), plan);
    REQUIRE(got.size() == expect.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      REQUIRE(got[i].host_rank == expect[i].host_rank);
      REQUIRE(got[i].consumers == expect[i].consumers);
    }

    // zero-redundancy: the cast table carries exactly the demand volume
    const auto report = redundancy_report(mask, plan);
    const auto [cast, reduce] = build_transfer_tables(got, cs, cp);
    REQUIRE(cast.total_token_transfers() == report.needed);
    REQUIRE(report.sent_group == report.needed);
    REQUIRE(report.sent_ring >= report.needed);
    REQUIRE(edges_of(cast, false) == edges_of(reduce, true));
  }
}

TEST_CASE("adding slices never shrinks consumer sets") {
  std::mt19937_64 rng(59);
  for (int trial = 0; trial < 60; ++trial) {
    const TokenIndex s = 16;
    AttnMask mask = random_square_mask(rng, s, 4);
    const auto plan = greedy_dispatch(shard_into_chunks(mask, 2), 4);
    const auto before = compute_kv_demands(mask, plan);

    AttnMask grown = mask;
    const TokenIndex q0 = static_cast<TokenIndex>(rng() % s);
    const TokenIndex q1 = q0 + 1 + static_cast<TokenIndex>(rng() % (s - q0));
    const TokenIndex k0 = static_cast<TokenIndex>(rng() % s);
    const TokenIndex k1 = k0 + 1 + static_cast<TokenIndex>(rng() % (s - k0));
    grown.slices.push_back({{q0, q1}, {k0, k1}, static_cast<SliceMaskType>(rng() % 4)});
    const auto after = compute_kv_demands(grown, plan);

    for (std::size_t i = 0; i < before.size(); ++i) {
      std::set<RankIndex> b(before[i].consumers.begin(), before[i].consumers.end());
      std::set<RankIndex> a(after[i].consumers.begin(), after[i].consumers.end());
      REQUIRE(std::includes(a.begin(), a.end(), b.begin(), b.end()));
    }
  }
}

TEST_CASE("ring volume equals demand volume only for all-consumer masks") {
  const AttnMask full = build_named_mask({NamedPattern::FULL, 16});
  const auto plan = zigzag_dispatch(shard_into_chunks(full, 2), 4);
  const auto report = redundancy_report(full, plan);
  CHECK(report.sent_ring == report.needed);

  const AttnMask causal = build_named_mask({NamedPattern::CAUSAL, 16});
  const auto causal_plan = zigzag_dispatch(shard_into_chunks(causal, 2), 4);
  CHECK(redundancy_report(causal, causal_plan).sent_ring >
        redundancy_report(causal, causal_plan).needed);
}

TEST_CASE("mismatched plan and mask are rejected") {
  const AttnMask causal = build_named_mask({NamedPattern::CAUSAL, 8});
  const auto plan = zigzag_dispatch(shard_into_chunks(causal, 1), 4);
  const AttnMask other = build_named_mask({NamedPattern::CAUSAL, 16});
  CHECK_THROWS_AS((void)compute_kv_demands(other, plan), UsageError);
}

TEST_CASE("transfer table export includes byte volumes") {
  const AttnMask causal = build_named_mask({NamedPattern::CAUSAL, 8});
  const auto plan = zigzag_dispatch(shard_into_chunks(causal, 1), 4);
  const auto [cast, reduce] =
      build_transfer_tables(compute_kv_demands(causal, plan), 1, 4);
  const std::string j = transfer_table_to_json(cast, 4096);
  CHECK(j.find("\"direction\":\"group_cast\"") != std::string::npos);
  CHECK(j.find("\"total_token_transfers\":18") != std::string::npos);
}
