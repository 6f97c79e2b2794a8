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

#include <algorithm>
#include <random>

#include "magiplan/dispatch.hpp"
#include "magiplan/errors.hpp"
#include "oracle.hpp"

using namespace magiplan;
using namespace magiplan::testing;

namespace {

std::vector<DispatchChunk> chunks_from_areas(const std::vector<PairCount>& areas) {
  std::vector<DispatchChunk> chunks;
  for (std::size_t i = 0; i < areas.size(); ++i) {
    chunks.push_back({static_cast<std::int64_t>(i),
                      {static_cast<TokenIndex>(i), static_cast<TokenIndex>(i + 1)},
                      areas[i]});
  }
  return chunks;
}

std::vector<PairCount> chunk_areas(const std::vector<DispatchChunk>& chunks) {
  std::vector<PairCount> areas;
  for (const auto& c : chunks) areas.push_back(c.area);
  return areas;
}

}  // namespace

TEST_CASE("shard_into_chunks produces exact per-chunk areas") {
  const AttnMask causal = build_named_mask({NamedPattern::CAUSAL, 8});
  CHECK(chunk_areas(shard_into_chunks(causal, 1)) ==
        std::vector<PairCount>{1, 2, 3, 4, 5, 6, 7, 8});

  const AttnMask full = build_named_mask({NamedPattern::FULL, 8});
  CHECK(chunk_areas(shard_into_chunks(full, 2)) ==
        std::vector<PairCount>{16, 16, 16, 16});

  PatternSpec bc{NamedPattern::BLOCK_CAUSAL, 8};
  bc.block_size = 2;
  CHECK(chunk_areas(shard_into_chunks(build_named_mask(bc), 2)) ==
        std::vector<PairCount>{4, 8, 12, 16});

  CHECK_THROWS_AS((void)shard_into_chunks(causal, 3), ConstraintError);
  CHECK_THROWS_AS((void)shard_into_chunks(causal, 0), ConstraintError);
}

TEST_CASE("greedy_dispatch matches hand traces") {
  const auto plan18 = greedy_dispatch(chunks_from_areas({8, 7, 6, 5, 4, 3, 2, 1}), 2);
  CHECK(plan18.bucket_workloads == std::vector<PairCount>{18, 18});

  const auto ones = greedy_dispatch(chunks_from_areas({1, 1, 1, 1}), 4);
  CHECK(ones.max_workload() == 1);
  for (PairCount w : ones.bucket_workloads) CHECK(w == 1);

  const AttnMask causal = build_named_mask({NamedPattern::CAUSAL, 8});
  const auto plan = greedy_dispatch(shard_into_chunks(causal, 1), 4);
  CHECK(plan.max_workload() == 9);
  CHECK(plan.bucket_workloads == std::vector<PairCount>{9, 9, 9, 9});
  // pairing 8+1, 7+2, 6+3, 5+4
  const auto buckets = plan.chunks_of_buckets();
  CHECK(buckets[0] == std::vector<std::int64_t>{0, 7});
  CHECK(buckets[1] == std::vector<std::int64_t>{1, 6});
  CHECK(buckets[2] == std::vector<std::int64_t>{2, 5});
  CHECK(buckets[3] == std::vector<std::int64_t>{3, 4});

  CHECK_THROWS_AS((void)greedy_dispatch(chunks_from_areas({1, 2, 3}), 2),
                  ConstraintError);
  CHECK_THROWS_AS((void)greedy_dispatch(chunks_from_areas({1, 2}), 0),
                  ConstraintError);
}

TEST_CASE("brute_force_dispatch oracle") {
  CHECK(brute_force_dispatch(chunks_from_areas({8, 7, 6, 5, 4, 3, 2, 1}), 2)
            .max_workload() == 18);
  CHECK(brute_force_dispatch(chunks_from_areas({10, 1, 1, 1}), 2).max_workload() ==
        11);

  const auto identity = brute_force_dispatch(chunks_from_areas({5, 9, 2}), 3);
  CHECK(identity.max_workload() == 9);
  for (std::size_t b : {0u, 1u, 2u}) {
    CHECK(identity.chunks_of_buckets()[b].size() == 1);
  }

  std::vector<DispatchChunk> too_many = chunks_from_areas(
      std::vector<PairCount>(20, 1));
  CHECK_THROWS_AS((void)brute_force_dispatch(too_many, 4), UsageError);
}

TEST_CASE("zigzag_dispatch pairs mirror chunks") {
  const auto plan = zigzag_dispatch(chunks_from_areas({1, 2, 3, 4, 5, 6, 7, 8}), 4);
  const auto buckets = plan.chunks_of_buckets();
  CHECK(buckets[0] == std::vector<std::int64_t>{0, 7});
  CHECK(buckets[1] == std::vector<std::int64_t>{1, 6});
  CHECK(buckets[2] == std::vector<std::int64_t>{2, 5});
  CHECK(buckets[3] == std::vector<std::int64_t>{3, 4});
  CHECK(plan.bucket_workloads == std::vector<PairCount>{9, 9, 9, 9});

  const auto single = zigzag_dispatch(chunks_from_areas({4, 2}), 1);
  CHECK(single.chunks_of_buckets()[0] == std::vector<std::int64_t>{0, 1});

  CHECK_THROWS_AS((void)zigzag_dispatch(chunks_from_areas({1, 2, 3, 4}), 4),
                  ConstraintError);
}

TEST_CASE("local_mask_of_rank restricts to owned rows") {
  const AttnMask causal = build_named_mask({NamedPattern::CAUSAL, 8});
  const auto chunks = shard_into_chunks(causal, 1);

  const auto trivial = greedy_dispatch(shard_into_chunks(causal, 8), 1);
  const AttnMask same = local_mask_of_rank(causal, trivial, 0);
  for (TokenIndex q = 0; q < 8; ++q) {
    for (TokenIndex k = 0; k < 8; ++k) {
      CHECK(is_allowed(same, q, k) == is_allowed(causal, q, k));
    }
  }

  const auto zigzag = zigzag_dispatch(chunks, 4);
  const AttnMask rank0 = local_mask_of_rank(causal, zigzag, 0);
  CHECK(mask_area(rank0, AreaCounting::UNION) == 9);  // rows {0, 7}: 1 + 8

  const AttnMask full = build_named_mask({NamedPattern::FULL, 8});
  const auto full_plan = greedy_dispatch(shard_into_chunks(full, 2), 4);
  for (RankIndex r = 0; r < 4; ++r) {
    CHECK(mask_area(local_mask_of_rank(full, full_plan, r), AreaCounting::UNION) ==
          64 / 4);
  }

  CHECK_THROWS_AS((void)local_mask_of_rank(causal, zigzag, 4), UsageError);
}

TEST_CASE("greedy respects cardinality and workload lower bounds") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const RankIndex cp = 1 + static_cast<RankIndex>(rng() % 6);
    const std::int64_t per_bucket = 1 + static_cast<std::int64_t>(rng() % 5);
    const std::int64_t n = cp * per_bucket;
    std::vector<PairCount> areas;
    PairCount total = 0;
    PairCount biggest = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      const PairCount a = 1 + static_cast<PairCount>(rng() % 100);
      areas.push_back(a);
      total += a;
      biggest = std::max(biggest, a);
    }
    const auto plan = greedy_dispatch(chunks_from_areas(areas), cp);

    for (const auto& bucket : plan.chunks_of_buckets()) {
      REQUIRE(static_cast<std::int64_t>(bucket.size()) == per_bucket);
    }
    const PairCount lower = std::max<PairCount>((total + cp - 1) / cp, biggest);
    REQUIRE(plan.max_workload() >= lower);

    PairCount sum = 0;
    for (PairCount w : plan.bucket_workloads) sum += w;
    REQUIRE(sum == total);
  }
}

TEST_CASE("greedy output is invariant to chunk input order") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 100; ++trial) {
    const RankIndex cp = 1 + static_cast<RankIndex>(rng() % 4);
    const std::int64_t n = cp * (1 + static_cast<std::int64_t>(rng() % 4));
    std::vector<DispatchChunk> chunks;
    for (std::int64_t i = 0; i < n; ++i) {
      chunks.push_back({i, {i, i + 1}, 1 + static_cast<PairCount>(rng() % 50)});
    }
    const auto base = greedy_dispatch(chunks, cp);

    std::vector<DispatchChunk> shuffled = chunks;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto again = greedy_dispatch(shuffled, cp);

    // same assignment per chunk ordinal regardless of presentation order
    for (const auto& c : shuffled) {
      REQUIRE(again.assignment[static_cast<std::size_t>(
                  &c - shuffled.data())] ==
              base.assignment[static_cast<std::size_t>(c.index)]);
    }
    REQUIRE(again.bucket_workloads == base.bucket_workloads);
  }
}

TEST_CASE("bucket workloads sum to the union area for disjoint builders") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const TokenIndex block = 1 + static_cast<TokenIndex>(rng() % 3);
    std::vector<TokenIndex> lengths;
    TokenIndex total = 0;
    for (int i = 0; i < 1 + static_cast<int>(rng() % 3); ++i) {
      const TokenIndex len = block * 4 * (1 + static_cast<TokenIndex>(rng() % 4));
      lengths.push_back(len);
      total += len;
    }
    PatternSpec spec{NamedPattern::VARLEN_BLOCK_CAUSAL, total};
    spec.sample_lengths = lengths;
    spec.block_size = block;
    const AttnMask mask = build_named_mask(spec);

    for (TokenIndex cs : {block, block * 2}) {
      if (total % cs != 0) continue;
      const auto chunks = shard_into_chunks(mask, cs);
      for (RankIndex cp : {1, 2, 4}) {
        if (static_cast<std::int64_t>(chunks.size()) % cp != 0) continue;
        const auto plan = greedy_dispatch(chunks, cp);
        PairCount sum = 0;
        for (PairCount w : plan.bucket_workloads) sum += w;
        REQUIRE(sum == mask_area(mask, AreaCounting::UNION));
      }
    }
  }
}

TEST_CASE("greedy tracks the brute-force optimum over random instances") {
  std::mt19937_64 rng(41);
  double ratio_sum = 0.0;
  double ratio_max = 0.0;
  int instances = 0;
  while (instances < 1000) {
    const RankIndex cp = 2 + static_cast<RankIndex>(rng() % 3);  // 2..4
    const std::int64_t per_bucket = 1 + static_cast<std::int64_t>(rng() % (12 / cp));
    const std::int64_t n = cp * per_bucket;
    if (n > 12) continue;
    std::vector<PairCount> areas;
    for (std::int64_t i = 0; i < n; ++i) {
      areas.push_back(1 + static_cast<PairCount>(rng() % 100));
    }
    const auto chunks = chunks_from_areas(areas);
    const PairCount greedy = greedy_dispatch(chunks, cp).max_workload();
    const PairCount optimum = brute_force_dispatch(chunks, cp).max_workload();
    REQUIRE(greedy >= optimum);
    const double ratio = static_cast<double>(greedy) / static_cast<double>(optimum);
    ratio_sum += ratio;
    ratio_max = std::max(ratio_max, ratio);
    ++instances;
  }
  const double ratio_mean = ratio_sum / instances;
  MESSAGE("greedy/optimum over ", instances, " instances: mean ", ratio_mean,
          ", max ", ratio_max);
  CHECK(ratio_mean <= 1.05);
  CHECK(ratio_max <= 1.34);
}

TEST_CASE("default dispatch chunk size") {
  CHECK(default_dispatch_chunk_size(65536, 4) == 2048);
  CHECK(default_dispatch_chunk_size(8, 4) == 1);
  CHECK(default_dispatch_chunk_size(4, 8) == 1);
}

TEST_CASE("plan JSON export carries buckets and workloads") {
  const auto plan = zigzag_dispatch(chunks_from_areas({1, 2, 3, 4, 5, 6, 7, 8}), 4);
  const std::string j = plan_to_json(plan);
  CHECK(j.find("\"max_workload\":9") != std::string::npos);
  CHECK(j.find("\"chunks\":[0,7]") != std::string::npos);
}
