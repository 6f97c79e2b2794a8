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

#include <random>

#include "magiplan/errors.hpp"
#include "magiplan/mask.hpp"
#include "oracle.hpp"

using namespace magiplan;
using namespace magiplan::testing;

namespace {

AttnMask mask_of(TokenIndex sq, TokenIndex sk, std::vector<AttnSlice> slices) {
  AttnMask m{sq, sk, std::move(slices)};
  m.check_valid();
  return m;
}

bool union_equals_dense(const AttnMask& mask, const DenseMask& dense) {
  if (mask.seqlen_q != dense.rows() || mask.seqlen_k != dense.cols()) {
    return false;
  }
  for (TokenIndex q = 0; q < mask.seqlen_q; ++q) {
    for (TokenIndex k = 0; k < mask.seqlen_k; ++k) {
      if (is_allowed(mask, q, k) != dense.get(q, k)) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("slice_area closed forms match the stated examples") {
  CHECK(slice_area({{0, 4}, {0, 4}, SliceMaskType::FULL}) == 16);
  CHECK(slice_area({{0, 4}, {0, 4}, SliceMaskType::CAUSAL}) == 10);
  CHECK(slice_area({{0, 2}, {0, 4}, SliceMaskType::CAUSAL}) == 7);
  CHECK(slice_area({{0, 4}, {0, 4}, SliceMaskType::INV_CAUSAL}) == 10);
  CHECK(slice_area({{0, 4}, {0, 4}, SliceMaskType::BI_CAUSAL}) == 4);
  CHECK(slice_area({{3, 3}, {0, 4}, SliceMaskType::FULL}) == 0);
}

TEST_CASE("slice_area equals brute-force enumeration for all lq, lk <= 64") {
  for (SliceMaskType type : {SliceMaskType::FULL, SliceMaskType::CAUSAL,
                             SliceMaskType::INV_CAUSAL, SliceMaskType::BI_CAUSAL}) {
    for (TokenIndex lq = 0; lq <= 64; ++lq) {
      for (TokenIndex lk = 0; lk <= 64; ++lk) {
        const AttnSlice s{{0, lq}, {0, lk}, type};
        REQUIRE(slice_area(s) == brute_slice_area(s));
      }
    }
  }
}

TEST_CASE("slice_area_in_cols equals brute force over windows") {
  for (SliceMaskType type : {SliceMaskType::FULL, SliceMaskType::CAUSAL,
                             SliceMaskType::INV_CAUSAL, SliceMaskType::BI_CAUSAL}) {
    for (TokenIndex lq = 1; lq <= 14; ++lq) {
      for (TokenIndex lk = 1; lk <= 14; ++lk) {
        const AttnSlice s{{2, 2 + lq}, {5, 5 + lk}, type};
        for (TokenIndex c0 = 0; c0 <= 5 + lk; ++c0) {
          for (TokenIndex c1 = c0; c1 <= 5 + lk + 1; ++c1) {
            REQUIRE(slice_area_in_cols(s, c0, c1) ==
                    brute_slice_area_in_cols(s, c0, c1));
          }
        }
      }
    }
  }

  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const TokenIndex lq = 1 + static_cast<TokenIndex>(rng() % 97);
    const TokenIndex lk = 1 + static_cast<TokenIndex>(rng() % 97);
    const auto type = static_cast<SliceMaskType>(rng() % 4);
    const AttnSlice s{{0, lq}, {3, 3 + lk}, type};
    const TokenIndex c0 = static_cast<TokenIndex>(rng() % (3 + lk));
    const TokenIndex c1 = c0 + static_cast<TokenIndex>(rng() % (3 + lk - c0 + 1));
    REQUIRE(slice_area_in_cols(s, c0, c1) == brute_slice_area_in_cols(s, c0, c1));
  }
}

TEST_CASE("mask_area counts multiplicity vs union") {
  const AttnMask full8 = mask_of(8, 8, {{{0, 8}, {0, 8}, SliceMaskType::FULL}});
  CHECK(mask_area(full8, AreaCounting::MULTIPLICITY) == 64);
  CHECK(mask_area(full8, AreaCounting::UNION) == 64);

  for (TokenIndex s : {1, 2, 5, 8, 33, 128}) {
    const AttnMask causal = build_named_mask({NamedPattern::CAUSAL, s});
    CHECK(mask_area(causal, AreaCounting::UNION) == s * (s + 1) / 2);
    CHECK(mask_area(causal, AreaCounting::MULTIPLICITY) == s * (s + 1) / 2);
  }

  const AttnMask doubled = mask_of(4, 4, {{{0, 4}, {0, 4}, SliceMaskType::FULL},
                                          {{0, 4}, {0, 4}, SliceMaskType::FULL}});
  CHECK(mask_area(doubled, AreaCounting::MULTIPLICITY) == 32);
  CHECK(mask_area(doubled, AreaCounting::UNION) == 16);
}

TEST_CASE("is_allowed membership and bounds checks") {
  const AttnMask causal = build_named_mask({NamedPattern::CAUSAL, 4});
  CHECK_FALSE(is_allowed(causal, 0, 1));
  CHECK(is_allowed(causal, 3, 3));
  CHECK(is_allowed(causal, 3, 0));
  CHECK_THROWS_AS((void)is_allowed(causal, 4, 0), UsageError);
  CHECK_THROWS_AS((void)is_allowed(causal, 0, -1), UsageError);

  PatternSpec spec{NamedPattern::VARLEN_CAUSAL, 8};
  spec.sample_lengths = {3, 5};
  const AttnMask varlen = build_named_mask(spec);
  CHECK_FALSE(is_allowed(varlen, 3, 2));  // second sample cannot see the first
  CHECK(is_allowed(varlen, 4, 3));
  CHECK(union_equals_dense(varlen, dense_varlen({3, 5}, true)));
}

TEST_CASE("named patterns match their dense definitions") {
  for (TokenIndex s = 1; s <= 64; ++s) {
    CHECK(union_equals_dense(build_named_mask({NamedPattern::FULL, s}),
                             dense_full(s)));
    CHECK(union_equals_dense(build_named_mask({NamedPattern::CAUSAL, s}),
                             dense_causal(s)));
    for (TokenIndex w : std::vector<TokenIndex>{1, 2, 3, s / 2, s, s + 3}) {
      if (w <= 0) continue;
      PatternSpec spec{NamedPattern::SLIDING_WINDOW_CAUSAL, s};
      spec.window = w;
      CHECK(union_equals_dense(build_named_mask(spec),
                               dense_sliding_window_causal(s, w)));
    }
    for (TokenIndex b = 1; b <= s; ++b) {
      if (s % b != 0) continue;
      PatternSpec spec{NamedPattern::BLOCK_CAUSAL, s};
      spec.block_size = b;
      CHECK(union_equals_dense(build_named_mask(spec), dense_block_causal(s, b)));
    }
  }

  // varlen families over randomized splits, up to seqlen 256
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const TokenIndex block = 1 + static_cast<TokenIndex>(rng() % 4);
    std::vector<TokenIndex> lengths;
    TokenIndex total = 0;
    const int samples = 1 + static_cast<int>(rng() % 5);
    for (int i = 0; i < samples; ++i) {
      const TokenIndex len = block * (1 + static_cast<TokenIndex>(rng() % 12));
      lengths.push_back(len);
      total += len;
    }
    if (total > 256) continue;

    PatternSpec vf{NamedPattern::VARLEN_FULL, total};
    vf.sample_lengths = lengths;
    CHECK(union_equals_dense(build_named_mask(vf), dense_varlen(lengths, false)));

    PatternSpec vc{NamedPattern::VARLEN_CAUSAL, total};
    vc.sample_lengths = lengths;
    CHECK(union_equals_dense(build_named_mask(vc), dense_varlen(lengths, true)));

    PatternSpec vb{NamedPattern::VARLEN_BLOCK_CAUSAL, total};
    vb.sample_lengths = lengths;
    vb.block_size = block;
    CHECK(union_equals_dense(build_named_mask(vb),
                             dense_varlen_block_causal(lengths, block, false)));

    PatternSpec vg{NamedPattern::VARLEN_BLOCK_CAUSAL_LAST_GLOBAL, total};
    vg.sample_lengths = lengths;
    vg.block_size = block;
    CHECK(union_equals_dense(build_named_mask(vg),
                             dense_varlen_block_causal(lengths, block, true)));
  }
}

TEST_CASE("builders emit pairwise-disjoint slices") {
  // multiplicity == union is exactly slice disjointness for these compositions
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const TokenIndex block = 1 + static_cast<TokenIndex>(rng() % 3);
    std::vector<TokenIndex> lengths;
    TokenIndex total = 0;
    for (int i = 0; i < 1 + static_cast<int>(rng() % 4); ++i) {
      const TokenIndex len = block * (1 + static_cast<TokenIndex>(rng() % 10));
      lengths.push_back(len);
      total += len;
    }
    for (NamedPattern p :
         {NamedPattern::VARLEN_FULL, NamedPattern::VARLEN_CAUSAL,
          NamedPattern::VARLEN_BLOCK_CAUSAL,
          NamedPattern::VARLEN_BLOCK_CAUSAL_LAST_GLOBAL}) {
      PatternSpec spec{p, total};
      spec.sample_lengths = lengths;
      spec.block_size = block;
      const AttnMask m = build_named_mask(spec);
      CHECK(mask_area(m, AreaCounting::MULTIPLICITY) ==
            mask_area(m, AreaCounting::UNION));
    }
  }
  for (TokenIndex s : {1, 7, 16, 64}) {
    PatternSpec spec{NamedPattern::SLIDING_WINDOW_CAUSAL, s};
    spec.window = 3;
    const AttnMask m = build_named_mask(spec);
    CHECK(mask_area(m, AreaCounting::MULTIPLICITY) ==
          mask_area(m, AreaCounting::UNION));
  }
}

TEST_CASE("stated pattern area examples") {
  PatternSpec bc{NamedPattern::BLOCK_CAUSAL, 8};
  bc.block_size = 2;
  const AttnMask block_causal = build_named_mask(bc);
  REQUIRE(block_causal.slices.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(block_causal.slices[i].mask_type == SliceMaskType::FULL);
    CHECK(block_causal.slices[i].q_range.length() == 2);
    CHECK(block_causal.slices[i].k_range.length() ==
          static_cast<TokenIndex>(2 * (i + 1)));
  }
  CHECK(mask_area(block_causal, AreaCounting::UNION) == 40);

  PatternSpec vc{NamedPattern::VARLEN_CAUSAL, 8};
  vc.sample_lengths = {3, 5};
  const AttnMask varlen_causal = build_named_mask(vc);
  REQUIRE(varlen_causal.slices.size() == 2);
  CHECK(slice_area(varlen_causal.slices[0]) == 6);
  CHECK(slice_area(varlen_causal.slices[1]) == 15);
  CHECK(mask_area(varlen_causal, AreaCounting::UNION) == 21);

  PatternSpec sw{NamedPattern::SLIDING_WINDOW_CAUSAL, 8};
  sw.window = 3;
  CHECK(mask_area(build_named_mask(sw), AreaCounting::UNION) == 21);
}

TEST_CASE("pattern builder rejects invalid params") {
  PatternSpec bad_block{NamedPattern::BLOCK_CAUSAL, 8};
  bad_block.block_size = 3;
  CHECK_THROWS_AS((void)build_named_mask(bad_block), ConstraintError);

  PatternSpec bad_window{NamedPattern::SLIDING_WINDOW_CAUSAL, 8};
  bad_window.window = 0;
  CHECK_THROWS_AS((void)build_named_mask(bad_window), ConstraintError);

  PatternSpec bad_lengths{NamedPattern::VARLEN_FULL, 8};
  bad_lengths.sample_lengths = {3, 4};
  CHECK_THROWS_AS((void)build_named_mask(bad_lengths), ConstraintError);

  PatternSpec bad_sample_block{NamedPattern::VARLEN_BLOCK_CAUSAL, 7};
  bad_sample_block.sample_lengths = {4, 3};
  bad_sample_block.block_size = 2;
  CHECK_THROWS_AS((void)build_named_mask(bad_sample_block), ConstraintError);
}

TEST_CASE("restrict_rows stated examples") {
  const AttnMask causal = build_named_mask({NamedPattern::CAUSAL, 8});
  const AttnMask tail = restrict_rows(causal, {{4, 8}});
  CHECK(mask_area(tail, AreaCounting::UNION) == 26);

  const AttnMask all = restrict_rows(causal, {{0, 8}});
  CHECK(union_equals_dense(all, dense_causal(8)));

  const AttnMask full = build_named_mask({NamedPattern::FULL, 8});
  const AttnMask edges = restrict_rows(full, {{0, 2}, {6, 8}});
  CHECK(mask_area(edges, AreaCounting::UNION) == 32);

  CHECK_THROWS_AS((void)restrict_rows(causal, {{0, 3}, {2, 5}}), ConstraintError);
  CHECK_THROWS_AS((void)restrict_rows(causal, {{4, 9}}), ConstraintError);
}

TEST_CASE("restrict_rows preserves membership exactly") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 120; ++trial) {
    const TokenIndex sq = 1 + static_cast<TokenIndex>(rng() % 24);
    const TokenIndex sk = 1 + static_cast<TokenIndex>(rng() % 24);
    AttnMask mask{sq, sk, {}};
    const int n_slices = 1 + static_cast<int>(rng() % 5);
    for (int i = 0; i < n_slices; ++i) {
      const TokenIndex q0 = static_cast<TokenIndex>(rng() % sq);
      const TokenIndex q1 = q0 + 1 + static_cast<TokenIndex>(rng() % (sq - q0));
      const TokenIndex k0 = static_cast<TokenIndex>(rng() % sk);
      const TokenIndex k1 = k0 + 1 + static_cast<TokenIndex>(rng() % (sk - k0));
      mask.slices.push_back(
          {{q0, q1}, {k0, k1}, static_cast<SliceMaskType>(rng() % 4)});
    }

    std::vector<TokenRange> rows;
    std::vector<bool> selected(static_cast<std::size_t>(sq), false);
    TokenIndex at = static_cast<TokenIndex>(rng() % (sq + 1));
    while (at < sq) {
      const TokenIndex end =
          std::min<TokenIndex>(sq, at + 1 + static_cast<TokenIndex>(rng() % 4));
      rows.push_back({at, end});
      for (TokenIndex q = at; q < end; ++q) selected[static_cast<std::size_t>(q)] = true;
      at = end + 1 + static_cast<TokenIndex>(rng() % 3);
    }

    const AttnMask restricted = restrict_rows(mask, rows);
    for (TokenIndex q = 0; q < sq; ++q) {
      for (TokenIndex k = 0; k < sk; ++k) {
        const bool expect =
            selected[static_cast<std::size_t>(q)] && is_allowed(mask, q, k);
        REQUIRE(is_allowed(restricted, q, k) == expect);
      }
    }
  }
}

TEST_CASE("per_row_union_counts agrees with dense row counts") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    const TokenIndex sq = 1 + static_cast<TokenIndex>(rng() % 40);
    const TokenIndex sk = 1 + static_cast<TokenIndex>(rng() % 40);
    AttnMask mask{sq, sk, {}};
    for (int i = 0; i < static_cast<int>(rng() % 6); ++i) {
      const TokenIndex q0 = static_cast<TokenIndex>(rng() % sq);
      const TokenIndex q1 = q0 + 1 + static_cast<TokenIndex>(rng() % (sq - q0));
      const TokenIndex k0 = static_cast<TokenIndex>(rng() % sk);
      const TokenIndex k1 = k0 + 1 + static_cast<TokenIndex>(rng() % (sk - k0));
      mask.slices.push_back(
          {{q0, q1}, {k0, k1}, static_cast<SliceMaskType>(rng() % 4)});
    }
    const DenseMask dense = dense_from_slices(mask);
    const auto counts = per_row_union_counts(mask);
    PairCount total = 0;
    for (TokenIndex q = 0; q < sq; ++q) {
      REQUIRE(counts[static_cast<std::size_t>(q)] == dense.row_count(q));
      total += counts[static_cast<std::size_t>(q)];
    }
    REQUIRE(mask_area(mask, AreaCounting::UNION) == total);
    REQUIRE(total == dense.area());
  }
}

TEST_CASE("mask spec parsing") {
  const AttnMask causal =
      parse_mask_spec(R"({"seqlen": 8, "pattern": "causal"})");
  CHECK(mask_area(causal, AreaCounting::UNION) == 36);

  const AttnMask from_slices = parse_mask_spec(
      R"({"seqlen_q": 8, "seqlen_k": 8,
          "slices": [{"q": [0, 8], "k": [0, 8], "type": "causal"}]})");
  CHECK(union_equals_dense(from_slices, dense_causal(8)));

  const AttnMask sw = parse_mask_spec(
      R"({"seqlen": 8, "pattern": "sliding_window_causal", "params": {"window": 3}})");
  CHECK(mask_area(sw, AreaCounting::UNION) == 21);

  CHECK_THROWS_AS((void)parse_mask_spec("{nonsense"), UsageError);
  CHECK_THROWS_AS((void)parse_mask_spec(R"({"seqlen": 8})"), UsageError);
  CHECK_THROWS_AS(
      (void)parse_mask_spec(R"({"seqlen": 8, "pattern": "mystery"})"),
      UsageError);
  CHECK_THROWS_WITH_AS(
      (void)parse_mask_spec(
          R"({"seqlen": 4, "slices": [{"q": [0, 4], "k": [0, 9], "type": "full"}]})"),
      doctest::Contains("slice 0"), UsageError);

  // round trip through the canonical slice form
  const AttnMask again = parse_mask_spec(mask_to_json(sw));
  CHECK(union_equals_dense(again, dense_sliding_window_causal(8, 3)));
}

TEST_CASE("ascii rendering") {
  const AttnMask full4 = build_named_mask({NamedPattern::FULL, 4});
  CHECK(render_ascii(full4) == "####\n####\n####\n####\n");

  const AttnMask causal4 = build_named_mask({NamedPattern::CAUSAL, 4});
  CHECK(render_ascii(causal4) == "#...\n##..\n###.\n####\n");

  const AttnMask big = build_named_mask({NamedPattern::FULL, 256});
  CHECK_THROWS_AS((void)render_ascii(big), UsageError);
}
