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

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace magiplan {

using TokenIndex = std::int64_t;
using PairCount = std::int64_t;
using RankIndex = std::int32_t;

/// Half-open token interval [start, end). Zero-length ranges are legal and
/// denote empty work.
struct TokenRange {
  TokenIndex start = 0;
  TokenIndex end = 0;

  TokenIndex length() const { return end - start; }
  bool empty() const { return end <= start; }
  bool is_valid() const { return 0 <= start && start <= end; }
  bool contains(TokenIndex t) const { return start <= t && t < end; }

  bool operator==(const TokenRange& other) const = default;

  std::string to_string() const;
};

/// Basic allowed-pair shape of one slice, in slice-local coordinates
/// r in [0, lq), c in [0, lk):
///   FULL:       every (r, c)
///   CAUSAL:     c <= r + (lk - lq)   (diagonal anchored bottom-right)
///   INV_CAUSAL: c >= r               (diagonal anchored top-left)
///   BI_CAUSAL:  both
enum class SliceMaskType { FULL = 0, CAUSAL = 1, INV_CAUSAL = 2, BI_CAUSAL = 3 };

const char* to_string(SliceMaskType type);
SliceMaskType slice_mask_type_from_string(const std::string& name);

/// One (QRange, KRange, MaskType) triplet: a rectangular sub-region of the
/// attention mask carrying a basic shape.
struct AttnSlice {
  TokenRange q_range;
  TokenRange k_range;
  SliceMaskType mask_type = SliceMaskType::FULL;

  bool operator==(const AttnSlice& other) const = default;

  /// Allowed key columns for global query row q, as a global column range.
  /// Empty range when q is outside q_range or the row has no allowed columns.
  TokenRange row_cols(TokenIndex q) const;

  /// Membership of a global (q, k) pair.
  bool allows(TokenIndex q, TokenIndex k) const;

  std::string to_string() const;
};

/// Count of allowed (r, c) pairs of one slice, closed form.
PairCount slice_area(const AttnSlice& slice);

/// Count of allowed pairs whose key column falls in [col_begin, col_end),
/// closed form. Used for per-stage compute attribution and ring rounds.
PairCount slice_area_in_cols(const AttnSlice& slice, TokenIndex col_begin,
                             TokenIndex col_end);

enum class AreaCounting {
  MULTIPLICITY,  // sum of slice areas; what a kernel actually computes
  UNION,         // distinct allowed (q, k) pairs
};

/// A composition of slices over a packed token sequence; the single source
/// of truth for which (query, key) pairs compute.
struct AttnMask {
  TokenIndex seqlen_q = 0;
  TokenIndex seqlen_k = 0;
  std::vector<AttnSlice> slices;

  /// Throws UsageError if any slice falls outside [0, seqlen_q) x [0, seqlen_k)
  /// or any range is malformed; the message names the offending slice.
  void check_valid() const;
};

PairCount mask_area(const AttnMask& mask, AreaCounting counting);

/// True iff any slice admits (q, k). Out-of-range indices throw UsageError.
bool is_allowed(const AttnMask& mask, TokenIndex q, TokenIndex k);

/// Distinct allowed-pair count per query row, over all rows. Single sweep
/// with an active-slice set, O(seqlen * active log active).
std::vector<PairCount> per_row_union_counts(const AttnMask& mask);

/// Merged (disjoint, sorted) allowed column intervals of one row.
std::vector<TokenRange> row_union_intervals(const AttnMask& mask, TokenIndex q);

/// Visit every row's merged allowed column intervals in one sweep; the
/// interval vector is only valid during the call.
void for_each_row_union(
    const AttnMask& mask,
    const std::function<void(TokenIndex, const std::vector<TokenRange>&)>& fn);

/// Mask over the same query/key space containing exactly the selected rows'
/// allowed pairs. Row ranges must be pairwise disjoint (else ConstraintError).
/// Each slice is clipped per row range; mask types are preserved by adjusting
/// k ranges so local semantics are unchanged.
AttnMask restrict_rows(const AttnMask& mask, const std::vector<TokenRange>& rows);

enum class NamedPattern {
  FULL,
  CAUSAL,
  VARLEN_FULL,
  VARLEN_CAUSAL,
  SLIDING_WINDOW_CAUSAL,
  BLOCK_CAUSAL,
  VARLEN_BLOCK_CAUSAL,
  VARLEN_BLOCK_CAUSAL_LAST_GLOBAL,
};

const char* to_string(NamedPattern pattern);
NamedPattern named_pattern_from_string(const std::string& name);

struct PatternSpec {
  NamedPattern pattern = NamedPattern::FULL;
  TokenIndex seqlen = 0;
  std::vector<TokenIndex> sample_lengths;  // varlen patterns
  TokenIndex block_size = 0;               // block-causal patterns
  TokenIndex window = 0;                   // sliding-window patterns

  PatternSpec() = default;
  PatternSpec(NamedPattern p, TokenIndex s) : pattern(p), seqlen(s) {}
};

/// Build the slice composition of a named pattern. All builders emit pairwise
/// disjoint slices, so MULTIPLICITY and UNION areas agree on their output.
/// ConstraintError on divisibility violations, window <= 0, or sample lengths
/// not summing to seqlen.
AttnMask build_named_mask(const PatternSpec& spec);

/// ASCII grid ('#' allowed / '.' masked), one row per line. Debug helper;
/// rejects seqlen > 128 with UsageError.
std::string render_ascii(const AttnMask& mask);

/// Parse a mask spec: {"seqlen": n, "pattern": name, "params": {...}} or
/// {"seqlen_q": n, "seqlen_k": m, "slices": [{"q": [s,e], "k": [s,e],
/// "type": name}, ...]}. Throws UsageError / ConstraintError.
AttnMask parse_mask_spec(const std::string& json_text);

/// Canonical JSON form of a mask (always the explicit slice list).
std::string mask_to_json(const AttnMask& mask);

}  // namespace magiplan
