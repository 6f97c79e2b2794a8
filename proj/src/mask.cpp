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

#include "magiplan/mask.hpp"

#include <algorithm>
#include <numeric>
#include <optional>

#include <json.hpp>

#include "magiplan/errors.hpp"

namespace magiplan {

using ordered_json = nlohmann::ordered_json;

std::string TokenRange::to_string() const {
  return "[" + std::to_string(start) + ", " + std::to_string(end) + ")";
}

const char* to_string(SliceMaskType type) {
  switch (type) {
    case SliceMaskType::FULL:
      return "full";
    case SliceMaskType::CAUSAL:
      return "causal";
    case SliceMaskType::INV_CAUSAL:
      return "inv_causal";
    case SliceMaskType::BI_CAUSAL:
      return "bi_causal";
  }
  throw UsageError("unknown SliceMaskType value");
}

SliceMaskType slice_mask_type_from_string(const std::string& name) {
  if (name == "full") return SliceMaskType::FULL;
  if (name == "causal") return SliceMaskType::CAUSAL;
  if (name == "inv_causal") return SliceMaskType::INV_CAUSAL;
  if (name == "bi_causal") return SliceMaskType::BI_CAUSAL;
  throw UsageError("unknown slice mask type '" + name +
                   "' (expected full|causal|inv_causal|bi_causal)");
}

namespace {

bool has_causal_upper(SliceMaskType t) {
  return t == SliceMaskType::CAUSAL || t == SliceMaskType::BI_CAUSAL;
}

bool has_inv_lower(SliceMaskType t) {
  return t == SliceMaskType::INV_CAUSAL || t == SliceMaskType::BI_CAUSAL;
}

TokenIndex clamp_i(TokenIndex v, TokenIndex lo, TokenIndex hi) {
  return std::max(lo, std::min(v, hi));
}

}  // namespace

TokenRange AttnSlice::row_cols(TokenIndex q) const {
  if (!q_range.contains(q)) return {0, 0};
  const TokenIndex lq = q_range.length();
  const TokenIndex lk = k_range.length();
  const TokenIndex r = q - q_range.start;
  const TokenIndex lo = has_inv_lower(mask_type) ? std::min(r, lk) : 0;
  const TokenIndex hi =
      has_causal_upper(mask_type) ? clamp_i(r + lk - lq + 1, 0, lk) : lk;
  if (hi <= lo) return {0, 0};
  return {k_range.start + lo, k_range.start + hi};
}

bool AttnSlice::allows(TokenIndex q, TokenIndex k) const {
  return row_cols(q).contains(k);
}

std::string AttnSlice::to_string() const {
  return std::string("(q=") + q_range.to_string() + ", k=" +
         k_range.to_string() + ", " + magiplan::to_string(mask_type) + ")";
}

PairCount slice_area(const AttnSlice& slice) {
  const TokenIndex lq = slice.q_range.length();
  const TokenIndex lk = slice.k_range.length();
  if (lq <= 0 || lk <= 0) return 0;
  switch (slice.mask_type) {
    case SliceMaskType::FULL:
      return lq * lk;
    case SliceMaskType::CAUSAL: {
      // rows r in [r0, lq) contribute r + (lk - lq) + 1 columns each
      const TokenIndex r0 = std::max<TokenIndex>(0, lq - lk);
      const TokenIndex m = lq - r0;
      if (m <= 0) return 0;
      const TokenIndex first = r0 + lk - lq + 1;
      return m * (first + lk) / 2;
    }
    case SliceMaskType::INV_CAUSAL: {
      const TokenIndex m = std::min(lq, lk);
      return m * lk - m * (m - 1) / 2;
    }
    case SliceMaskType::BI_CAUSAL:
      return lk >= lq ? lq * (lk - lq + 1) : 0;
  }
  throw UsageError("unknown SliceMaskType value");
}

PairCount slice_area_in_cols(const AttnSlice& slice, TokenIndex col_begin,
                             TokenIndex col_end) {
  const TokenIndex lq = slice.q_range.length();
  const TokenIndex lk = slice.k_range.length();
  if (lq <= 0 || lk <= 0) return 0;
  const TokenIndex ca = std::max(col_begin, slice.k_range.start) - slice.k_range.start;
  const TokenIndex cb = std::min(col_end, slice.k_range.end) - slice.k_range.start;
  if (cb <= ca) return 0;

  const bool causal_upper = has_causal_upper(slice.mask_type);
  const bool inv_lower = has_inv_lower(slice.mask_type);
  const TokenIndex t = lk - lq;

  // Allowed count at local row r, before the max(0, .) cut.
  auto raw = [&](TokenIndex r) -> TokenIndex {
    const TokenIndex hi = causal_upper ? clamp_i(r + t + 1, 0, lk) : lk;
    const TokenIndex lo = inv_lower ? r : 0;
    return std::min(hi, cb) - std::max(lo, ca);
  };

  // Segment boundaries where a min/max/clamp branch can switch; raw is affine
  // with slope in {-1, 0, +1} between consecutive boundaries.
  std::vector<TokenIndex> cuts = {0, lq};
  auto add_cut = [&](TokenIndex r) {
    for (TokenIndex v : {r, r + 1}) {
      if (v > 0 && v < lq) cuts.push_back(v);
    }
  };
  if (causal_upper) {
    add_cut(-t - 1);
    add_cut(lq - 1);
    add_cut(cb - t - 1);
  }
  if (inv_lower) add_cut(ca);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  PairCount total = 0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const TokenIndex s = cuts[i];
    const TokenIndex e = cuts[i + 1];
    const TokenIndex n = e - s;
    const TokenIndex vf = raw(s);
    const TokenIndex vl = raw(e - 1);
    if (vf >= 0 && vl >= 0) {
      total += (vf + vl) * n / 2;
    } else if (vf > 0 || vl > 0) {
      // slope is +-1 here; the positive tail/head forms 1 + 2 + ... + v
      const TokenIndex v = std::max(vf, vl);
      total += v * (v + 1) / 2;
    }
  }
  return total;
}

void AttnMask::check_valid() const {
  if (seqlen_q < 0 || seqlen_k < 0) {
    throw UsageError("mask seqlen must be non-negative");
  }
  for (std::size_t i = 0; i < slices.size(); ++i) {
    const AttnSlice& s = slices[i];
    if (!s.q_range.is_valid() || !s.k_range.is_valid()) {
      throw UsageError("slice " + std::to_string(i) + ": malformed range " +
                       s.to_string());
    }
    if (s.q_range.end > seqlen_q || s.k_range.end > seqlen_k) {
      throw UsageError("slice " + std::to_string(i) + ": " + s.to_string() +
                       " exceeds mask bounds " + std::to_string(seqlen_q) +
                       "x" + std::to_string(seqlen_k));
    }
  }
}

PairCount mask_area(const AttnMask& mask, AreaCounting counting) {
  if (counting == AreaCounting::MULTIPLICITY) {
    PairCount total = 0;
    for (const AttnSlice& s : mask.slices) total += slice_area(s);
    return total;
  }
  const std::vector<PairCount> rows = per_row_union_counts(mask);
  return std::accumulate(rows.begin(), rows.end(), PairCount{0});
}

bool is_allowed(const AttnMask& mask, TokenIndex q, TokenIndex k) {
  if (q < 0 || q >= mask.seqlen_q || k < 0 || k >= mask.seqlen_k) {
    throw UsageError("is_allowed(" + std::to_string(q) + ", " +
                     std::to_string(k) + ") out of range for " +
                     std::to_string(mask.seqlen_q) + "x" +
                     std::to_string(mask.seqlen_k) + " mask");
  }
  for (const AttnSlice& s : mask.slices) {
    if (s.allows(q, k)) return true;
  }
  return false;
}

namespace {

// Merge the row's slice intervals in place and return the covered count.
PairCount merge_and_count(std::vector<TokenRange>& intervals) {
  if (intervals.empty()) return 0;
  std::sort(intervals.begin(), intervals.end(),
            [](const TokenRange& a, const TokenRange& b) {
              return a.start < b.start || (a.start == b.start && a.end < b.end);
            });
  PairCount covered = 0;
  TokenRange cur = intervals.front();
  std::size_t out = 0;
  for (std::size_t i = 1; i < intervals.size(); ++i) {
    if (intervals[i].start > cur.end) {
      covered += cur.length();
      intervals[out++] = cur;
      cur = intervals[i];
    } else {
      cur.end = std::max(cur.end, intervals[i].end);
    }
  }
  covered += cur.length();
  intervals[out++] = cur;
  intervals.resize(out);
  return covered;
}

// Row sweep over [0, seqlen_q) maintaining the set of slices containing the
// current row; visit(q, merged_intervals) is called for every row.
template <typename Visitor>
void sweep_rows(const AttnMask& mask, Visitor&& visit) {
  std::vector<std::size_t> by_start(mask.slices.size());
  std::iota(by_start.begin(), by_start.end(), 0);
  std::sort(by_start.begin(), by_start.end(), [&](std::size_t a, std::size_t b) {
    return mask.slices[a].q_range.start < mask.slices[b].q_range.start;
  });

  std::vector<std::size_t> active;
  std::vector<TokenRange> intervals;
  std::size_t next = 0;
  for (TokenIndex q = 0; q < mask.seqlen_q; ++q) {
    while (next < by_start.size() &&
           mask.slices[by_start[next]].q_range.start <= q) {
      if (mask.slices[by_start[next]].q_range.end > q) {
        active.push_back(by_start[next]);
      }
      ++next;
    }
    active.erase(std::remove_if(active.begin(), active.end(),
                                [&](std::size_t i) {
                                  return mask.slices[i].q_range.end <= q;
                                }),
                 active.end());
    intervals.clear();
    for (std::size_t i : active) {
      const TokenRange cols = mask.slices[i].row_cols(q);
      if (!cols.empty()) intervals.push_back(cols);
    }
    visit(q, intervals);
  }
}

}  // namespace

std::vector<PairCount> per_row_union_counts(const AttnMask& mask) {
  std::vector<PairCount> counts(static_cast<std::size_t>(mask.seqlen_q), 0);
  sweep_rows(mask, [&](TokenIndex q, std::vector<TokenRange>& intervals) {
    counts[static_cast<std::size_t>(q)] = merge_and_count(intervals);
  });
  return counts;
}

void for_each_row_union(
    const AttnMask& mask,
    const std::function<void(TokenIndex, const std::vector<TokenRange>&)>& fn) {
  sweep_rows(mask, [&](TokenIndex q, std::vector<TokenRange>& intervals) {
    merge_and_count(intervals);
    fn(q, intervals);
  });
}

std::vector<TokenRange> row_union_intervals(const AttnMask& mask, TokenIndex q) {
  if (q < 0 || q >= mask.seqlen_q) {
    throw UsageError("row " + std::to_string(q) + " out of range");
  }
  std::vector<TokenRange> intervals;
  for (const AttnSlice& s : mask.slices) {
    const TokenRange cols = s.row_cols(q);
    if (!cols.empty()) intervals.push_back(cols);
  }
  merge_and_count(intervals);
  return intervals;
}

namespace {

std::optional<AttnSlice> clip_slice_to_rows(const AttnSlice& slice,
                                            const TokenRange& rows) {
  const TokenIndex a = std::max(rows.start, slice.q_range.start);
  const TokenIndex b = std::min(rows.end, slice.q_range.end);
  if (a >= b) return std::nullopt;
  const TokenIndex d_top = a - slice.q_range.start;
  const TokenIndex d_bot = slice.q_range.end - b;

  AttnSlice out = slice;
  out.q_range = {a, b};
  // Shifting the kept window through the diagonal anchors: a causal upper
  // bound pins to the bottom-right corner, an inv-causal lower bound to the
  // top-left, so trimming rows maps to trimming the matching k side.
  if (has_causal_upper(slice.mask_type)) out.k_range.end -= d_bot;
  if (has_inv_lower(slice.mask_type)) out.k_range.start += d_top;
  if (out.k_range.end <= out.k_range.start) return std::nullopt;
  return out;
}

}  // namespace

AttnMask restrict_rows(const AttnMask& mask, const std::vector<TokenRange>& rows) {
  std::vector<TokenRange> sorted = rows;
  std::sort(sorted.begin(), sorted.end(),
            [](const TokenRange& a, const TokenRange& b) {
              return a.start < b.start;
            });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (!sorted[i].is_valid() || sorted[i].end > mask.seqlen_q) {
      throw ConstraintError("row range " + sorted[i].to_string() +
                            " outside [0, " + std::to_string(mask.seqlen_q) +
                            ")");
    }
    if (i > 0 && sorted[i].start < sorted[i - 1].end) {
      throw ConstraintError("row ranges " + sorted[i - 1].to_string() +
                            " and " + sorted[i].to_string() + " overlap");
    }
  }

  AttnMask out;
  out.seqlen_q = mask.seqlen_q;
  out.seqlen_k = mask.seqlen_k;
  for (const TokenRange& r : sorted) {
    if (r.empty()) continue;
    for (const AttnSlice& s : mask.slices) {
      if (auto clipped = clip_slice_to_rows(s, r)) {
        out.slices.push_back(*clipped);
      }
    }
  }
  return out;
}

const char* to_string(NamedPattern pattern) {
  switch (pattern) {
    case NamedPattern::FULL:
      return "full";
    case NamedPattern::CAUSAL:
      return "causal";
    case NamedPattern::VARLEN_FULL:
      return "varlen_full";
    case NamedPattern::VARLEN_CAUSAL:
      return "varlen_causal";
    case NamedPattern::SLIDING_WINDOW_CAUSAL:
      return "sliding_window_causal";
    case NamedPattern::BLOCK_CAUSAL:
      return "block_causal";
    case NamedPattern::VARLEN_BLOCK_CAUSAL:
      return "varlen_block_causal";
    case NamedPattern::VARLEN_BLOCK_CAUSAL_LAST_GLOBAL:
      return "varlen_block_causal_last_global";
  }
  throw UsageError("unknown NamedPattern value");
}

NamedPattern named_pattern_from_string(const std::string& name) {
  for (NamedPattern p :
       {NamedPattern::FULL, NamedPattern::CAUSAL, NamedPattern::VARLEN_FULL,
        NamedPattern::VARLEN_CAUSAL, NamedPattern::SLIDING_WINDOW_CAUSAL,
        NamedPattern::BLOCK_CAUSAL, NamedPattern::VARLEN_BLOCK_CAUSAL,
        NamedPattern::VARLEN_BLOCK_CAUSAL_LAST_GLOBAL}) {
    if (name == to_string(p)) return p;
  }
  throw UsageError("unknown mask pattern '" + name + "'");
}

namespace {

std::vector<TokenIndex> sample_offsets(const PatternSpec& spec) {
  if (spec.sample_lengths.empty()) {
    throw ConstraintError("pattern '" + std::string(to_string(spec.pattern)) +
                          "' requires non-empty sample_lengths");
  }
  std::vector<TokenIndex> offsets;
  TokenIndex at = 0;
  for (TokenIndex len : spec.sample_lengths) {
    if (len <= 0) {
      throw ConstraintError("sample lengths must be positive");
    }
    offsets.push_back(at);
    at += len;
  }
  if (at != spec.seqlen) {
    throw ConstraintError("sample lengths sum to " + std::to_string(at) +
                          " but seqlen is " + std::to_string(spec.seqlen));
  }
  return offsets;
}

void append_block_causal(AttnMask& mask, TokenIndex offset, TokenIndex length,
                         TokenIndex block) {
  if (block <= 0) {
    throw ConstraintError("block_size must be positive");
  }
  if (length % block != 0) {
    throw ConstraintError("block_size " + std::to_string(block) +
                          " does not divide sample length " +
                          std::to_string(length));
  }
  for (TokenIndex b = 0; b < length / block; ++b) {
    mask.slices.push_back({{offset + b * block, offset + (b + 1) * block},
                           {offset, offset + (b + 1) * block},
                           SliceMaskType::FULL});
  }
}

}  // namespace

AttnMask build_named_mask(const PatternSpec& spec) {
  if (spec.seqlen <= 0) {
    throw ConstraintError("pattern seqlen must be positive");
  }
  const TokenIndex s = spec.seqlen;
  AttnMask mask;
  mask.seqlen_q = s;
  mask.seqlen_k = s;

  switch (spec.pattern) {
    case NamedPattern::FULL:
      mask.slices.push_back({{0, s}, {0, s}, SliceMaskType::FULL});
      break;
    case NamedPattern::CAUSAL:
      mask.slices.push_back({{0, s}, {0, s}, SliceMaskType::CAUSAL});
      break;
    case NamedPattern::VARLEN_FULL:
    case NamedPattern::VARLEN_CAUSAL: {
      const auto offsets = sample_offsets(spec);
      const SliceMaskType type = spec.pattern == NamedPattern::VARLEN_FULL
                                     ? SliceMaskType::FULL
                                     : SliceMaskType::CAUSAL;
      for (std::size_t i = 0; i < offsets.size(); ++i) {
        const TokenIndex o = offsets[i];
        const TokenIndex len = spec.sample_lengths[i];
        mask.slices.push_back({{o, o + len}, {o, o + len}, type});
      }
      break;
    }
    case NamedPattern::SLIDING_WINDOW_CAUSAL: {
      const TokenIndex w = spec.window;
      if (w <= 0) {
        throw ConstraintError("window must be positive");
      }
      if (s <= w) {
        mask.slices.push_back({{0, s}, {0, s}, SliceMaskType::CAUSAL});
      } else {
        mask.slices.push_back({{0, w}, {0, w}, SliceMaskType::CAUSAL});
        // rows q >= w attend exactly [q - w + 1, q]: a width-w diagonal band
        mask.slices.push_back({{w, s}, {1, s}, SliceMaskType::BI_CAUSAL});
      }
      break;
    }
    case NamedPattern::BLOCK_CAUSAL:
      append_block_causal(mask, 0, s, spec.block_size);
      break;
    case NamedPattern::VARLEN_BLOCK_CAUSAL:
    case NamedPattern::VARLEN_BLOCK_CAUSAL_LAST_GLOBAL: {
      const auto offsets = sample_offsets(spec);
      for (std::size_t i = 0; i < offsets.size(); ++i) {
        append_block_causal(mask, offsets[i], spec.sample_lengths[i],
                            spec.block_size);
      }
      if (spec.pattern == NamedPattern::VARLEN_BLOCK_CAUSAL_LAST_GLOBAL) {
        const TokenIndex last = s - spec.block_size;
        if (last > 0) {
          mask.slices.push_back({{0, last}, {last, s}, SliceMaskType::FULL});
        }
      }
      break;
    }
  }
  mask.check_valid();
  return mask;
}

std::string render_ascii(const AttnMask& mask) {
  if (mask.seqlen_q > 128 || mask.seqlen_k > 128) {
    throw UsageError("ascii rendering is limited to seqlen <= 128");
  }
  std::string grid;
  grid.reserve(static_cast<std::size_t>(mask.seqlen_q) *
               static_cast<std::size_t>(mask.seqlen_k + 1));
  sweep_rows(mask, [&](TokenIndex, std::vector<TokenRange>& intervals) {
    merge_and_count(intervals);
    std::string line(static_cast<std::size_t>(mask.seqlen_k), '.');
    for (const TokenRange& r : intervals) {
      for (TokenIndex k = r.start; k < r.end; ++k) {
        line[static_cast<std::size_t>(k)] = '#';
      }
    }
    grid += line;
    grid += '\n';
  });
  return grid;
}

namespace {

ordered_json parse_json_or_throw(const std::string& text, const char* what) {
  try {
    return ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string(what) + ": " + e.what());
  }
}

TokenIndex require_int(const ordered_json& j, const std::string& key) {
  if (!j.contains(key) || !j[key].is_number_integer()) {
    throw UsageError("missing or non-integer field '" + key + "'");
  }
  return j[key].get<TokenIndex>();
}

void reject_unknown_mask_keys(const ordered_json& obj,
                              std::initializer_list<const char*> allowed,
                              const char* context) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) {
      throw UsageError(std::string("unknown field '") + key + "' in " + context);
    }
  }
}

TokenRange parse_range_field(const ordered_json& j, const std::string& key,
                             std::size_t slice_idx) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 2) {
    throw UsageError("slice " + std::to_string(slice_idx) + ": field '" + key +
                     "' must be a [start, end) pair");
  }
  return {j[key][0].get<TokenIndex>(), j[key][1].get<TokenIndex>()};
}

}  // namespace

AttnMask parse_mask_spec(const std::string& json_text) {
  const ordered_json j = parse_json_or_throw(json_text, "mask spec");
  if (!j.is_object()) {
    throw UsageError("mask spec must be a JSON object");
  }

  if (j.contains("slices")) {
    reject_unknown_mask_keys(j, {"seqlen", "seqlen_q", "seqlen_k", "slices"},
                             "mask spec");
    AttnMask mask;
    if (j.contains("seqlen")) {
      mask.seqlen_q = mask.seqlen_k = require_int(j, "seqlen");
    } else {
      mask.seqlen_q = require_int(j, "seqlen_q");
      mask.seqlen_k = require_int(j, "seqlen_k");
    }
    if (!j["slices"].is_array()) {
      throw UsageError("'slices' must be an array");
    }
    std::size_t idx = 0;
    for (const auto& js : j["slices"]) {
      reject_unknown_mask_keys(js, {"q", "k", "type"},
                               ("slice " + std::to_string(idx)).c_str());
      AttnSlice s;
      s.q_range = parse_range_field(js, "q", idx);
      s.k_range = parse_range_field(js, "k", idx);
      s.mask_type = js.contains("type")
                        ? slice_mask_type_from_string(js["type"].get<std::string>())
                        : SliceMaskType::FULL;
      mask.slices.push_back(s);
      ++idx;
    }
    mask.check_valid();
    return mask;
  }

  if (!j.contains("pattern")) {
    throw UsageError("mask spec needs either 'pattern' or 'slices'");
  }
  reject_unknown_mask_keys(j, {"seqlen", "pattern", "params"}, "mask spec");
  PatternSpec spec;
  spec.pattern = named_pattern_from_string(j["pattern"].get<std::string>());
  spec.seqlen = require_int(j, "seqlen");
  if (j.contains("params")) {
    const auto& p = j["params"];
    reject_unknown_mask_keys(p, {"sample_lengths", "block_size", "window"},
                             "mask params");
    if (p.contains("sample_lengths")) {
      spec.sample_lengths = p["sample_lengths"].get<std::vector<TokenIndex>>();
    }
    if (p.contains("block_size")) spec.block_size = p["block_size"].get<TokenIndex>();
    if (p.contains("window")) spec.window = p["window"].get<TokenIndex>();
  }
  return build_named_mask(spec);
}

std::string mask_to_json(const AttnMask& mask) {
  ordered_json j;
  j["seqlen_q"] = mask.seqlen_q;
  j["seqlen_k"] = mask.seqlen_k;
  j["slices"] = ordered_json::array();
  for (const AttnSlice& s : mask.slices) {
    ordered_json js;
    js["q"] = {s.q_range.start, s.q_range.end};
    js["k"] = {s.k_range.start, s.k_range.end};
    js["type"] = to_string(s.mask_type);
    j["slices"].push_back(js);
  }
  return j.dump();
}

}  // namespace magiplan
