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

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "magiplan/mask.hpp"

namespace magiplan {

using CostUnits = std::int64_t;  // integer time; keeps event ordering exact

/// Affine work-to-time map. Zero work is free; otherwise
/// round(latency + per_unit * work), never negative.
struct AffineCost {
  double latency = 0.0;
  double per_unit = 0.0;

  CostUnits eval(std::int64_t work) const;
};

/// Least-squares fit of (work, time) samples; negative coefficients clamp
/// to zero. Needs at least two samples.
AffineCost fit_affine(
    const std::vector<std::pair<std::int64_t, std::int64_t>>& samples);

/// Kernel cost models. ffa_* take pair counts, everything else token counts.
/// The named dense phases size Ulysses/CSO compute steps.
struct CostModel {
  AffineCost ffa_fwd;
  AffineCost ffa_bwd;
  AffineCost cast_cost;
  AffineCost reduce_cost;
  AffineCost q_proj;
  AffineCost k_proj;
  AffineCost v_proj;
  AffineCost kv_cache_update;
  AffineCost cross_attn;
  /// When set, replaces the pair-derived host compute term per pass.
  std::optional<CostUnits> host_cost_fwd;
  std::optional<CostUnits> host_cost_bwd;

  CostUnits host_compute(PairCount host_pairs, bool backward) const;
};

CostModel cost_model_from_json(const std::string& json_text);
std::string cost_model_to_json(const CostModel& model);

struct OverlapHyperparams {
  std::int64_t min_chunk_size = 512;
  std::int64_t max_num_chunks = 8;
};

/// Split total remote traffic into fine-grained communication packages:
/// min_chunk_size-sized packages while the count cap allows, remainder
/// appended; when the cap binds, an even split into max_num_chunks.
/// Zero traffic yields an empty list.
std::vector<std::int64_t> partition_packages(
    const std::vector<std::int64_t>& rank_traffic, std::int64_t min_chunk_size,
    std::int64_t max_num_chunks);

/// Deterministic balanced assignment: packages sorted largest-first (ties by
/// ordinal) land on the least-loaded stage (ties by stage index). The seeded
/// variant shuffles package order and deals round-robin instead.
std::vector<std::vector<int>> assign_packages_to_stages(
    const std::vector<std::int64_t>& package_sizes, int num_stages,
    std::optional<std::uint64_t> shuffle_seed = std::nullopt);

/// Per-stage cost terms of one candidate schedule; index i holds stage i+1.
/// host_compute is C_ffa(0).
struct StageCosts {
  CostUnits host_compute = 0;
  std::vector<CostUnits> compute;  // C_ffa(1..s)
  std::vector<CostUnits> cast;     // C_gc(1..s)
  std::vector<CostUnits> reduce;   // C_gr(1..s)
};

/// Timeline estimates. The callable forms accept arbitrary j and force the
/// boundary terms C_gc(s+1), C_gr(0), C_gr(-1) to zero regardless of what
/// the callables return there.
CostUnits estimate_fwd_cost(int num_stages,
                            const std::function<CostUnits(int)>& gc,
                            const std::function<CostUnits(int)>& ffa);
CostUnits estimate_bwd_cost(int num_stages,
                            const std::function<CostUnits(int)>& gc,
                            const std::function<CostUnits(int)>& ffa,
                            const std::function<CostUnits(int)>& gr);
CostUnits estimate_fwd_cost(const StageCosts& costs);
CostUnits estimate_bwd_cost(const StageCosts& costs);

/// One pass's stage layout for one rank.
struct StageBreakdown {
  int num_stages = 1;
  std::vector<std::vector<int>> stage_packages;  // package ordinals per stage
  std::vector<std::int64_t> stage_tokens;
  std::vector<PairCount> stage_pairs;
  CostUnits est_cost = 0;
};

struct StagePlan {
  RankIndex rank = 0;
  PairCount host_pairs = 0;
  std::vector<std::int64_t> package_sizes;
  std::vector<std::vector<TokenRange>> package_ranges;
  StageBreakdown fwd;
  StageBreakdown bwd;
};

/// Remote demand of one rank, plus the column-window area of its local mask
/// (attribution of attention pairs to arriving key/value tokens).
struct RankTraffic {
  PairCount host_pairs = 0;
  std::vector<TokenRange> remote_ranges;
  std::function<PairCount(TokenIndex, TokenIndex)> pairs_in_cols;
};

struct RankStageSearch {
  RankIndex rank = 0;
  std::vector<std::int64_t> package_sizes;
  std::vector<CostUnits> cost_fwd;  // cost at s = index + 1
  std::vector<CostUnits> cost_bwd;
  int s_opt_fwd = 1;
  int s_opt_bwd = 1;
};

struct SolveResult {
  int num_stages_fwd = 1;  // max of per-rank optima
  int num_stages_bwd = 1;
  std::vector<RankStageSearch> searches;
  std::vector<StagePlan> plans;  // built at the global stage counts
};

SolveResult solve_stages(const std::vector<RankTraffic>& traffic,
                         const CostModel& model,
                         const OverlapHyperparams& hyperparams);

std::string solve_result_to_json(const SolveResult& result);

}  // namespace magiplan
