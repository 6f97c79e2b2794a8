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

#include <optional>
#include <string>
#include <vector>

#include "magiplan/comm.hpp"
#include "magiplan/dispatch.hpp"
#include "magiplan/mask.hpp"
#include "magiplan/metrics.hpp"
#include "magiplan/overlap.hpp"
#include "magiplan/pack.hpp"
#include "magiplan/sim.hpp"

namespace magiplan {

inline constexpr int kSchemaVersion = 1;

std::uint64_t fnv1a_hash(const std::string& text);
std::string hash_hex(std::uint64_t hash);

struct SweepSpec {
  std::vector<RankIndex> cp_sizes;
  TokenIndex per_rank_seqlen = 0;
  TokenIndex sample_length = 0;  // varlen patterns: uniform sample length
};

/// One fully validated planning/simulation scenario.
struct ScenarioSpec {
  std::string mask_spec_json;  // pattern or slice form, re-instantiated per point
  WorkloadSpec workload;
  std::string schedule = "magi";  // magi | ring | ring_serial | ulysses | cso
  RankIndex cp_size = 1;
  std::int64_t tp_size = 1;
  std::int64_t dp_size = 1;
  TokenIndex dispatch_chunk_size = 0;  // 0: 1/8 of the per-rank sequence
  std::string dispatch_policy = "greedy";  // greedy | zigzag
  CostModel cost_model;
  OverlapHyperparams overlap;
  int cso_num_chunks = 5;
  std::uint64_t seed = 0;
  std::optional<SweepSpec> sweep;
  std::string spec_hash;  // FNV-1a of the scenario text

  /// Parse + validate. `base_dir` resolves file references (cost_model as a
  /// path). Constraint violations throw ConstraintError, everything else
  /// UsageError.
  static ScenarioSpec parse(const std::string& json_text,
                            const std::string& base_dir = ".");
};

struct PlanArtifacts {
  AttnMask mask;
  TokenIndex chunk_size = 0;
  DispatchPlan plan;
  std::vector<KvDemand> demands;
  TransferTable cast_table;
  TransferTable reduce_table;
  RedundancyReport redundancy;
  BalanceSummary balance;
  SolveResult stages;
};

/// mask -> dispatch -> demand analysis -> transfer tables -> overlap search.
PlanArtifacts run_plan(const ScenarioSpec& spec, const AttnMask& mask);

/// Remote-demand view per rank, with pair attribution against each rank's
/// local mask; input to the overlap solver.
std::vector<RankTraffic> rank_traffic_from(const AttnMask& mask,
                                           const DispatchPlan& plan,
                                           const TransferTable& cast_table);

/// One JSON object carrying every planning artifact plus provenance fields.
std::string plan_artifacts_to_json(const PlanArtifacts& artifacts,
                                   const ScenarioSpec& spec);

/// Simulate the scenario (all sweep points when a sweep is present; `jobs`
/// bounds concurrent points). One report per schedule pass per point, in
/// deterministic order.
std::vector<std::string> run_simulate(const ScenarioSpec& spec, int jobs = 1);

/// Mask instantiated for one sweep point (or the scenario's own mask when
/// seqlen == 0).
AttnMask scenario_mask(const ScenarioSpec& spec, TokenIndex seqlen = 0);

/// Packing run: consumes a line-delimited "id length" stream, or the
/// configured log-normal generator when `stream_text` is null. Returns the
/// JSON report.
std::string run_pack(const std::string& config_json,
                     const std::string* stream_text);

}  // namespace magiplan
