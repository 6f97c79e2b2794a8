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

#include "magiplan/comm.hpp"
#include "magiplan/dispatch.hpp"
#include "magiplan/mask.hpp"
#include "magiplan/overlap.hpp"

namespace magiplan {

enum class Pass { FWD, BWD };

/// Tensor shape multipliers around the mask; heads/dims follow the usual GQA
/// training defaults.
struct WorkloadSpec {
  std::int64_t batch_size = 1;
  std::int64_t num_heads_q = 64;
  std::int64_t num_heads_k = 8;
  std::int64_t num_heads_v = 8;
  std::int64_t head_dim = 128;
  std::int64_t dtype_bytes = 2;

  std::int64_t kv_bytes_per_token() const {
    return (num_heads_k + num_heads_v) * head_dim * dtype_bytes;
  }
  std::int64_t q_bytes_per_token() const {
    return num_heads_q * head_dim * dtype_bytes;
  }
};

/// 4 * MaskArea(MULTIPLICITY) * batch * heads_q * head_dim for the forward
/// pass; backward is 2.5x (recomputation).
std::int64_t flops(const AttnMask& mask, const WorkloadSpec& workload, Pass pass);

/// flops / (runtime * cp_size); runtime must be positive.
double throughput(std::int64_t flops_total, CostUnits runtime, RankIndex cp_size);

/// Deterministic multi-stream timeline. Tasks on one (rank, stream) pair run
/// in submission order; cross-stream orderings are explicit dependency edges
/// on earlier task ids.
class Timeline {
 public:
  static constexpr int kComputeStream = 0;
  static constexpr int kCommStream = 1;
  static constexpr int kReduceStream = 2;

  int add_task(RankIndex rank, int stream, CostUnits duration,
               std::vector<int> deps, std::string label);
  void run();

  CostUnits makespan() const { return makespan_; }
  CostUnits end_of(int task) const;
  CostUnits rank_end(RankIndex rank) const;
  CostUnits rank_compute_time(RankIndex rank) const;
  RankIndex bottleneck_rank() const;
  std::vector<std::string> labels_in_id_order() const;

 private:
  struct Task {
    RankIndex rank;
    int stream;
    CostUnits duration;
    std::vector<int> deps;
    std::string label;
    CostUnits start = 0;
    CostUnits end = 0;
  };
  std::vector<Task> tasks_;
  bool ran_ = false;
  CostUnits makespan_ = 0;
};

struct SimReport {
  std::string schedule;
  Pass pass = Pass::FWD;
  RankIndex cp_size = 1;
  CostUnits makespan = 0;
  CostUnits exposed_comm = 0;
  std::vector<double> per_rank_busy;
  std::vector<CostUnits> per_rank_makespan;
  std::vector<CostUnits> per_rank_compute;
  std::int64_t flops_total = 0;
  double throughput_per_gpu = 0.0;  // flops per cost unit per rank
  std::int64_t comm_volume_tokens = 0;
  std::vector<std::string> event_log;  // step-structure trace (Ulysses/CSO)
};

std::string sim_report_to_json(const SimReport& report);

/// Multi-stage overlap pipeline: forward prefetches the next stage's KV cast
/// behind the current stage's attention; backward additionally drains the
/// previous stage's dKV reduction on a third stream, leaving only the final
/// reduction exposed.
std::pair<SimReport, SimReport> simulate_magi(const AttnMask& mask,
                                              const DispatchPlan& plan,
                                              const TransferTable& cast_table,
                                              const TransferTable& reduce_table,
                                              const SolveResult& stages,
                                              const CostModel& model,
                                              const WorkloadSpec& workload);

/// Ring point-to-point baseline: cp_size - 1 rounds, every rank forwarding
/// its current shard while computing the one it holds. With overlap, round
/// r+1's transfer runs concurrent with round r's compute. Backward doubles
/// the per-hop payload (KV + accumulated dKV).
std::pair<SimReport, SimReport> simulate_ring(const AttnMask& mask,
                                              const DispatchPlan& plan,
                                              const CostModel& model,
                                              const WorkloadSpec& workload,
                                              bool overlap);

/// Head-sharded all-to-all schedule with the pairings: v-comm || k-compute,
/// k-comm || q-compute, q-comm || kv-cache-update, o-comm || cross-attention.
SimReport simulate_ulysses(const AttnMask& mask, const WorkloadSpec& workload,
                           const CostModel& model, RankIndex cp_size);

/// Context-shuffle overlap: every rank holds a 1/cp view of each of the C
/// chunks; q/o communication interleaves with per-chunk attention compute.
SimReport simulate_cso(const AttnMask& mask, const WorkloadSpec& workload,
                       const CostModel& model, RankIndex cp_size,
                       int num_chunks);

}  // namespace magiplan
