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

#include "magiplan/sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>

#include "magiplan/errors.hpp"

namespace magiplan {

std::int64_t flops(const AttnMask& mask, const WorkloadSpec& workload, Pass pass) {
  const PairCount area = mask_area(mask, AreaCounting::MULTIPLICITY);
  const std::int64_t fwd = 4 * area * workload.batch_size *
                           workload.num_heads_q * workload.head_dim;
  return pass == Pass::FWD ? fwd : fwd * 5 / 2;
}

double throughput(std::int64_t flops_total, CostUnits runtime, RankIndex cp_size) {
  if (runtime <= 0) {
    throw UsageError("throughput needs a positive runtime");
  }
  if (cp_size < 1) {
    throw UsageError("throughput needs cp_size >= 1");
  }
  return static_cast<double>(flops_total) /
         (static_cast<double>(runtime) * static_cast<double>(cp_size));
}

int Timeline::add_task(RankIndex rank, int stream, CostUnits duration,
                       std::vector<int> deps, std::string label) {
  MAGIPLAN_INTERNAL_CHECK(!ran_, "timeline already ran");
  MAGIPLAN_INTERNAL_CHECK(duration >= 0, "task duration must be >= 0");
  const int id = static_cast<int>(tasks_.size());
  for (int d : deps) {
    MAGIPLAN_INTERNAL_CHECK(d >= 0 && d < id, "deps must reference earlier tasks");
  }
  // implicit in-order dependency on the previous task of the same stream
  for (int t = id - 1; t >= 0; --t) {
    if (tasks_[static_cast<std::size_t>(t)].rank == rank &&
        tasks_[static_cast<std::size_t>(t)].stream == stream) {
      deps.push_back(t);
      break;
    }
  }
  tasks_.push_back({rank, stream, duration, std::move(deps), std::move(label)});
  return id;
}

void Timeline::run() {
  MAGIPLAN_INTERNAL_CHECK(!ran_, "timeline already ran");
  for (Task& t : tasks_) {
    CostUnits start = 0;
    for (int d : t.deps) {
      start = std::max(start, tasks_[static_cast<std::size_t>(d)].end);
    }
    t.start = start;
    t.end = start + t.duration;
    makespan_ = std::max(makespan_, t.end);
  }
  ran_ = true;
}

CostUnits Timeline::end_of(int task) const {
  return tasks_[static_cast<std::size_t>(task)].end;
}

CostUnits Timeline::rank_end(RankIndex rank) const {
  CostUnits end = 0;
  for (const Task& t : tasks_) {
    if (t.rank == rank) end = std::max(end, t.end);
  }
  return end;
}

CostUnits Timeline::rank_compute_time(RankIndex rank) const {
  CostUnits total = 0;
  for (const Task& t : tasks_) {
    if (t.rank == rank && t.stream == kComputeStream) total += t.duration;
  }
  return total;
}

RankIndex Timeline::bottleneck_rank() const {
  RankIndex best = 0;
  CostUnits best_end = -1;
  for (const Task& t : tasks_) {
    const CostUnits end = rank_end(t.rank);
    if (end > best_end || (end == best_end && t.rank < best)) {
      best = t.rank;
      best_end = end;
    }
  }
  return best;
}

std::vector<std::string> Timeline::labels_in_id_order() const {
  std::vector<std::string> labels;
  for (const Task& t : tasks_) labels.push_back(t.label);
  return labels;
}

namespace {

SimReport make_report(std::string schedule, Pass pass, RankIndex cp_size,
                      Timeline& timeline, std::int64_t flops_total,
                      std::int64_t comm_volume_tokens,
                      std::vector<std::string> event_log = {}) {
  timeline.run();
  SimReport report;
  report.schedule = std::move(schedule);
  report.pass = pass;
  report.cp_size = cp_size;
  report.makespan = timeline.makespan();
  const RankIndex bottleneck = timeline.bottleneck_rank();
  report.exposed_comm =
      report.makespan - timeline.rank_compute_time(bottleneck);
  MAGIPLAN_INTERNAL_CHECK(report.exposed_comm >= 0,
                          "exposed communication must be non-negative");
  for (RankIndex r = 0; r < cp_size; ++r) {
    const CostUnits busy = timeline.rank_compute_time(r);
    report.per_rank_busy.push_back(
        report.makespan > 0
            ? static_cast<double>(busy) / static_cast<double>(report.makespan)
            : 0.0);
    report.per_rank_makespan.push_back(timeline.rank_end(r));
    report.per_rank_compute.push_back(busy);
  }
  report.flops_total = flops_total;
  report.throughput_per_gpu =
      report.makespan > 0 ? throughput(flops_total, report.makespan, cp_size)
                          : 0.0;
  report.comm_volume_tokens = comm_volume_tokens;
  report.event_log = std::move(event_log);
  return report;
}

}  // namespace

std::string sim_report_to_json(const SimReport& report) {
  nlohmann::ordered_json j;
  j["schedule"] = report.schedule;
  j["pass"] = report.pass == Pass::FWD ? "fwd" : "bwd";
  j["cp_size"] = report.cp_size;
  j["makespan"] = report.makespan;
  j["exposed_comm"] = report.exposed_comm;
  j["per_rank_busy"] = report.per_rank_busy;
  j["per_rank_makespan"] = report.per_rank_makespan;
  j["per_rank_compute"] = report.per_rank_compute;
  j["flops_total"] = report.flops_total;
  j["throughput_per_gpu"] = report.throughput_per_gpu;
  j["comm_volume_tokens"] = report.comm_volume_tokens;
  if (!report.event_log.empty()) j["event_log"] = report.event_log;
  return j.dump();
}

std::pair<SimReport, SimReport> simulate_magi(const AttnMask& mask,
                                              const DispatchPlan& plan,
                                              const TransferTable& cast_table,
                                              const TransferTable& reduce_table,
                                              const SolveResult& stages,
                                              const CostModel& model,
                                              const WorkloadSpec& workload) {
  const RankIndex cp = plan.cp_size;
  if (static_cast<RankIndex>(stages.plans.size()) != cp) {
    throw UsageError("stage plans cover " +
                     std::to_string(stages.plans.size()) + " ranks, plan has " +
                     std::to_string(cp));
  }

  Timeline fwd_tl;
  Timeline bwd_tl;
  for (RankIndex r = 0; r < cp; ++r) {
    const StagePlan& sp = stages.plans[static_cast<std::size_t>(r)];

    {  // forward: step j runs cast(j+1) || ffa(j)
      const StageBreakdown& b = sp.fwd;
      std::vector<int> prev_step;
      for (int j = 0; j <= b.num_stages; ++j) {
        std::vector<int> step;
        if (j + 1 <= b.num_stages) {
          step.push_back(fwd_tl.add_task(
              r, Timeline::kCommStream,
              model.cast_cost.eval(b.stage_tokens[static_cast<std::size_t>(j)]),
              prev_step, "cast(" + std::to_string(j + 1) + ")"));
        }
        const CostUnits ffa_dur =
            j == 0 ? model.host_compute(sp.host_pairs, false)
                   : model.ffa_fwd.eval(
                         b.stage_pairs[static_cast<std::size_t>(j - 1)]);
        step.push_back(fwd_tl.add_task(r, Timeline::kComputeStream, ffa_dur,
                                       prev_step,
                                       "ffa(" + std::to_string(j) + ")"));
        prev_step = std::move(step);
      }
    }

    {  // backward: step j runs cast(j+1) || ffa(j) || reduce(j-1)
      const StageBreakdown& b = sp.bwd;
      std::vector<int> prev_step;
      for (int j = 0; j <= b.num_stages; ++j) {
        std::vector<int> step;
        if (j + 1 <= b.num_stages) {
          step.push_back(bwd_tl.add_task(
              r, Timeline::kCommStream,
              model.cast_cost.eval(b.stage_tokens[static_cast<std::size_t>(j)]),
              prev_step, "cast(" + std::to_string(j + 1) + ")"));
        }
        const CostUnits ffa_dur =
            j == 0 ? model.host_compute(sp.host_pairs, true)
                   : model.ffa_bwd.eval(
                         b.stage_pairs[static_cast<std::size_t>(j - 1)]);
        step.push_back(bwd_tl.add_task(r, Timeline::kComputeStream, ffa_dur,
                                       prev_step,
                                       "ffa(" + std::to_string(j) + ")"));
        if (j - 1 >= 1) {
          step.push_back(bwd_tl.add_task(
              r, Timeline::kReduceStream,
              model.reduce_cost.eval(
                  b.stage_tokens[static_cast<std::size_t>(j - 2)]),
              prev_step, "reduce(" + std::to_string(j - 1) + ")"));
        }
        prev_step = std::move(step);
      }
      // the final dKV reduction is the only exposed backward term
      bwd_tl.add_task(
          r, Timeline::kReduceStream,
          model.reduce_cost.eval(
              b.stage_tokens[static_cast<std::size_t>(b.num_stages - 1)]),
          prev_step, "reduce(" + std::to_string(b.num_stages) + ")");
    }
  }

  const std::int64_t cast_volume = cast_table.total_token_transfers();
  const std::int64_t reduce_volume = reduce_table.total_token_transfers();
  SimReport fwd = make_report("magi", Pass::FWD, cp, fwd_tl,
                              flops(mask, workload, Pass::FWD), cast_volume);
  SimReport bwd =
      make_report("magi", Pass::BWD, cp, bwd_tl,
                  flops(mask, workload, Pass::BWD), cast_volume + reduce_volume);
  return {std::move(fwd), std::move(bwd)};
}

namespace {

// pairs of rank i's queries against the key columns owned by bucket j
std::vector<std::vector<PairCount>> ring_pair_matrix(const AttnMask& mask,
                                                     const DispatchPlan& plan) {
  const RankIndex cp = plan.cp_size;
  std::vector<std::vector<PairCount>> pairs(
      static_cast<std::size_t>(cp),
      std::vector<PairCount>(static_cast<std::size_t>(cp), 0));
  for (RankIndex i = 0; i < cp; ++i) {
    const AttnMask local = local_mask_of_rank(mask, plan, i);
    for (RankIndex j = 0; j < cp; ++j) {
      PairCount total = 0;
      for (const TokenRange& cols : plan.rows_of_bucket(j)) {
        for (const AttnSlice& s : local.slices) {
          total += slice_area_in_cols(s, cols.start, cols.end);
        }
      }
      pairs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = total;
    }
  }
  return pairs;
}

SimReport simulate_ring_pass(const AttnMask& mask, const DispatchPlan& plan,
                             const CostModel& model, const WorkloadSpec& workload,
                             bool overlap, Pass pass,
                             const std::vector<std::vector<PairCount>>& pairs) {
  const RankIndex cp = plan.cp_size;
  const std::int64_t shard_tokens =
      (static_cast<std::int64_t>(plan.assignment.size()) / cp) * plan.chunk_size;
  // backward hops carry KV plus the accumulated partial dKV
  const std::int64_t payload = pass == Pass::FWD ? shard_tokens : 2 * shard_tokens;
  const AffineCost& ffa = pass == Pass::FWD ? model.ffa_fwd : model.ffa_bwd;

  Timeline tl;
  std::vector<int> prev_send(static_cast<std::size_t>(cp), -1);
  std::vector<int> cur_send(static_cast<std::size_t>(cp), -1);
  for (RankIndex t = 0; t < cp; ++t) {
    std::vector<int> ffa_task(static_cast<std::size_t>(cp), -1);
    for (RankIndex i = 0; i < cp; ++i) {
      const RankIndex shard = static_cast<RankIndex>((i - t + cp) % cp);
      std::vector<int> deps;
      if (t >= 1) {
        deps.push_back(prev_send[static_cast<std::size_t>((i - 1 + cp) % cp)]);
      }
      ffa_task[static_cast<std::size_t>(i)] = tl.add_task(
          i, Timeline::kComputeStream,
          ffa.eval(pairs[static_cast<std::size_t>(i)][static_cast<std::size_t>(shard)]),
          deps, "ffa(shard " + std::to_string(shard) + ")");
    }
    if (t < cp - 1) {
      for (RankIndex i = 0; i < cp; ++i) {
        std::vector<int> deps;
        if (t >= 1) {
          deps.push_back(prev_send[static_cast<std::size_t>((i - 1 + cp) % cp)]);
        }
        if (!overlap) deps.push_back(ffa_task[static_cast<std::size_t>(i)]);
        cur_send[static_cast<std::size_t>(i)] =
            tl.add_task(i, Timeline::kCommStream, model.cast_cost.eval(payload),
                        deps, "send(round " + std::to_string(t) + ")");
      }
      prev_send = cur_send;
    }
  }

  const std::int64_t volume =
      static_cast<std::int64_t>(cp) * (cp - 1) * payload;
  return make_report(overlap ? "ring" : "ring_serial", pass, cp, tl,
                     flops(mask, workload, pass), volume);
}

}  // namespace

std::pair<SimReport, SimReport> simulate_ring(const AttnMask& mask,
                                              const DispatchPlan& plan,
                                              const CostModel& model,
                                              const WorkloadSpec& workload,
                                              bool overlap) {
  const auto pairs = ring_pair_matrix(mask, plan);
  return {simulate_ring_pass(mask, plan, model, workload, overlap, Pass::FWD, pairs),
          simulate_ring_pass(mask, plan, model, workload, overlap, Pass::BWD, pairs)};
}

namespace {

struct AllToAllTokens {
  std::int64_t v = 0;
  std::int64_t k = 0;
  std::int64_t q = 0;
  std::int64_t o = 0;
};

// Effective communication volume per all-to-all, in KV-token units (the
// cast cost model is calibrated per KV token; q/o tensors are rescaled by
// their byte ratio).
AllToAllTokens ulysses_comm_tokens(const AttnMask& mask,
                                   const WorkloadSpec& workload,
                                   RankIndex cp_size) {
  const TokenIndex local = mask.seqlen_q / cp_size;
  const double moved = static_cast<double>(local) *
                       static_cast<double>(cp_size - 1) /
                       static_cast<double>(cp_size);
  const double kv_unit = static_cast<double>(workload.kv_bytes_per_token());
  const double hd_bytes =
      static_cast<double>(workload.head_dim * workload.dtype_bytes);
  AllToAllTokens t;
  t.v = std::llround(moved * workload.num_heads_v * hd_bytes / kv_unit);
  t.k = std::llround(moved * workload.num_heads_k * hd_bytes / kv_unit);
  t.q = std::llround(moved * workload.num_heads_q * hd_bytes / kv_unit);
  t.o = t.q;
  return t;
}

void check_cp_divides(const AttnMask& mask, RankIndex cp_size) {
  if (cp_size < 1 || mask.seqlen_q % cp_size != 0) {
    throw ConstraintError("constraint violated: seqlen % cp_size = 0 (seqlen " +
                          std::to_string(mask.seqlen_q) + ", cp_size " +
                          std::to_string(cp_size) + ")");
  }
}

}  // namespace

SimReport simulate_ulysses(const AttnMask& mask, const WorkloadSpec& workload,
                           const CostModel& model, RankIndex cp_size) {
  check_cp_divides(mask, cp_size);
  const TokenIndex local = mask.seqlen_q / cp_size;
  const AllToAllTokens comm = ulysses_comm_tokens(mask, workload, cp_size);
  const PairCount rank_pairs = static_cast<PairCount>(std::llround(
      static_cast<double>(mask_area(mask, AreaCounting::MULTIPLICITY)) /
      static_cast<double>(cp_size)));

  Timeline tl;
  for (RankIndex r = 0; r < cp_size; ++r) {
    const int c_v = tl.add_task(r, Timeline::kComputeStream,
                                model.v_proj.eval(local), {}, "v-compute");
    const int m_v = tl.add_task(r, Timeline::kCommStream,
                                model.cast_cost.eval(comm.v), {c_v}, "v-comm");
    const int c_k = tl.add_task(r, Timeline::kComputeStream,
                                model.k_proj.eval(local), {}, "k-compute");
    const int m_k = tl.add_task(r, Timeline::kCommStream,
                                model.cast_cost.eval(comm.k), {c_k}, "k-comm");
    const int c_q = tl.add_task(r, Timeline::kComputeStream,
                                model.q_proj.eval(local), {}, "q-compute");
    const int m_q = tl.add_task(r, Timeline::kCommStream,
                                model.cast_cost.eval(comm.q), {c_q}, "q-comm");
    tl.add_task(r, Timeline::kComputeStream, model.kv_cache_update.eval(local),
                {}, "kv-cache-update");
    const int c_a = tl.add_task(r, Timeline::kComputeStream,
                                model.ffa_fwd.eval(rank_pairs), {m_v, m_k, m_q},
                                "attention");
    tl.add_task(r, Timeline::kCommStream, model.cast_cost.eval(comm.o), {c_a},
                "o-comm");
    tl.add_task(r, Timeline::kComputeStream, model.cross_attn.eval(local), {},
                "cross-attention");
  }

  const std::int64_t volume =
      static_cast<std::int64_t>(cp_size) * (comm.v + comm.k + comm.q + comm.o);
  return make_report("ulysses", Pass::FWD, cp_size, tl,
                     flops(mask, workload, Pass::FWD), volume,
                     {"v-comm || k-compute", "k-comm || q-compute",
                      "q-comm || kv-cache-update",
                      "o-comm || cross-attention"});
}

namespace {

std::vector<std::int64_t> even_split(std::int64_t total, int parts) {
  std::vector<std::int64_t> out(static_cast<std::size_t>(parts));
  const std::int64_t base = total / parts;
  const std::int64_t extra = total % parts;
  for (int i = 0; i < parts; ++i) {
    out[static_cast<std::size_t>(i)] = base + (i < extra ? 1 : 0);
  }
  return out;
}

}  // namespace

SimReport simulate_cso(const AttnMask& mask, const WorkloadSpec& workload,
                       const CostModel& model, RankIndex cp_size,
                       int num_chunks) {
  if (num_chunks < 2) {
    throw UsageError("context-shuffle overlap needs at least 2 chunks");
  }
  check_cp_divides(mask, cp_size);
  const TokenIndex local = mask.seqlen_q / cp_size;
  const AllToAllTokens comm = ulysses_comm_tokens(mask, workload, cp_size);
  const std::int64_t kv_all = comm.v + comm.k;
  const auto q_chunk = even_split(comm.q, num_chunks);
  const auto o_chunk = even_split(comm.o, num_chunks);
  const PairCount rank_pairs = static_cast<PairCount>(std::llround(
      static_cast<double>(mask_area(mask, AreaCounting::MULTIPLICITY)) /
      static_cast<double>(cp_size)));
  const auto attn_chunk = even_split(rank_pairs, num_chunks);

  std::vector<std::string> log;
  Timeline tl;
  for (RankIndex r = 0; r < cp_size; ++r) {
    const bool log_this = r == 0;
    // k/v projections run before their shuffled all-to-all can start
    const int c_v = tl.add_task(r, Timeline::kComputeStream,
                                model.v_proj.eval(local), {}, "v-compute");
    const int c_k = tl.add_task(r, Timeline::kComputeStream,
                                model.k_proj.eval(local), {c_v}, "k-compute");

    std::vector<int> barrier;
    auto step = [&](std::vector<int> tasks, const std::string& line) {
      barrier = std::move(tasks);
      if (log_this) log.push_back(line);
    };

    const int m_kv = tl.add_task(r, Timeline::kCommStream,
                                 model.cast_cost.eval(kv_all), {c_k}, "kv-comm");
    const int c_q = tl.add_task(r, Timeline::kComputeStream,
                                model.q_proj.eval(local), {}, "q-compute");
    step({m_kv, c_q}, "kv-comm(all) || q-compute(all)");

    const int m_q1 = tl.add_task(r, Timeline::kCommStream,
                                 model.cast_cost.eval(q_chunk[0]), barrier,
                                 "q-comm(1)");
    const int c_u = tl.add_task(r, Timeline::kComputeStream,
                                model.kv_cache_update.eval(local), barrier,
                                "kv-cache-update");
    step({m_q1, c_u}, "q-comm(1) || kv-cache-update");

    for (int t = 2; t <= num_chunks; ++t) {
      std::vector<int> tasks;
      std::string line = "q-comm(" + std::to_string(t) + ")";
      tasks.push_back(tl.add_task(r, Timeline::kCommStream,
                                  model.cast_cost.eval(
                                      q_chunk[static_cast<std::size_t>(t - 1)]),
                                  barrier, "q-comm(" + std::to_string(t) + ")"));
      if (t - 2 >= 1) {
        tasks.push_back(tl.add_task(
            r, Timeline::kCommStream,
            model.cast_cost.eval(o_chunk[static_cast<std::size_t>(t - 3)]),
            barrier, "o-comm(" + std::to_string(t - 2) + ")"));
        line += " + o-comm(" + std::to_string(t - 2) + ")";
      }
      tasks.push_back(tl.add_task(
          r, Timeline::kComputeStream,
          model.ffa_fwd.eval(attn_chunk[static_cast<std::size_t>(t - 2)]),
          barrier, "o-compute(" + std::to_string(t - 1) + ")"));
      step(std::move(tasks),
           line + " || o-compute(" + std::to_string(t - 1) + ")");
    }

    const int m_on1 = tl.add_task(
        r, Timeline::kCommStream,
        model.cast_cost.eval(o_chunk[static_cast<std::size_t>(num_chunks - 2)]),
        barrier, "o-comm(" + std::to_string(num_chunks - 1) + ")");
    const int c_an = tl.add_task(
        r, Timeline::kComputeStream,
        model.ffa_fwd.eval(attn_chunk[static_cast<std::size_t>(num_chunks - 1)]),
        barrier, "o-compute(" + std::to_string(num_chunks) + ")");
    step({m_on1, c_an}, "o-comm(" + std::to_string(num_chunks - 1) +
                            ") || o-compute(" + std::to_string(num_chunks) + ")");

    const int m_on = tl.add_task(
        r, Timeline::kCommStream,
        model.cast_cost.eval(o_chunk[static_cast<std::size_t>(num_chunks - 1)]),
        barrier, "o-comm(" + std::to_string(num_chunks) + ")");
    const int c_x = tl.add_task(r, Timeline::kComputeStream,
                                model.cross_attn.eval(local), barrier,
                                "cross-attention");
    step({m_on, c_x},
         "o-comm(" + std::to_string(num_chunks) + ") || cross-attention");
  }

  const std::int64_t volume =
      static_cast<std::int64_t>(cp_size) * (kv_all + comm.q + comm.o);
  return make_report("cso", Pass::FWD, cp_size, tl,
                     flops(mask, workload, Pass::FWD), volume, std::move(log));
}

}  // namespace magiplan
