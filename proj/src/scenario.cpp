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

#include "magiplan/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <sstream>

#include <json.hpp>

#include "magiplan/errors.hpp"

namespace magiplan {

using ordered_json = nlohmann::ordered_json;

std::uint64_t fnv1a_hash(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t hash) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[hash & 0xF];
    hash >>= 4;
  }
  return out;
}

namespace {

ordered_json parse_object(const std::string& text, const char* what) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string(what) + ": " + e.what());
  }
  if (!j.is_object()) {
    throw UsageError(std::string(what) + " must be a JSON object");
  }
  return j;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw UsageError("cannot open referenced file '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void reject_unknown_keys(const ordered_json& obj,
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

const std::vector<std::string> kSchedules = {"magi", "ring", "ring_serial",
                                             "ulysses", "cso"};

}  // namespace

ScenarioSpec ScenarioSpec::parse(const std::string& json_text,
                                 const std::string& base_dir) {
  const ordered_json j = parse_object(json_text, "scenario spec");
  reject_unknown_keys(j,
                      {"schema_version", "workload", "schedule", "cp_size",
                       "tp_size", "dp_size", "dispatch", "dispatch_chunk_size",
                       "cost_model", "overlap", "cso_num_chunks", "seed",
                       "sweep"},
                      "scenario spec");
  ScenarioSpec spec;
  spec.spec_hash = hash_hex(fnv1a_hash(json_text));

  if (!j.contains("workload") || !j["workload"].is_object() ||
      !j["workload"].contains("mask")) {
    throw UsageError("scenario needs workload.mask");
  }
  const auto& w = j["workload"];
  reject_unknown_keys(w,
                      {"mask", "batch_size", "num_heads_q", "num_heads_k",
                       "num_heads_v", "head_dim", "dtype_bytes"},
                      "workload");
  spec.mask_spec_json = w["mask"].dump();
  if (w.contains("batch_size")) spec.workload.batch_size = w["batch_size"].get<std::int64_t>();
  if (w.contains("num_heads_q")) spec.workload.num_heads_q = w["num_heads_q"].get<std::int64_t>();
  if (w.contains("num_heads_k")) spec.workload.num_heads_k = w["num_heads_k"].get<std::int64_t>();
  if (w.contains("num_heads_v")) spec.workload.num_heads_v = w["num_heads_v"].get<std::int64_t>();
  if (w.contains("head_dim")) spec.workload.head_dim = w["head_dim"].get<std::int64_t>();
  if (w.contains("dtype_bytes")) spec.workload.dtype_bytes = w["dtype_bytes"].get<std::int64_t>();
  if (spec.workload.batch_size <= 0 || spec.workload.num_heads_q <= 0 ||
      spec.workload.num_heads_k <= 0 || spec.workload.num_heads_v <= 0 ||
      spec.workload.head_dim <= 0 || spec.workload.dtype_bytes <= 0) {
    throw UsageError("workload multipliers must be positive");
  }

  if (j.contains("schedule")) spec.schedule = j["schedule"].get<std::string>();
  if (std::find(kSchedules.begin(), kSchedules.end(), spec.schedule) ==
      kSchedules.end()) {
    std::string valid;
    for (const auto& s : kSchedules) valid += (valid.empty() ? "" : ", ") + s;
    throw UsageError("unknown schedule '" + spec.schedule + "' (valid: " +
                     valid + ")");
  }

  if (j.contains("cp_size")) spec.cp_size = j["cp_size"].get<RankIndex>();
  if (j.contains("tp_size")) spec.tp_size = j["tp_size"].get<std::int64_t>();
  if (j.contains("dp_size")) spec.dp_size = j["dp_size"].get<std::int64_t>();
  if (spec.cp_size < 1 || spec.tp_size < 1 || spec.dp_size < 1) {
    throw UsageError("cp/tp/dp sizes must be >= 1");
  }
  if (j.contains("dispatch_chunk_size")) {
    spec.dispatch_chunk_size = j["dispatch_chunk_size"].get<TokenIndex>();
    if (spec.dispatch_chunk_size < 0) {
      throw UsageError("dispatch_chunk_size must be >= 0 (0 = default)");
    }
  }
  if (j.contains("dispatch")) {
    spec.dispatch_policy = j["dispatch"].get<std::string>();
    if (spec.dispatch_policy != "greedy" && spec.dispatch_policy != "zigzag") {
      throw UsageError("dispatch must be 'greedy' or 'zigzag'");
    }
  }

  if (j.contains("cost_model")) {
    const std::string model_text =
        j["cost_model"].is_string()
            ? read_file(base_dir + "/" + j["cost_model"].get<std::string>())
            : j["cost_model"].dump();
    spec.cost_model = cost_model_from_json(model_text);
    // the cost-model file may carry the overlap search hyperparameters;
    // an explicit "overlap" section below takes precedence
    const ordered_json mj = parse_object(model_text, "cost model");
    if (mj.contains("min_chunk_size")) {
      spec.overlap.min_chunk_size = mj["min_chunk_size"].get<std::int64_t>();
    }
    if (mj.contains("max_num_chunks")) {
      spec.overlap.max_num_chunks = mj["max_num_chunks"].get<std::int64_t>();
    }
  }
  if (j.contains("overlap")) {
    const auto& o = j["overlap"];
    reject_unknown_keys(o, {"min_chunk_size", "max_num_chunks"}, "overlap spec");
    if (o.contains("min_chunk_size")) {
      spec.overlap.min_chunk_size = o["min_chunk_size"].get<std::int64_t>();
    }
    if (o.contains("max_num_chunks")) {
      spec.overlap.max_num_chunks = o["max_num_chunks"].get<std::int64_t>();
    }
  }
  if (j.contains("cso_num_chunks")) {
    spec.cso_num_chunks = j["cso_num_chunks"].get<int>();
  }
  if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();

  if (j.contains("sweep")) {
    const auto& s = j["sweep"];
    reject_unknown_keys(s, {"cp_sizes", "per_rank_seqlen", "sample_length"},
                        "sweep spec");
    SweepSpec sweep;
    if (!s.contains("cp_sizes") || !s.contains("per_rank_seqlen")) {
      throw UsageError("sweep needs cp_sizes and per_rank_seqlen");
    }
    sweep.cp_sizes = s["cp_sizes"].get<std::vector<RankIndex>>();
    sweep.per_rank_seqlen = s["per_rank_seqlen"].get<TokenIndex>();
    if (s.contains("sample_length")) {
      sweep.sample_length = s["sample_length"].get<TokenIndex>();
    }
    if (sweep.cp_sizes.empty() || sweep.per_rank_seqlen <= 0) {
      throw UsageError("sweep cp_sizes must be non-empty, per_rank_seqlen > 0");
    }
    spec.sweep = sweep;
  }

  // instantiate a mask once to surface mask-spec errors eagerly; under a
  // sweep the workload mask is a template, so use the first point
  if (spec.sweep) {
    (void)scenario_mask(spec,
                        spec.sweep->per_rank_seqlen * spec.sweep->cp_sizes[0]);
  } else {
    (void)scenario_mask(spec);
  }
  return spec;
}

AttnMask scenario_mask(const ScenarioSpec& spec, TokenIndex seqlen) {
  if (seqlen == 0) {
    return parse_mask_spec(spec.mask_spec_json);
  }
  ordered_json j = parse_object(spec.mask_spec_json, "mask spec");
  if (!j.contains("pattern")) {
    throw UsageError("sweeps need a pattern mask, not an explicit slice list");
  }
  j["seqlen"] = seqlen;
  const std::string pattern = j["pattern"].get<std::string>();
  if (pattern.rfind("varlen", 0) == 0) {
    const TokenIndex sample = spec.sweep ? spec.sweep->sample_length : 0;
    if (sample <= 0 || seqlen % sample != 0) {
      throw ConstraintError(
          "sweep over a varlen pattern needs sample_length dividing seqlen (" +
          std::to_string(sample) + " vs " + std::to_string(seqlen) + ")");
    }
    std::vector<TokenIndex> lengths(static_cast<std::size_t>(seqlen / sample),
                                    sample);
    j["params"]["sample_lengths"] = lengths;
  }
  return parse_mask_spec(j.dump());
}

std::vector<RankTraffic> rank_traffic_from(const AttnMask& mask,
                                           const DispatchPlan& plan,
                                           const TransferTable& cast_table) {
  std::vector<RankTraffic> traffic;
  for (RankIndex r = 0; r < plan.cp_size; ++r) {
    RankTraffic t;
    t.remote_ranges = cast_table.incoming_ranges_of_rank(r);
    AttnMask local = local_mask_of_rank(mask, plan, r);
    PairCount host = 0;
    for (const TokenRange& rows : plan.rows_of_bucket(r)) {
      for (const AttnSlice& s : local.slices) {
        host += slice_area_in_cols(s, rows.start, rows.end);
      }
    }
    t.host_pairs = host;
    t.pairs_in_cols = [local = std::move(local)](TokenIndex a, TokenIndex b) {
      PairCount total = 0;
      for (const AttnSlice& s : local.slices) {
        total += slice_area_in_cols(s, a, b);
      }
      return total;
    };
    traffic.push_back(std::move(t));
  }
  return traffic;
}

namespace {

TokenIndex effective_chunk_size(const ScenarioSpec& spec, TokenIndex seqlen) {
  return spec.dispatch_chunk_size > 0
             ? spec.dispatch_chunk_size
             : default_dispatch_chunk_size(seqlen, spec.cp_size);
}

void check_joint_divisibility(TokenIndex seqlen, RankIndex cp,
                              TokenIndex chunk_size) {
  if (chunk_size <= 0 || seqlen % (cp * chunk_size) != 0) {
    throw ConstraintError(
        "constraint violated: seqlen % (cp_size * dispatch_chunk_size) = 0 "
        "(seqlen " +
        std::to_string(seqlen) + ", cp_size " + std::to_string(cp) +
        ", dispatch_chunk_size " + std::to_string(chunk_size) + ")");
  }
}

bool uses_zigzag(const ScenarioSpec& spec) {
  // the ring baseline always runs its tailored sharding
  return spec.dispatch_policy == "zigzag" || spec.schedule == "ring" ||
         spec.schedule == "ring_serial";
}

}  // namespace

PlanArtifacts run_plan(const ScenarioSpec& spec, const AttnMask& mask) {
  PlanArtifacts a;
  a.mask = mask;
  a.chunk_size = effective_chunk_size(spec, mask.seqlen_q);
  check_joint_divisibility(mask.seqlen_q, spec.cp_size, a.chunk_size);

  const auto chunks = shard_into_chunks(mask, a.chunk_size);
  a.plan = uses_zigzag(spec) ? zigzag_dispatch(chunks, spec.cp_size)
                             : greedy_dispatch(chunks, spec.cp_size);
  a.demands = compute_kv_demands(mask, a.plan);
  auto tables = build_transfer_tables(a.demands, a.chunk_size, spec.cp_size);
  a.cast_table = std::move(tables.first);
  a.reduce_table = std::move(tables.second);
  a.redundancy = redundancy_report(mask, a.plan);
  a.balance = balance_summary(a.plan);
  a.stages = solve_stages(rank_traffic_from(mask, a.plan, a.cast_table),
                          spec.cost_model, spec.overlap);
  return a;
}

std::string plan_artifacts_to_json(const PlanArtifacts& artifacts,
                                   const ScenarioSpec& spec) {
  ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["spec_hash"] = spec.spec_hash;
  j["seed"] = spec.seed;
  j["seqlen"] = artifacts.mask.seqlen_q;
  j["cp_size"] = spec.cp_size;
  j["dispatch_chunk_size"] = artifacts.chunk_size;
  j["dispatch_plan"] = ordered_json::parse(plan_to_json(artifacts.plan));
  j["transfer_cast"] = ordered_json::parse(transfer_table_to_json(
      artifacts.cast_table, spec.workload.kv_bytes_per_token()));
  j["transfer_reduce"] = ordered_json::parse(transfer_table_to_json(
      artifacts.reduce_table, spec.workload.kv_bytes_per_token()));
  j["redundancy"] = {{"sent_ring", artifacts.redundancy.sent_ring},
                     {"needed", artifacts.redundancy.needed},
                     {"sent_group", artifacts.redundancy.sent_group},
                     {"redundancy_ratio", artifacts.redundancy.redundancy_ratio}};
  j["balance"] = {{"max_workload", artifacts.balance.max_workload},
                  {"mean_workload", artifacts.balance.mean_workload},
                  {"imbalance", artifacts.balance.imbalance}};
  j["overlap"] = ordered_json::parse(solve_result_to_json(artifacts.stages));
  return j.dump();
}

namespace {

std::vector<SimReport> simulate_point(const ScenarioSpec& spec,
                                      TokenIndex seqlen) {
  const AttnMask mask = scenario_mask(spec, seqlen);
  std::vector<SimReport> reports;
  if (spec.schedule == "magi") {
    const PlanArtifacts a = run_plan(spec, mask);
    auto [fwd, bwd] = simulate_magi(a.mask, a.plan, a.cast_table,
                                    a.reduce_table, a.stages, spec.cost_model,
                                    spec.workload);
    reports.push_back(std::move(fwd));
    reports.push_back(std::move(bwd));
  } else if (spec.schedule == "ring" || spec.schedule == "ring_serial") {
    const PlanArtifacts a = run_plan(spec, mask);
    auto [fwd, bwd] = simulate_ring(a.mask, a.plan, spec.cost_model,
                                    spec.workload, spec.schedule == "ring");
    reports.push_back(std::move(fwd));
    reports.push_back(std::move(bwd));
  } else if (spec.schedule == "ulysses") {
    reports.push_back(
        simulate_ulysses(mask, spec.workload, spec.cost_model, spec.cp_size));
  } else {
    reports.push_back(simulate_cso(mask, spec.workload, spec.cost_model,
                                   spec.cp_size, spec.cso_num_chunks));
  }
  return reports;
}

std::string report_record(const ScenarioSpec& spec, const SimReport& report,
                          TokenIndex seqlen) {
  ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["spec_hash"] = spec.spec_hash;
  j["seed"] = spec.seed;
  j["seqlen"] = seqlen;
  const ordered_json body = ordered_json::parse(sim_report_to_json(report));
  for (const auto& [key, value] : body.items()) j[key] = value;
  return j.dump();
}

}  // namespace

std::vector<std::string> run_simulate(const ScenarioSpec& spec, int jobs) {
  std::vector<std::string> records;
  if (!spec.sweep) {
    const AttnMask mask = scenario_mask(spec);
    for (const SimReport& r : simulate_point(spec, 0)) {
      records.push_back(report_record(spec, r, mask.seqlen_q));
    }
    return records;
  }

  const SweepSpec& sweep = *spec.sweep;
  std::vector<std::pair<TokenIndex, RankIndex>> points;
  for (RankIndex cp : sweep.cp_sizes) {
    if (cp < 1) throw UsageError("sweep cp_sizes must be >= 1");
    points.emplace_back(sweep.per_rank_seqlen * cp, cp);
  }

  const int parallelism = std::max(1, jobs);
  std::vector<std::future<std::vector<std::string>>> futures(points.size());
  std::size_t launched = 0;
  std::size_t collected = 0;
  while (collected < points.size()) {
    while (launched < points.size() &&
           launched - collected < static_cast<std::size_t>(parallelism)) {
      const auto [seqlen, cp] = points[launched];
      ScenarioSpec point_spec = spec;
      point_spec.cp_size = cp;
      futures[launched] = std::async(
          std::launch::async,
          [point_spec = std::move(point_spec), seqlen]() {
            std::vector<std::string> out;
            for (const SimReport& r : simulate_point(point_spec, seqlen)) {
              out.push_back(report_record(point_spec, r, seqlen));
            }
            return out;
          });
      ++launched;
    }
    for (std::string& record : futures[collected].get()) {
      records.push_back(std::move(record));
    }
    ++collected;
  }
  return records;
}

std::string run_pack(const std::string& config_json,
                     const std::string* stream_text) {
  const ordered_json j = parse_object(config_json, "pack config");
  reject_unknown_keys(j, {"schema_version", "packing", "generator", "seed",
                          "emit_bins"},
                      "pack config");
  PackingConfig config;
  if (j.contains("packing")) {
    const auto& p = j["packing"];
    reject_unknown_keys(p,
                        {"max_length", "dp_size", "tp_size", "cp_size",
                         "bins_per_iteration", "pool_capacity",
                         "defer_threshold", "swap_passes"},
                        "packing config");
    if (p.contains("max_length")) config.max_length = p["max_length"].get<TokenIndex>();
    if (p.contains("dp_size")) config.dp_size = p["dp_size"].get<std::int64_t>();
    if (p.contains("tp_size")) config.tp_size = p["tp_size"].get<std::int64_t>();
    if (p.contains("cp_size")) config.cp_size = p["cp_size"].get<std::int64_t>();
    if (p.contains("bins_per_iteration")) {
      config.bins_per_iteration = p["bins_per_iteration"].get<std::int64_t>();
    }
    if (p.contains("pool_capacity")) {
      config.pool_capacity = p["pool_capacity"].get<std::int64_t>();
    }
    if (p.contains("defer_threshold")) {
      config.defer_threshold = p["defer_threshold"].get<double>();
    }
    if (p.contains("swap_passes")) config.swap_passes = p["swap_passes"].get<int>();
  }
  config.check_valid();
  std::uint64_t seed = 0;
  if (j.contains("seed")) seed = j["seed"].get<std::uint64_t>();
  const bool emit_bins = j.contains("emit_bins") && j["emit_bins"].get<bool>();

  // stream: explicit records or the parametric long-tail generator
  std::vector<PackedSample> stream;
  if (stream_text != nullptr) {
    std::istringstream in(*stream_text);
    std::string line;
    std::int64_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      std::istringstream fields(line);
      PackedSample s;
      if (!(fields >> s.id >> s.length)) {
        throw UsageError("stream line " + std::to_string(line_no) +
                         ": expected 'id length'");
      }
      stream.push_back(s);
    }
  } else {
    if (!j.contains("generator")) {
      throw UsageError("pack config needs a generator or an input stream");
    }
    const auto& g = j["generator"];
    reject_unknown_keys(g, {"count", "median", "sigma"}, "generator config");
    stream = lognormal_stream(
        g.contains("count") ? g["count"].get<std::size_t>() : 10000,
        g.contains("median") ? g["median"].get<double>() : 8192.0,
        g.contains("sigma") ? g["sigma"].get<double>() : 1.0,
        config.max_length, seed);
  }

  Packer packer(config);
  std::vector<PackedBatch> history;
  std::vector<std::int64_t> skipped_ids;
  std::size_t next = 0;
  bool starved = false;
  while (true) {
    while (!packer.pool_full() && next < stream.size()) {
      if (!packer.admit(stream[next]) && skipped_ids.size() < 20) {
        skipped_ids.push_back(stream[next].id);
      }
      ++next;
    }
    const auto batch = packer.pack_iteration();
    if (!batch.has_value()) {
      if (next >= stream.size()) break;
      if (packer.pool_full()) {
        starved = true;  // the pool cannot improve; a terminal stall
        break;
      }
      continue;
    }
    history.push_back(*batch);
    if (next >= stream.size() &&
        static_cast<std::int64_t>(packer.pool_size()) <
            config.bins_per_iteration) {
      break;
    }
  }

  ordered_json out;
  out["schema_version"] = kSchemaVersion;
  out["spec_hash"] = hash_hex(fnv1a_hash(config_json));
  out["seed"] = seed;
  out["samples_in"] = stream.size();
  std::size_t packed_samples = 0;
  out["batches"] = ordered_json::array();
  for (const PackedBatch& batch : history) {
    ordered_json jb;
    jb["utilization"] = batch.utilization;
    ordered_json fills = ordered_json::array();
    for (const PackedBin& bin : batch.bins) {
      fills.push_back(bin.fill);
      packed_samples += bin.samples.size();
    }
    jb["fills"] = fills;
    if (emit_bins) jb["bins"] = ordered_json::parse(batch_to_json(batch))["bins"];
    out["batches"].push_back(jb);
  }
  out["samples_packed"] = packed_samples;
  out["samples_left"] = packer.pool_size() + (stream.size() - next);
  out["skipped_oversized"] = packer.rejected_oversized();
  out["skipped_ids"] = skipped_ids;
  out["deferred_iterations"] = packer.deferred_iterations();
  out["starved"] = starved;
  if (!history.empty()) {
    const auto stats = utilization_stats(history, config);
    out["stats"] = {{"batches", stats.batches},
                    {"mean_utilization", stats.mean_utilization},
                    {"min_utilization", stats.min_utilization},
                    {"dp_group_spread", stats.dp_group_spread}};
  }
  return out.dump();
}

}  // namespace magiplan
