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

#include "magiplan/overlap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "magiplan/errors.hpp"

namespace magiplan {

CostUnits AffineCost::eval(std::int64_t work) const {
  if (work <= 0) return 0;
  const double t = latency + per_unit * static_cast<double>(work);
  return std::max<CostUnits>(0, std::llround(t));
}

AffineCost fit_affine(
    const std::vector<std::pair<std::int64_t, std::int64_t>>& samples) {
  if (samples.size() < 2) {
    throw UsageError("fit_affine needs at least two (work, time) samples");
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(samples.size());
  for (const auto& [w, t] : samples) {
    const double x = static_cast<double>(w);
    const double y = static_cast<double>(t);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double det = n * sxx - sx * sx;
  AffineCost fit;
  if (det == 0.0) {
    fit.latency = sy / n;
    fit.per_unit = 0.0;
  } else {
    fit.per_unit = (n * sxy - sx * sy) / det;
    fit.latency = (sy - fit.per_unit * sx) / n;
  }
  fit.latency = std::max(0.0, fit.latency);
  fit.per_unit = std::max(0.0, fit.per_unit);
  return fit;
}

CostUnits CostModel::host_compute(PairCount host_pairs, bool backward) const {
  if (backward && host_cost_bwd) return *host_cost_bwd;
  if (!backward && host_cost_fwd) return *host_cost_fwd;
  return (backward ? ffa_bwd : ffa_fwd).eval(host_pairs);
}

namespace {

AffineCost affine_from_json(const nlohmann::ordered_json& j, const char* name) {
  AffineCost c;
  if (!j.is_object()) {
    throw UsageError(std::string("cost entry '") + name + "' must be an object");
  }
  if (j.contains("latency")) c.latency = j["latency"].get<double>();
  if (j.contains("per_unit")) c.per_unit = j["per_unit"].get<double>();
  if (c.latency < 0 || c.per_unit < 0) {
    throw UsageError(std::string("cost entry '") + name +
                     "' has negative coefficients");
  }
  return c;
}

nlohmann::ordered_json affine_to_json(const AffineCost& c) {
  nlohmann::ordered_json j;
  j["latency"] = c.latency;
  j["per_unit"] = c.per_unit;
  return j;
}

}  // namespace

CostModel cost_model_from_json(const std::string& json_text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("cost model: ") + e.what());
  }
  for (const auto& [key, value] : j.items()) {
    static const char* known[] = {
        "ffa_fwd", "ffa_bwd", "cast", "reduce", "q_proj", "k_proj", "v_proj",
        "kv_cache_update", "cross_attn", "host_cost_fwd", "host_cost_bwd",
        "min_chunk_size", "max_num_chunks"};
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) {
      throw UsageError("unknown field '" + key + "' in cost model");
    }
  }
  CostModel m;
  auto opt = [&](const char* key, AffineCost& slot) {
    if (j.contains(key)) slot = affine_from_json(j[key], key);
  };
  opt("ffa_fwd", m.ffa_fwd);
  opt("ffa_bwd", m.ffa_bwd);
  opt("cast", m.cast_cost);
  opt("reduce", m.reduce_cost);
  opt("q_proj", m.q_proj);
  opt("k_proj", m.k_proj);
  opt("v_proj", m.v_proj);
  opt("kv_cache_update", m.kv_cache_update);
  opt("cross_attn", m.cross_attn);
  if (j.contains("host_cost_fwd")) m.host_cost_fwd = j["host_cost_fwd"].get<CostUnits>();
  if (j.contains("host_cost_bwd")) m.host_cost_bwd = j["host_cost_bwd"].get<CostUnits>();
  return m;
}

std::string cost_model_to_json(const CostModel& m) {
  nlohmann::ordered_json j;
  j["ffa_fwd"] = affine_to_json(m.ffa_fwd);
  j["ffa_bwd"] = affine_to_json(m.ffa_bwd);
  j["cast"] = affine_to_json(m.cast_cost);
  j["reduce"] = affine_to_json(m.reduce_cost);
  j["q_proj"] = affine_to_json(m.q_proj);
  j["k_proj"] = affine_to_json(m.k_proj);
  j["v_proj"] = affine_to_json(m.v_proj);
  j["kv_cache_update"] = affine_to_json(m.kv_cache_update);
  j["cross_attn"] = affine_to_json(m.cross_attn);
  if (m.host_cost_fwd) j["host_cost_fwd"] = *m.host_cost_fwd;
  if (m.host_cost_bwd) j["host_cost_bwd"] = *m.host_cost_bwd;
  return j.dump();
}

std::vector<std::int64_t> partition_packages(
    const std::vector<std::int64_t>& rank_traffic, std::int64_t min_chunk_size,
    std::int64_t max_num_chunks) {
  if (min_chunk_size < 1 || max_num_chunks < 1) {
    throw UsageError("min_chunk_size and max_num_chunks must be >= 1");
  }
  std::int64_t total = 0;
  for (std::int64_t t : rank_traffic) {
    if (t < 0) throw UsageError("negative traffic entry");
    total += t;
  }
  if (total == 0) return {};

  const std::int64_t full = total / min_chunk_size;
  const std::int64_t greedy_count = full + (total % min_chunk_size != 0 ? 1 : 0);
  std::vector<std::int64_t> packages;
  if (greedy_count <= max_num_chunks) {
    std::int64_t remaining = total;
    while (remaining > min_chunk_size &&
           static_cast<std::int64_t>(packages.size()) + 1 < greedy_count) {
      packages.push_back(min_chunk_size);
      remaining -= min_chunk_size;
    }
    packages.push_back(remaining);
  } else {
    // the cap binds: even split, earlier packages take the remainder
    const std::int64_t base = total / max_num_chunks;
    const std::int64_t extra = total % max_num_chunks;
    for (std::int64_t i = 0; i < max_num_chunks; ++i) {
      packages.push_back(base + (i < extra ? 1 : 0));
    }
  }
  return packages;
}

std::vector<std::vector<int>> assign_packages_to_stages(
    const std::vector<std::int64_t>& package_sizes, int num_stages,
    std::optional<std::uint64_t> shuffle_seed) {
  if (num_stages < 1) throw UsageError("num_stages must be >= 1");
  std::vector<std::vector<int>> stages(static_cast<std::size_t>(num_stages));
  std::vector<int> order(package_sizes.size());
  std::iota(order.begin(), order.end(), 0);

  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < order.size(); ++i) {
      stages[i % static_cast<std::size_t>(num_stages)].push_back(order[i]);
    }
    for (auto& s : stages) std::sort(s.begin(), s.end());
    return stages;
  }

  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (package_sizes[static_cast<std::size_t>(a)] !=
        package_sizes[static_cast<std::size_t>(b)]) {
      return package_sizes[static_cast<std::size_t>(a)] >
             package_sizes[static_cast<std::size_t>(b)];
    }
    return a < b;
  });
  std::vector<std::int64_t> loads(static_cast<std::size_t>(num_stages), 0);
  for (int p : order) {
    std::size_t target = 0;
    for (std::size_t s = 1; s < loads.size(); ++s) {
      if (loads[s] < loads[target]) target = s;
    }
    stages[target].push_back(p);
    loads[target] += package_sizes[static_cast<std::size_t>(p)];
  }
  for (auto& s : stages) std::sort(s.begin(), s.end());
  return stages;
}

CostUnits estimate_fwd_cost(int num_stages,
                            const std::function<CostUnits(int)>& gc,
                            const std::function<CostUnits(int)>& ffa) {
  MAGIPLAN_INTERNAL_CHECK(num_stages >= 1, "stage count must be >= 1");
  auto gc_at = [&](int j) -> CostUnits {
    return (j >= 1 && j <= num_stages) ? gc(j) : 0;
  };
  CostUnits total = 0;
  for (int j = 0; j <= num_stages - 1; ++j) {
    total += std::max(gc_at(j + 1), ffa(j));
  }
  return total + ffa(num_stages);
}

CostUnits estimate_bwd_cost(int num_stages,
                            const std::function<CostUnits(int)>& gc,
                            const std::function<CostUnits(int)>& ffa,
                            const std::function<CostUnits(int)>& gr) {
  MAGIPLAN_INTERNAL_CHECK(num_stages >= 1, "stage count must be >= 1");
  auto gc_at = [&](int j) -> CostUnits {
    return (j >= 1 && j <= num_stages) ? gc(j) : 0;
  };
  auto gr_at = [&](int j) -> CostUnits {
    return (j >= 1 && j <= num_stages) ? gr(j) : 0;
  };
  CostUnits total = 0;
  for (int j = 0; j <= num_stages; ++j) {
    total += std::max({gc_at(j + 1), ffa(j), gr_at(j - 1)});
  }
  return total + gr_at(num_stages);
}

namespace {

std::function<CostUnits(int)> ffa_of(const StageCosts& costs) {
  return [&costs](int j) -> CostUnits {
    if (j == 0) return costs.host_compute;
    return costs.compute[static_cast<std::size_t>(j - 1)];
  };
}

}  // namespace

CostUnits estimate_fwd_cost(const StageCosts& costs) {
  const int s = static_cast<int>(costs.compute.size());
  return estimate_fwd_cost(
      s, [&](int j) { return costs.cast[static_cast<std::size_t>(j - 1)]; },
      ffa_of(costs));
}

CostUnits estimate_bwd_cost(const StageCosts& costs) {
  const int s = static_cast<int>(costs.compute.size());
  return estimate_bwd_cost(
      s, [&](int j) { return costs.cast[static_cast<std::size_t>(j - 1)]; },
      ffa_of(costs),
      [&](int j) { return costs.reduce[static_cast<std::size_t>(j - 1)]; });
}

namespace {

// Cut the rank's remote range stream at package-size boundaries.
std::vector<std::vector<TokenRange>> package_ranges_of(
    const std::vector<TokenRange>& remote_ranges,
    const std::vector<std::int64_t>& package_sizes) {
  std::vector<std::vector<TokenRange>> out(package_sizes.size());
  std::size_t pkg = 0;
  std::int64_t room = package_sizes.empty() ? 0 : package_sizes[0];
  for (TokenRange r : remote_ranges) {
    while (!r.empty()) {
      MAGIPLAN_INTERNAL_CHECK(pkg < package_sizes.size(),
                              "traffic exceeds package capacity");
      const TokenIndex take = std::min<TokenIndex>(r.length(), room);
      out[pkg].push_back({r.start, r.start + take});
      r.start += take;
      room -= take;
      if (room == 0 && pkg + 1 < package_sizes.size()) {
        ++pkg;
        room = package_sizes[pkg];
      }
    }
  }
  return out;
}

StageBreakdown evaluate_pass(const RankTraffic& traffic,
                             const std::vector<std::int64_t>& package_sizes,
                             const std::vector<std::vector<TokenRange>>& pkg_ranges,
                             const CostModel& model, int num_stages,
                             bool backward) {
  StageBreakdown b;
  b.num_stages = num_stages;
  b.stage_packages = assign_packages_to_stages(package_sizes, num_stages);
  b.stage_tokens.assign(static_cast<std::size_t>(num_stages), 0);
  b.stage_pairs.assign(static_cast<std::size_t>(num_stages), 0);
  for (int s = 0; s < num_stages; ++s) {
    for (int p : b.stage_packages[static_cast<std::size_t>(s)]) {
      b.stage_tokens[static_cast<std::size_t>(s)] +=
          package_sizes[static_cast<std::size_t>(p)];
      for (const TokenRange& r : pkg_ranges[static_cast<std::size_t>(p)]) {
        b.stage_pairs[static_cast<std::size_t>(s)] +=
            traffic.pairs_in_cols(r.start, r.end);
      }
    }
  }

  StageCosts costs;
  costs.host_compute = model.host_compute(traffic.host_pairs, backward);
  const AffineCost& ffa = backward ? model.ffa_bwd : model.ffa_fwd;
  for (int s = 0; s < num_stages; ++s) {
    costs.compute.push_back(ffa.eval(b.stage_pairs[static_cast<std::size_t>(s)]));
    costs.cast.push_back(
        model.cast_cost.eval(b.stage_tokens[static_cast<std::size_t>(s)]));
    costs.reduce.push_back(
        model.reduce_cost.eval(b.stage_tokens[static_cast<std::size_t>(s)]));
  }
  b.est_cost = backward ? estimate_bwd_cost(costs) : estimate_fwd_cost(costs);
  return b;
}

}  // namespace

SolveResult solve_stages(const std::vector<RankTraffic>& traffic,
                         const CostModel& model,
                         const OverlapHyperparams& hyperparams) {
  SolveResult result;
  std::vector<std::vector<std::int64_t>> all_sizes;
  std::vector<std::vector<std::vector<TokenRange>>> all_ranges;

  for (std::size_t i = 0; i < traffic.size(); ++i) {
    const RankTraffic& rt = traffic[i];
    std::vector<std::int64_t> lens;
    for (const TokenRange& r : rt.remote_ranges) lens.push_back(r.length());
    const auto sizes = partition_packages(lens, hyperparams.min_chunk_size,
                                          hyperparams.max_num_chunks);
    const auto ranges = package_ranges_of(rt.remote_ranges, sizes);

    RankStageSearch search;
    search.rank = static_cast<RankIndex>(i);
    search.package_sizes = sizes;
    const int p = std::max<int>(1, static_cast<int>(sizes.size()));
    for (int s = 1; s <= p; ++s) {
      search.cost_fwd.push_back(
          evaluate_pass(rt, sizes, ranges, model, s, false).est_cost);
      search.cost_bwd.push_back(
          evaluate_pass(rt, sizes, ranges, model, s, true).est_cost);
      if (search.cost_fwd.back() <
          search.cost_fwd[static_cast<std::size_t>(search.s_opt_fwd - 1)]) {
        search.s_opt_fwd = s;
      }
      if (search.cost_bwd.back() <
          search.cost_bwd[static_cast<std::size_t>(search.s_opt_bwd - 1)]) {
        search.s_opt_bwd = s;
      }
    }
    result.num_stages_fwd = std::max(result.num_stages_fwd, search.s_opt_fwd);
    result.num_stages_bwd = std::max(result.num_stages_bwd, search.s_opt_bwd);
    result.searches.push_back(std::move(search));
    all_sizes.push_back(sizes);
    all_ranges.push_back(ranges);
  }

  // rebuild every rank's plan at the synchronized stage counts
  for (std::size_t i = 0; i < traffic.size(); ++i) {
    const RankTraffic& rt = traffic[i];
    StagePlan plan;
    plan.rank = static_cast<RankIndex>(i);
    plan.host_pairs = rt.host_pairs;
    plan.package_sizes = all_sizes[i];
    plan.package_ranges = all_ranges[i];
    const int p = std::max<int>(1, static_cast<int>(all_sizes[i].size()));
    const int s_fwd = std::min(result.num_stages_fwd, p);
    const int s_bwd = std::min(result.num_stages_bwd, p);
    plan.fwd = evaluate_pass(rt, all_sizes[i], all_ranges[i], model, s_fwd, false);
    plan.bwd = evaluate_pass(rt, all_sizes[i], all_ranges[i], model, s_bwd, true);
    result.plans.push_back(std::move(plan));
  }
  return result;
}

std::string solve_result_to_json(const SolveResult& result) {
  nlohmann::ordered_json j;
  j["num_stages_fwd"] = result.num_stages_fwd;
  j["num_stages_bwd"] = result.num_stages_bwd;
  j["ranks"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < result.searches.size(); ++i) {
    const RankStageSearch& search = result.searches[i];
    const StagePlan& plan = result.plans[i];
    nlohmann::ordered_json jr;
    jr["rank"] = search.rank;
    jr["package_sizes"] = search.package_sizes;
    jr["cost_by_stage_count"] = nlohmann::ordered_json::array();
    for (std::size_t s = 0; s < search.cost_fwd.size(); ++s) {
      jr["cost_by_stage_count"].push_back(
          {{"num_stages", s + 1},
           {"fwd", search.cost_fwd[s]},
           {"bwd", search.cost_bwd[s]}});
    }
    jr["s_opt_fwd"] = search.s_opt_fwd;
    jr["s_opt_bwd"] = search.s_opt_bwd;
    jr["est_cost_fwd"] = plan.fwd.est_cost;
    jr["est_cost_bwd"] = plan.bwd.est_cost;
    jr["stage_packages_fwd"] = plan.fwd.stage_packages;
    jr["stage_packages_bwd"] = plan.bwd.stage_packages;
    j["ranks"].push_back(jr);
  }
  return j.dump();
}

}  // namespace magiplan
