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

#include "magiplan/pack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "magiplan/errors.hpp"

namespace magiplan {

void PackingConfig::check_valid() const {
  if (max_length <= 0 || dp_size <= 0 || tp_size <= 0 || cp_size <= 0 ||
      bins_per_iteration <= 0 || pool_capacity <= 0) {
    throw UsageError("packing config fields must be positive");
  }
  if (bins_per_iteration % dp_size != 0) {
    throw ConstraintError(
        "constraint violated: N % dp_size = 0 (N " +
        std::to_string(bins_per_iteration) + ", dp_size " +
        std::to_string(dp_size) + ")");
  }
  if (max_length % (tp_size * cp_size) != 0) {
    throw ConstraintError(
        "constraint violated: max_length % (tp_size * cp_size) = 0 "
        "(max_length " +
        std::to_string(max_length) + ", tp_size " + std::to_string(tp_size) +
        ", cp_size " + std::to_string(cp_size) + ")");
  }
  if (pool_capacity < 4 * bins_per_iteration) {
    throw ConstraintError("constraint violated: M >= 4N (M " +
                          std::to_string(pool_capacity) + ", N " +
                          std::to_string(bins_per_iteration) + ")");
  }
  if (defer_threshold < 0.0 || defer_threshold > 1.0) {
    throw UsageError("defer_threshold must lie in [0, 1]");
  }
}

Packer::Packer(PackingConfig config) : config_(config) {
  config_.check_valid();
}

bool Packer::admit(const PackedSample& sample) {
  if (sample.length <= 0 || sample.length > config_.max_length) {
    ++rejected_oversized_;
    return false;
  }
  if (pool_full()) return false;
  pool_.push_back(sample);
  return true;
}

bool Packer::pool_full() const {
  return static_cast<std::int64_t>(pool_.size()) >= config_.pool_capacity;
}

std::optional<PackedBatch> Packer::pack_iteration() {
  const std::int64_t n_bins = config_.bins_per_iteration;
  if (static_cast<std::int64_t>(pool_.size()) < n_bins) {
    ++deferred_iterations_;
    return std::nullopt;
  }

  // FFD over the sorted view; ties keep arrival order
  std::vector<std::size_t> view(pool_.size());
  std::iota(view.begin(), view.end(), 0);
  std::stable_sort(view.begin(), view.end(), [&](std::size_t a, std::size_t b) {
    return pool_[a].length > pool_[b].length;
  });

  std::vector<std::vector<std::size_t>> bins(static_cast<std::size_t>(n_bins));
  std::vector<TokenIndex> fills(static_cast<std::size_t>(n_bins), 0);
  std::vector<bool> placed(pool_.size(), false);
  for (std::size_t idx : view) {
    for (std::size_t b = 0; b < bins.size(); ++b) {
      if (fills[b] + pool_[idx].length <= config_.max_length) {
        bins[b].push_back(idx);
        fills[b] += pool_[idx].length;
        placed[idx] = true;
        break;
      }
    }
  }

  // bounded single-swap refinement: trade one placed sample for one pool
  // sample when that strictly raises the bin fill
  for (int pass = 0; pass < config_.swap_passes; ++pass) {
    bool improved = false;
    for (std::size_t b = 0; b < bins.size(); ++b) {
      TokenIndex best_gain = 0;
      std::size_t best_slot = 0;
      std::size_t best_pool_idx = 0;
      for (std::size_t slot = 0; slot < bins[b].size(); ++slot) {
        const TokenIndex out_len = pool_[bins[b][slot]].length;
        for (std::size_t idx = 0; idx < pool_.size(); ++idx) {
          if (placed[idx]) continue;
          const TokenIndex in_len = pool_[idx].length;
          const TokenIndex gain = in_len - out_len;
          if (gain > best_gain &&
              fills[b] - out_len + in_len <= config_.max_length) {
            best_gain = gain;
            best_slot = slot;
            best_pool_idx = idx;
          }
        }
      }
      if (best_gain > 0) {
        const std::size_t out_idx = bins[b][best_slot];
        placed[out_idx] = false;
        placed[best_pool_idx] = true;
        bins[b][best_slot] = best_pool_idx;
        fills[b] += best_gain;
        improved = true;
      }
    }
    if (!improved) break;
  }

  // a tight packing can leave trailing bins empty; every bin must carry work
  // for its DP group, so spread from the most-populated bin
  for (;;) {
    std::size_t empty = bins.size();
    for (std::size_t b = 0; b < bins.size(); ++b) {
      if (bins[b].empty()) {
        empty = b;
        break;
      }
    }
    if (empty == bins.size()) break;
    std::size_t donor = 0;
    for (std::size_t b = 1; b < bins.size(); ++b) {
      if (bins[b].size() > bins[donor].size()) donor = b;
    }
    if (bins[donor].size() < 2) break;
    std::size_t smallest = 0;
    for (std::size_t slot = 1; slot < bins[donor].size(); ++slot) {
      if (pool_[bins[donor][slot]].length < pool_[bins[donor][smallest]].length) {
        smallest = slot;
      }
    }
    const std::size_t moved = bins[donor][smallest];
    bins[donor].erase(bins[donor].begin() + static_cast<std::ptrdiff_t>(smallest));
    fills[donor] -= pool_[moved].length;
    bins[empty].push_back(moved);
    fills[empty] += pool_[moved].length;
  }

  TokenIndex total_fill = 0;
  for (std::size_t b = 0; b < bins.size(); ++b) total_fill += fills[b];
  const double utilization =
      static_cast<double>(total_fill) /
      static_cast<double>(n_bins * config_.max_length);
  if (utilization < config_.defer_threshold) {
    ++deferred_iterations_;
    return std::nullopt;
  }

  PackedBatch batch;
  batch.utilization = utilization;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    PackedBin bin;
    bin.fill = fills[b];
    for (std::size_t idx : bins[b]) bin.samples.push_back(pool_[idx]);
    MAGIPLAN_INTERNAL_CHECK(bin.fill <= config_.max_length,
                            "bin fill exceeds max_length");
    batch.bins.push_back(std::move(bin));
  }

  // consume placed samples; the remainder keeps arrival order
  std::vector<PackedSample> remainder;
  remainder.reserve(pool_.size());
  for (std::size_t idx = 0; idx < pool_.size(); ++idx) {
    if (!placed[idx]) remainder.push_back(pool_[idx]);
  }
  pool_ = std::move(remainder);
  return batch;
}

UtilizationStats utilization_stats(const std::vector<PackedBatch>& history,
                                   const PackingConfig& config) {
  if (history.empty()) {
    throw UsageError("utilization_stats needs at least one batch");
  }
  UtilizationStats stats;
  stats.batches = static_cast<std::int64_t>(history.size());
  stats.min_utilization = history.front().utilization;
  double sum = 0.0;
  std::vector<std::int64_t> group_fill(static_cast<std::size_t>(config.dp_size), 0);
  for (const PackedBatch& batch : history) {
    sum += batch.utilization;
    stats.min_utilization = std::min(stats.min_utilization, batch.utilization);
    for (std::size_t b = 0; b < batch.bins.size(); ++b) {
      group_fill[b % static_cast<std::size_t>(config.dp_size)] +=
          batch.bins[b].fill;
    }
  }
  stats.mean_utilization = sum / static_cast<double>(history.size());

  const auto [lo, hi] = std::minmax_element(group_fill.begin(), group_fill.end());
  const double mean_fill =
      static_cast<double>(std::accumulate(group_fill.begin(), group_fill.end(),
                                          std::int64_t{0})) /
      static_cast<double>(config.dp_size);
  stats.dp_group_spread =
      mean_fill > 0.0 ? static_cast<double>(*hi - *lo) / mean_fill : 0.0;
  return stats;
}

std::vector<PackedSample> lognormal_stream(std::size_t count, double median,
                                           double sigma, TokenIndex max_length,
                                           std::uint64_t seed) {
  if (median <= 0.0 || sigma < 0.0 || max_length <= 0) {
    throw UsageError("lognormal stream needs median > 0, sigma >= 0");
  }
  std::mt19937_64 rng(seed);
  // Box-Muller on explicit 53-bit uniforms; std::lognormal_distribution's
  // sequence varies across standard libraries
  auto uniform = [&rng]() {
    return (static_cast<double>(rng() >> 11) + 0.5) / 9007199254740992.0;
  };
  std::vector<PackedSample> samples;
  samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double u1 = uniform();
    const double u2 = uniform();
    const double z = std::sqrt(-2.0 * std::log(u1)) *
                     std::cos(2.0 * 3.141592653589793238462643 * u2);
    const double len = median * std::exp(sigma * z);
    const TokenIndex clamped = std::max<TokenIndex>(
        1, std::min<TokenIndex>(max_length, std::llround(len)));
    samples.push_back({static_cast<std::int64_t>(i), clamped});
  }
  return samples;
}

std::string batch_to_json(const PackedBatch& batch) {
  nlohmann::ordered_json j;
  j["utilization"] = batch.utilization;
  j["bins"] = nlohmann::ordered_json::array();
  for (const PackedBin& bin : batch.bins) {
    nlohmann::ordered_json jb;
    jb["fill"] = bin.fill;
    jb["samples"] = nlohmann::ordered_json::array();
    for (const PackedSample& s : bin.samples) {
      jb["samples"].push_back({{"id", s.id}, {"length", s.length}});
    }
    j["bins"].push_back(jb);
  }
  return j.dump();
}

}  // namespace magiplan
