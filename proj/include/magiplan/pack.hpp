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
#include <optional>
#include <string>
#include <vector>

#include "magiplan/mask.hpp"

namespace magiplan {

struct PackingConfig {
  TokenIndex max_length = 65536;
  std::int64_t dp_size = 1;
  std::int64_t tp_size = 1;
  std::int64_t cp_size = 1;
  std::int64_t bins_per_iteration = 1;  // N
  std::int64_t pool_capacity = 4;       // M
  double defer_threshold = 0.5;         // minimum mean fill to emit a batch
  int swap_passes = 2;

  /// N % dp_size = 0, max_length % (tp_size * cp_size) = 0, M >= 4N.
  void check_valid() const;
};

struct PackedSample {
  std::int64_t id = 0;
  TokenIndex length = 0;
};

struct PackedBin {
  std::vector<PackedSample> samples;
  TokenIndex fill = 0;
};

struct PackedBatch {
  std::vector<PackedBin> bins;
  double utilization = 0.0;  // sum of fills / (N * max_length)
};

/// Single logical owner of the candidate pool; one packer per training
/// stream. Samples are admitted in arrival order and never reordered in the
/// pool, only in each iteration's sorted view.
class Packer {
 public:
  explicit Packer(PackingConfig config);

  const PackingConfig& config() const { return config_; }

  /// False (and counted) when the sample exceeds max_length or the pool is at
  /// capacity; oversized samples never enter the pool.
  bool admit(const PackedSample& sample);
  bool pool_full() const;
  std::size_t pool_size() const { return pool_.size(); }
  std::int64_t rejected_oversized() const { return rejected_oversized_; }
  std::int64_t deferred_iterations() const { return deferred_iterations_; }

  /// One FFD sweep over the sorted pool view plus bounded swap refinement.
  /// Returns nothing (and leaves the pool untouched) when the pool cannot
  /// open every bin at the configured fill threshold.
  std::optional<PackedBatch> pack_iteration();

 private:
  PackingConfig config_;
  std::vector<PackedSample> pool_;
  std::int64_t rejected_oversized_ = 0;
  std::int64_t deferred_iterations_ = 0;
};

struct UtilizationStats {
  std::int64_t batches = 0;
  double mean_utilization = 0.0;
  double min_utilization = 0.0;
  /// Relative spread (max - min) / mean of cumulative per-DP-group fills;
  /// bins go to groups round-robin (bin i -> group i mod dp_size).
  double dp_group_spread = 0.0;
};

UtilizationStats utilization_stats(const std::vector<PackedBatch>& history,
                                   const PackingConfig& config);

/// Deterministic long-tail length stream (log-normal, clamped to
/// [1, max_length]). Stable across standard library implementations.
std::vector<PackedSample> lognormal_stream(std::size_t count, double median,
                                           double sigma, TokenIndex max_length,
                                           std::uint64_t seed);

std::string batch_to_json(const PackedBatch& batch);

}  // namespace magiplan
