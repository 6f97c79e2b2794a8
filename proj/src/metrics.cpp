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

#include "magiplan/metrics.hpp"

#include "magiplan/errors.hpp"

namespace magiplan {

BalanceSummary balance_summary(const DispatchPlan& plan) {
  plan.check_valid();
  BalanceSummary summary;
  PairCount total = 0;
  for (PairCount w : plan.bucket_workloads) {
    summary.max_workload = std::max(summary.max_workload, w);
    total += w;
  }
  summary.mean_workload =
      static_cast<double>(total) / static_cast<double>(plan.cp_size);
  summary.imbalance =
      summary.mean_workload > 0.0
          ? static_cast<double>(summary.max_workload) / summary.mean_workload -
                1.0
          : 0.0;
  return summary;
}

namespace {

PairCount block_causal_area(TokenIndex length, TokenIndex block) {
  if (block <= 0 || length % block != 0) {
    throw ConstraintError("block_size " + std::to_string(block) +
                          " does not divide length " + std::to_string(length));
  }
  const TokenIndex blocks = length / block;
  return blocks * (blocks + 1) / 2 * block * block;
}

}  // namespace

PairCount named_area(const PatternSpec& spec) {
  const TokenIndex s = spec.seqlen;
  switch (spec.pattern) {
    case NamedPattern::FULL:
      return s * s;
    case NamedPattern::CAUSAL:
      return s * (s + 1) / 2;
    case NamedPattern::BLOCK_CAUSAL:
      return block_causal_area(s, spec.block_size);
    case NamedPattern::VARLEN_FULL: {
      PairCount total = 0;
      for (TokenIndex len : spec.sample_lengths) total += len * len;
      return total;
    }
    case NamedPattern::VARLEN_CAUSAL: {
      PairCount total = 0;
      for (TokenIndex len : spec.sample_lengths) total += len * (len + 1) / 2;
      return total;
    }
    case NamedPattern::VARLEN_BLOCK_CAUSAL: {
      PairCount total = 0;
      for (TokenIndex len : spec.sample_lengths) {
        total += block_causal_area(len, spec.block_size);
      }
      return total;
    }
    default:
      return mask_area(build_named_mask(spec), AreaCounting::UNION);
  }
}

}  // namespace magiplan
