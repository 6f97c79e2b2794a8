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

#include "magiplan/dispatch.hpp"
#include "magiplan/mask.hpp"

namespace magiplan {

struct BalanceSummary {
  PairCount max_workload = 0;
  double mean_workload = 0.0;
  double imbalance = 0.0;  // max / mean - 1; zero iff perfectly balanced
};

BalanceSummary balance_summary(const DispatchPlan& plan);

/// Closed-form UNION area of a named pattern where one exists (full, causal,
/// block-causal and their varlen sums); other patterns delegate to the slice
/// composition's UNION area.
PairCount named_area(const PatternSpec& spec);

}  // namespace magiplan
