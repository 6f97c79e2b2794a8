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

#include "magiplan/magiplan.h"

#include <cstring>
#include <string>

#include <json.hpp>

#include "magiplan/errors.hpp"
#include "magiplan/mask.hpp"
#include "magiplan/scenario.hpp"

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& text) {
  char* out = new char[text.size() + 1];
  std::memcpy(out, text.c_str(), text.size() + 1);
  return out;
}

template <typename Fn>
magiplan_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return MAGIPLAN_OK;
  } catch (const magiplan::ConstraintError& e) {
    g_last_error = e.what();
    return MAGIPLAN_ERR_CONSTRAINT;
  } catch (const magiplan::UsageError& e) {
    g_last_error = e.what();
    return MAGIPLAN_ERR_USAGE;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MAGIPLAN_ERR_INTERNAL;
  }
}

magiplan_status require(bool ok, const char* message) {
  if (ok) return MAGIPLAN_OK;
  g_last_error = message;
  return MAGIPLAN_ERR_USAGE;
}

}  // namespace

struct magiplan_mask {
  magiplan::AttnMask mask;
};

struct magiplan_scenario {
  magiplan::ScenarioSpec spec;
};

extern "C" {

const char* magiplan_version(void) { return "0.1.0"; }

const char* magiplan_last_error(void) { return g_last_error.c_str(); }

void magiplan_string_free(char* text) { delete[] text; }

magiplan_status magiplan_mask_parse(const char* spec_json,
                                    magiplan_mask** out_mask) {
  if (auto st = require(spec_json && out_mask, "null argument"); st != MAGIPLAN_OK)
    return st;
  return guarded([&] {
    auto* handle = new magiplan_mask{magiplan::parse_mask_spec(spec_json)};
    *out_mask = handle;
  });
}

void magiplan_mask_free(magiplan_mask* mask) { delete mask; }

magiplan_status magiplan_mask_area(const magiplan_mask* mask,
                                   magiplan_counting counting,
                                   int64_t* out_area) {
  if (auto st = require(mask && out_area, "null argument"); st != MAGIPLAN_OK)
    return st;
  return guarded([&] {
    *out_area = magiplan::mask_area(
        mask->mask, counting == MAGIPLAN_COUNT_UNION
                        ? magiplan::AreaCounting::UNION
                        : magiplan::AreaCounting::MULTIPLICITY);
  });
}

magiplan_status magiplan_mask_is_allowed(const magiplan_mask* mask, int64_t q,
                                         int64_t k, int* out_allowed) {
  if (auto st = require(mask && out_allowed, "null argument"); st != MAGIPLAN_OK)
    return st;
  return guarded(
      [&] { *out_allowed = magiplan::is_allowed(mask->mask, q, k) ? 1 : 0; });
}

magiplan_status magiplan_mask_render(const magiplan_mask* mask,
                                     char** out_text) {
  if (auto st = require(mask && out_text, "null argument"); st != MAGIPLAN_OK)
    return st;
  return guarded([&] { *out_text = dup_string(magiplan::render_ascii(mask->mask)); });
}

magiplan_status magiplan_mask_describe(const magiplan_mask* mask,
                                       char** out_json) {
  if (auto st = require(mask && out_json, "null argument"); st != MAGIPLAN_OK)
    return st;
  return guarded([&] {
    nlohmann::ordered_json j;
    j["seqlen_q"] = mask->mask.seqlen_q;
    j["seqlen_k"] = mask->mask.seqlen_k;
    j["num_slices"] = mask->mask.slices.size();
    j["area_union"] = magiplan::mask_area(mask->mask, magiplan::AreaCounting::UNION);
    j["area_multiplicity"] =
        magiplan::mask_area(mask->mask, magiplan::AreaCounting::MULTIPLICITY);
    j["slices"] =
        nlohmann::ordered_json::parse(magiplan::mask_to_json(mask->mask))["slices"];
    *out_json = dup_string(j.dump());
  });
}

magiplan_status magiplan_scenario_parse(const char* scenario_json,
                                        const char* base_dir,
                                        magiplan_scenario** out_scenario) {
  if (auto st = require(scenario_json && out_scenario, "null argument");
      st != MAGIPLAN_OK)
    return st;
  return guarded([&] {
    auto* handle = new magiplan_scenario{magiplan::ScenarioSpec::parse(
        scenario_json, base_dir ? base_dir : ".")};
    *out_scenario = handle;
  });
}

void magiplan_scenario_free(magiplan_scenario* scenario) { delete scenario; }

magiplan_status magiplan_scenario_set_seed(magiplan_scenario* scenario,
                                           uint64_t seed) {
  if (auto st = require(scenario != nullptr, "null argument"); st != MAGIPLAN_OK)
    return st;
  scenario->spec.seed = seed;
  return MAGIPLAN_OK;
}

magiplan_status magiplan_scenario_plan(const magiplan_scenario* scenario,
                                       char** out_json) {
  if (auto st = require(scenario && out_json, "null argument"); st != MAGIPLAN_OK)
    return st;
  return guarded([&] {
    const magiplan::AttnMask mask = magiplan::scenario_mask(scenario->spec);
    const magiplan::PlanArtifacts artifacts =
        magiplan::run_plan(scenario->spec, mask);
    *out_json = dup_string(magiplan::plan_artifacts_to_json(artifacts, scenario->spec));
  });
}

magiplan_status magiplan_scenario_simulate(const magiplan_scenario* scenario,
                                           int jobs, char** out_jsonl) {
  if (auto st = require(scenario && out_jsonl, "null argument"); st != MAGIPLAN_OK)
    return st;
  return guarded([&] {
    std::string lines;
    for (const std::string& record :
         magiplan::run_simulate(scenario->spec, jobs)) {
      lines += record;
      lines += '\n';
    }
    *out_jsonl = dup_string(lines);
  });
}

magiplan_status magiplan_pack_run(const char* config_json,
                                  const char* stream_text, char** out_json) {
  if (auto st = require(config_json && out_json, "null argument");
      st != MAGIPLAN_OK)
    return st;
  return guarded([&] {
    const std::string stream = stream_text ? stream_text : "";
    const std::string* stream_ptr = stream_text ? &stream : nullptr;
    *out_json = dup_string(magiplan::run_pack(config_json, stream_ptr));
  });
}

}  // extern "C"
