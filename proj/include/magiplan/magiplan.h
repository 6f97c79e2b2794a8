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

/* C ABI of the context-parallel attention planning toolkit.
 *
 * Conventions:
 *   - every function returns a magiplan_status; failures leave outputs
 *     untouched and record a message readable via magiplan_last_error()
 *     (thread-local);
 *   - strings returned through char** are heap-allocated; release them with
 *     magiplan_string_free;
 *   - handles are opaque; release them with the matching _free call.
 */

#ifndef MAGIPLAN_H
#define MAGIPLAN_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define MAGIPLAN_API __declspec(dllexport)
#else
#define MAGIPLAN_API __attribute__((visibility("default")))
#endif

typedef enum magiplan_status {
  MAGIPLAN_OK = 0,
  /* bad arguments or unparsable config; CLI exit code 2 */
  MAGIPLAN_ERR_USAGE = 2,
  /* a named structural constraint is violated; CLI exit code 3 */
  MAGIPLAN_ERR_CONSTRAINT = 3,
  /* internal invariant failure; CLI exit code 4 */
  MAGIPLAN_ERR_INTERNAL = 4
} magiplan_status;

typedef enum magiplan_counting {
  MAGIPLAN_COUNT_MULTIPLICITY = 0,
  MAGIPLAN_COUNT_UNION = 1
} magiplan_counting;

typedef struct magiplan_mask magiplan_mask;
typedef struct magiplan_scenario magiplan_scenario;

MAGIPLAN_API const char* magiplan_version(void);

/* Message of the last failing call on this thread; empty string if none. */
MAGIPLAN_API const char* magiplan_last_error(void);

MAGIPLAN_API void magiplan_string_free(char* text);

/* ---- attention masks ------------------------------------------------- */

/* spec_json: {"seqlen": n, "pattern": name, "params": {...}} or
 * {"seqlen_q": n, "seqlen_k": m, "slices": [{"q": [s,e], "k": [s,e],
 * "type": "full|causal|inv_causal|bi_causal"}, ...]}. */
MAGIPLAN_API magiplan_status magiplan_mask_parse(const char* spec_json,
                                                 magiplan_mask** out_mask);
MAGIPLAN_API void magiplan_mask_free(magiplan_mask* mask);

MAGIPLAN_API magiplan_status magiplan_mask_area(const magiplan_mask* mask,
                                                magiplan_counting counting,
                                                int64_t* out_area);

MAGIPLAN_API magiplan_status magiplan_mask_is_allowed(const magiplan_mask* mask,
                                                      int64_t q, int64_t k,
                                                      int* out_allowed);

/* '#'/'.' grid, one row per line; masks over 128 tokens are refused. */
MAGIPLAN_API magiplan_status magiplan_mask_render(const magiplan_mask* mask,
                                                  char** out_text);

/* {"seqlen_q", "seqlen_k", "num_slices", "area_union",
 * "area_multiplicity", "slices": [...]} */
MAGIPLAN_API magiplan_status magiplan_mask_describe(const magiplan_mask* mask,
                                                    char** out_json);

/* ---- planning and simulation scenarios -------------------------------- */

/* base_dir resolves file references inside the scenario (NULL = "."). */
MAGIPLAN_API magiplan_status magiplan_scenario_parse(
    const char* scenario_json, const char* base_dir,
    magiplan_scenario** out_scenario);
MAGIPLAN_API void magiplan_scenario_free(magiplan_scenario* scenario);

MAGIPLAN_API magiplan_status magiplan_scenario_set_seed(
    magiplan_scenario* scenario, uint64_t seed);

/* One JSON object: dispatch plan, group-cast/group-reduce transfer tables,
 * redundancy and balance summaries, overlap-stage search. */
MAGIPLAN_API magiplan_status magiplan_scenario_plan(
    const magiplan_scenario* scenario, char** out_json);

/* JSON-lines simulation records, one per schedule pass per sweep point.
 * jobs bounds concurrent sweep points (<=1 means serial). */
MAGIPLAN_API magiplan_status magiplan_scenario_simulate(
    const magiplan_scenario* scenario, int jobs, char** out_jsonl);

/* ---- sample packing ---------------------------------------------------- */

/* stream_text: "id length" per line (NULL uses the configured generator).
 * Returns the packing report as one JSON object. */
MAGIPLAN_API magiplan_status magiplan_pack_run(const char* config_json,
                                               const char* stream_text,
                                               char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* MAGIPLAN_H */
