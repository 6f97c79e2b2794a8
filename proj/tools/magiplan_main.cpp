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

// Command-line front door. Everything goes through the C API in
// magiplan/magiplan.h; this file only handles argument parsing, file IO and
// report formatting.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "magiplan/magiplan.h"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitInternal = 4;

using ordered_json = nlohmann::ordered_json;

struct StringDeleter {
  void operator()(char* s) const { magiplan_string_free(s); }
};
using ApiString = std::unique_ptr<char, StringDeleter>;

struct MaskDeleter {
  void operator()(magiplan_mask* m) const { magiplan_mask_free(m); }
};
struct ScenarioDeleter {
  void operator()(magiplan_scenario* s) const { magiplan_scenario_free(s); }
};

int fail(magiplan_status status) {
  std::cerr << "error: " << magiplan_last_error() << "\n";
  return static_cast<int>(status);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw CLI::ValidationError("--config", "cannot open '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string dir_of(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  return parent.empty() ? std::string(".") : parent.string();
}

void write_file(const std::string& dir, const std::string& name,
                const std::string& content) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir + "/" + name, std::ios::binary);
  out << content;
}

struct CommonOpts {
  std::string config;
  std::string out_dir;
  std::string format = "json";
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_jobs = false) {
  cmd->add_option("--config", opts.config, "configuration file")->required();
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--format", opts.format, "json|csv|text")
      ->check(CLI::IsMember({"json", "csv", "text"}));
  cmd->add_option("--seed", opts.seed, "override the spec seed");
  if (with_jobs) {
    cmd->add_option("--jobs", opts.jobs, "concurrent sweep points")
        ->check(CLI::PositiveNumber);
  }
}

int run_mask(const CommonOpts& opts) {
  const std::string spec = read_file(opts.config);
  magiplan_mask* raw = nullptr;
  if (auto st = magiplan_mask_parse(spec.c_str(), &raw); st != MAGIPLAN_OK) {
    return fail(st);
  }
  std::unique_ptr<magiplan_mask, MaskDeleter> mask(raw);

  char* describe_raw = nullptr;
  if (auto st = magiplan_mask_describe(mask.get(), &describe_raw);
      st != MAGIPLAN_OK) {
    return fail(st);
  }
  ApiString describe(describe_raw);
  const ordered_json info = ordered_json::parse(describe.get());

  if (opts.format == "text") {
    std::cout << "mask " << info["seqlen_q"] << "x" << info["seqlen_k"] << ", "
              << info["num_slices"] << " slices\n"
              << "area UNION        " << info["area_union"] << "\n"
              << "area MULTIPLICITY " << info["area_multiplicity"] << "\n";
    if (info["seqlen_q"].get<std::int64_t>() <= 128 &&
        info["seqlen_k"].get<std::int64_t>() <= 128) {
      char* grid_raw = nullptr;
      if (auto st = magiplan_mask_render(mask.get(), &grid_raw);
          st != MAGIPLAN_OK) {
        return fail(st);
      }
      ApiString grid(grid_raw);
      std::cout << grid.get();
    }
  } else {
    std::cout << describe.get() << "\n";
  }
  if (!opts.out_dir.empty()) {
    write_file(opts.out_dir, "mask.json", std::string(describe.get()) + "\n");
  }
  return 0;
}

int run_plan(const CommonOpts& opts) {
  const std::string spec = read_file(opts.config);
  magiplan_scenario* raw = nullptr;
  if (auto st = magiplan_scenario_parse(spec.c_str(), dir_of(opts.config).c_str(),
                                        &raw);
      st != MAGIPLAN_OK) {
    return fail(st);
  }
  std::unique_ptr<magiplan_scenario, ScenarioDeleter> scenario(raw);
  if (opts.seed) magiplan_scenario_set_seed(scenario.get(), *opts.seed);

  char* plan_raw = nullptr;
  if (auto st = magiplan_scenario_plan(scenario.get(), &plan_raw);
      st != MAGIPLAN_OK) {
    return fail(st);
  }
  ApiString plan(plan_raw);
  const ordered_json artifacts = ordered_json::parse(plan.get());

  if (opts.format == "text") {
    const auto& red = artifacts["redundancy"];
    const auto& bal = artifacts["balance"];
    std::cout << "plan: seqlen " << artifacts["seqlen"] << ", cp "
              << artifacts["cp_size"] << ", chunk "
              << artifacts["dispatch_chunk_size"] << "\n"
              << "balance: max " << bal["max_workload"] << ", imbalance "
              << bal["imbalance"] << "\n"
              << "comm: ring " << red["sent_ring"] << ", group-cast "
              << red["sent_group"] << ", redundancy "
              << red["redundancy_ratio"] << "\n"
              << "overlap stages: fwd " << artifacts["overlap"]["num_stages_fwd"]
              << ", bwd " << artifacts["overlap"]["num_stages_bwd"] << "\n";
  } else {
    std::cout << plan.get() << "\n";
  }
  if (!opts.out_dir.empty()) {
    write_file(opts.out_dir, "plan.json",
               artifacts["dispatch_plan"].dump() + "\n");
    write_file(opts.out_dir, "transfer_cast.json",
               artifacts["transfer_cast"].dump() + "\n");
    write_file(opts.out_dir, "transfer_reduce.json",
               artifacts["transfer_reduce"].dump() + "\n");
    write_file(opts.out_dir, "stage_plans.json",
               artifacts["overlap"].dump() + "\n");
    ordered_json summary;
    for (const char* key :
         {"schema_version", "spec_hash", "seed", "seqlen", "cp_size",
          "dispatch_chunk_size", "redundancy", "balance"}) {
      summary[key] = artifacts[key];
    }
    write_file(opts.out_dir, "summary.json", summary.dump() + "\n");
  }
  return 0;
}

void print_simulation_records(const std::string& jsonl, const std::string& format,
                              std::ostream& out) {
  if (format == "json") {
    out << jsonl;
    return;
  }
  std::istringstream lines(jsonl);
  std::string line;
  bool header = true;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const ordered_json r = ordered_json::parse(line);
    if (format == "csv") {
      if (header) {
        out << "schedule,pass,cp_size,seqlen,makespan,exposed_comm,"
               "flops_total,throughput_per_gpu,comm_volume_tokens,spec_hash,"
               "seed\n";
        header = false;
      }
      out << r["schedule"].get<std::string>() << ','
          << r["pass"].get<std::string>() << ',' << r["cp_size"] << ','
          << r["seqlen"] << ',' << r["makespan"] << ',' << r["exposed_comm"]
          << ',' << r["flops_total"] << ',' << r["throughput_per_gpu"] << ','
          << r["comm_volume_tokens"] << ',' << r["spec_hash"].get<std::string>()
          << ',' << r["seed"] << "\n";
    } else {
      if (header) {
        out << "schedule      pass cp  seqlen     makespan    exposed    "
               "tput/gpu\n";
        header = false;
      }
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%-13s %-4s %-3ld %-10ld %-11ld %-10ld %.6g\n",
                    r["schedule"].get<std::string>().c_str(),
                    r["pass"].get<std::string>().c_str(),
                    r["cp_size"].get<long>(), r["seqlen"].get<long>(),
                    r["makespan"].get<long>(), r["exposed_comm"].get<long>(),
                    r["throughput_per_gpu"].get<double>());
      out << buf;
    }
  }
}

int run_simulate(const CommonOpts& opts, bool require_sweep) {
  const std::string spec = read_file(opts.config);
  if (require_sweep) {
    const ordered_json j = ordered_json::parse(spec, nullptr, false);
    if (j.is_discarded() || !j.contains("sweep")) {
      std::cerr << "error: the sweep command needs a 'sweep' section in the "
                   "scenario\n";
      return kExitUsage;
    }
  }
  magiplan_scenario* raw = nullptr;
  if (auto st = magiplan_scenario_parse(spec.c_str(), dir_of(opts.config).c_str(),
                                        &raw);
      st != MAGIPLAN_OK) {
    return fail(st);
  }
  std::unique_ptr<magiplan_scenario, ScenarioDeleter> scenario(raw);
  if (opts.seed) magiplan_scenario_set_seed(scenario.get(), *opts.seed);

  char* reports_raw = nullptr;
  if (auto st = magiplan_scenario_simulate(scenario.get(), opts.jobs, &reports_raw);
      st != MAGIPLAN_OK) {
    return fail(st);
  }
  ApiString reports(reports_raw);
  print_simulation_records(reports.get(), opts.format, std::cout);
  if (!opts.out_dir.empty()) {
    write_file(opts.out_dir, "reports.jsonl", reports.get());
  }
  return 0;
}

int run_pack(const CommonOpts& opts, const std::string& stream_path) {
  std::string config = read_file(opts.config);
  if (opts.seed) {
    ordered_json j = ordered_json::parse(config);
    j["seed"] = *opts.seed;
    config = j.dump();
  }
  std::optional<std::string> stream;
  if (!stream_path.empty()) stream = read_file(stream_path);

  char* report_raw = nullptr;
  if (auto st = magiplan_pack_run(config.c_str(),
                                  stream ? stream->c_str() : nullptr,
                                  &report_raw);
      st != MAGIPLAN_OK) {
    return fail(st);
  }
  ApiString report(report_raw);

  if (opts.format == "text") {
    const ordered_json r = ordered_json::parse(report.get());
    std::cout << "samples in " << r["samples_in"] << ", packed "
              << r["samples_packed"] << ", left " << r["samples_left"]
              << ", oversized skipped " << r["skipped_oversized"] << "\n";
    if (r.contains("stats")) {
      const auto& s = r["stats"];
      std::cout << "batches " << s["batches"] << ", mean utilization "
                << s["mean_utilization"] << ", min " << s["min_utilization"]
                << ", dp spread " << s["dp_group_spread"] << "\n";
    }
  } else {
    std::cout << report.get() << "\n";
  }
  if (!opts.out_dir.empty()) {
    write_file(opts.out_dir, "pack_report.json",
               std::string(report.get()) + "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"context-parallel attention planning and simulation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(magiplan_version()));

  CommonOpts mask_opts, plan_opts, sim_opts, sweep_opts, pack_opts;
  std::string stream_path;

  add_common(app.add_subcommand("mask", "inspect an attention mask spec"),
             mask_opts);
  add_common(app.add_subcommand("plan",
                                "dispatch, communication and overlap planning"),
             plan_opts);
  add_common(app.add_subcommand("simulate", "simulate a schedule"), sim_opts,
             true);
  add_common(app.add_subcommand("sweep", "simulate every sweep point"),
             sweep_opts, true);
  auto* pack_cmd =
      app.add_subcommand("pack", "online packing of a sample stream");
  add_common(pack_cmd, pack_opts);
  pack_cmd->add_option("--stream", stream_path,
                       "line-delimited 'id length' sample stream");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (app.got_subcommand("mask")) return run_mask(mask_opts);
    if (app.got_subcommand("plan")) return run_plan(plan_opts);
    if (app.got_subcommand("simulate")) return run_simulate(sim_opts, false);
    if (app.got_subcommand("sweep")) return run_simulate(sweep_opts, true);
    if (app.got_subcommand("pack")) return run_pack(pack_opts, stream_path);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
