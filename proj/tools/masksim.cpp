// Copyright 2026 The masksim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <atomic>
#include <thread>

#include <CLI11.hpp>

#include "masksim/scenario.hpp"

namespace fs = std::filesystem;
using namespace masksim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCounterexample = 1;
constexpr int kExitConfig = 2;

struct CommonOpts {
  std::string scenario_path;
  std::string output_dir;
  std::string mode_override;
  unsigned jobs = 1;
};

Scenario load_with_overrides(const CommonOpts& opts) {
  Scenario s = load_scenario_file(opts.scenario_path);
  if (!opts.output_dir.empty()) s.output_dir = opts.output_dir;
  if (!opts.mode_override.empty()) {
    if (opts.mode_override == "baseline")
      s.modes = {Mode::Baseline};
    else if (opts.mode_override == "masked")
      s.modes = {Mode::Masked};
    else
      throw ConfigError("unknown mode '" + opts.mode_override + "'");
  }
  return s;
}

int cmd_run(const CommonOpts& opts) {
  Scenario s = load_with_overrides(opts);
  for (Mode mode : s.modes) {
    RunResult r = run_scenario(s, mode);
    fs::path dir = fs::path(s.output_dir) / to_string(mode);
    for (size_t i = 0; i < r.phases.size(); ++i) {
      write_file(dir / ("phase" + std::to_string(i) + "_" +
                        r.phases[i].program + ".trace"),
                 r.phases[i].trace_text);
    }
    write_file(dir / "summary.json", run_summary_json(r).dump(2) + "\n");
    for (size_t i = 0; i < r.phases.size(); ++i) {
      const PhaseResult& p = r.phases[i];
      std::cout << to_string(mode) << " phase " << i << " (" << p.program
                << "): " << to_string(p.status) << ", steps=" << p.steps
                << ", cycles=" << p.cycles << ", committed=" << p.committed
                << "\n";
    }
  }
  return kExitOk;
}

int cmd_attack(const CommonOpts& opts) {
  Scenario s = load_with_overrides(opts);
  if (!s.attack) throw ConfigError("scenario has no attack section");
  const AttackSpec& spec = *s.attack;
  for (Mode mode : s.modes) {
    std::vector<AttackRun> runs(spec.seeds.size());
    unsigned jobs = std::max(1u, opts.jobs);
    // Independent seeds may fan out; results merge by index.
    std::vector<std::thread> pool;
    std::atomic<size_t> next{0};
    auto worker = [&] {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= spec.seeds.size()) return;
        runs[i] =
            dispatch_attack(spec.name, mode, spec.seeds[i], spec.kernel_scale);
      }
    };
    if (jobs <= 1) {
      worker();
    } else {
      for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }

    fs::path dir = fs::path(s.output_dir) / to_string(mode);
    json summary = json::array();
    u64 leaks = 0;
    for (size_t i = 0; i < runs.size(); ++i) {
      const AttackReport& r = runs[i].report;
      if (r.verdict == Verdict::Leak) ++leaks;
      write_file(dir / (spec.name + "_seed" + std::to_string(spec.seeds[i]) +
                        ".csv"),
                 r.csv());
      if (!runs[i].trace_valid.empty()) {
        std::string tv, ti;
        for (const auto& l : runs[i].trace_valid) tv += l + "\n";
        for (const auto& l : runs[i].trace_invalid) ti += l + "\n";
        write_file(dir / (spec.name + "_seed" + std::to_string(spec.seeds[i]) +
                          "_valid.trace"),
                   tv);
        write_file(dir / (spec.name + "_seed" + std::to_string(spec.seeds[i]) +
                          "_invalid.trace"),
                   ti);
      }
      summary.push_back(attack_summary_json(r));
      std::cout << to_string(mode) << " " << spec.name << " seed "
                << spec.seeds[i] << ": " << to_string(r.verdict);
      if (r.recovered_index)
        std::cout << " recovered=" << *r.recovered_index
                  << " planted=" << r.planted_index;
      std::cout << "\n";
    }
    json agg = {{"attack", spec.name},
                {"mode", to_string(mode)},
                {"seeds", spec.seeds.size()},
                {"leak_count", leaks},
                {"runs", summary}};
    write_file(dir / (spec.name + "_summary.json"), agg.dump(2) + "\n");
  }
  return kExitOk;
}

int cmd_verify(const CommonOpts& opts) {
  Scenario s = load_with_overrides(opts);
  bool failed = false;
  for (Mode mode : s.modes) {
    VerifyResult r = verify_scenario(s, mode);
    fs::path dir = fs::path(s.output_dir) / to_string(mode);
    write_file(dir / "verify.json", verify_summary_json(r).dump(2) + "\n");
    std::set<std::pair<u64, u64>> pairs;
    for (const auto& f : r.noninterference.distinguishable)
      pairs.insert({f.layout_i, f.layout_j});
    std::cout << to_string(mode)
              << " distinguishable pairs: " << pairs.size() << " of "
              << r.noninterference.pairs_checked << "\n";
    if (r.ran_translation)
      std::cout << to_string(mode) << " translation invariance: "
                << (r.translation.holds() ? "holds" : "violated") << " over "
                << r.translation.pairs_checked << " pairs\n";
    if (!r.noninterference.precondition_violations.empty())
      std::cout << to_string(mode) << " precondition violations: "
                << r.noninterference.precondition_violations.size() << "\n";
    if (r.failed()) failed = true;
  }
  return failed ? kExitCounterexample : kExitOk;
}

int cmd_entropy(const std::string& csv_path) {
  json rows = entropy_table_json();
  std::printf("%-14s %-18s %9s %9s %9s %9s %9s %9s\n", "preset", "variant",
              "orig_cr", "orig_spec", "rem_cr", "rem_spec", "positions",
              "pos_bits");
  for (const auto& row : rows) {
    std::printf("%-14s %-18s %9llu %9llu %9llu %9llu %9llu %9llu\n",
                row.at("preset").get<std::string>().c_str(),
                row.at("variant").get<std::string>().c_str(),
                (unsigned long long)row.at("original_code_reuse").get<u64>(),
                (unsigned long long)row.at("original_speculative").get<u64>(),
                (unsigned long long)row.at("remaining_code_reuse").get<u64>(),
                (unsigned long long)row.at("remaining_speculative").get<u64>(),
                (unsigned long long)row.at("offset_positions").get<u64>(),
                (unsigned long long)row.at("position_limited_bits").get<u64>());
  }
  if (!csv_path.empty()) write_file(csv_path, entropy_table_csv());
  return kExitOk;
}

int cmd_cost(const CoreSizing& sizing, const std::string& csv_path) {
  json j = cost_table_json(sizing);
  std::printf("tlb_extra_bytes           %llu\n",
              (unsigned long long)j.at("tlb_extra_bytes").get<u64>());
  std::printf("rob_lsq_extra_bytes       %llu\n",
              (unsigned long long)j.at("rob_lsq_extra_bytes").get<u64>());
  std::printf("region_metadata_bytes     %llu\n",
              (unsigned long long)j.at("region_metadata_bytes").get<u64>());
  std::printf("archpc_bytes              %llu\n",
              (unsigned long long)j.at("archpc_bytes").get<u64>());
  std::printf("total_in_core_bytes       %llu\n",
              (unsigned long long)j.at("total_in_core_bytes").get<u64>());
  std::printf("total_memory_system_bytes %llu\n",
              (unsigned long long)j.at("total_memory_system_bytes").get<u64>());
  if (!csv_path.empty()) {
    std::ostringstream csv;
    csv << "field,bytes\n";
    for (const char* k :
         {"tlb_extra_bytes", "rob_lsq_extra_bytes", "region_metadata_bytes",
          "archpc_bytes", "total_in_core_bytes", "total_memory_system_bytes"})
      csv << k << ',' << j.at(k).get<u64>() << '\n';
    write_file(csv_path, csv.str());
  }
  return kExitOk;
}

int cmd_trace_diff(const std::string& a, const std::string& b) {
  auto counts = trace_diff_files(a, b);
  u64 total = 0;
  for (const auto& [tag, n] : counts) {
    std::printf("%-8s %llu\n", tag.c_str(), (unsigned long long)n);
    total += n;
  }
  std::printf("total    %llu\n", (unsigned long long)total);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "masksim: a deterministic microarchitectural simulator for "
      "masked-address ASLR hardening"};
  app.require_subcommand(1);

  CommonOpts run_opts, attack_opts, verify_opts;
  auto add_common = [](CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("scenario", o.scenario_path, "scenario file (JSON)")
        ->required();
    cmd->add_option("--output", o.output_dir, "output directory override");
    cmd->add_option("--mode", o.mode_override,
                    "run only one mode (baseline|masked)");
    cmd->add_option("--jobs", o.jobs, "parallelism degree");
  };
  add_common(app.add_subcommand("run", "execute the scenario's phases"),
             run_opts);
  add_common(app.add_subcommand("attack", "run the scenario's attack"),
             attack_opts);
  add_common(app.add_subcommand(
                 "verify", "layout-sweep equivalence and invariance checks"),
             verify_opts);

  std::string entropy_csv;
  CLI::App* entropy =
      app.add_subcommand("entropy", "strategy entropy table for the presets");
  entropy->add_option("--csv", entropy_csv, "also write a CSV file");

  CoreSizing sizing;
  std::string cost_csv;
  CLI::App* cost = app.add_subcommand("cost", "storage-cost arithmetic");
  cost->add_option("--tlb", sizing.tlb_entries, "TLB entries");
  cost->add_option("--rob", sizing.rob_entries, "ROB entries");
  cost->add_option("--lsq", sizing.lsq_entries, "LSQ entries");
  cost->add_option("--regions", sizing.num_regions, "randomization regions");
  cost->add_option("--offset-bits", sizing.offset_bits,
                   "stored offset field width");
  cost->add_option("--csv", cost_csv, "also write a CSV file");

  std::string diff_a, diff_b;
  CLI::App* diff =
      app.add_subcommand("trace-diff", "per-structure trace deviation table");
  diff->add_option("a", diff_a, "first trace file")->required();
  diff->add_option("b", diff_b, "second trace file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("run")) return cmd_run(run_opts);
    if (app.got_subcommand("attack")) return cmd_attack(attack_opts);
    if (app.got_subcommand("verify")) return cmd_verify(verify_opts);
    if (app.got_subcommand("entropy")) return cmd_entropy(entropy_csv);
    if (app.got_subcommand("cost")) return cmd_cost(sizing, cost_csv);
    if (app.got_subcommand("trace-diff")) return cmd_trace_diff(diff_a, diff_b);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
