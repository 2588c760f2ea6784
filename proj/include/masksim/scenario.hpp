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

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "masksim/attacks.hpp"
#include "masksim/verify.hpp"

namespace masksim {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Scenario files: one self-describing JSON document per experiment. The
// schema is validated eagerly; unknown keys are rejected.

namespace detail {

inline void reject_unknown(const json& j, const std::set<std::string>& known,
                           const std::string& where) {
  if (!j.is_object())
    throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key))
      throw ConfigError(where + ": unknown key '" + key + "'");
}

inline u64 parse_num(const json& j, const std::string& where) {
  if (j.is_number_unsigned()) return j.get<u64>();
  if (j.is_string()) {
    try {
      size_t used = 0;
      u64 v = std::stoull(j.get<std::string>(), &used, 0);
      if (used != j.get<std::string>().size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
    }
  }
  throw ConfigError(where + ": expected a number or hex string");
}

inline u64 get_num(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  return parse_num(j.at(key), where + "." + key);
}

inline Perms parse_perms(const std::string& s) {
  Perms p{false, false, false, false};
  for (char c : s) {
    if (c == 'r') p.read = true;
    else if (c == 'w') p.write = true;
    else if (c == 'x') p.execute = true;
    else if (c == 'p') p.privileged = true;
    else throw ConfigError(std::string("bad permission flag '") + c + "'");
  }
  return p;
}

}  // namespace detail

struct LayoutSpec {
  enum class Kind { Seed, Index, Enumerate, Pages } kind = Kind::Seed;
  u64 seed = 0;
  u64 index = 0;
  u64 count = 8;
  std::vector<u64> page_indices;
};

struct ProgramSpec {
  std::string asm_text;
  bool in_region = true;
  u64 virt = 0;
  u64 phys = 0;
  Perms perms{true, false, true, false};
};

struct PreloadSpec {
  unsigned reg = 0;
  enum class Kind { Value, RegionOffset, Label } kind = Kind::Value;
  u64 value = 0;
  std::string label;
};

struct PhaseSpec {
  std::string program;
  std::string entry;  // entry-point name; defaults to the program name
  bool privileged = false;
  u64 budget = 4000;
  std::vector<PreloadSpec> preloads;
};

struct AttackSpec {
  std::string name;
  std::vector<u64> seeds = {1};
  bool kernel_scale = false;
};

struct VerifySpec {
  u64 subregions = 8;
  bool noninterference = true;
  bool translation_invariance = true;
};

struct Scenario {
  std::vector<Mode> modes = {Mode::Baseline, Mode::Masked};
  std::optional<RandRegion> region;
  LayoutSpec layout;
  std::map<std::string, ProgramSpec> programs;
  std::vector<FixedMapping> fixed;
  std::vector<std::pair<u64, u64>> data;  // phys address -> value
  std::vector<PhaseSpec> phases;
  std::optional<AttackSpec> attack;
  std::optional<VerifySpec> verify;
  LatencyTable latency;
  std::string output_dir = "out";
};

inline RandRegion parse_region(const json& j) {
  if (j.is_string()) return region_preset(j.get<std::string>()).region;
  detail::reject_unknown(
      j, {"id", "start", "end", "subregion_len", "protected_bits"}, "region");
  u64 start = detail::get_num(j, "start", "region");
  u64 end = detail::get_num(j, "end", "region");
  u64 len = detail::get_num(j, "subregion_len", "region");
  u64 mask = 0;
  if (j.contains("protected_bits")) {
    const json& b = j.at("protected_bits");
    if (!b.is_array() || b.size() != 2)
      throw ConfigError("region.protected_bits: expected [low, high]");
    u64 lo = detail::parse_num(b[0], "region.protected_bits");
    u64 hi = detail::parse_num(b[1], "region.protected_bits");
    if (hi < lo || hi > 63)
      throw ConfigError("region.protected_bits: bad bit range");
    mask = ((hi - lo + 1 >= 64 ? ~0ULL : ((1ULL << (hi - lo + 1)) - 1))) << lo;
  }
  int id = j.contains("id")
               ? static_cast<int>(detail::get_num(j, "id", "region"))
               : 0;
  return make_region(id, start, end, len, mask);
}

inline Scenario load_scenario(const json& j) {
  using detail::get_num;
  using detail::parse_num;
  using detail::reject_unknown;
  reject_unknown(j,
                 {"mode", "modes", "region", "layout", "programs",
                  "fixed_mappings", "data", "phases", "attack", "verify",
                  "latency", "output_dir"},
                 "scenario");
  Scenario s;

  auto parse_mode = [](const std::string& m) {
    if (m == "baseline") return Mode::Baseline;
    if (m == "masked") return Mode::Masked;
    throw ConfigError("unknown mode '" + m + "'");
  };
  if (j.contains("mode")) s.modes = {parse_mode(j.at("mode"))};
  if (j.contains("modes")) {
    s.modes.clear();
    for (const auto& m : j.at("modes")) s.modes.push_back(parse_mode(m));
  }
  if (j.contains("region")) s.region = parse_region(j.at("region"));

  if (j.contains("layout")) {
    const json& l = j.at("layout");
    reject_unknown(l, {"kind", "seed", "index", "count", "page_indices"},
                   "layout");
    std::string kind = l.value("kind", "seed");
    if (kind == "seed") {
      s.layout.kind = LayoutSpec::Kind::Seed;
      s.layout.seed = l.contains("seed") ? get_num(l, "seed", "layout") : 0;
    } else if (kind == "index") {
      s.layout.kind = LayoutSpec::Kind::Index;
      s.layout.index = get_num(l, "index", "layout");
    } else if (kind == "enumerate") {
      s.layout.kind = LayoutSpec::Kind::Enumerate;
      s.layout.count = get_num(l, "count", "layout");
    } else if (kind == "pages") {
      s.layout.kind = LayoutSpec::Kind::Pages;
      if (l.contains("page_indices")) {
        for (const auto& i : l.at("page_indices"))
          s.layout.page_indices.push_back(parse_num(i, "layout.page_indices"));
      } else {
        s.layout.seed = get_num(l, "seed", "layout");
        s.layout.count = get_num(l, "count", "layout");
      }
    } else {
      throw ConfigError("layout.kind: unknown kind '" + kind + "'");
    }
  }

  if (j.contains("programs")) {
    for (const auto& [name, p] : j.at("programs").items()) {
      ProgramSpec spec;
      if (p.is_string()) {
        spec.asm_text = p.get<std::string>();
      } else {
        reject_unknown(p, {"asm", "virt", "phys", "perms"},
                       "programs." + name);
        spec.asm_text = p.at("asm").get<std::string>();
        if (p.contains("virt")) {
          spec.in_region = false;
          spec.virt = get_num(p, "virt", "programs." + name);
          spec.phys = get_num(p, "phys", "programs." + name);
        }
        if (p.contains("perms"))
          spec.perms = detail::parse_perms(p.at("perms").get<std::string>());
      }
      s.programs[name] = std::move(spec);
    }
  }

  if (j.contains("fixed_mappings")) {
    for (const auto& f : j.at("fixed_mappings")) {
      reject_unknown(f, {"virt", "phys", "len", "perms"}, "fixed_mappings");
      FixedMapping m;
      m.virt_base = VirtAddr(get_num(f, "virt", "fixed_mappings"));
      m.phys_base = PhysAddr(get_num(f, "phys", "fixed_mappings"));
      m.len = get_num(f, "len", "fixed_mappings");
      if (f.contains("perms"))
        m.perms = detail::parse_perms(f.at("perms").get<std::string>());
      s.fixed.push_back(m);
    }
  }

  if (j.contains("data")) {
    for (const auto& d : j.at("data")) {
      reject_unknown(d, {"phys", "value"}, "data");
      s.data.emplace_back(get_num(d, "phys", "data"),
                          get_num(d, "value", "data"));
    }
  }

  if (j.contains("phases")) {
    for (const auto& p : j.at("phases")) {
      reject_unknown(p, {"program", "entry", "privileged", "budget",
                         "preloads"},
                     "phases");
      PhaseSpec ps;
      if (!p.contains("program"))
        throw ConfigError("phases: missing key 'program'");
      ps.program = p.at("program").get<std::string>();
      ps.entry = p.value("entry", ps.program);
      ps.privileged = p.value("privileged", false);
      if (p.contains("budget")) ps.budget = get_num(p, "budget", "phases");
      if (p.contains("preloads")) {
        for (const auto& pre : p.at("preloads")) {
          reject_unknown(pre, {"reg", "value", "region_offset", "label"},
                         "preloads");
          PreloadSpec pl;
          pl.reg = static_cast<unsigned>(get_num(pre, "reg", "preloads"));
          if (pre.contains("value")) {
            pl.kind = PreloadSpec::Kind::Value;
            pl.value = get_num(pre, "value", "preloads");
          } else if (pre.contains("region_offset")) {
            pl.kind = PreloadSpec::Kind::RegionOffset;
            pl.value = get_num(pre, "region_offset", "preloads");
          } else if (pre.contains("label")) {
            pl.kind = PreloadSpec::Kind::Label;
            pl.label = pre.at("label").get<std::string>();
          } else {
            throw ConfigError("preloads: need value, region_offset, or label");
          }
          ps.preloads.push_back(std::move(pl));
        }
      }
      s.phases.push_back(std::move(ps));
    }
  }

  if (j.contains("attack")) {
    const json& a = j.at("attack");
    reject_unknown(a, {"name", "seed", "seeds", "kernel_scale"}, "attack");
    AttackSpec as;
    if (!a.contains("name")) throw ConfigError("attack: missing key 'name'");
    as.name = a.at("name").get<std::string>();
    if (a.contains("seed")) as.seeds = {get_num(a, "seed", "attack")};
    if (a.contains("seeds")) {
      as.seeds.clear();
      for (const auto& sd : a.at("seeds"))
        as.seeds.push_back(parse_num(sd, "attack.seeds"));
    }
    as.kernel_scale = a.value("kernel_scale", false);
    s.attack = std::move(as);
  }

  if (j.contains("verify")) {
    const json& v = j.at("verify");
    reject_unknown(v, {"subregions", "noninterference",
                       "translation_invariance"},
                   "verify");
    VerifySpec vs;
    if (v.contains("subregions"))
      vs.subregions = get_num(v, "subregions", "verify");
    vs.noninterference = v.value("noninterference", true);
    vs.translation_invariance = v.value("translation_invariance", true);
    s.verify = vs;
  }

  if (j.contains("latency")) {
    const json& l = j.at("latency");
    reject_unknown(l,
                   {"tlb_hit", "ptw_level", "l1_hit", "l2_hit", "dram",
                    "btb_hit", "btb_miss", "fault_delivery", "forward"},
                   "latency");
    auto set = [&](const char* k, u64& field) {
      if (l.contains(k)) field = get_num(l, k, "latency");
    };
    set("tlb_hit", s.latency.tlb_hit);
    set("ptw_level", s.latency.ptw_level);
    set("l1_hit", s.latency.l1_hit);
    set("l2_hit", s.latency.l2_hit);
    set("dram", s.latency.dram);
    set("btb_hit", s.latency.btb_hit);
    set("btb_miss", s.latency.btb_miss);
    set("fault_delivery", s.latency.fault_delivery);
    set("forward", s.latency.forward);
    s.latency.validate();
  }

  if (j.contains("output_dir"))
    s.output_dir = j.at("output_dir").get<std::string>();
  return s;
}

inline Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario parse error: ") + e.what());
  }
  return load_scenario(j);
}

// ---------------------------------------------------------------------------
// Orchestration.

struct PhaseResult {
  std::string program;
  TerminalStatus status;
  u64 steps = 0;
  u64 cycles = 0;
  u64 committed = 0;
  u64 crash_step = 0;
  std::string trace_text;
};

struct RunResult {
  Mode mode;
  std::vector<PhaseResult> phases;
};

inline Layout scenario_layout(const Scenario& s, const RandRegion& region,
                              u64 victim_len) {
  Layout l;
  switch (s.layout.kind) {
    case LayoutSpec::Kind::Seed:
      l = sample_layout(region, victim_len, s.layout.seed);
      break;
    case LayoutSpec::Kind::Index:
      l = layout_at_index(region, s.layout.index, victim_len);
      break;
    case LayoutSpec::Kind::Enumerate:
      throw ConfigError("enumerate layouts are for the verify command");
    case LayoutSpec::Kind::Pages:
      if (!s.layout.page_indices.empty())
        l = page_layout_with_indices(region, s.layout.page_indices);
      else
        l = page_granularity_layout(region, s.layout.count, s.layout.seed);
      break;
  }
  for (const auto& f : s.fixed) l.fixed.push_back(f);
  return l;
}

inline RunResult run_scenario(const Scenario& s, Mode mode) {
  if (s.phases.empty()) throw ConfigError("scenario has no phases");
  RandRegion region = s.region.value_or(
      make_region(0, 0x10000000, 0x10000000 + 8 * 0x2000, 0x2000));

  // Assemble and size the in-region program (at most one). The mapped
  // extent is the program's pages, so huge preset subregions stay cheap.
  std::map<std::string, Program> programs;
  u64 victim_len = kPageSize;
  std::string region_prog;
  for (const auto& [name, spec] : s.programs) {
    programs[name] = assemble(spec.asm_text);
    if (spec.in_region) {
      if (!region_prog.empty())
        throw ConfigError("only one program may live in the region");
      region_prog = name;
      u64 rounded = (programs[name].byte_len() + kPageSize - 1) &
                    ~(kPageSize - 1);
      victim_len = std::max<u64>(kPageSize, rounded);
    }
  }
  for (const auto& ph : s.phases)
    if (!programs.count(ph.program))
      throw ConfigError("phase references unknown program '" + ph.program +
                        "'");

  Layout layout = scenario_layout(s, region, victim_len);
  MachineImage img;
  img.mem = build_page_table(layout, mode);
  for (const auto& [phys, value] : s.data)
    img.mem.data_store(PhysAddr(phys), value);
  for (const auto& [name, spec] : s.programs) {
    if (spec.in_region) {
      const RegionMapping& m = layout.mappings.at(0);
      place_program(img, programs[name], m.phys_base, m.valid_start(), name);
    } else {
      place_program(img, programs[name], PhysAddr(spec.phys),
                    VirtAddr(spec.virt), name);
    }
  }

  attackenv::Phases phases(std::move(img), mode);
  RunResult result;
  result.mode = mode;
  u64 region_base = layout.mappings.empty()
                        ? 0
                        : layout.mappings.at(0).valid_start().value;
  for (const auto& ph : s.phases) {
    std::vector<Preload> preloads;
    for (const auto& pl : ph.preloads) {
      u64 value = 0;
      switch (pl.kind) {
        case PreloadSpec::Kind::Value: value = pl.value; break;
        case PreloadSpec::Kind::RegionOffset:
          value = region_base + pl.value;
          break;
        case PreloadSpec::Kind::Label:
          value = phases.image().entry(pl.label);
          break;
      }
      preloads.push_back({pl.reg, value});
    }
    RunTrace t = phases.run(ph.entry, ph.privileged, preloads, ph.budget);
    PhaseResult pr;
    pr.program = ph.program;
    pr.status = t.status;
    pr.steps = t.steps;
    pr.cycles = t.cycles;
    pr.committed = t.committed;
    pr.crash_step = t.crash_step;
    pr.trace_text = t.trace.render();
    result.phases.push_back(std::move(pr));
  }
  return result;
}

inline json run_summary_json(const RunResult& r) {
  json phases = json::array();
  for (const auto& p : r.phases) {
    phases.push_back({{"program", p.program},
                      {"status", to_string(p.status)},
                      {"steps", p.steps},
                      {"cycles", p.cycles},
                      {"committed", p.committed},
                      {"crash_step",
                       p.status == TerminalStatus::Crashed
                           ? json(p.crash_step)
                           : json(nullptr)}});
  }
  return json{{"mode", to_string(r.mode)}, {"phases", phases}};
}

// ---------------------------------------------------------------------------
// Attack dispatch.

inline std::vector<std::string> attack_names() {
  return {"prefetch",      "drk",        "anc",       "blindside",
          "data_bounce",   "jump_over",  "entrybleed", "spectre_probe"};
}

struct AttackRun {
  AttackReport report;
  std::vector<std::string> trace_valid;    // blindside only
  std::vector<std::string> trace_invalid;  // blindside only
};

inline AttackRun dispatch_attack(const std::string& name, Mode mode, u64 seed,
                                 bool kernel_scale) {
  AttackRun out;
  if (name == "prefetch") {
    PrefetchOptions opt;
    if (kernel_scale) {
      opt.region = kernel_text_preset().region;
      opt.stride = 1ULL << 31;
    }
    out.report = prefetch_attack(mode, seed, opt);
  } else if (name == "drk") {
    out.report = drk_double_fault(mode, seed);
  } else if (name == "anc") {
    out.report = anc_ptw_probe(mode, seed);
  } else if (name == "blindside") {
    BlindsideResult b = blindside_probe(mode, seed);
    out.report = b.report;
    out.trace_valid = std::move(b.trace_valid);
    out.trace_invalid = std::move(b.trace_invalid);
  } else if (name == "data_bounce") {
    out.report = data_bounce(mode, seed);
  } else if (name == "jump_over") {
    out.report = jump_over_aslr(mode, seed);
  } else if (name == "entrybleed") {
    out.report = entrybleed_tlb(mode, seed);
  } else if (name == "spectre_probe") {
    out.report = spectre_probe(mode, seed);
  } else {
    std::string names;
    for (const auto& n : attack_names()) names += " " + n;
    throw ConfigError("unknown attack '" + name + "'; available:" + names);
  }
  return out;
}

inline json attack_summary_json(const AttackReport& r) {
  json dev = json::object();
  for (const auto& [s, n] : r.structure_deviations) dev[s] = n;
  return json{{"attack", r.name},
              {"mode", to_string(r.mode)},
              {"verdict", to_string(r.verdict)},
              {"planted_index", r.planted_index},
              {"planted_offset", r.planted_offset},
              {"recovered_index", r.recovered_index
                                      ? json(*r.recovered_index)
                                      : json(nullptr)},
              {"structure_deviations", dev},
              {"notes", r.notes}};
}

// ---------------------------------------------------------------------------
// Verification dispatch.

struct VerifyResult {
  Mode mode;
  NoninterferenceReport noninterference;
  TranslationInvarianceReport translation;
  bool ran_noninterference = false;
  bool ran_translation = false;

  /// Masked-mode observation divergence is the failure condition.
  bool failed() const {
    return mode == Mode::Masked && ran_noninterference &&
           !noninterference.masked_ok();
  }
};

inline VerifyResult verify_scenario(const Scenario& s, Mode mode) {
  RandRegion region = s.region.value_or(
      make_region(0, 0x40000000, 0x40000000 + 8 * 0x2000, 0x2000));
  VerifySpec spec = s.verify.value_or(VerifySpec{});
  VerifyResult out;
  out.mode = mode;
  if (spec.noninterference) {
    SweepConfig cfg;
    cfg.machine.latency = s.latency;
    out.noninterference =
        check_noninterference(probe_suite(), region, spec.subregions, mode, cfg);
    out.ran_noninterference = true;
  }
  if (spec.translation_invariance) {
    out.translation = check_translation_invariance(
        region, std::min<u64>(spec.subregions * 2, 16), region.subregion_len);
    out.ran_translation = true;
  }
  return out;
}

inline json verify_summary_json(const VerifyResult& r) {
  json findings = json::array();
  for (const auto& f : r.noninterference.distinguishable)
    findings.push_back({{"layout_i", f.layout_i},
                        {"layout_j", f.layout_j},
                        {"program", f.program},
                        {"step", f.step},
                        {"detail", f.detail}});
  json precond = json::array();
  for (const auto& f : r.noninterference.precondition_violations)
    precond.push_back({{"layout_i", f.layout_i},
                       {"layout_j", f.layout_j},
                       {"program", f.program},
                       {"step", f.step},
                       {"detail", f.detail}});
  json tr = json::array();
  for (const auto& f : r.translation.counterexamples)
    tr.push_back({{"layout_i", f.layout_i},
                  {"layout_j", f.layout_j},
                  {"address", f.step},
                  {"detail", f.detail}});
  return json{
      {"mode", to_string(r.mode)},
      {"pairs_checked", r.noninterference.pairs_checked},
      {"runs", r.noninterference.runs},
      {"distinguishable_pairs", findings},
      {"precondition_violations", precond},
      {"translation_pairs_checked", r.translation.pairs_checked},
      {"translation_counterexamples", tr},
      {"failed", r.failed()}};
}

// ---------------------------------------------------------------------------
// Entropy / cost tables.

inline json entropy_table_json() {
  json rows = json::array();
  for (const auto& preset_name :
       {"kernel_text", "kernel_modules", "user_space"}) {
    RegionPreset preset = region_preset(preset_name);
    for (BitsVariant v :
         {BitsVariant::DefaultBaseline, BitsVariant::NaiveMasked,
          BitsVariant::EnhancedBaseline, BitsVariant::EnhancedMasked}) {
      BitsStrategy strat =
          make_strategy(v, preset.strategy.k, preset.strategy.n,
                        v == BitsVariant::DefaultBaseline
                            ? 0
                            : preset.strategy.m);
      EntropyReport r = entropy_report(strat, preset.region);
      rows.push_back({{"preset", preset_name},
                      {"variant", to_string(v)},
                      {"original_code_reuse", r.original_code_reuse},
                      {"original_speculative", r.original_speculative},
                      {"remaining_code_reuse", r.remaining_code_reuse},
                      {"remaining_speculative", r.remaining_speculative},
                      {"nominal_protected_bits", r.nominal_protected_bits},
                      {"offset_positions", *r.offset_positions},
                      {"position_limited_bits", *r.position_limited_bits}});
    }
  }
  return rows;
}

inline std::string entropy_table_csv() {
  std::ostringstream out;
  out << "preset,variant,original_code_reuse,original_speculative,"
         "remaining_code_reuse,remaining_speculative,nominal_protected_bits,"
         "offset_positions,position_limited_bits\n";
  for (const auto& row : entropy_table_json())
    out << row.at("preset").get<std::string>() << ','
        << row.at("variant").get<std::string>() << ','
        << row.at("original_code_reuse") << ','
        << row.at("original_speculative") << ','
        << row.at("remaining_code_reuse") << ','
        << row.at("remaining_speculative") << ','
        << row.at("nominal_protected_bits") << ','
        << row.at("offset_positions") << ','
        << row.at("position_limited_bits") << '\n';
  return out.str();
}

inline json cost_table_json(const CoreSizing& sizing) {
  CostReport r = cost_report(sizing);
  return json{{"tlb_entries", sizing.tlb_entries},
              {"rob_entries", sizing.rob_entries},
              {"lsq_entries", sizing.lsq_entries},
              {"num_regions", sizing.num_regions},
              {"offset_bits", sizing.offset_bits},
              {"tlb_extra_bytes", r.tlb_extra_bytes},
              {"rob_lsq_extra_bytes", r.rob_lsq_extra_bytes},
              {"region_metadata_bytes", r.region_metadata_bytes},
              {"archpc_bytes", r.archpc_bytes},
              {"total_in_core_bytes", r.total_in_core_bytes},
              {"total_memory_system_bytes", r.total_memory_system_bytes}};
}

// ---------------------------------------------------------------------------
// Trace files.

inline void write_file(const std::filesystem::path& path,
                       const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
}

inline std::vector<std::string> read_trace_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

/// Per-structure deviation counts between two trace files. Files covering
/// different structure sets are a usage error.
inline std::map<std::string, u64> trace_diff_files(const std::string& a,
                                                   const std::string& b) {
  auto la = read_trace_file(a);
  auto lb = read_trace_file(b);
  auto structures = [](const std::vector<std::string>& lines) {
    std::set<std::string> tags;
    for (const auto& line : lines) {
      size_t s1 = line.find(' ');
      if (s1 == std::string::npos) continue;
      size_t s2 = line.find(' ', s1 + 1);
      tags.insert(line.substr(s1 + 1, s2 - s1 - 1));
    }
    return tags;
  };
  if (structures(la) != structures(lb))
    throw ConfigError("trace files cover different structure sets");
  return diff_trace_lines(la, lb);
}

}  // namespace masksim
