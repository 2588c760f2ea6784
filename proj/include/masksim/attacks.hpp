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

#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "masksim/machine.hpp"

namespace masksim {

// ---------------------------------------------------------------------------
// Attack scenarios. Every attack is a mode-agnostic script: the identical
// phase schedule runs on a baseline or a masked machine, sharing
// microarchitecture state across attacker/victim phases. Verdicts are
// differential: the measurement is taken under the planted layout and under
// one control layout; Leak is reported only when the recovered index tracks
// the planted secret in both, so a layout-insensitive channel can never
// produce a false Leak.

enum class Verdict { Leak, NoLeak };

inline const char* to_string(Verdict v) {
  return v == Verdict::Leak ? "leak" : "noleak";
}

struct ProbeMeasurement {
  u64 probe_addr = 0;
  u64 value = 0;
};

struct AttackReport {
  std::string name;
  Mode mode = Mode::Baseline;
  u64 planted_index = 0;
  u64 planted_offset = 0;
  std::optional<u64> recovered_index;
  Verdict verdict = Verdict::NoLeak;
  std::vector<ProbeMeasurement> measurements;        // planted-layout run
  std::map<std::string, u64> structure_deviations;   // trace-diff attacks
  std::string notes;

  std::string csv() const {
    std::ostringstream out;
    out << "probe_addr,measurement\n";
    for (const auto& m : measurements)
      out << to_hex(m.probe_addr) << ',' << m.value << '\n';
    for (const auto& [s, n] : structure_deviations)
      out << "deviation_" << s << ',' << n << '\n';
    return out.str();
  }
};

// ---------------------------------------------------------------------------
// Shared scenario plumbing.

namespace attackenv {

constexpr u64 kVictimPhys = 0x400000;
constexpr u64 kAttackerCodeVirt = 0x3000000;
constexpr u64 kAttackerCodePhys = 0x600000;
constexpr u64 kAttackerDataVirt = 0x2000000;
constexpr u64 kAttackerDataPhys = 0x800000;

inline RandRegion toy_region() {
  return make_region(0, 0x10000000, 0x10000000 + 8 * 0x1000, 0x1000);
}

inline FixedMapping attacker_code(u64 len = 0x8000) {
  return {VirtAddr(kAttackerCodeVirt), PhysAddr(kAttackerCodePhys), len,
          Perms{true, false, true, false}};
}

inline FixedMapping attacker_data(u64 len = 0x10000) {
  return {VirtAddr(kAttackerDataVirt), PhysAddr(kAttackerDataPhys), len,
          Perms{true, true, false, false}};
}

/// Carries memory and microarchitecture through a phase schedule.
class Phases {
 public:
  Phases(MachineImage image, Mode mode) : image_(std::move(image)), mode_(mode) {
    mem_ = std::move(image_.mem);
  }

  /// Runs one phase; state (memory and microarchitecture) carries over.
  RunTrace run(const std::string& entry, bool privileged,
               std::vector<Preload> preloads, u64 budget = 4000) {
    MachineConfig cfg;
    cfg.mode = mode_;
    cfg.privileged = privileged;
    Machine m(std::move(mem_), image_.pool,
              VirtAddr(image_.entry_points.at(entry)), cfg,
              std::move(preloads), std::move(mu_));
    RunTrace t = m.run(budget);
    mem_ = m.release_mem();
    mu_ = m.release_mu();
    last_cycles_ = m.cycles();
    return t;
  }

  u64 last_cycles() const { return last_cycles_; }
  const MachineImage& image() const { return image_; }

 private:
  MachineImage image_;
  PhysMem mem_;
  std::optional<Uarch> mu_;
  Mode mode_;
  u64 last_cycles_ = 0;
};

struct MeasureOutcome {
  std::vector<ProbeMeasurement> measurements;
  std::optional<u64> recovered_index;
};

/// Runs the measurement under the planted and one control layout; Leak only
/// when the channel tracks the secret in both runs.
inline AttackReport differential_verdict(
    const std::string& name, Mode mode, const RandRegion& region, u64 seed,
    const std::function<MeasureOutcome(u64 /*index*/)>& measure) {
  SplitMix64 rng(seed);
  u64 n = region.subregion_count();
  u64 planted = rng.below(n);
  u64 control = (planted + 1 + rng.below(n - 1)) % n;

  MeasureOutcome main = measure(planted);
  MeasureOutcome check = measure(control);

  AttackReport r;
  r.name = name;
  r.mode = mode;
  r.planted_index = planted;
  r.planted_offset = planted * region.subregion_len;
  r.recovered_index = main.recovered_index;
  r.measurements = std::move(main.measurements);
  bool tracks = main.recovered_index && *main.recovered_index == planted &&
                check.recovered_index && *check.recovered_index == control;
  r.verdict = tracks ? Verdict::Leak : Verdict::NoLeak;
  if (!tracks && main.recovered_index && check.recovered_index &&
      *main.recovered_index == *check.recovered_index)
    r.notes = "measurement is layout-insensitive";
  return r;
}

/// Unique strict minimum of the measurement vector, if any.
inline std::optional<u64> unique_min(const std::vector<ProbeMeasurement>& m) {
  if (m.empty()) return std::nullopt;
  u64 best = 0;
  for (u64 i = 1; i < m.size(); ++i)
    if (m[i].value < m[best].value) best = i;
  for (u64 i = 0; i < m.size(); ++i)
    if (i != best && m[i].value == m[best].value) return std::nullopt;
  return best;
}

/// Unique strict maximum of the measurement vector, if any.
inline std::optional<u64> unique_max(const std::vector<ProbeMeasurement>& m) {
  if (m.empty()) return std::nullopt;
  u64 best = 0;
  for (u64 i = 1; i < m.size(); ++i)
    if (m[i].value > m[best].value) best = i;
  for (u64 i = 0; i < m.size(); ++i)
    if (i != best && m[i].value == m[best].value) return std::nullopt;
  return best;
}

}  // namespace attackenv

// ---------------------------------------------------------------------------
// Prefetch probing: two prefetches per guess, timing the second. On the
// baseline only the planted subregion's translation is cached, so its second
// prefetch is a unique latency dip. With masking every guess shares one
// masked page and every second prefetch hits.

struct PrefetchOptions {
  std::optional<RandRegion> region;  // default: the toy region
  u64 stride = 0;                    // default: subregion length
  u64 probe_offset = 0x40;
  bool victim_mapped = true;  // false: empty region control, nothing to find
};

inline AttackReport prefetch_attack(Mode mode, u64 seed,
                                    PrefetchOptions opt = {}) {
  using namespace attackenv;
  RandRegion region = opt.region.value_or(toy_region());
  u64 stride = opt.stride ? opt.stride : region.subregion_len;

  Program attacker = assemble(R"(
      entry:
          prefetch r1
          rdtime r2
          prefetch r1
          rdtime r3
          halt
  )");

  auto measure = [&](u64 index) {
    Layout l = layout_at_index(region, index,
                               opt.victim_mapped ? region.subregion_len : 0);
    l.fixed.push_back(attacker_code());
    MachineImage img;
    img.mem = build_page_table(l, mode);
    place_program(img, attacker, PhysAddr(kAttackerCodePhys),
                  VirtAddr(kAttackerCodeVirt), "attacker");
    Phases phases(std::move(img), mode);
    MeasureOutcome out;
    for (u64 i = 0; i * stride < region.span(); ++i) {
      u64 guess = region.start.value + i * stride + opt.probe_offset;
      RunTrace t = phases.run("attacker", false, {{1, guess}}, 64);
      // The second prefetch is the last load-kind request of the run.
      u64 lat = 0;
      for (u64 s = 0; s < t.requests.size(); ++s)
        if (t.requests[s].kind == ReqKind::Load) lat = t.step_cycles(s);
      out.measurements.push_back({guess, lat});
    }
    out.recovered_index = unique_min(out.measurements);
    return out;
  };
  AttackReport r = differential_verdict("prefetch", mode, region, seed, measure);
  return r;
}

// ---------------------------------------------------------------------------
// Double page fault probing: each page is accessed twice from user mode; both
// accesses fault, but on the baseline the second fault returns faster for
// mapped pages because the first walk left the translation in the TLB.

inline AttackReport drk_double_fault(Mode mode, u64 seed,
                                     std::optional<RandRegion> region_opt = {}) {
  using namespace attackenv;
  RandRegion region = region_opt.value_or(toy_region());

  Program attacker = assemble(R"(
      entry:
          load r0, [r1]
          halt
  )");

  auto measure = [&](u64 index) {
    Layout l = layout_at_index(region, index, region.subregion_len);
    l.fixed.push_back(attacker_code());
    MachineImage img;
    img.mem = build_page_table(l, mode);
    place_program(img, attacker, PhysAddr(kAttackerCodePhys),
                  VirtAddr(kAttackerCodeVirt), "attacker");
    Phases phases(std::move(img), mode);
    MeasureOutcome out;
    for (u64 i = 0; i < region.subregion_count(); ++i) {
      u64 guess = region.start.value + i * region.subregion_len;
      phases.run("attacker", false, {{1, guess}}, 64);  // first fault: warm
      phases.run("attacker", false, {{1, guess}}, 64);  // second fault: timed
      out.measurements.push_back({guess, phases.last_cycles()});
    }
    out.recovered_index = unique_min(out.measurements);
    return out;
  };
  return differential_verdict("drk_double_fault", mode, region, seed, measure);
}

// ---------------------------------------------------------------------------
// Page-walk cache probing: the attacker primes the L1D sets where the
// victim's second-level PTE line can land, triggers one victim fetch, and
// probes for the evicted set. The candidate set index is a function of the
// protected bits on the baseline and a constant under masking.

inline RandRegion anc_region() {
  // 64 subregions of 16 MB: the protected bits occupy six second-level
  // index bits, so candidate PTE lines are 64 distinct cache lines.
  return make_region(0, 0x40000000, 0x40000000 + (1ULL << 30), 1ULL << 24);
}

inline AttackReport anc_ptw_probe(Mode mode, u64 seed) {
  using namespace attackenv;
  RandRegion region = anc_region();
  const u64 n = region.subregion_count();
  CacheGeometry geom;  // defaults: 128 L1 sets, 8 ways, 64-byte lines

  Program victim = assemble(R"(
      entry:
          jmp body
      body:
          halt
  )");

  auto measure = [&](u64 index) {
    Layout l = layout_at_index(region, index, kPageSize);
    l.fixed.push_back(attacker_code(0x20000));
    l.fixed.push_back(attacker_data(0x20000));
    MachineImage img;
    img.mem = build_page_table(l, mode);
    place_program(img, victim, PhysAddr(kVictimPhys),
                  l.mappings[0].valid_start(), "victim");

    // Public candidate-line oracle: node placement is a deterministic
    // function of the (public) masked mapping, so the attacker can predict
    // the second-level PTE line for every candidate, plus the walk lines
    // that do not depend on the secret.
    u64 base_line;
    std::vector<u64> constant_sets;
    {
      auto seq = ptw(region.start.value, img.mem);
      base_line = seq.at(2).value / geom.line_bytes;
      constant_sets.push_back((seq.at(0).value / geom.line_bytes) &
                              (geom.l1_sets - 1));
      constant_sets.push_back((seq.at(1).value / geom.line_bytes) &
                              (geom.l1_sets - 1));
      if (seq.size() > 3)
        constant_sets.push_back((seq.at(3).value / geom.line_bytes) &
                                (geom.l1_sets - 1));
    }
    auto candidate_set = [&](u64 c) {
      return (base_line + c) & (geom.l1_sets - 1);
    };
    u64 l1_span = geom.l1_sets * geom.line_bytes;
    auto prime_addr = [&](u64 candidate, u64 way) {
      return kAttackerDataVirt + candidate_set(candidate) * geom.line_bytes +
             way * l1_span;
    };

    // Prime: two passes over eight conflicting lines per candidate set; the
    // second pass ages out the walk-induced fills of the first.
    Program prime;
    for (int pass = 0; pass < 2; ++pass)
      for (u64 c = 0; c < n; ++c)
        for (u64 w = 0; w < geom.l1_ways; ++w) {
          prime.insts.push_back(mov_imm(1, prime_addr(c, w)));
          prime.insts.push_back(load(0, 1));
        }
    prime.insts.push_back(halt());
    place_program(img, prime, PhysAddr(kAttackerCodePhys),
                  VirtAddr(kAttackerCodeVirt), "prime");

    // Per-candidate probes: reverse-order reload of the primed set.
    for (u64 c = 0; c < n; ++c) {
      Program p;
      for (u64 w = geom.l1_ways; w-- > 0;) {
        p.insts.push_back(mov_imm(1, prime_addr(c, w)));
        p.insts.push_back(load(0, 1));
      }
      p.insts.push_back(halt());
      u64 off = 0x8000 + c * 0x400;
      place_program(img, p, PhysAddr(kAttackerCodePhys + off),
                    VirtAddr(kAttackerCodeVirt + off),
                    "probe" + std::to_string(c));
    }

    Phases phases(std::move(img), mode);
    phases.run("prime", false, {}, 40000);
    phases.run("victim", true, {}, 64);

    LatencyTable lat;
    u64 hit_cost = 1 + lat.tlb_hit + lat.l1_hit;
    MeasureOutcome out;
    std::vector<ProbeMeasurement> signal;
    for (u64 c = 0; c < n; ++c) {
      RunTrace t = phases.run("probe" + std::to_string(c), false, {}, 4000);
      u64 misses = 0;
      for (u64 s = 0; s < t.requests.size(); ++s)
        if (t.requests[s].kind == ReqKind::Load &&
            t.step_cycles(s) != hit_cost)
          ++misses;
      u64 probe = region.start.value + c * region.subregion_len;
      out.measurements.push_back({probe, misses});
      // Subtract the publicly predictable evictions (root and upper-level
      // node lines landing in this candidate's set).
      u64 predicted = 0;
      for (u64 s : constant_sets)
        if (s == candidate_set(c)) ++predicted;
      signal.push_back({probe, misses > predicted ? misses - predicted : 0});
    }
    out.recovered_index = unique_max(signal);
    return out;
  };
  return differential_verdict("anc_ptw_probe", mode, region, seed, measure);
}

// ---------------------------------------------------------------------------
// Transient code-region probing with trace comparison: a conditional branch
// mispredicts into an indirect jump through a corrupted pointer; the
// per-structure input traces for a valid and an invalid pointer are compared
// line by line.

struct BlindsideResult {
  AttackReport report;
  std::vector<std::string> trace_valid;
  std::vector<std::string> trace_invalid;
};

inline BlindsideResult blindside_probe(Mode mode, u64 seed,
                                       std::optional<u64> guess_override = {},
                                       bool out_of_region_guess = false) {
  using namespace attackenv;
  RandRegion region = toy_region();
  SplitMix64 rng(seed);
  u64 planted = rng.below(region.subregion_count());
  Layout l = layout_at_index(region, planted, region.subregion_len);
  l.fixed.push_back(attacker_code());
  l.fixed.push_back(attacker_data());

  // Victim: the conditional branch guards the indirect call; the gadget is
  // one subregion page of real code.
  Program victim = assemble(R"(
      entry:
          jmp check
      check:
          brnz r1, done      ; r1 = 1, predictor cold: mispredicted
          jmpr r2            ; transient jump through the corrupted pointer
          nop
      done:
          halt
  )");

  auto run_once = [&](u64 guess) {
    MachineImage img;
    img.mem = build_page_table(l, mode);
    place_program(img, victim, PhysAddr(kVictimPhys),
                  l.mappings[0].valid_start(), "victim");
    Phases phases(std::move(img), mode);
    return phases.run("victim", true, {{1, 1}, {2, guess}}, 256);
  };

  u64 valid = l.mappings[0].valid_start().value + 0x20;  // the nop after jmpr
  u64 invalid;
  if (out_of_region_guess) {
    invalid = kAttackerDataVirt + 0x20;
  } else {
    u64 other = (planted + 3) % region.subregion_count();
    invalid = region.start.value + other * region.subregion_len + 0x20;
  }
  if (guess_override) invalid = *guess_override;

  RunTrace tv = run_once(valid);
  RunTrace ti = run_once(invalid);

  BlindsideResult out;
  out.trace_valid = trace_lines(tv.trace);
  out.trace_invalid = trace_lines(ti.trace);
  out.report.name = "blindside";
  out.report.mode = mode;
  out.report.planted_index = planted;
  out.report.planted_offset = planted * region.subregion_len;
  out.report.structure_deviations =
      diff_trace_lines(out.trace_valid, out.trace_invalid);
  u64 total = 0;
  for (const auto& [s, c] : out.report.structure_deviations) total += c;
  out.report.verdict = total > 0 ? Verdict::Leak : Verdict::NoLeak;
  if (total > 0) out.report.recovered_index = planted;
  return out;
}

// ---------------------------------------------------------------------------
// Store-to-load forwarding probing: a transient store/load pair to the
// guessed address; forwarding (a distinctively low load latency) fires only
// when the store's address translates.

inline AttackReport data_bounce(Mode mode, u64 seed) {
  using namespace attackenv;
  RandRegion region = toy_region();

  Program attacker = assemble(R"(
      entry:
          mov r3, 1
          brnz r3, done      ; mispredicted on the cold predictor
          store [r1], r2     ; transient
          load r4, [r1]      ; transient, forwarded iff mapped
          nop
      done:
          halt
  )");

  auto measure = [&](u64 index) {
    Layout l = layout_at_index(region, index, region.subregion_len);
    l.fixed.push_back(attacker_code());
    MeasureOutcome out;
    for (u64 i = 0; i < region.subregion_count(); ++i) {
      // Fresh microarchitecture per guess: each probe needs its own cold
      // direction predictor to open the transient window.
      MachineImage img;
      img.mem = build_page_table(l, mode);
      place_program(img, attacker, PhysAddr(kAttackerCodePhys),
                    VirtAddr(kAttackerCodeVirt), "attacker");
      Phases phases(std::move(img), mode);
      u64 guess = region.start.value + i * region.subregion_len + 0x80;
      RunTrace t = phases.run("attacker", false, {{1, guess}, {2, 7}}, 64);
      u64 lat = 0;
      for (u64 s = 0; s < t.requests.size(); ++s)
        if (t.requests[s].kind == ReqKind::Load) lat = t.step_cycles(s);
      out.measurements.push_back({guess, lat});
    }
    out.recovered_index = unique_min(out.measurements);
    return out;
  };
  return differential_verdict("data_bounce", mode, region, seed, measure);
}

// ---------------------------------------------------------------------------
// Branch-target-buffer collision probing: the attacker warms one of its own
// indirect jumps per candidate slot, lets the victim execute its secret-PC
// jump, then re-times each jump; the collided slot mispredicts.

inline AttackReport jump_over_aslr(Mode mode, u64 seed) {
  using namespace attackenv;
  RandRegion region = toy_region();
  const u64 n = region.subregion_count();
  const u64 btb_entries = 4096;

  auto measure = [&](u64 index) {
    Layout l = layout_at_index(region, index, region.subregion_len);
    l.fixed.push_back(attacker_code(0x9000));
    MachineImage img;
    img.mem = build_page_table(l, mode);

    Program victim = assemble(R"(
        entry:
            nop
            jmpr r2
            halt
        land:
            halt
    )");
    place_program(img, victim, PhysAddr(kVictimPhys),
                  l.mappings[0].valid_start(), "victim");

    // Candidate slots: the victim's jump sits at valid_start + 8; the
    // attacker mirrors each candidate's BTB slot with one of its own sites.
    u64 stub = kAttackerCodeVirt + 0x8FF8;
    Program stub_prog;
    stub_prog.insts = {halt()};
    place_program(img, stub_prog, PhysAddr(kAttackerCodePhys + 0x8FF8),
                  VirtAddr(stub), "stub");
    std::vector<u64> sites;
    for (u64 c = 0; c < n; ++c) {
      u64 victim_pc = region.start.value + c * region.subregion_len + 8;
      u64 slot = (victim_pc >> 3) & (btb_entries - 1);
      u64 site =
          kAttackerCodeVirt +
          (((slot - (kAttackerCodeVirt >> 3)) & (btb_entries - 1)) << 3);
      sites.push_back(site);
      Program site_prog;
      site_prog.insts = {jmpr(14)};
      place_program(img, site_prog,
                    PhysAddr(kAttackerCodePhys + (site - kAttackerCodeVirt)),
                    VirtAddr(site), "site" + std::to_string(c));
    }
    Program warm;  // touches a site's page without touching the BTB
    warm.insts = {load(0, 1), halt()};
    place_program(img, warm, PhysAddr(kAttackerCodePhys + 0x8F00),
                  VirtAddr(kAttackerCodeVirt + 0x8F00), "warm");

    Phases phases(std::move(img), mode);
    // Prime: execute every attacker site once (inserts its BTB entry).
    for (u64 c = 0; c < n; ++c)
      phases.run("site" + std::to_string(c), false, {{14, stub}}, 64);
    // Victim: one secret-PC indirect jump.
    u64 land = l.mappings[0].valid_start().value + 0x18;
    phases.run("victim", true, {{2, land}}, 64);
    // Probe: re-time each site's jump; TLB warmed by a plain load first.
    MeasureOutcome out;
    for (u64 c = 0; c < n; ++c) {
      phases.run("warm", false, {{1, sites[c]}}, 64);
      RunTrace t =
          phases.run("site" + std::to_string(c), false, {{14, stub}}, 64);
      u64 lat = 0;
      for (u64 s = 0; s < t.requests.size(); ++s)
        if (t.requests[s].kind == ReqKind::Fetch) {
          lat = t.step_cycles(s);
          break;
        }
      out.measurements.push_back({sites[c], lat});
    }
    out.recovered_index = unique_max(out.measurements);
    return out;
  };
  return differential_verdict("jump_over_aslr", mode, region, seed, measure);
}

// ---------------------------------------------------------------------------
// TLB-residue probing: the victim's own run warms the translation for its
// secret page; the attacker then times one prefetch per candidate.

inline AttackReport entrybleed_tlb(Mode mode, u64 seed) {
  using namespace attackenv;
  RandRegion region = toy_region();

  Program victim = assemble(R"(
      entry:
          jmp body
      body:
          halt
  )");
  Program attacker = assemble(R"(
      entry:
          prefetch r1
          rdtime r2
          halt
  )");

  auto measure = [&](u64 index) {
    Layout l = layout_at_index(region, index, region.subregion_len);
    l.fixed.push_back(attacker_code());
    MachineImage img;
    img.mem = build_page_table(l, mode);
    place_program(img, victim, PhysAddr(kVictimPhys),
                  l.mappings[0].valid_start(), "victim");
    place_program(img, attacker, PhysAddr(kAttackerCodePhys),
                  VirtAddr(kAttackerCodeVirt), "attacker");
    Phases phases(std::move(img), mode);
    phases.run("victim", true, {}, 64);  // warms the secret translation
    MeasureOutcome out;
    // Probe the subregion starts: the victim's own entry line, so the
    // planted guess resolves through the warmed TLB entry and the warmed
    // second-level cache line.
    for (u64 i = 0; i < region.subregion_count(); ++i) {
      u64 guess = region.start.value + i * region.subregion_len;
      RunTrace t = phases.run("attacker", false, {{1, guess}}, 64);
      u64 lat = 0;
      for (u64 s = 0; s < t.requests.size(); ++s)
        if (t.requests[s].kind == ReqKind::Load) lat = t.step_cycles(s);
      out.measurements.push_back({guess, lat});
    }
    out.recovered_index = unique_min(out.measurements);
    return out;
  };
  return differential_verdict("entrybleed_tlb", mode, region, seed, measure);
}

// ---------------------------------------------------------------------------
// Transient gadget probing (the third leakage path): the attacker jumps
// transiently to candidate gadget addresses; a gadget that executes touches a
// tell line the attacker can time afterwards. Masking does not stop this:
// every candidate in the masked class executes the gadget. The verdict is
// Leak whenever the gadget fires, in either mode.

inline AttackReport spectre_probe(Mode mode, u64 seed) {
  using namespace attackenv;
  RandRegion region = toy_region();
  SplitMix64 rng(seed);
  u64 planted = rng.below(region.subregion_count());
  Layout l = layout_at_index(region, planted, region.subregion_len);
  l.fixed.push_back(attacker_code());
  l.fixed.push_back(attacker_data());

  // The victim image contains a gadget whose body loads through r6; the
  // attacker preloads r6 with the tell address when it triggers the victim
  // transiently (modeling the corrupted-argument setup).
  Program victim = assemble(R"(
      entry:
          jmp gadget
      gadget:
          load r5, [r6]
          halt
  )");
  u64 gadget_off = victim.label_offset("gadget");

  Program attacker = assemble(R"(
      entry:
          mov r3, 1
          brnz r3, done      ; mispredicted on the cold predictor
          jmpr r2            ; transient jump to the candidate gadget
          nop
      done:
          mov r1, 0x2002040  ; warm the tell page, different line
          load r0, [r1]
          mov r1, 0x2002000  ; the tell line
          rdtime r8
          load r0, [r1]
          rdtime r9
          halt
  )");

  u64 tell = kAttackerDataVirt + 0x2000;
  AttackReport r;
  r.name = "spectre_probe";
  r.mode = mode;
  r.planted_index = planted;
  r.planted_offset = planted * region.subregion_len;

  LatencyTable lat;
  u64 fired = 0;
  std::optional<u64> fired_index;
  for (u64 c = 0; c < region.subregion_count(); ++c) {
    u64 guess = region.start.value + c * region.subregion_len + gadget_off;
    // Fresh microarchitecture per candidate: the tell line must start cold.
    MachineImage img;
    img.mem = build_page_table(l, mode);
    place_program(img, victim, PhysAddr(kVictimPhys),
                  l.mappings[0].valid_start(), "victim");
    place_program(img, attacker, PhysAddr(kAttackerCodePhys),
                  VirtAddr(kAttackerCodeVirt), "attacker");
    Phases phases(std::move(img), mode);
    RunTrace t = phases.run("attacker", true, {{2, guess}, {6, tell}}, 256);
    u64 probe_lat = 0;
    for (u64 s = t.requests.size(); s-- > 0;)
      if (t.requests[s].kind == ReqKind::Load) {
        probe_lat = t.step_cycles(s);
        break;
      }
    r.measurements.push_back({guess, probe_lat});
    if (probe_lat <= 1 + lat.tlb_hit + lat.l1_hit) {
      ++fired;
      fired_index = c;
    }
  }
  if (fired == 1 && fired_index == planted) {
    r.verdict = Verdict::Leak;
    r.recovered_index = fired_index;
    r.notes = "gadget located at its full virtual address";
  } else if (fired == region.subregion_count()) {
    r.verdict = Verdict::Leak;
    r.notes = "gadget executes for every candidate: no protected bits needed";
  } else {
    r.verdict = Verdict::NoLeak;
  }
  return r;
}

}  // namespace masksim
