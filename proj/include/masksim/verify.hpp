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
#include <optional>
#include <string>
#include <vector>

#include "masksim/machine.hpp"

namespace masksim {

// ---------------------------------------------------------------------------
// Trace equivalences.

struct Counterexample {
  u64 step = 0;
  std::string left;
  std::string right;
};

struct EquivalenceVerdict {
  bool holds = true;
  std::optional<Counterexample> counterexample;

  static EquivalenceVerdict yes() { return {}; }
  static EquivalenceVerdict no(u64 step, std::string l, std::string r) {
    EquivalenceVerdict v;
    v.holds = false;
    v.counterexample = Counterexample{step, std::move(l), std::move(r)};
    return v;
  }
};

inline std::string render(const Request& r) {
  std::string out = to_string(r.kind);
  if (r.kind == ReqKind::None) return out;
  out += " v=" + to_hex(r.v);
  if (r.kind == ReqKind::Fetch) out += " src=" + to_hex(r.v_src);
  if (r.kind == ReqKind::Store) out += " d=" + to_hex(r.data);
  return out;
}

/// Functional equivalence of two request traces: same kinds at every step,
/// and each address pair either equal or mapped to the same physical
/// address by the respective layouts (fetch sources included).
inline EquivalenceVerdict func_equiv(const std::vector<Request>& a,
                                     const std::vector<Request>& b,
                                     const Layout& la, const Layout& lb) {
  auto addr_ok = [&](u64 va, u64 vb) {
    if (va == vb) return true;
    auto pa = la.query(VirtAddr(va));
    auto pb = lb.query(VirtAddr(vb));
    return pa && pb && pa->value == pb->value;
  };
  size_t n = std::min(a.size(), b.size());
  for (size_t k = 0; k < n; ++k) {
    if (a[k].kind != b[k].kind)
      return EquivalenceVerdict::no(k, render(a[k]), render(b[k]));
    if (a[k].kind == ReqKind::None) continue;
    if (!addr_ok(a[k].v, b[k].v))
      return EquivalenceVerdict::no(k, render(a[k]), render(b[k]));
    if (a[k].kind == ReqKind::Fetch && !addr_ok(a[k].v_src, b[k].v_src))
      return EquivalenceVerdict::no(k, render(a[k]), render(b[k]));
  }
  if (a.size() != b.size())
    return EquivalenceVerdict::no(n, a.size() > n ? render(a[n]) : "(end)",
                                  b.size() > n ? render(b[n]) : "(end)");
  return EquivalenceVerdict::yes();
}

/// Mask equivalence: same kinds, pointwise equal masked addresses.
inline EquivalenceVerdict mask_equiv(const std::vector<Request>& a,
                                     const std::vector<Request>& b,
                                     std::span<const RandRegion> regions) {
  auto m = [&](u64 v) { return virt2mask(VirtAddr(v), regions).value; };
  size_t n = std::min(a.size(), b.size());
  for (size_t k = 0; k < n; ++k) {
    if (a[k].kind != b[k].kind)
      return EquivalenceVerdict::no(k, render(a[k]), render(b[k]));
    if (a[k].kind == ReqKind::None) continue;
    if (m(a[k].v) != m(b[k].v))
      return EquivalenceVerdict::no(k, render(a[k]), render(b[k]));
    if (a[k].kind == ReqKind::Fetch && m(a[k].v_src) != m(b[k].v_src))
      return EquivalenceVerdict::no(k, render(a[k]), render(b[k]));
  }
  if (a.size() != b.size())
    return EquivalenceVerdict::no(n, a.size() > n ? render(a[n]) : "(end)",
                                  b.size() > n ? render(b[n]) : "(end)");
  return EquivalenceVerdict::yes();
}

/// Public equivalence of two initialized machines: equal program images,
/// equal observations, and agreeing translation and walk results over every
/// page of the randomization region (the program window in the masked key
/// domain plus its aliases, where baseline keying differences surface).
inline EquivalenceVerdict pub_equiv(const Machine& a, const Machine& b,
                                    const RandRegion& region) {
  if (a.mem().program != b.mem().program)
    return EquivalenceVerdict::no(0, "program image", "differs");
  if (!(observe(a.mu()) == observe(b.mu())))
    return EquivalenceVerdict::no(0, observe(a.mu()).blob,
                                  observe(b.mu()).blob);
  u64 start = region.start.value;
  for (u64 w = start; w < region.end.value; w += kPageSize) {
    auto ta = trans(w, a.mem());
    auto tb = trans(w, b.mem());
    if (ta.has_value() != tb.has_value() ||
        (ta && ta->value != tb->value))
      return EquivalenceVerdict::no(w, "trans mismatch at " + to_hex(w), "");
    if (ptw(w, a.mem()) != ptw(w, b.mem()))
      return EquivalenceVerdict::no(w, "ptw mismatch at " + to_hex(w), "");
  }
  return EquivalenceVerdict::yes();
}

// ---------------------------------------------------------------------------
// Exhaustive checks over layout families.

struct PairFinding {
  u64 layout_i = 0;
  u64 layout_j = 0;
  std::string program;
  u64 step = 0;
  std::string detail;
};

struct NoninterferenceReport {
  Mode mode = Mode::Masked;
  u64 pairs_checked = 0;
  u64 runs = 0;
  // Pairs whose observation traces diverge (expected empty in masked mode,
  // expected nonempty in baseline mode).
  std::vector<PairFinding> distinguishable;
  // Scenario problems: the functional-equivalence hypothesis failed, so the
  // property does not apply. Reported, never silently skipped.
  std::vector<PairFinding> precondition_violations;

  bool masked_ok() const { return distinguishable.empty(); }
};

/// A probe program: a layout-relative victim. Preloads are recomputed per
/// layout so that all runs are functionally equivalent by construction.
struct ProbeProgram {
  std::string name;
  Program program;
  std::function<std::vector<Preload>(const Layout&)> preloads;
};

struct SweepConfig {
  u64 budget = 3000;
  FixedMapping data = {VirtAddr(0x2000000), PhysAddr(0x800000), 0x4000,
                       Perms{true, true, false, false}};
  MachineConfig machine;
};

namespace detail {

struct ProbeRun {
  RunTrace trace;
  Layout layout;
};

inline ProbeRun run_probe(const RandRegion& region, u64 index, u64 program_len,
                          const ProbeProgram& probe, Mode mode,
                          const SweepConfig& cfg) {
  Layout l = layout_at_index(region, index, program_len);
  l.fixed.push_back(cfg.data);
  MachineImage img;
  img.mem = build_page_table(l, mode);
  place_program(img, probe.program, l.mappings[0].phys_base,
                l.mappings[0].valid_start(), "probe");
  MachineConfig mc = cfg.machine;
  mc.mode = mode;
  mc.privileged = true;
  Machine m(std::move(img.mem), std::move(img.pool),
            VirtAddr(img.entry("probe")), mc, probe.preloads(l));
  ProbeRun out{m.run(cfg.budget), std::move(l)};
  return out;
}

}  // namespace detail

/// The main security experiment: run every probe program under every layout
/// pair and compare observation traces pointwise. The functional-equivalence
/// hypothesis is checked first; crashes must occur at equal steps and the
/// comparison covers the common prefix.
inline NoninterferenceReport check_noninterference(
    const std::vector<ProbeProgram>& probes, const RandRegion& region,
    u64 subregions, Mode mode, const SweepConfig& cfg = {}) {
  NoninterferenceReport report;
  report.mode = mode;
  u64 n = std::min<u64>(subregions, region.subregion_count());
  // The whole subregion is mapped (the formal layout family assumes the code
  // extent fills it); programs must fit inside.
  u64 program_len = region.subregion_len;
  for (const auto& p : probes)
    if (p.program.byte_len() > program_len)
      throw ConfigError("probe program exceeds the subregion: " + p.name);

  for (const auto& probe : probes) {
    std::vector<detail::ProbeRun> runs;
    runs.reserve(n);
    for (u64 i = 0; i < n; ++i) {
      runs.push_back(detail::run_probe(region, i, program_len, probe, mode,
                                       cfg));
      ++report.runs;
    }
    for (u64 i = 0; i < n; ++i) {
      for (u64 j = i + 1; j < n; ++j) {
        if (&probe == &probes.front()) ++report.pairs_checked;
        const RunTrace& ta = runs[i].trace;
        const RunTrace& tb = runs[j].trace;
        EquivalenceVerdict fe =
            func_equiv(ta.requests, tb.requests, runs[i].layout,
                       runs[j].layout);
        bool crash_mismatch =
            (ta.status == TerminalStatus::Crashed) !=
                (tb.status == TerminalStatus::Crashed) ||
            (ta.status == TerminalStatus::Crashed &&
             ta.crash_step != tb.crash_step);
        if (!fe.holds && !crash_mismatch) {
          report.precondition_violations.push_back(
              {i, j, probe.name, fe.counterexample->step,
               fe.counterexample->left + " vs " + fe.counterexample->right});
          continue;
        }
        size_t steps = std::min(ta.observations.size(),
                                tb.observations.size());
        std::optional<u64> diverged;
        for (size_t k = 0; k < steps; ++k) {
          if (!(ta.observations[k] == tb.observations[k])) {
            diverged = k;
            break;
          }
        }
        if (!diverged && crash_mismatch)
          diverged = std::min(ta.steps, tb.steps);
        if (diverged)
          report.distinguishable.push_back(
              {i, j, probe.name, *diverged,
               "observation divergence at step " + std::to_string(*diverged)});
      }
    }
  }
  return report;
}

/// Exhaustive translation-invariance check: for all layout pairs of the
/// family, trans and ptw agree on every masked page of the program region.
/// This is what makes masked-mode page tables adversarially identical.
struct TranslationInvarianceReport {
  u64 pairs_checked = 0;
  std::vector<PairFinding> counterexamples;
  bool holds() const { return counterexamples.empty(); }
};

inline TranslationInvarianceReport check_translation_invariance(
    const RandRegion& region, u64 subregions, u64 program_len,
    PhysMem::PtNodeOrder order = PhysMem::PtNodeOrder::SortedKeys) {
  TranslationInvarianceReport report;
  u64 n = std::min<u64>(subregions, region.subregion_count());
  std::vector<PhysMem> mems;
  mems.reserve(n);
  for (u64 i = 0; i < n; ++i)
    mems.push_back(build_page_table(layout_at_index(region, i, program_len),
                                    Mode::Masked, order));
  for (u64 i = 0; i < n; ++i) {
    for (u64 j = i + 1; j < n; ++j) {
      ++report.pairs_checked;
      for (u64 w = region.start.value; w < region.start.value + program_len;
           w += kPageSize) {
        auto ta = trans(w, mems[i]);
        auto tb = trans(w, mems[j]);
        bool trans_ok = ta.has_value() == tb.has_value() &&
                        (!ta || ta->value == tb->value);
        bool ptw_ok = ptw(w, mems[i]) == ptw(w, mems[j]);
        if (!trans_ok || !ptw_ok) {
          report.counterexamples.push_back(
              {i, j, "translation", w,
               std::string(trans_ok ? "ptw" : "trans") + " mismatch at " +
                   to_hex(w)});
          break;
        }
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// The probe suite: one program per structure family plus the speculative
// path. All programs are layout-relative and enter their body through an
// in-region branch so the entry page is observed.

inline std::vector<ProbeProgram> probe_suite() {
  std::vector<ProbeProgram> suite;

  auto self_preloads = [](u64 off0, u64 off1 = 0, u64 off2 = 0) {
    return [off0, off1, off2](const Layout& l) {
      u64 base = l.mappings[0].valid_start().value;
      std::vector<Preload> p = {{1, base + off0}};
      if (off1) p.push_back({2, base + off1});
      if (off2) p.push_back({3, base + off2});
      return p;
    };
  };

  {  // Linear fetch walk: straight-line code crossing the program's pages.
    ProbeProgram p;
    p.name = "linear_fetch_walk";
    p.program.insts.push_back(jmp(kInstBytes));
    for (int i = 0; i < 520; ++i) p.program.insts.push_back(nop());
    p.program.insts.push_back(halt());
    p.preloads = [](const Layout&) { return std::vector<Preload>{}; };
    suite.push_back(std::move(p));
  }
  {  // In-region load sweep over the program's own bytes.
    ProbeProgram p;
    p.name = "load_sweep";
    p.program.insts = {jmp(kInstBytes), load(4, 1), load(5, 2),
                       load(6, 3), halt()};
    p.preloads = self_preloads(0x10, 0x80, 0x8);
    suite.push_back(std::move(p));
  }
  {  // Branch ladder: taken/not-taken conditional branches plus direct jumps.
    ProbeProgram p;
    p.name = "branch_ladder";
    p.program.insts = {mov_imm(1, 1),
                       mov_imm(2, 0),
                       brnz(1, 2 * static_cast<std::int64_t>(kInstBytes)),
                       nop(),
                       brnz(2, 2 * static_cast<std::int64_t>(kInstBytes)),
                       nop(),
                       jmp(2 * static_cast<std::int64_t>(kInstBytes)),
                       nop(),
                       brnz(1, 2 * static_cast<std::int64_t>(kInstBytes)),
                       nop(),
                       halt()};
    p.preloads = [](const Layout&) { return std::vector<Preload>{}; };
    suite.push_back(std::move(p));
  }
  {  // Walk-heavy strided loads: one load per program page.
    ProbeProgram p;
    p.name = "ptw_strided_loads";
    p.program.insts = {jmp(kInstBytes), load(4, 1), load(5, 2), load(6, 3),
                       halt()};
    p.preloads = self_preloads(0x0, 0x1000, 0x1FF8);
    suite.push_back(std::move(p));
  }
  {  // Transient probe gadget: a mispredicted branch shields a load and an
     // indirect jump to the program's own pointer.
    ProbeProgram p;
    p.name = "transient_probe";
    p.program.insts = {mov_imm(1, 1),
                       brnz(1, 4 * static_cast<std::int64_t>(kInstBytes)),
                       load(4, 2),  // transient on the second visit
                       jmpr(3),     // transient
                       mov_imm(1, 0),
                       brnz(1, static_cast<std::int64_t>(-3) *
                                   static_cast<std::int64_t>(kInstBytes)),
                       halt()};
    p.preloads = self_preloads(0, 0x40, 0x30);
    suite.push_back(std::move(p));
  }
  return suite;
}

}  // namespace masksim
