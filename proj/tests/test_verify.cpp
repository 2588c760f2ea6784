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

#include <set>

#include "doctest.h"
#include "masksim/verify.hpp"

using namespace masksim;

namespace {

// 8 subregions of 2 pages each.
RandRegion sweep_region() {
  return make_region(0, 0x40000000, 0x40000000 + 8 * 0x2000, 0x2000);
}

Request fetch_req(u64 v, u64 src) { return {ReqKind::Fetch, v, src, 0}; }
Request load_req(u64 v) { return {ReqKind::Load, v, 0, 0}; }
Request store_req(u64 v, u64 d) { return {ReqKind::Store, v, 0, d}; }

}  // namespace

TEST_CASE("functional equivalence follows the defining disjunction") {
  RandRegion r = sweep_region();
  Layout la = layout_at_index(r, 2, 0x2000);
  Layout lb = layout_at_index(r, 5, 0x2000);
  u64 va = la.mappings[0].valid_start().value + 0x40;
  u64 vb = lb.mappings[0].valid_start().value + 0x40;

  // Identical traces under any layouts hold trivially.
  std::vector<Request> t1 = {load_req(0x2000000), fetch_req(va, va - 8)};
  CHECK(func_equiv(t1, t1, la, lb).holds);

  // Different virtual addresses mapping to the same physical instruction.
  std::vector<Request> a = {fetch_req(va, va - 8)};
  std::vector<Request> b = {fetch_req(vb, vb - 8)};
  CHECK(func_equiv(a, b, la, lb).holds);

  // Kind mismatch produces a counterexample at the mismatching step.
  std::vector<Request> c = {load_req(0x2000000), load_req(va)};
  std::vector<Request> d = {load_req(0x2000000), store_req(va, 1)};
  EquivalenceVerdict v = func_equiv(c, d, la, la);
  REQUIRE_FALSE(v.holds);
  CHECK(v.counterexample->step == 1);

  // Equal addresses that are unmapped on one side still satisfy v == v'.
  std::vector<Request> e = {load_req(0x12345678)};
  CHECK(func_equiv(e, e, la, lb).holds);

  // Unequal lengths: counterexample at the shorter length.
  std::vector<Request> f = {load_req(va)};
  std::vector<Request> g = {load_req(va), load_req(va)};
  EquivalenceVerdict lv = func_equiv(f, g, la, la);
  REQUIRE_FALSE(lv.holds);
  CHECK(lv.counterexample->step == 1);
}

TEST_CASE("mask equivalence erases exactly the protected bits") {
  RandRegion r = sweep_region();
  std::vector<RandRegion> regions = {r};
  u64 base = r.start.value;

  std::vector<Request> a = {load_req(base + 2 * 0x2000 + 0x40)};
  std::vector<Request> b = {load_req(base + 6 * 0x2000 + 0x40)};
  CHECK(mask_equiv(a, b, regions).holds);

  std::vector<Request> c = {load_req(base + 0x40)};
  std::vector<Request> d = {load_req(base + 0x48)};
  EquivalenceVerdict v = mask_equiv(c, d, regions);
  REQUIRE_FALSE(v.holds);
  CHECK(v.counterexample->step == 0);

  // Fetch sources participate too.
  std::vector<Request> e = {fetch_req(base + 0x40, base + 0x2000)};
  std::vector<Request> f = {fetch_req(base + 0x40, base + 0x4000)};
  CHECK(mask_equiv(e, f, regions).holds);
  std::vector<Request> g = {fetch_req(base + 0x40, base + 0x2008)};
  CHECK_FALSE(mask_equiv(f, g, regions).holds);
}

TEST_CASE("functional equivalence implies mask equivalence on layout sweeps") {
  // The first security lemma as a test: generate request traces from the
  // layout sweep; every functionally equivalent pair must be mask
  // equivalent.
  RandRegion r = sweep_region();
  std::vector<RandRegion> regions = {r};
  SweepConfig cfg;
  cfg.machine.mode = Mode::Masked;
  auto probes = probe_suite();
  for (const auto& probe : probes) {
    std::vector<std::vector<Request>> traces;
    std::vector<Layout> layouts;
    for (u64 i = 0; i < 8; ++i) {
      Layout l = layout_at_index(r, i, r.subregion_len);
      l.fixed.push_back(cfg.data);
      MachineImage img;
      img.mem = build_page_table(l, Mode::Masked);
      place_program(img, probe.program, l.mappings[0].phys_base,
                    l.mappings[0].valid_start(), "probe");
      MachineConfig mc = cfg.machine;
      mc.privileged = true;
      Machine m(std::move(img.mem), std::move(img.pool),
                VirtAddr(img.entry("probe")), mc, probe.preloads(l));
      traces.push_back(m.run(cfg.budget).requests);
      layouts.push_back(std::move(l));
    }
    for (u64 i = 0; i < 8; ++i)
      for (u64 j = i + 1; j < 8; ++j) {
        REQUIRE(func_equiv(traces[i], traces[j], layouts[i], layouts[j])
                    .holds);
        REQUIRE(mask_equiv(traces[i], traces[j], regions).holds);
      }
  }
}

TEST_CASE("public equivalence of initialized machines") {
  RandRegion r = sweep_region();
  Program prog;
  prog.insts = {jmp(kInstBytes), load(4, 1), halt()};
  auto build = [&](u64 idx, Mode mode) {
    Layout l = layout_at_index(r, idx, r.subregion_len);
    MachineImage img;
    img.mem = build_page_table(l, mode);
    place_program(img, prog, l.mappings[0].phys_base,
                  l.mappings[0].valid_start(), "probe");
    MachineConfig mc;
    mc.mode = mode;
    mc.privileged = true;
    u64 target = l.mappings[0].valid_start().value + 0x10;
    return Machine(std::move(img.mem), std::move(img.pool),
                   VirtAddr(img.entry("probe")), mc, {{1, target}});
  };

  Machine a = build(1, Mode::Masked);
  Machine b = build(6, Mode::Masked);
  CHECK(pub_equiv(a, b, r).holds);

  // One step with mask-equivalent requests preserves public equivalence.
  a.step();
  b.step();
  CHECK(pub_equiv(a, b, r).holds);

  Machine c = build(1, Mode::Baseline);
  Machine d = build(6, Mode::Baseline);
  CHECK_FALSE(pub_equiv(c, d, r).holds);
}

TEST_CASE("noninterference sweep: masked clean, baseline distinguishable") {
  RandRegion r = sweep_region();
  auto probes = probe_suite();

  NoninterferenceReport masked =
      check_noninterference(probes, r, 8, Mode::Masked);
  CHECK(masked.pairs_checked == 28);
  CHECK(masked.precondition_violations.empty());
  CHECK(masked.distinguishable.empty());

  NoninterferenceReport base =
      check_noninterference(probes, r, 8, Mode::Baseline);
  CHECK(base.precondition_violations.empty());
  std::set<std::pair<u64, u64>> pairs;
  for (const auto& f : base.distinguishable) pairs.insert({f.layout_i, f.layout_j});
  CHECK(pairs.size() >= 27);

  // The earliest divergence is the first in-region fetch or load: for the
  // fetch walk, the observation right after step 0.
  u64 earliest = ~0ULL;
  for (const auto& f : base.distinguishable)
    if (f.program == "linear_fetch_walk") earliest = std::min(earliest, f.step);
  CHECK(earliest == 1);

  // Degenerate single-layout sweep holds vacuously in both modes.
  NoninterferenceReport one =
      check_noninterference(probes, r, 1, Mode::Baseline);
  CHECK(one.distinguishable.empty());
}

TEST_CASE("distinguishability counterexamples replay") {
  RandRegion r = sweep_region();
  std::vector<ProbeProgram> probes;
  probes.push_back(std::move(probe_suite()[1]));  // load sweep
  NoninterferenceReport base =
      check_noninterference(probes, r, 4, Mode::Baseline);
  REQUIRE_FALSE(base.distinguishable.empty());
  const PairFinding& f = base.distinguishable.front();

  // Replay the two runs and confirm the divergence at the reported step.
  SweepConfig cfg;
  auto rerun = [&](u64 idx) {
    Layout l = layout_at_index(r, idx, r.subregion_len);
    l.fixed.push_back(cfg.data);
    MachineImage img;
    img.mem = build_page_table(l, Mode::Baseline);
    place_program(img, probes[0].program, l.mappings[0].phys_base,
                  l.mappings[0].valid_start(), "probe");
    MachineConfig mc;
    mc.privileged = true;
    Machine m(std::move(img.mem), std::move(img.pool),
              VirtAddr(img.entry("probe")), mc, probes[0].preloads(l));
    return m.run(cfg.budget);
  };
  RunTrace ta = rerun(f.layout_i);
  RunTrace tb = rerun(f.layout_j);
  CHECK_FALSE(ta.observations[f.step] == tb.observations[f.step]);
  for (u64 k = 0; k < f.step; ++k)
    CHECK(ta.observations[k] == tb.observations[k]);
}

TEST_CASE("translation invariance holds exhaustively and catches a broken "
          "allocator") {
  RandRegion r16 =
      make_region(0, 0x60000000, 0x60000000 + 16 * 0x4000, 0x4000);
  TranslationInvarianceReport rep =
      check_translation_invariance(r16, 16, 0x4000);
  CHECK(rep.pairs_checked == 120);
  CHECK(rep.holds());

  // Vacuous for a single layout.
  CHECK(check_translation_invariance(r16, 1, 0x1000).holds());

  // Mutation check: the offset-seeded allocator is layout-dependent and the
  // checker must produce a counterexample.
  TranslationInvarianceReport broken = check_translation_invariance(
      r16, 16, 0x1000, PhysMem::PtNodeOrder::OffsetSeeded);
  CHECK_FALSE(broken.holds());
}

TEST_CASE("public equivalence is preserved step by step over whole runs") {
  RandRegion r = sweep_region();
  Program prog;
  prog.insts = {jmp(kInstBytes), load(4, 1), load(5, 2), nop(), halt()};
  auto build = [&](u64 idx) {
    Layout l = layout_at_index(r, idx, r.subregion_len);
    MachineImage img;
    img.mem = build_page_table(l, Mode::Masked);
    place_program(img, prog, l.mappings[0].phys_base,
                  l.mappings[0].valid_start(), "probe");
    MachineConfig mc;
    mc.mode = Mode::Masked;
    mc.privileged = true;
    u64 base = l.mappings[0].valid_start().value;
    return Machine(std::move(img.mem), std::move(img.pool), VirtAddr(base),
                   mc, {{1, base + 0x10}, {2, base + 0x1080}});
  };
  Machine a = build(2);
  Machine b = build(7);
  REQUIRE(pub_equiv(a, b, r).holds);
  int guard = 0;
  while (!a.halted() && !b.halted() && guard++ < 200) {
    auto ra = a.step();
    auto rb = b.step();
    REQUIRE(ra.has_value());
    REQUIRE(rb.has_value());
    CHECK(ra->kind == rb->kind);
    REQUIRE(pub_equiv(a, b, r).holds);
  }
  CHECK(a.halted());
  CHECK(b.halted());
}
