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

#include <map>
#include <set>
#include <vector>

#include "doctest.h"
#include "masksim/addr.hpp"

using namespace masksim;

namespace {

// 256 subregions of 1 MB starting at 0xFF0000000; protected bits 20-27.
RandRegion worked_example_region() {
  return make_region(0, 0xFF0000000ULL, 0xFF0000000ULL + (1ULL << 28),
                     1ULL << 20);
}

// 8 subregions of 4 KB; protected bits 12-14. Small enough for exhaustive
// sweeps.
RandRegion toy_region(int id = 0, u64 start = 0x10000000ULL) {
  return make_region(id, start, start + 8 * 0x1000ULL, 0x1000ULL);
}

// Brute-force membership scan, independent of classify's early-out logic.
const RandRegion* classify_oracle(VirtAddr v,
                                  const std::vector<RandRegion>& regions) {
  const RandRegion* found = nullptr;
  int hits = 0;
  for (const auto& r : regions) {
    if (v.value >= r.start.value && v.value < r.end.value) {
      found = &r;
      ++hits;
    }
  }
  REQUIRE(hits <= 1);
  return found;
}

}  // namespace

TEST_CASE("region construction validates its invariants") {
  CHECK_THROWS_AS(make_region(0, 0x2000, 0x1000, 0x1000), ConfigError);
  CHECK_THROWS_AS(make_region(0, 0x1000, 0x4000, 0x1800), ConfigError);
  CHECK_THROWS_AS(make_region(0, 0x1000, 0x4800, 0x1000), ConfigError);
  // Mask not anchored at log2(len).
  CHECK_THROWS_AS(
      make_region(0, 0x10000000, 0x10008000, 0x1000, 0x7ULL << 13),
      ConfigError);
  // Non-contiguous mask.
  CHECK_THROWS_AS(
      make_region(0, 0x10000000, 0x10008000, 0x1000, 0b101ULL << 12),
      ConfigError);
  // Too narrow for 8 subregions.
  CHECK_THROWS_AS(
      make_region(0, 0x10000000, 0x10008000, 0x1000, 0x3ULL << 12),
      ConfigError);
  // Start not aligned above the mask.
  CHECK_THROWS_AS(make_region(0, 0x10001000, 0x10009000, 0x1000), ConfigError);

  RandRegion r = toy_region();
  CHECK(r.subregion_count() == 8);
  CHECK(r.protected_mask == (0x7ULL << 12));

  std::vector<RandRegion> overlapping = {
      toy_region(0, 0x10000000),
      make_region(1, 0x10000000, 0x10010000, 0x1000)};
  CHECK_THROWS_AS(validate_regions(overlapping), ConfigError);
}

TEST_CASE("classify finds the unique containing region") {
  std::vector<RandRegion> one = {worked_example_region()};
  const RandRegion* r = classify(VirtAddr(0xFF0012340ULL), one);
  REQUIRE(r != nullptr);
  CHECK(r->region_id == 0);

  CHECK(classify(VirtAddr(0xFEFFFFFFFULL), one) == nullptr);

  // Two regions, only the first contains the probe; agree with the
  // brute-force scan on a sample sweep.
  std::vector<RandRegion> two = {
      worked_example_region(),
      make_region(1, 0x2000000000ULL, 0x2000000000ULL + (1ULL << 28),
                  1ULL << 20)};
  const RandRegion* hit = classify(VirtAddr(0xFFAB12340ULL), two);
  REQUIRE(hit != nullptr);
  CHECK(hit->region_id == 0);
  for (u64 probe = 0xFEFF00000ULL; probe < 0xFF1000000ULL;
       probe += 0x12345ULL) {
    CHECK(classify(VirtAddr(probe), two) ==
          classify_oracle(VirtAddr(probe), two));
  }
}

TEST_CASE("virt2mask worked example and both routes agree") {
  std::vector<RandRegion> regions = {worked_example_region()};
  // The canonical worked pair: 0xFFAB12340 masks to 0xFF0012340.
  CHECK(virt2mask(VirtAddr(0xFFAB12340ULL), regions).value == 0xFF0012340ULL);
  // Region start maps to itself.
  CHECK(virt2mask(VirtAddr(0xFF0000000ULL), regions).value == 0xFF0000000ULL);
  // Outside every region: identity.
  CHECK(virt2mask(VirtAddr(0x12345678ULL), regions).value == 0x12345678ULL);

  const RandRegion& r = regions[0];
  for (u64 v = r.start.value; v < r.end.value; v += 0x9E3779BULL) {
    CHECK(virt2mask(VirtAddr(v), r).value ==
          virt2mask_formula(VirtAddr(v), r).value);
  }
}

TEST_CASE("virt2mask idempotence over an exhaustive small-region sweep") {
  // 2^16 addresses: 16 subregions of 4 KB.
  RandRegion r = make_region(0, 0x40000000, 0x40000000 + 0x10000, 0x1000);
  std::vector<RandRegion> regions = {r};
  for (u64 v = r.start.value; v < r.end.value; ++v) {
    MaskedAddr once = virt2mask(VirtAddr(v), regions);
    MaskedAddr twice = virt2mask(VirtAddr(once.value), regions);
    REQUIRE(once.value == twice.value);
  }
}

TEST_CASE("mask2valid worked example, identity, and round trip") {
  std::vector<RandRegion> regions = {worked_example_region()};
  CHECK(mask2valid(MaskedAddr(0xFF0012340ULL), 0xAB00000ULL, regions).value ==
        0xFFAB12340ULL);
  CHECK(mask2valid(MaskedAddr(0xDEADBEEFULL), 0, regions).value ==
        0xDEADBEEFULL);
  CHECK_THROWS_AS(mask2valid(MaskedAddr(0xFF0012340ULL), 0x1000ULL, regions),
                  ConfigError);

  // Round trip across all 256 offsets of the 8-bit protected field, 1000
  // pseudo-random in-region addresses each.
  const RandRegion& r = regions[0];
  SplitMix64 rng(7);
  for (u64 i = 0; i < 256; ++i) {
    u64 offset = i << 20;
    for (int j = 0; j < (i % 16 == 0 ? 1000 : 4); ++j) {
      u64 v = r.start.value + offset + rng.below(r.subregion_len);
      REQUIRE(extract_oblivious_bits(VirtAddr(v), r) == offset);
      MaskedAddr w = virt2mask(VirtAddr(v), r);
      REQUIRE(mask2valid(w, offset, regions).value == v);
    }
  }
}

TEST_CASE("extract_oblivious_bits examples and reconstruction law") {
  RandRegion r = worked_example_region();
  CHECK(extract_oblivious_bits(VirtAddr(0xFFAB12340ULL), r) == 0xAB00000ULL);
  CHECK(extract_oblivious_bits(r.start, r) == 0);
  CHECK_THROWS_AS(extract_oblivious_bits(VirtAddr(0xFEFFFFFFFULL), r),
                  ConfigError);

  SplitMix64 rng(11);
  for (int i = 0; i < 2000; ++i) {
    u64 v = r.start.value + rng.below(r.span());
    CHECK(extract_oblivious_bits(VirtAddr(v), r) +
              virt2mask(VirtAddr(v), r).value ==
          v);
  }
}

TEST_CASE("mask collision classes have cardinality 2^m on a toy region") {
  RandRegion r = toy_region();
  std::vector<RandRegion> regions = {r};
  std::map<u64, u64> class_size;
  for (u64 v = r.start.value; v < r.end.value; ++v)
    ++class_size[virt2mask(VirtAddr(v), regions).value];
  CHECK(class_size.size() == r.subregion_len);
  for (const auto& [w, n] : class_size) {
    REQUIRE(n == (1ULL << r.mask_bits()));
    REQUIRE(w >= r.start.value);
    REQUIRE(w < r.start.value + r.subregion_len);
  }
}

TEST_CASE("masking is independent of protected-bit patterns") {
  RandRegion r = toy_region();
  SplitMix64 rng(13);
  for (int i = 0; i < 5000; ++i) {
    u64 v = r.start.value + rng.below(r.span());
    u64 pattern = rng.next() & r.protected_mask;
    CHECK(virt2mask(VirtAddr(v), r).value ==
          virt2mask(VirtAddr(v ^ pattern), r).value);
  }
}

TEST_CASE("canonical-width handling") {
  CHECK(is_canonical(VirtAddr(0x00007FFFFFFFFFFFULL)));
  CHECK(is_canonical(VirtAddr(0xFFFF800000000000ULL)));
  CHECK_FALSE(is_canonical(VirtAddr(0x0000800000000000ULL)));
  CHECK(is_canonical(VirtAddr(0x0080000000000000ULL), 57));

  // User-space scheme: bits 48-52 are permitted only because they are the
  // region's protected bits.
  RegionPreset user = user_space_preset();
  std::vector<RandRegion> regions = {user.region};
  VirtAddr tagged(0x0003000012345000ULL);
  CHECK_FALSE(is_canonical(tagged));
  CHECK(is_valid_virt(tagged, regions));
  CHECK_FALSE(is_valid_virt(VirtAddr(0x0080000012345000ULL), regions));
}

// ---------------------------------------------------------------------------
// Entropy arithmetic.

namespace {

// Independent re-derivation of the strategy table: the four columns as
// symbolic expressions over (k, n, m), evaluated without going through
// entropy_report's dispatch.
struct SymbolicRow {
  int oc, os, rc, rs;  // coefficients of (n, m) per column: value = a*n + b*m
};

unsigned eval(int coef_n, int coef_m, unsigned n, unsigned m) {
  return static_cast<unsigned>(coef_n) * n + static_cast<unsigned>(coef_m) * m;
}

void check_against_table(BitsVariant variant, unsigned k, unsigned n,
                         unsigned m) {
  // Rows: original code-reuse, original speculative, remaining code-reuse,
  // remaining speculative, each as (n-coefficient, m-coefficient).
  int table[4][4][2] = {
      // default baseline:   n, n, 0, 0
      {{1, 0}, {1, 0}, {0, 0}, {0, 0}},
      // naive masked:       n, n-m, m, 0
      {{1, 0}, {1, -1}, {0, 1}, {0, 0}},
      // enhanced baseline:  m+n, n, 0, 0
      {{1, 1}, {1, 0}, {0, 0}, {0, 0}},
      // enhanced masked:    m+n, n, m, 0
      {{1, 1}, {1, 0}, {0, 1}, {0, 0}},
  };
  const auto& row = table[static_cast<int>(variant)];
  BitsStrategy s = make_strategy(variant, k, n, m);
  EntropyReport r = entropy_report(s);
  CHECK(r.original_code_reuse == eval(row[0][0], row[0][1], n, m));
  CHECK(r.original_speculative == eval(row[1][0], row[1][1], n, m));
  CHECK(r.remaining_code_reuse == eval(row[2][0], row[2][1], n, m));
  CHECK(r.remaining_speculative == eval(row[3][0], row[3][1], n, m));
}

}  // namespace

TEST_CASE("entropy report matches the strategy table") {
  // Kernel text, default baseline: 9 randomized bits, nothing remains.
  EntropyReport base =
      entropy_report(make_strategy(BitsVariant::DefaultBaseline, 21, 9, 0));
  CHECK(base.original_code_reuse == 9);
  CHECK(base.original_speculative == 9);
  CHECK(base.remaining_code_reuse == 0);
  CHECK(base.remaining_speculative == 0);

  // Kernel text, enhanced masked: 8 bits remain against code reuse.
  EntropyReport enh =
      entropy_report(make_strategy(BitsVariant::EnhancedMasked, 21, 9, 8));
  CHECK(enh.original_code_reuse == 17);
  CHECK(enh.original_speculative == 9);
  CHECK(enh.remaining_code_reuse == 8);
  CHECK(enh.remaining_speculative == 0);

  // Naive with m = 0 degenerates to the default baseline.
  EntropyReport naive0 =
      entropy_report(make_strategy(BitsVariant::NaiveMasked, 21, 9, 0));
  CHECK(naive0.original_code_reuse == base.original_code_reuse);
  CHECK(naive0.original_speculative == base.original_speculative);
  CHECK(naive0.remaining_code_reuse == base.remaining_code_reuse);
  CHECK(naive0.remaining_speculative == base.remaining_speculative);

  // 50 random (k, n, m) triples against the symbolic re-derivation.
  SplitMix64 rng(17);
  for (int i = 0; i < 50; ++i) {
    unsigned k = 12 + static_cast<unsigned>(rng.below(20));
    unsigned n = 1 + static_cast<unsigned>(rng.below(20));
    unsigned m = static_cast<unsigned>(rng.below(n + 1));
    check_against_table(BitsVariant::DefaultBaseline, k, n, 0);
    check_against_table(BitsVariant::NaiveMasked, k, n, m);
    check_against_table(BitsVariant::EnhancedBaseline, k, n, m);
    check_against_table(BitsVariant::EnhancedMasked, k, n, m);
  }
}

TEST_CASE("strategy invariants are enforced") {
  CHECK_THROWS_AS(make_strategy(BitsVariant::DefaultBaseline, 11, 9, 0),
                  ConfigError);
  CHECK_THROWS_AS(make_strategy(BitsVariant::DefaultBaseline, 21, 9, 3),
                  ConfigError);
  // The enhanced baseline randomizes the extra bits without protecting them.
  BitsStrategy eb = make_strategy(BitsVariant::EnhancedBaseline, 21, 9, 8);
  CHECK(eb.protected_bits() == 0);
  EntropyReport ebr = entropy_report(eb);
  CHECK(ebr.original_code_reuse == 17);
  CHECK(ebr.original_speculative == 9);
  CHECK(ebr.remaining_code_reuse == 0);
  CHECK_THROWS_AS(make_strategy(BitsVariant::NaiveMasked, 21, 9, 10),
                  ConfigError);
  // 2^(k+n-m) must cover the valid region.
  CHECK_THROWS_AS(
      make_strategy(BitsVariant::NaiveMasked, 12, 9, 6, 1ULL << 25),
      ConfigError);
  CHECK_NOTHROW(make_strategy(BitsVariant::NaiveMasked, 21, 9, 5, 1ULL << 25));
}

TEST_CASE("presets report the documented entropies") {
  RegionPreset text = kernel_text_preset();
  EntropyReport r = entropy_report(text.strategy, text.region);
  CHECK(r.original_code_reuse == 17);
  CHECK(r.original_speculative == 9);
  CHECK(r.remaining_code_reuse == 8);
  CHECK(r.nominal_protected_bits == 8);
  REQUIRE(r.offset_positions.has_value());
  CHECK(*r.offset_positions == 111);
  CHECK(*r.position_limited_bits == 6);

  RegionPreset mods = kernel_modules_preset();
  EntropyReport m = entropy_report(mods.strategy, mods.region);
  CHECK(mods.strategy.n == 10);
  CHECK(m.original_speculative == 10);
  CHECK(m.remaining_code_reuse == 8);
  CHECK(mods.shares_offset_with_kernel_text);

  RegionPreset user = user_space_preset();
  EntropyReport u = entropy_report(user.strategy, user.region);
  CHECK(u.remaining_code_reuse == 5);
  CHECK(u.original_speculative == 28);
  CHECK(*u.offset_positions == 32);
  CHECK(*u.position_limited_bits == 5);

  validate_regions(std::vector<RandRegion>{text.region, mods.region});
  CHECK_THROWS_AS(region_preset("bogus"), ConfigError);
}

TEST_CASE("cost report reproduces the documented byte counts") {
  CoreSizing boom;  // Mega BOOM sizing: 584 TLB entries, 128 ROB, 64 LSQ.
  CostReport r = cost_report(boom);
  CHECK(r.tlb_extra_bytes == 584);
  CHECK(r.rob_lsq_extra_bytes == 200);
  CHECK(r.region_metadata_bytes == 48);
  CHECK(r.archpc_bytes == 8);
  CHECK(r.total_in_core_bytes == 256);
  CHECK(r.total_memory_system_bytes == 584);

  CoreSizing zero = boom;
  zero.rob_entries = 0;
  CHECK_THROWS_AS(cost_report(zero), ConfigError);
}
