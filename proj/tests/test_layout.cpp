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

#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "masksim/layout.hpp"

using namespace masksim;

namespace {

RandRegion toy8() {
  return make_region(0, 0x10000000, 0x10000000 + 8 * 0x1000, 0x1000);
}

// 8 subregions of 4 pages each, for the page-granularity cases.
RandRegion toy_paged() {
  return make_region(0, 0x20000000, 0x20000000 + 8 * 0x4000, 0x4000);
}

}  // namespace

TEST_CASE("enumerate_layouts produces the full offset family") {
  RandRegion r = toy8();
  LayoutSet set = enumerate_layouts(r, 0x1000, PhysAddr(0x400000));
  REQUIRE(set.layouts.size() == 8);
  std::set<u64> offsets;
  for (const auto& l : set.layouts) offsets.insert(l.mappings[0].offset);
  std::set<u64> expected = {0,      0x1000, 0x2000, 0x3000,
                            0x4000, 0x5000, 0x6000, 0x7000};
  CHECK(offsets == expected);

  // L_i(start + i*len + rel) = pstart + rel, and bottom elsewhere:
  // exhaustive against the defining equations.
  for (u64 i = 0; i < 8; ++i) {
    const Layout& l = set.layouts[i];
    for (u64 j = 0; j < 8; ++j) {
      for (u64 rel = 0; rel < 0x1000; rel += 8) {
        auto q = l.query(VirtAddr(r.start.value + j * 0x1000 + rel));
        if (j == i) {
          REQUIRE(q.has_value());
          REQUIRE(q->value == 0x400000 + rel);
        } else {
          REQUIRE(!q.has_value());
        }
      }
    }
  }

  CHECK_THROWS_AS(enumerate_layouts(r, 0x1008), ConfigError);
}

TEST_CASE("program shorter than the subregion maps a partial extent") {
  RandRegion r = toy8();
  LayoutSet set = enumerate_layouts(r, 0x800);
  const Layout& l = set.layouts[3];
  CHECK(l.query(VirtAddr(r.start.value + 3 * 0x1000 + 0x7F8)).has_value());
  CHECK_FALSE(l.query(VirtAddr(r.start.value + 3 * 0x1000 + 0x800)).has_value());
}

TEST_CASE("sample_layout is deterministic and uniform") {
  RandRegion r = toy8();
  Layout a = sample_layout(r, 0x1000, 42);
  Layout b = sample_layout(r, 0x1000, 42);
  CHECK(a.mappings[0].offset == b.mappings[0].offset);

  // Chi-square style check: 10,000 samples over N=8, each frequency within
  // 3 sigma of 1/8.
  const int kSamples = 10000;
  std::vector<int> counts(8, 0);
  SplitMix64 seeds(2026);
  for (int s = 0; s < kSamples; ++s)
    ++counts[sample_layout(r, 0x1000, seeds.next())
                 .mappings[0]
                 .subregion_index()];
  double p = 1.0 / 8.0;
  double sigma = std::sqrt(kSamples * p * (1 - p));
  for (int c : counts) {
    CHECK(std::abs(c - kSamples * p) <= 3 * sigma);
  }

  CHECK_THROWS_AS(sample_layout(r, 0x2000, 1), ConfigError);
}

TEST_CASE("query on fixed mappings and unmapped space") {
  Layout l;
  l.fixed.push_back({VirtAddr(0x2000000), PhysAddr(0x800000), 0x2000,
                     Perms{true, true, false, false}});
  auto q = l.query(VirtAddr(0x2000010));
  REQUIRE(q.has_value());
  CHECK(q->value == 0x800010);
  CHECK_FALSE(l.query(VirtAddr(0x2002000)).has_value());
  auto pm = l.perms_at(VirtAddr(0x2000010));
  REQUIRE(pm.has_value());
  CHECK(pm->write);
  CHECK_FALSE(pm->execute);
}

TEST_CASE("page-granularity layouts") {
  RandRegion r = toy_paged();

  SUBCASE("all pages on one index degenerates to the coarse layout") {
    Layout paged = page_layout_with_indices(r, {2, 2, 2, 2});
    Layout coarse = layout_at_index(r, 2, 4 * kPageSize);
    for (u64 v = r.start.value; v < r.end.value; v += 8) {
      auto a = paged.query(VirtAddr(v));
      auto b = coarse.query(VirtAddr(v));
      REQUIRE(a.has_value() == b.has_value());
      if (a) REQUIRE(a->value == b->value);
    }
  }

  SUBCASE("distinct indices give four disjoint masked pages") {
    Layout paged = page_layout_with_indices(r, {2, 0, 3, 1});
    std::vector<RandRegion> regions = {r};
    std::set<u64> masked_pages;
    for (u64 v = r.start.value; v < r.end.value; v += 8) {
      if (!paged.query(VirtAddr(v))) continue;
      masked_pages.insert(virt2mask(VirtAddr(v), regions).value >> kPageShift);
    }
    CHECK(masked_pages.size() == 4);
  }

  SUBCASE("each page resolves through its own index") {
    std::vector<u64> indices = {5, 1, 7, 0};
    Layout paged = page_layout_with_indices(r, indices);
    for (u64 page = 0; page < indices.size(); ++page) {
      for (u64 off = 0; off < kPageSize; off += 64) {
        // Index-table oracle: the only valid virtual home of (page, off).
        u64 v = r.start.value + indices[page] * r.subregion_len +
                page * kPageSize + off;
        auto q = paged.query(VirtAddr(v));
        REQUIRE(q.has_value());
        REQUIRE(q->value == 0x400000 + page * kPageSize + off);
        // The same page slot in any other subregion is unmapped.
        for (u64 other = 0; other < 8; ++other) {
          if (other == indices[page]) continue;
          u64 bad = r.start.value + other * r.subregion_len +
                    page * kPageSize + off;
          REQUIRE(!paged.query(VirtAddr(bad)).has_value());
        }
      }
    }
  }

  SUBCASE("capacity and index bounds are enforced") {
    CHECK_THROWS_AS(page_granularity_layout(r, 5, 1), ConfigError);
    CHECK_THROWS_AS(page_layout_with_indices(r, {9}), ConfigError);
    CHECK_NOTHROW(page_granularity_layout(r, 4, 1));
  }

  SUBCASE("sampled page layouts are deterministic") {
    Layout a = page_granularity_layout(r, 3, 99);
    Layout b = page_granularity_layout(r, 3, 99);
    CHECK(a.mappings[0].page_indices == b.mappings[0].page_indices);
  }
}

TEST_CASE("masking is independent of the chosen layout") {
  RandRegion r = toy8();
  std::vector<RandRegion> regions = {r};
  LayoutSet set = enumerate_layouts(r, 0x1000);

  // For every layout and every valid v, the masked image depends only on the
  // in-subregion position.
  for (const auto& l : set.layouts) {
    u64 lo = l.mappings[0].valid_start().value;
    for (u64 rel = 0; rel < 0x1000; rel += 8) {
      CHECK(virt2mask(VirtAddr(lo + rel), regions).value ==
            r.start.value + rel);
    }
  }

  // The composite F(w) = L(mask2valid(w, offset_L)) is the same function for
  // every layout in the family (exhaustive, N = 8 and N = 16).
  for (u64 n : {8ULL, 16ULL}) {
    RandRegion rn =
        make_region(0, 0x20000000, 0x20000000 + n * 0x1000, 0x1000);
    LayoutSet sn = enumerate_layouts(rn, 0x1000);
    for (u64 w = rn.start.value; w < rn.start.value + 0x1000; w += 8) {
      std::optional<PhysAddr> first;
      for (const auto& l : sn.layouts) {
        auto q = l.query(mask2valid(MaskedAddr(w), l.mappings[0].offset, rn));
        REQUIRE(q.has_value());
        if (!first) first = q;
        REQUIRE(q->value == first->value);
      }
    }
  }
}

TEST_CASE("multi-region layouts share one offset across kernel regions") {
  // Text and modules relocate together: one subregion index applied to two
  // disjoint regions, as the module preset requires.
  RandRegion text = make_region(0, 0x10000000, 0x10000000 + 8 * 0x1000,
                                0x1000);
  RandRegion mods = make_region(1, 0x20000000, 0x20000000 + 8 * 0x1000,
                                0x1000);
  u64 shared_index = 5;
  Layout l;
  l.mappings.push_back(
      detail::coarse_mapping(text, shared_index, 0x1000, PhysAddr(0x400000),
                             {true, false, true, true}));
  l.mappings.push_back(
      detail::coarse_mapping(mods, shared_index, 0x1000, PhysAddr(0x500000),
                             {true, false, true, true}));
  validate_regions(l.regions());

  auto qt = l.query(VirtAddr(text.start.value + 5 * 0x1000 + 0x10));
  auto qm = l.query(VirtAddr(mods.start.value + 5 * 0x1000 + 0x10));
  REQUIRE(qt.has_value());
  REQUIRE(qm.has_value());
  CHECK(qt->value == 0x400010);
  CHECK(qm->value == 0x500010);
  CHECK_FALSE(l.query(VirtAddr(mods.start.value + 4 * 0x1000)).has_value());

  // Masking stays per-region.
  std::vector<RandRegion> regions = l.regions();
  CHECK(virt2mask(VirtAddr(mods.start.value + 5 * 0x1000 + 0x10), regions)
            .value == mods.start.value + 0x10);
}
