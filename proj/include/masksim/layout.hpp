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

#include <optional>
#include <vector>

#include "masksim/addr.hpp"
#include "masksim/common.hpp"

namespace masksim {

constexpr u64 kPageSize = 0x1000;
constexpr u64 kPageShift = 12;

struct Perms {
  bool read = true;
  bool write = false;
  bool execute = false;
  bool privileged = false;

  bool operator==(const Perms&) const = default;
};

enum class Granularity { Coarse, PerPage };

/// One randomized region of a layout. Coarse: the whole valid extent shares
/// one offset (a subregion index projected onto the protected bits). PerPage:
/// each page carries its own subregion index; page p always keeps its own
/// in-subregion slot, so masked images of distinct pages never overlap.
struct RegionMapping {
  RandRegion region;
  Granularity granularity = Granularity::Coarse;
  u64 offset = 0;                      // Coarse: index * subregion_len
  std::vector<u64> page_indices;       // PerPage: subregion index per page
  u64 valid_len = 0;                   // bytes of mapped content
  PhysAddr phys_base;
  Perms perms{true, false, true, true};

  u64 subregion_index() const { return offset / region.subregion_len; }

  /// Virtual start of the valid extent (Coarse only).
  VirtAddr valid_start() const {
    return VirtAddr(region.start.value + offset);
  }
};

/// An unrandomized mapping: identity-shaped, outside every randomization
/// region. Carries attacker code, shared buffers, and scripted data.
struct FixedMapping {
  VirtAddr virt_base;
  PhysAddr phys_base;
  u64 len = 0;
  Perms perms{true, true, true, false};
};

/// The layout function L: a partial map from virtual to physical addresses,
/// assembled from randomized region mappings plus fixed mappings.
class Layout {
 public:
  std::vector<RegionMapping> mappings;
  std::vector<FixedMapping> fixed;

  /// L(v): the mapped physical address, or nothing.
  std::optional<PhysAddr> query(VirtAddr v) const {
    for (const auto& m : mappings) {
      if (!m.region.contains(v)) continue;
      if (m.granularity == Granularity::Coarse) {
        u64 lo = m.valid_start().value;
        if (v.value >= lo && v.value < lo + m.valid_len)
          return PhysAddr(m.phys_base.value + (v.value - lo));
        return std::nullopt;
      }
      // PerPage: page p lives at start + idx[p]*len + p*page_size.
      u64 rel = v.value - m.region.start.value;
      u64 in_sub = rel % m.region.subregion_len;
      u64 idx = rel / m.region.subregion_len;
      u64 page = in_sub >> kPageShift;
      if (page >= m.page_indices.size()) return std::nullopt;
      if (m.page_indices[page] != idx) return std::nullopt;
      return PhysAddr(m.phys_base.value + page * kPageSize +
                      (in_sub & (kPageSize - 1)));
    }
    for (const auto& f : fixed) {
      if (v.value >= f.virt_base.value && v.value < f.virt_base.value + f.len)
        return PhysAddr(f.phys_base.value + (v.value - f.virt_base.value));
    }
    return std::nullopt;
  }

  const RegionMapping* mapping_for(const RandRegion& r) const {
    for (const auto& m : mappings)
      if (m.region.region_id == r.region_id) return &m;
    return nullptr;
  }

  std::vector<RandRegion> regions() const {
    std::vector<RandRegion> rs;
    rs.reserve(mappings.size());
    for (const auto& m : mappings) rs.push_back(m.region);
    return rs;
  }

  /// Permissions at v, or nothing when unmapped.
  std::optional<Perms> perms_at(VirtAddr v) const {
    for (const auto& m : mappings)
      if (m.region.contains(v)) return query(v) ? std::optional(m.perms)
                                                : std::nullopt;
    for (const auto& f : fixed)
      if (v.value >= f.virt_base.value && v.value < f.virt_base.value + f.len)
        return f.perms;
    return std::nullopt;
  }
};

/// The full layout family {L_i : i in [0, N)} over one region, offsets
/// i * subregion_len.
struct LayoutSet {
  RandRegion region;
  u64 subregion_count = 0;
  std::vector<Layout> layouts;
};

namespace detail {

inline RegionMapping coarse_mapping(const RandRegion& region, u64 index,
                                    u64 program_len, PhysAddr phys_base,
                                    Perms perms) {
  if (program_len > region.subregion_len)
    throw ConfigError("program does not fit in one subregion");
  if (index >= region.subregion_count())
    throw ConfigError("subregion index out of range");
  RegionMapping m;
  m.region = region;
  m.granularity = Granularity::Coarse;
  m.offset = index * region.subregion_len;
  m.valid_len = program_len;
  m.phys_base = phys_base;
  m.perms = perms;
  return m;
}

}  // namespace detail

/// All N layouts of the family, each mapping
/// [start + i*len, start + i*len + program_len) onto the same physical range.
inline LayoutSet enumerate_layouts(const RandRegion& region, u64 program_len,
                                   PhysAddr phys_base = PhysAddr(0x400000),
                                   Perms perms = {true, false, true, true}) {
  if (program_len > region.subregion_len)
    throw ConfigError("program does not fit in one subregion");
  LayoutSet set;
  set.region = region;
  set.subregion_count = region.subregion_count();
  set.layouts.reserve(set.subregion_count);
  for (u64 i = 0; i < set.subregion_count; ++i) {
    Layout l;
    l.mappings.push_back(
        detail::coarse_mapping(region, i, program_len, phys_base, perms));
    set.layouts.push_back(std::move(l));
  }
  return set;
}

/// One coarse layout drawn uniformly from the family; deterministic in seed.
inline Layout sample_layout(const RandRegion& region, u64 program_len,
                            u64 seed, PhysAddr phys_base = PhysAddr(0x400000),
                            Perms perms = {true, false, true, true}) {
  SplitMix64 rng(seed);
  u64 index = rng.below(region.subregion_count());
  Layout l;
  l.mappings.push_back(
      detail::coarse_mapping(region, index, program_len, phys_base, perms));
  return l;
}

inline Layout layout_at_index(const RandRegion& region, u64 index,
                              u64 program_len,
                              PhysAddr phys_base = PhysAddr(0x400000),
                              Perms perms = {true, false, true, true}) {
  Layout l;
  l.mappings.push_back(
      detail::coarse_mapping(region, index, program_len, phys_base, perms));
  return l;
}

/// Page-granularity layout: each of `pages` pages gets an independently
/// sampled subregion index. All pages sharing one index degenerates to the
/// coarse layout with that offset.
inline Layout page_granularity_layout(const RandRegion& region, u64 pages,
                                      u64 seed,
                                      PhysAddr phys_base = PhysAddr(0x400000),
                                      Perms perms = {true, false, true,
                                                     true}) {
  if (pages * kPageSize > region.subregion_len)
    throw ConfigError("pages exceed the subregion capacity");
  SplitMix64 rng(seed);
  RegionMapping m;
  m.region = region;
  m.granularity = Granularity::PerPage;
  m.valid_len = pages * kPageSize;
  m.phys_base = phys_base;
  m.perms = perms;
  m.page_indices.reserve(pages);
  for (u64 p = 0; p < pages; ++p)
    m.page_indices.push_back(rng.below(region.subregion_count()));
  Layout l;
  l.mappings.push_back(std::move(m));
  return l;
}

inline Layout page_layout_with_indices(const RandRegion& region,
                                       std::vector<u64> indices,
                                       PhysAddr phys_base = PhysAddr(0x400000),
                                       Perms perms = {true, false, true,
                                                      true}) {
  if (indices.size() * kPageSize > region.subregion_len)
    throw ConfigError("pages exceed the subregion capacity");
  for (u64 idx : indices)
    if (idx >= region.subregion_count())
      throw ConfigError("subregion index out of range");
  RegionMapping m;
  m.region = region;
  m.granularity = Granularity::PerPage;
  m.valid_len = indices.size() * kPageSize;
  m.phys_base = phys_base;
  m.perms = perms;
  m.page_indices = std::move(indices);
  Layout l;
  l.mappings.push_back(std::move(m));
  return l;
}

}  // namespace masksim
