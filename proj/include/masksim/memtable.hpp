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

#include <algorithm>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "masksim/addr.hpp"
#include "masksim/common.hpp"
#include "masksim/layout.hpp"

namespace masksim {

enum class Mode { Baseline, Masked };

inline const char* to_string(Mode m) {
  return m == Mode::Baseline ? "baseline" : "masked";
}

constexpr unsigned kPtLevels = 4;
constexpr unsigned kIndexBits = 9;
constexpr unsigned kKernelOffsetFieldBits = 9;
constexpr unsigned kUserOffsetFieldBits = 5;

struct PtConfig {
  unsigned levels = kPtLevels;
  unsigned index_bits = kIndexBits;
  unsigned page_offset_bits = kPageShift;

  unsigned canonical_width() const {
    return levels * index_bits + page_offset_bits;
  }
};

/// One page table entry. The offset field stores a region's protected bits
/// right-shifted by the lowest protected-bit index; it is zero in baseline
/// mode and in non-leaf entries.
struct Pte {
  bool valid = false;
  u64 ppn = 0;
  Perms perms;
  u32 offset_field = 0;
  bool leaf = false;

  bool operator==(const Pte&) const = default;
};

inline u32 encode_offset_field(u64 offset, const RandRegion& region,
                               bool user_space) {
  u64 field = offset >> region.mask_low_bit();
  unsigned cap = user_space ? kUserOffsetFieldBits : kKernelOffsetFieldBits;
  if (field >> cap)
    throw ConfigError("offset does not fit the PTE offset field");
  return static_cast<u32>(field);
}

inline u64 decode_offset_field(u32 field, const RandRegion& region) {
  return static_cast<u64>(field) << region.mask_low_bit();
}

/// The result of a page table walk: every PTE physical address read, in
/// order, truncated at the first invalid entry (the invalid read itself is
/// included), plus the leaf when the walk completed.
struct WalkResult {
  std::vector<PhysAddr> pte_addrs;
  std::optional<Pte> leaf;

  std::optional<PhysAddr> phys(u64 lookup) const {
    if (!leaf) return std::nullopt;
    return PhysAddr((leaf->ppn << kPageShift) | (lookup & (kPageSize - 1)));
  }
};

/// Physical memory: program image, data, and the page table radix nodes.
/// Program and page table are read-only after initialization.
class PhysMem {
 public:
  PtConfig pt_config;
  Mode mode = Mode::Baseline;
  std::vector<RandRegion> regions;

  // Program image: instruction slots keyed by physical address (8-aligned).
  // The slot payload is opaque here; the machine module stores its decoded
  // instructions.
  std::map<u64, u32> program;

  PhysAddr pt_base{0x1000000};

  u64 data_load(PhysAddr p) const {
    auto it = data_.find(p.value);
    return it == data_.end() ? 0 : it->second;
  }

  void data_store(PhysAddr p, u64 value) { data_[p.value] = value; }

  const std::unordered_map<u64, u64>& raw_data() const { return data_; }

  std::map<u64, u64> sorted_data() const {
    return std::map<u64, u64>(data_.begin(), data_.end());
  }

  u64 node_count() const { return nodes_.size(); }

  PhysAddr node_addr(u64 node) const {
    return PhysAddr(pt_base.value + node * kPageSize);
  }

  const Pte& entry(u64 node, u64 index) const { return nodes_[node][index]; }

  /// Walks the radix tree for a lookup address (virtual in baseline mode,
  /// masked in masked mode).
  WalkResult walk(u64 lookup) const {
    WalkResult result;
    u64 node = root_;
    for (unsigned level = 0; level < pt_config.levels; ++level) {
      unsigned shift = pt_config.page_offset_bits +
                       (pt_config.levels - 1 - level) * pt_config.index_bits;
      u64 index = (lookup >> shift) & ((1ULL << pt_config.index_bits) - 1);
      result.pte_addrs.push_back(
          PhysAddr(node_addr(node).value + index * 8));
      const Pte& pte = nodes_[node][index];
      if (!pte.valid) return result;
      if (level + 1 == pt_config.levels) {
        result.leaf = pte;
        return result;
      }
      node = pte.ppn;
    }
    return result;
  }

  // --- construction ------------------------------------------------------

  enum class PtNodeOrder {
    // Bump allocation in sorted-key order: node placement is a function of
    // the lookup-key set alone, never of the chosen layout.
    SortedKeys,
    // Test fixture: skews node placement by the first stored offset, making
    // PTE addresses layout-dependent. Exists so the verifier's
    // translation-invariance check can be shown to catch a bad allocator.
    OffsetSeeded,
  };

  void insert_leaf(u64 lookup_page, u64 ppn, Perms perms, u32 offset_field) {
    pending_.push_back({lookup_page, ppn, perms, offset_field});
  }

  void finalize_page_table(PtNodeOrder order = PtNodeOrder::SortedKeys) {
    std::sort(pending_.begin(), pending_.end(),
              [](const PendingLeaf& a, const PendingLeaf& b) {
                return a.lookup_page < b.lookup_page;
              });
    nodes_.clear();
    nodes_.emplace_back(1ULL << pt_config.index_bits);
    if (order == PtNodeOrder::OffsetSeeded) {
      u32 filler = 1;
      for (const auto& p : pending_)
        if (p.offset_field) filler += p.offset_field % 3;
      for (u32 i = 0; i < filler; ++i)
        nodes_.emplace_back(1ULL << pt_config.index_bits);
      root_ = nodes_.size();
      nodes_.emplace_back(1ULL << pt_config.index_bits);
    } else {
      root_ = 0;
    }
    for (const auto& p : pending_) plant(p);
    pending_.clear();
  }

  /// Golden-dump format: one line per valid PTE -
  /// level, node physical address, index, valid, ppn, perms, offset field -
  /// sorted, so dumps are byte-comparable across layouts.
  std::string dump_page_table(bool strip_offsets = false) const {
    struct Line {
      unsigned level;
      u64 node_addr;
      u64 index;
      const Pte* pte;
    };
    std::vector<Line> lines;
    collect(root_, 0, lines);
    std::sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) {
      if (a.level != b.level) return a.level < b.level;
      if (a.node_addr != b.node_addr) return a.node_addr < b.node_addr;
      return a.index < b.index;
    });
    std::ostringstream out;
    for (const auto& l : lines) {
      out << l.level << ' ' << to_hex(l.node_addr) << ' ' << l.index << " 1 "
          << to_hex(l.pte->ppn) << ' ' << (l.pte->perms.read ? 'r' : '-')
          << (l.pte->perms.write ? 'w' : '-')
          << (l.pte->perms.execute ? 'x' : '-')
          << (l.pte->perms.privileged ? 'p' : '-') << ' '
          << (strip_offsets ? 0u : l.pte->offset_field) << '\n';
    }
    return out.str();
  }

 private:
  struct PendingLeaf {
    u64 lookup_page;
    u64 ppn;
    Perms perms;
    u32 offset_field;
  };

  void plant(const PendingLeaf& p) {
    u64 node = root_;
    u64 lookup = p.lookup_page << kPageShift;
    for (unsigned level = 0; level < pt_config.levels; ++level) {
      unsigned shift = pt_config.page_offset_bits +
                       (pt_config.levels - 1 - level) * pt_config.index_bits;
      u64 index = (lookup >> shift) & ((1ULL << pt_config.index_bits) - 1);
      Pte& pte = nodes_[node][index];
      if (level + 1 == pt_config.levels) {
        if (pte.valid) throw ConfigError("duplicate page mapping");
        pte.valid = true;
        pte.leaf = true;
        pte.ppn = p.ppn;
        pte.perms = p.perms;
        pte.offset_field = p.offset_field;
        return;
      }
      if (!pte.valid) {
        pte.valid = true;
        pte.leaf = false;
        pte.ppn = nodes_.size();
        nodes_.emplace_back(1ULL << pt_config.index_bits);
      }
      node = pte.ppn;
    }
  }

  template <typename Lines>
  void collect(u64 node, unsigned level, Lines& lines) const {
    for (u64 i = 0; i < nodes_[node].size(); ++i) {
      const Pte& pte = nodes_[node][i];
      if (!pte.valid) continue;
      lines.push_back({level, node_addr(node).value, i, &pte});
      if (!pte.leaf) collect(pte.ppn, level + 1, lines);
    }
  }

  std::vector<PendingLeaf> pending_;
  u64 root_ = 0;
  std::vector<std::vector<Pte>> nodes_;
  std::unordered_map<u64, u64> data_;
};

/// Builds physical memory for a layout. Baseline: leaves keyed by the valid
/// virtual page numbers. Masked mode: leaves keyed by masked page numbers,
/// each storing the page's protected bits in the offset field.
inline PhysMem build_page_table(
    const Layout& layout, Mode mode,
    PhysMem::PtNodeOrder order = PhysMem::PtNodeOrder::SortedKeys,
    PtConfig pt_config = {}) {
  PhysMem mem;
  mem.pt_config = pt_config;
  mem.mode = mode;
  mem.regions = layout.regions();

  for (const auto& m : layout.mappings) {
    bool user_space = !m.perms.privileged;
    u64 pages = (m.valid_len + kPageSize - 1) >> kPageShift;
    for (u64 page = 0; page < pages; ++page) {
      u64 vaddr;
      if (m.granularity == Granularity::Coarse) {
        vaddr = m.valid_start().value + page * kPageSize;
      } else {
        vaddr = m.region.start.value +
                m.page_indices[page] * m.region.subregion_len +
                page * kPageSize;
      }
      u64 ppn = (m.phys_base.value + page * kPageSize) >> kPageShift;
      if (mode == Mode::Baseline) {
        mem.insert_leaf(vaddr >> kPageShift, ppn, m.perms, 0);
      } else {
        u64 masked = virt2mask(VirtAddr(vaddr), m.region).value;
        u64 offset = extract_oblivious_bits(VirtAddr(vaddr), m.region);
        mem.insert_leaf(masked >> kPageShift, ppn, m.perms,
                        encode_offset_field(offset, m.region, user_space));
      }
    }
  }
  for (const auto& f : layout.fixed) {
    if (f.len % kPageSize || f.virt_base.value % kPageSize ||
        f.phys_base.value % kPageSize)
      throw ConfigError("fixed mappings must be page aligned");
    for (u64 page = 0; page < f.len >> kPageShift; ++page) {
      mem.insert_leaf((f.virt_base.value >> kPageShift) + page,
                      (f.phys_base.value >> kPageShift) + page, f.perms, 0);
    }
  }
  mem.finalize_page_table(order);
  return mem;
}

/// Trans(x, PT): the translation result, bottom on any invalid entry.
inline std::optional<PhysAddr> trans(u64 lookup, const PhysMem& mem) {
  return mem.walk(lookup).phys(lookup);
}

/// Ptw(x, PT): the ordered PTE physical addresses the walk reads.
inline std::vector<PhysAddr> ptw(u64 lookup, const PhysMem& mem) {
  return mem.walk(lookup).pte_addrs;
}

/// Offset(w, PT): the stored offset for w's page, widened back to its
/// address-bit positions. Masked mode only; bottom when unmapped.
inline std::optional<u64> offset_lookup(MaskedAddr w, const PhysMem& mem) {
  WalkResult r = mem.walk(w.value);
  if (!r.leaf) return std::nullopt;
  const RandRegion* region = classify(VirtAddr(w.value), mem.regions);
  if (region == nullptr) return 0;
  return decode_offset_field(r.leaf->offset_field, *region);
}

}  // namespace masksim
