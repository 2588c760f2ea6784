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

#include <compare>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "masksim/common.hpp"

namespace masksim {

// Address roles. The three are distinct semantic types: a masked address is a
// virtual address with the protected (microarchitecture-oblivious) bits
// cleared, and a physical address is the translation result. Conversions are
// explicit operations, never implicit.

struct VirtAddr {
  u64 value = 0;
  constexpr VirtAddr() = default;
  constexpr explicit VirtAddr(u64 v) : value(v) {}
  auto operator<=>(const VirtAddr&) const = default;
};

struct MaskedAddr {
  u64 value = 0;
  constexpr MaskedAddr() = default;
  constexpr explicit MaskedAddr(u64 v) : value(v) {}
  auto operator<=>(const MaskedAddr&) const = default;
};

struct PhysAddr {
  u64 value = 0;
  constexpr PhysAddr() = default;
  constexpr explicit PhysAddr(u64 v) : value(v) {}
  auto operator<=>(const PhysAddr&) const = default;
};

/// A randomization region: [start, end) carved into equal power-of-two
/// subregions. The protected mask marks the address bits that select the
/// subregion index; those bits never reach any address-indexed hardware
/// structure.
struct RandRegion {
  int region_id = 0;
  VirtAddr start;
  VirtAddr end;
  u64 subregion_len = 0;
  u64 protected_mask = 0;

  u64 span() const { return end.value - start.value; }
  u64 subregion_count() const { return span() / subregion_len; }
  unsigned mask_low_bit() const { return lowest_set_bit(protected_mask); }
  unsigned mask_bits() const { return popcount64(protected_mask); }

  bool contains(VirtAddr v) const {
    return v.value >= start.value && v.value < end.value;
  }
};

/// Validates and builds a region. The mask defaults to exactly the bits that
/// select the subregion index, i.e. a contiguous field starting at
/// log2(subregion_len); an explicit mask may widen the field upward (the
/// kernel presets protect a full 8-bit range over a 111-subregion span).
inline RandRegion make_region(int region_id, u64 start, u64 end,
                              u64 subregion_len, u64 protected_mask = 0) {
  if (end <= start) throw ConfigError("region end must be above start");
  if (!is_pow2(subregion_len))
    throw ConfigError("subregion length must be a power of two");
  u64 span = end - start;
  if (span % subregion_len != 0)
    throw ConfigError("region span must be a multiple of the subregion length");
  unsigned low = log2_exact(subregion_len);
  u64 n = span / subregion_len;
  unsigned index_bits = n == 1 ? 1 : floor_log2(n - 1) + 1;
  if (protected_mask == 0) {
    protected_mask = ((index_bits >= 64 ? ~0ULL : ((1ULL << index_bits) - 1)))
                     << low;
  }
  if (lowest_set_bit(protected_mask) != low)
    throw ConfigError("protected mask must start at log2(subregion_len)");
  unsigned width = highest_set_bit(protected_mask) - low + 1;
  if (popcount64(protected_mask) != width)
    throw ConfigError("protected mask must be a contiguous bit field");
  if (width < index_bits)
    throw ConfigError("protected mask too narrow for the subregion count");
  if (width < 64 - low && (start % (1ULL << (low + width))) != 0)
    throw ConfigError("region start must be aligned above the protected mask");
  RandRegion r;
  r.region_id = region_id;
  r.start = VirtAddr(start);
  r.end = VirtAddr(end);
  r.subregion_len = subregion_len;
  r.protected_mask = protected_mask;
  return r;
}

/// Checks pairwise disjointness; call once at configuration load.
inline void validate_regions(std::span<const RandRegion> regions) {
  for (size_t i = 0; i < regions.size(); ++i)
    for (size_t j = i + 1; j < regions.size(); ++j) {
      const auto& a = regions[i];
      const auto& b = regions[j];
      if (a.start.value < b.end.value && b.start.value < a.end.value)
        throw ConfigError("randomization regions overlap");
    }
}

/// Returns the unique region containing v, or nullptr. Total: never throws.
inline const RandRegion* classify(VirtAddr v,
                                  std::span<const RandRegion> regions) {
  for (const auto& r : regions)
    if (r.contains(v)) return &r;
  return nullptr;
}

/// Formula route: ((v - start) mod len) + start. Kept alongside the mask
/// route and cross-checked in tests; the mask route is the production path.
inline MaskedAddr virt2mask_formula(VirtAddr v, const RandRegion& r) {
  return MaskedAddr(((v.value - r.start.value) % r.subregion_len) +
                    r.start.value);
}

/// Mask route: clear the protected bits with a single AND.
inline MaskedAddr virt2mask(VirtAddr v, const RandRegion& r) {
  return MaskedAddr(v.value & ~r.protected_mask);
}

/// Addresses outside every region pass through unchanged.
inline MaskedAddr virt2mask(VirtAddr v, std::span<const RandRegion> regions) {
  const RandRegion* r = classify(v, regions);
  if (r == nullptr) return MaskedAddr(v.value);
  return virt2mask(v, *r);
}

/// The protected bits of v, in place: v == masked(v) + oblivious(v).
inline u64 extract_oblivious_bits(VirtAddr v, const RandRegion& r) {
  if (!r.contains(v))
    throw ConfigError("extract_oblivious_bits: address outside region");
  return v.value & r.protected_mask;
}

/// Restores a valid virtual address from a masked one: offset + w. The offset
/// must lie entirely within the containing region's protected mask; offset 0
/// is the identity for any address.
inline VirtAddr mask2valid(MaskedAddr w, u64 offset,
                           std::span<const RandRegion> regions) {
  if (offset == 0) return VirtAddr(w.value);
  const RandRegion* r = classify(VirtAddr(w.value), regions);
  if (r == nullptr)
    throw ConfigError("mask2valid: nonzero offset for an unregioned address");
  if ((offset & ~r->protected_mask) != 0)
    throw ConfigError("mask2valid: offset has bits outside the protected mask");
  return VirtAddr(offset + w.value);
}

inline VirtAddr mask2valid(MaskedAddr w, u64 offset, const RandRegion& r) {
  if ((offset & ~r.protected_mask) != 0)
    throw ConfigError("mask2valid: offset has bits outside the protected mask");
  return VirtAddr(offset + w.value);
}

/// True when v is canonical for the given width (sign-extended upper bits).
inline bool is_canonical(VirtAddr v, unsigned width = 48) {
  u64 upper = v.value >> (width - 1);
  u64 all = (~0ULL) >> (width - 1);
  return upper == 0 || upper == all;
}

/// Canonicality with protected-bit forgiveness: bits above the canonical
/// width are allowed where a containing region designates them protected
/// (the user-space scheme places the mask in the non-canonical range).
inline bool is_valid_virt(VirtAddr v, std::span<const RandRegion> regions,
                          unsigned width = 48) {
  if (is_canonical(v, width)) return true;
  const RandRegion* r = classify(v, regions);
  if (r == nullptr) return false;
  return is_canonical(VirtAddr(v.value & ~r->protected_mask), width);
}

// ---------------------------------------------------------------------------
// Bits-selection strategies and their entropy arithmetic.

enum class BitsVariant {
  DefaultBaseline,
  NaiveMasked,
  EnhancedBaseline,
  EnhancedMasked,
};

inline const char* to_string(BitsVariant v) {
  switch (v) {
    case BitsVariant::DefaultBaseline: return "default_baseline";
    case BitsVariant::NaiveMasked: return "naive_masked";
    case BitsVariant::EnhancedBaseline: return "enhanced_baseline";
    case BitsVariant::EnhancedMasked: return "enhanced_masked";
  }
  return "?";
}

/// k: unrandomized low bits; n: default-ASLR randomized bits; m: the high
/// extra bits (protected in the masked variants, merely randomized in the
/// enhanced baseline, absent in the default baseline).
struct BitsStrategy {
  BitsVariant variant = BitsVariant::DefaultBaseline;
  unsigned k = 12;
  unsigned n = 0;
  unsigned m = 0;
  u64 valid_region_size = 0;  // for the naive-variant subregion constraint

  unsigned protected_bits() const {
    return variant == BitsVariant::NaiveMasked ||
                   variant == BitsVariant::EnhancedMasked
               ? m
               : 0;
  }
};

inline BitsStrategy make_strategy(BitsVariant variant, unsigned k, unsigned n,
                                  unsigned m, u64 valid_region_size = 0) {
  if (k < 12) throw ConfigError("strategy: k below the page-granularity floor");
  if (variant == BitsVariant::DefaultBaseline && m != 0)
    throw ConfigError("strategy: the default baseline takes m = 0");
  if (variant == BitsVariant::NaiveMasked) {
    if (m > n) throw ConfigError("strategy: naive variant requires m <= n");
    if (valid_region_size != 0 && k + n - m < 63 &&
        (1ULL << (k + n - m)) < valid_region_size)
      throw ConfigError("strategy: subregion too small for the valid region");
  }
  BitsStrategy s;
  s.variant = variant;
  s.k = k;
  s.n = n;
  s.m = m;
  s.valid_region_size = valid_region_size;
  return s;
}

/// Entropy in bits against locating gadgets, before and after a
/// leakage-path-1/2 bypass. Columns follow the strategy comparison table.
struct EntropyReport {
  BitsVariant variant;
  unsigned original_code_reuse = 0;
  unsigned original_speculative = 0;
  unsigned remaining_code_reuse = 0;
  unsigned remaining_speculative = 0;
  // Position-count view of the protected field, reported alongside the
  // nominal bit count when the region admits fewer offsets than the field
  // encodes (e.g. 111 two-gigabyte slots under an 8-bit field).
  unsigned nominal_protected_bits = 0;
  std::optional<u64> offset_positions;
  std::optional<unsigned> position_limited_bits;
};

inline EntropyReport entropy_report(const BitsStrategy& s) {
  EntropyReport r;
  r.variant = s.variant;
  r.nominal_protected_bits = s.protected_bits();
  switch (s.variant) {
    case BitsVariant::DefaultBaseline:
      r.original_code_reuse = s.n;
      r.original_speculative = s.n;
      r.remaining_code_reuse = 0;
      r.remaining_speculative = 0;
      break;
    case BitsVariant::NaiveMasked:
      r.original_code_reuse = s.n;
      r.original_speculative = s.n - s.m;
      r.remaining_code_reuse = s.m;
      r.remaining_speculative = 0;
      break;
    case BitsVariant::EnhancedBaseline:
      r.original_code_reuse = s.m + s.n;
      r.original_speculative = s.n;
      r.remaining_code_reuse = 0;
      r.remaining_speculative = 0;
      break;
    case BitsVariant::EnhancedMasked:
      r.original_code_reuse = s.m + s.n;
      r.original_speculative = s.n;
      r.remaining_code_reuse = s.m;
      r.remaining_speculative = 0;
      break;
  }
  return r;
}

/// Preset-aware variant: also reports how many offset positions the region
/// actually admits.
inline EntropyReport entropy_report(const BitsStrategy& s,
                                    const RandRegion& region) {
  EntropyReport r = entropy_report(s);
  u64 positions = region.subregion_count();
  r.offset_positions = positions;
  r.position_limited_bits = floor_log2(positions);
  return r;
}

// ---------------------------------------------------------------------------
// Storage-cost arithmetic for the hardware changes.

struct CoreSizing {
  u64 tlb_entries = 584;
  u64 rob_entries = 128;
  u64 lsq_entries = 64;
  u64 num_regions = 2;
  u64 offset_bits = 8;
};

struct CostReport {
  u64 tlb_extra_bytes = 0;
  u64 rob_lsq_extra_bytes = 0;
  u64 region_metadata_bytes = 0;
  u64 archpc_bytes = 0;
  u64 total_in_core_bytes = 0;
  u64 total_memory_system_bytes = 0;
};

/// Per TLB entry: offset_bits. Per ROB entry: offset_bits for the PC check.
/// Per LSQ entry: offset_bits plus one precomputed check bit. Per region:
/// 128 bits of boundary plus a 64-bit protected-bit vector. One 64-bit
/// commit-stage PC register.
inline CostReport cost_report(const CoreSizing& c) {
  if (c.tlb_entries == 0 || c.rob_entries == 0 || c.lsq_entries == 0 ||
      c.num_regions == 0 || c.offset_bits == 0)
    throw ConfigError("cost_report: all counts must be positive");
  CostReport r;
  r.tlb_extra_bytes = c.tlb_entries * c.offset_bits / 8;
  r.rob_lsq_extra_bytes =
      (c.rob_entries * c.offset_bits + c.lsq_entries * (c.offset_bits + 1)) / 8;
  r.region_metadata_bytes = c.num_regions * (128 + 64) / 8;
  r.archpc_bytes = 8;
  r.total_in_core_bytes =
      r.rob_lsq_extra_bytes + r.region_metadata_bytes + r.archpc_bytes;
  r.total_memory_system_bytes = r.tlb_extra_bytes;
  return r;
}

// ---------------------------------------------------------------------------
// Presets mirroring the Linux configurations.

struct RegionPreset {
  std::string name;
  RandRegion region;
  BitsStrategy strategy;
  bool shares_offset_with_kernel_text = false;
};

/// kernel_text: default ASLR randomizes bits 21-29 (9 bits); the enhanced
/// scheme additionally randomizes and protects bits 31-38 over a 222 GB
/// slice of the unused kernel region (111 offsets of 2 GB).
inline RegionPreset kernel_text_preset() {
  RegionPreset p;
  p.name = "kernel_text";
  p.region = make_region(0, 0xffffff8000000000ULL,
                         0xffffff8000000000ULL + 111ULL * (1ULL << 31),
                         1ULL << 31, 0xFFULL << 31);
  p.strategy = make_strategy(BitsVariant::EnhancedMasked, 21, 9, 8);
  return p;
}

/// kernel_modules: bits 12-29 randomized with 1024 admissible offsets
/// (10 bits); protected bits 31-38 shared with kernel_text.
inline RegionPreset kernel_modules_preset() {
  RegionPreset p;
  p.name = "kernel_modules";
  p.region = make_region(1, 0xffffff0000000000ULL,
                         0xffffff0000000000ULL + 111ULL * (1ULL << 31),
                         1ULL << 31, 0xFFULL << 31);
  p.strategy = make_strategy(BitsVariant::EnhancedMasked, 12, 10, 8);
  p.shares_offset_with_kernel_text = true;
  return p;
}

/// user_space: protected bits 48-52 (the non-canonical range under 4-level
/// paging), 5 bits to match user leaf PTE capacity; default user ASLR keeps
/// its 28 bits.
inline RegionPreset user_space_preset() {
  RegionPreset p;
  p.name = "user_space";
  p.region = make_region(2, 0, 1ULL << 53, 1ULL << 48, 0x1FULL << 48);
  p.strategy = make_strategy(BitsVariant::EnhancedMasked, 12, 28, 5);
  return p;
}

inline RegionPreset region_preset(const std::string& name) {
  if (name == "kernel_text") return kernel_text_preset();
  if (name == "kernel_modules") return kernel_modules_preset();
  if (name == "user_space") return user_space_preset();
  throw ConfigError("unknown region preset: " + name);
}

}  // namespace masksim
