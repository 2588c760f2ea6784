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

#include <deque>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "masksim/common.hpp"
#include "masksim/layout.hpp"

namespace masksim {

// ---------------------------------------------------------------------------
// Structure-input trace logging. Every update on an address-indexed structure
// emits one event; the per-structure streams are what the trace-diff tooling
// compares.

enum class Structure { BP, TLB, Cache, MMU };

inline const char* to_string(Structure s) {
  switch (s) {
    case Structure::BP: return "BP";
    case Structure::TLB: return "TLB";
    case Structure::Cache: return "Cache";
    case Structure::MMU: return "MMU";
  }
  return "?";
}

struct TraceEvent {
  u64 step = 0;
  Structure structure = Structure::BP;
  std::string input;            // rendered input tuple, stable field order
  std::vector<u64> addr_fields; // address-typed inputs, for leakage scans

  std::string line() const {
    std::ostringstream out;
    out << step << ' ' << to_string(structure) << ' ' << input;
    return out.str();
  }
};

/// Collects events for one run; the machine stamps the current step.
class TraceLog {
 public:
  u64 step = 0;
  std::vector<TraceEvent> events;

  void emit(Structure s, std::string input, std::vector<u64> addrs = {}) {
    events.push_back(TraceEvent{step, s, std::move(input), std::move(addrs)});
  }

  std::string render() const {
    std::string out;
    for (const auto& e : events) {
      out += e.line();
      out += '\n';
    }
    return out;
  }
};

/// Splits rendered trace lines by structure and counts positionwise
/// deviations (plus any length difference) per structure. The structure tag
/// is the second whitespace-separated field of each line.
inline std::map<std::string, u64> diff_trace_lines(
    const std::vector<std::string>& a, const std::vector<std::string>& b) {
  auto group = [](const std::vector<std::string>& lines) {
    std::map<std::string, std::vector<std::string>> by;
    for (const auto& line : lines) {
      size_t s1 = line.find(' ');
      if (s1 == std::string::npos) continue;
      size_t s2 = line.find(' ', s1 + 1);
      std::string tag = line.substr(s1 + 1, s2 - s1 - 1);
      by[tag].push_back(line);
    }
    return by;
  };
  auto ga = group(a);
  auto gb = group(b);
  std::map<std::string, u64> counts;
  for (const auto* g : {&ga, &gb})
    for (const auto& [tag, lines] : *g) counts.emplace(tag, 0);
  for (auto& [tag, count] : counts) {
    const auto& la = ga[tag];
    const auto& lb = gb[tag];
    size_t n = std::min(la.size(), lb.size());
    for (size_t i = 0; i < n; ++i)
      if (la[i] != lb[i]) ++count;
    count += std::max(la.size(), lb.size()) - n;
  }
  return counts;
}

inline std::vector<std::string> trace_lines(const TraceLog& log) {
  std::vector<std::string> out;
  out.reserve(log.events.size());
  for (const auto& e : log.events) out.push_back(e.line());
  return out;
}

// ---------------------------------------------------------------------------

/// Cycle costs. Only the orderings matter for the attacks; defaults are
/// well-separated.
struct LatencyTable {
  u64 tlb_hit = 1;
  u64 ptw_level = 20;
  u64 l1_hit = 4;
  u64 l2_hit = 14;
  u64 dram = 120;
  u64 btb_hit = 1;
  u64 btb_miss = 12;
  u64 fault_delivery = 300;
  u64 forward = 2;

  void validate() const {
    if (!tlb_hit || !ptw_level || !l1_hit || !l2_hit || !dram || !btb_hit ||
        !btb_miss || !fault_delivery || !forward)
      throw ConfigError("latency table entries must be positive");
    if (!(dram > l2_hit && l2_hit > l1_hit))
      throw ConfigError("latency table must order DRAM > L2 > L1");
  }
};

// ---------------------------------------------------------------------------
// TLB: set-associative, true LRU, keyed by the lookup page number (virtual in
// baseline mode, masked otherwise). The stored offset field is commit-check
// payload: it is excluded from the adversary observation.

struct TlbEntry {
  bool valid = false;
  u64 tag = 0;  // full key page number
  u64 ppn = 0;
  Perms perms;
  u32 offset_field = 0;
  u64 lru = 0;  // 0 = most recent
};

struct TlbResult {
  bool hit = false;
  u64 ppn = 0;
  Perms perms;
  u32 offset_field = 0;
};

class Tlb {
 public:
  Tlb(u64 entries = 64, u64 ways = 4)
      : ways_(ways), sets_(entries / ways),
        entries_(entries, TlbEntry{}) {
    if (entries % ways != 0 || !is_pow2(sets_))
      throw ConfigError("TLB geometry: sets must be a power of two");
  }

  TlbResult access(u64 key_page, TraceLog* log) {
    u64 set = key_page & (sets_ - 1);
    TlbResult r;
    for (u64 w = 0; w < ways_; ++w) {
      TlbEntry& e = at(set, w);
      if (e.valid && e.tag == key_page) {
        r.hit = true;
        r.ppn = e.ppn;
        r.perms = e.perms;
        r.offset_field = e.offset_field;
        promote(set, w, e.lru);
        break;
      }
    }
    if (log)
      log->emit(Structure::TLB,
                "acc key=" + to_hex(key_page << kPageShift) +
                    " hit=" + (r.hit ? "1" : "0"),
                {key_page << kPageShift});
    return r;
  }

  /// Insert after a successful translation; never called on a failed one.
  void fill(u64 key_page, u64 ppn, Perms perms, u32 offset_field,
            TraceLog* log) {
    u64 set = key_page & (sets_ - 1);
    u64 victim = ways_;
    for (u64 w = 0; w < ways_; ++w) {
      if (at(set, w).valid && at(set, w).tag == key_page) {
        victim = w;  // refresh: at most one entry per tag
        break;
      }
    }
    if (victim == ways_) {
      u64 worst = 0;
      for (u64 w = 0; w < ways_; ++w) {
        TlbEntry& e = at(set, w);
        if (!e.valid) {
          victim = w;
          break;
        }
        if (e.lru >= worst) {
          worst = e.lru;
          victim = w;
        }
      }
    }
    TlbEntry& e = at(set, victim);
    bool was_valid = e.valid;
    u64 old_rank = e.lru;
    e.valid = true;
    e.tag = key_page;
    e.ppn = ppn;
    e.perms = perms;
    e.offset_field = offset_field;
    promote(set, victim, was_valid ? old_rank : ~0ULL);
    if (log)
      log->emit(Structure::TLB,
                "fill key=" + to_hex(key_page << kPageShift) +
                    " ppn=" + to_hex(ppn),
                {key_page << kPageShift});
  }

  void serialize(std::ostringstream& out) const {
    out << "TLB";
    for (u64 s = 0; s < sets_; ++s)
      for (u64 w = 0; w < ways_; ++w) {
        const TlbEntry& e = entries_[s * ways_ + w];
        if (!e.valid) continue;
        out << '|' << s << ',' << w << ',' << to_hex(e.tag) << ','
            << to_hex(e.ppn) << ',' << e.perms.read << e.perms.write
            << e.perms.execute << e.perms.privileged << ',' << e.lru;
        // offset_field intentionally omitted: commit-check payload.
      }
    out << ';';
  }

  u64 sets() const { return sets_; }
  u64 ways() const { return ways_; }

 private:
  TlbEntry& at(u64 set, u64 way) { return entries_[set * ways_ + way]; }

  // True-LRU rank maintenance: entries younger than the promoted one age by
  // one; the promoted entry becomes rank 0.
  void promote(u64 set, u64 way, u64 old_rank) {
    for (u64 w = 0; w < ways_; ++w) {
      TlbEntry& e = at(set, w);
      if (w != way && e.valid && e.lru < old_rank) ++e.lru;
    }
    at(set, way).lru = 0;
  }

  u64 ways_;
  u64 sets_;
  std::vector<TlbEntry> entries_;
};

// ---------------------------------------------------------------------------
// Cache metadata: three independent levels of sets x ways {tag, lru}, tags
// derived from physical line addresses only. No data words.

enum class CacheLevel { L1I, L1D, L2 };

struct CacheGeometry {
  u64 line_bytes = 64;
  u64 l1_sets = 128, l1_ways = 8;   // 64 KB
  u64 l2_sets = 2048, l2_ways = 16; // 2 MB
};

struct CacheTouch {
  bool l1_hit = false;
  bool l2_hit = false;
  u64 latency = 0;
};

class CacheMeta {
 public:
  explicit CacheMeta(CacheGeometry g = {}) : geom_(g) {
    if (!is_pow2(g.l1_sets) || !is_pow2(g.l2_sets) || !is_pow2(g.line_bytes))
      throw ConfigError("cache geometry must use power-of-two sets and lines");
    l1i_.assign(g.l1_sets * g.l1_ways, Line{});
    l1d_.assign(g.l1_sets * g.l1_ways, Line{});
    l2_.assign(g.l2_sets * g.l2_ways, Line{});
  }

  /// Touches one physical line through the given L1 side. An L1 hit stops
  /// there; a miss consults and fills L2, then fills L1, both true LRU.
  /// Returns per-level hits and the access latency from the table.
  CacheTouch touch(CacheLevel l1_side, u64 paddr, const LatencyTable& lat,
                   TraceLog* log) {
    u64 line = paddr / geom_.line_bytes;
    CacheTouch r;
    auto& l1 = l1_side == CacheLevel::L1I ? l1i_ : l1d_;
    r.l1_hit = probe_fill(l1, geom_.l1_sets, geom_.l1_ways, line);
    if (r.l1_hit) {
      r.latency = lat.l1_hit;
    } else {
      r.l2_hit = probe_fill(l2_, geom_.l2_sets, geom_.l2_ways, line);
      r.latency = r.l2_hit ? lat.l2_hit : lat.dram;
    }
    if (log)
      log->emit(Structure::Cache,
                std::string("touch ") +
                    (l1_side == CacheLevel::L1I ? "l1i" : "l1d") +
                    " line=" + to_hex(line * geom_.line_bytes) +
                    " l1=" + (r.l1_hit ? "1" : "0") +
                    " l2=" + (r.l2_hit ? "1" : "0"),
                {line * geom_.line_bytes});
    return r;
  }

  /// Whether the line currently resides in the given L1 side (no update).
  bool peek_l1(CacheLevel l1_side, u64 paddr) const {
    u64 line = paddr / geom_.line_bytes;
    const auto& l1 = l1_side == CacheLevel::L1I ? l1i_ : l1d_;
    u64 set = line & (geom_.l1_sets - 1);
    for (u64 w = 0; w < geom_.l1_ways; ++w) {
      const Line& e = l1[set * geom_.l1_ways + w];
      if (e.valid && e.tag == line) return true;
    }
    return false;
  }

  void serialize(std::ostringstream& out) const {
    out << "Cache";
    dump(out, l1i_, geom_.l1_sets, geom_.l1_ways);
    out << '/';
    dump(out, l1d_, geom_.l1_sets, geom_.l1_ways);
    out << '/';
    dump(out, l2_, geom_.l2_sets, geom_.l2_ways);
    out << ';';
  }

  const CacheGeometry& geometry() const { return geom_; }

 private:
  struct Line {
    bool valid = false;
    u64 tag = 0;
    u64 lru = 0;
  };

  // Ensures the line is present and most recent in its set; true on hit.
  bool probe_fill(std::vector<Line>& lines, u64 sets, u64 ways, u64 line) {
    u64 set = line & (sets - 1);
    u64 victim = ways;
    bool hit = false;
    for (u64 w = 0; w < ways; ++w) {
      Line& e = lines[set * ways + w];
      if (e.valid && e.tag == line) {
        victim = w;
        hit = true;
        break;
      }
    }
    if (!hit) {
      u64 worst = 0;
      for (u64 w = 0; w < ways; ++w) {
        Line& e = lines[set * ways + w];
        if (!e.valid) {
          victim = w;
          break;
        }
        if (e.lru >= worst) {
          worst = e.lru;
          victim = w;
        }
      }
    }
    Line& v = lines[set * ways + victim];
    u64 old_rank = hit ? v.lru : ~0ULL;
    for (u64 w = 0; w < ways; ++w) {
      Line& e = lines[set * ways + w];
      if (w != victim && e.valid && e.lru < old_rank) ++e.lru;
    }
    v.valid = true;
    v.tag = line;
    v.lru = 0;
    return hit;
  }

  void dump(std::ostringstream& out, const std::vector<Line>& lines, u64 sets,
            u64 ways) const {
    for (u64 s = 0; s < sets; ++s)
      for (u64 w = 0; w < ways; ++w) {
        const Line& e = lines[s * ways + w];
        if (!e.valid) continue;
        out << '|' << s << ',' << w << ',' << to_hex(e.tag) << ',' << e.lru;
      }
  }

  CacheGeometry geom_;
  std::vector<Line> l1i_, l1d_, l2_;
};

// ---------------------------------------------------------------------------
// Branch prediction: a direct-mapped BTB keyed by the source address plus a
// last-taken direction table. Keys and targets are masked addresses in
// masked mode.

class BranchPred {
 public:
  explicit BranchPred(u64 btb_entries = 4096)
      : entries_(btb_entries, BtbEntry{}), dir_(1024, 0) {
    if (!is_pow2(btb_entries))
      throw ConfigError("BTB entries must be a power of two");
  }

  std::optional<u64> predict_target(u64 src_key) const {
    const BtbEntry& e = entries_[slot(src_key)];
    if (e.valid && e.tag == src_key) return e.target;
    return std::nullopt;
  }

  void update(u64 target_key, u64 src_key, TraceLog* log) {
    BtbEntry& e = entries_[slot(src_key)];
    e.valid = true;
    e.tag = src_key;
    e.target = target_key;
    if (log)
      log->emit(Structure::BP,
                "upd src=" + to_hex(src_key) + " tgt=" + to_hex(target_key),
                {src_key, target_key});
  }

  bool predict_taken(u64 src_key) const {
    return dir_[dir_slot(src_key)] != 0;
  }

  void train_direction(u64 src_key, bool taken, TraceLog* log) {
    dir_[dir_slot(src_key)] = taken ? 1 : 0;
    if (log)
      log->emit(Structure::BP,
                "dir src=" + to_hex(src_key) +
                    " taken=" + (taken ? "1" : "0"),
                {src_key});
  }

  u64 slot(u64 src_key) const { return (src_key >> 3) & (entries_.size() - 1); }

  void serialize(std::ostringstream& out) const {
    out << "BP";
    for (u64 i = 0; i < entries_.size(); ++i) {
      const BtbEntry& e = entries_[i];
      if (!e.valid) continue;
      out << '|' << i << ',' << to_hex(e.tag) << ',' << to_hex(e.target);
    }
    out << '/';
    for (u64 i = 0; i < dir_.size(); ++i)
      if (dir_[i]) out << '|' << i;
    out << ';';
  }

 private:
  struct BtbEntry {
    bool valid = false;
    u64 tag = 0;
    u64 target = 0;
  };

  u64 dir_slot(u64 src_key) const { return (src_key >> 3) & (dir_.size() - 1); }

  std::vector<BtbEntry> entries_;
  std::vector<u32> dir_;
};

// ---------------------------------------------------------------------------
// LSQ: the address-input residue of load/store issue. A bounded FIFO of
// records; squashes leave it untouched. The extracted bits and the
// precomputed check flag ride along for the commit stage and are excluded
// from the observation.

enum class LsqKind { Load, Store };

struct LsqRecord {
  LsqKind kind = LsqKind::Load;
  u64 key = 0;
  std::optional<u64> ppn;
  u64 extracted_bits = 0;             // masked mode only
  std::optional<bool> precheck_ok;    // masked mode only

  bool operator==(const LsqRecord&) const = default;
};

class LsqState {
 public:
  explicit LsqState(u64 capacity = 64) : capacity_(capacity) {}

  void record(LsqRecord r) {
    records_.push_back(std::move(r));
    if (records_.size() > capacity_) records_.pop_front();
  }

  void serialize(std::ostringstream& out) const {
    out << "LSQ";
    for (const auto& r : records_) {
      out << '|' << (r.kind == LsqKind::Load ? 'l' : 's') << ','
          << to_hex(r.key) << ','
          << (r.ppn ? to_hex(*r.ppn) : std::string("-"));
      // extracted_bits / precheck_ok intentionally omitted.
    }
    out << ';';
  }

  const std::deque<LsqRecord>& records() const { return records_; }

 private:
  u64 capacity_;
  std::deque<LsqRecord> records_;
};

// ---------------------------------------------------------------------------

/// The adversary-visible microarchitecture bundle.
struct Uarch {
  BranchPred bp;
  LsqState lsq;
  CacheMeta cache;
  Tlb tlb;

  Uarch() = default;
  Uarch(u64 btb_entries, u64 lsq_capacity, CacheGeometry cache_geom,
        u64 tlb_entries, u64 tlb_ways)
      : bp(btb_entries), lsq(lsq_capacity), cache(cache_geom),
        tlb(tlb_entries, tlb_ways) {}
};

/// Obs(S): a canonical serialization of (BP, LSQ, Cache, TLB). Two
/// structurally identical states serialize identically; data values and the
/// commit-check payload are excluded.
struct Observation {
  std::string blob;
  bool operator==(const Observation&) const = default;
};

inline Observation observe(const Uarch& u) {
  std::ostringstream out;
  u.bp.serialize(out);
  u.lsq.serialize(out);
  u.cache.serialize(out);
  u.tlb.serialize(out);
  return Observation{out.str()};
}

}  // namespace masksim
