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

#include <array>
#include <deque>
#include <optional>
#include <vector>

#include "masksim/addr.hpp"
#include "masksim/common.hpp"
#include "masksim/layout.hpp"
#include "masksim/memtable.hpp"
#include "masksim/program.hpp"
#include "masksim/uarch.hpp"

namespace masksim {

// ---------------------------------------------------------------------------
// Requests: the per-step emission of the core. Addresses are the core's
// architectural values; the execution rules mask them before any structure
// sees them. Check requests exist only in masked mode and carry the
// commit-stage PC being validated.

enum class ReqKind { None, Fetch, Load, Store, Check };

inline const char* to_string(ReqKind k) {
  switch (k) {
    case ReqKind::None: return "none";
    case ReqKind::Fetch: return "fetch";
    case ReqKind::Load: return "load";
    case ReqKind::Store: return "store";
    case ReqKind::Check: return "check";
  }
  return "?";
}

struct Request {
  ReqKind kind = ReqKind::None;
  u64 v = 0;      // target address (fetch/load/store/check)
  u64 v_src = 0;  // fetch only: branch source / previous pc
  u64 data = 0;   // store only

  bool operator==(const Request&) const = default;
};

enum class TerminalStatus { Halted, Crashed, Budget };

inline const char* to_string(TerminalStatus s) {
  switch (s) {
    case TerminalStatus::Halted: return "halted";
    case TerminalStatus::Crashed: return "crashed";
    case TerminalStatus::Budget: return "budget";
  }
  return "?";
}

struct RunTrace {
  std::vector<Request> requests;
  std::vector<Observation> observations;  // length = steps + 1
  std::vector<u64> cycle_timeline;        // cycle counter after each step
  TraceLog trace;                         // per-structure input events
  TerminalStatus status = TerminalStatus::Budget;
  u64 crash_step = 0;  // meaningful when status == Crashed
  u64 steps = 0;
  u64 cycles = 0;
  u64 committed = 0;

  /// Latency of step k alone.
  u64 step_cycles(u64 k) const {
    return cycle_timeline[k] - (k == 0 ? 0 : cycle_timeline[k - 1]);
  }
};

enum class Fault {
  None,
  FetchTranslate,  // could not supply the next instruction
  LoadTranslate,
  StoreTranslate,
  Perms,
  AddrCheck,  // masked-mode oblivious-bits check failed
};

inline const char* to_string(Fault f) {
  switch (f) {
    case Fault::None: return "none";
    case Fault::FetchTranslate: return "fetch-translate";
    case Fault::LoadTranslate: return "load-translate";
    case Fault::StoreTranslate: return "store-translate";
    case Fault::Perms: return "perms";
    case Fault::AddrCheck: return "addr-check";
  }
  return "?";
}

struct Preload {
  unsigned reg = 0;
  u64 value = 0;
};

struct MachineConfig {
  Mode mode = Mode::Baseline;
  bool privileged = false;
  LatencyTable latency;
  u64 speculation_window = 8;
  u64 btb_entries = 4096;
  u64 lsq_capacity = 64;
  u64 tlb_entries = 64;
  u64 tlb_ways = 4;
  CacheGeometry cache_geometry;
};

/// The simulated core plus its memory and microarchitecture. One machine per
/// run; microarchitecture state may be carried between phase machines by
/// value to model cross-domain residue.
class Machine {
 public:
  Machine(PhysMem mem, std::vector<Inst> inst_pool, VirtAddr entry,
          const MachineConfig& config, std::vector<Preload> preloads = {},
          std::optional<Uarch> carried_mu = std::nullopt)
      : mem_(std::move(mem)),
        pool_(std::move(inst_pool)),
        regions_(mem_.regions),
        cfg_(config),
        mu_(carried_mu ? std::move(*carried_mu)
                       : Uarch(config.btb_entries, config.lsq_capacity,
                               config.cache_geometry, config.tlb_entries,
                               config.tlb_ways)) {
    cfg_.latency.validate();
    if (mem_.mode != cfg_.mode)
      throw ConfigError("machine mode differs from the page-table mode");
    exec_regs_.fill(0);
    for (const auto& p : preloads) {
      if (p.reg >= kNumRegs) throw ConfigError("preload register out of range");
      exec_regs_[p.reg] = p.value;
    }
    arch_regs_ = exec_regs_;
    arch_pc_ = entry.value;
    spec_pc_ = key_of(entry.value);
    last_pc_key_ = spec_pc_;
    supply_page_ = spec_pc_ >> kPageShift;
    supply_ok_ = true;
    // Core initialization is layout-aware: the entry page's stored offset is
    // loaded with the rest of the architectural state, before the first
    // observation.
    if (cfg_.mode == Mode::Masked)
      supply_offset_ = offset_lookup(MaskedAddr(spec_pc_), mem_).value_or(0);
  }

  // --- one-step execution -------------------------------------------------

  /// Executes one step: exactly one request materializes and its rule is
  /// applied. Returns nothing when the machine crashes instead of stepping
  /// (failed commit check or fault delivery).
  std::optional<Request> step() {
    if (halted_ || crashed_) throw ConfigError("step on a terminal machine");

    if (pending_crash_) {
      crash(*pending_crash_);
      return std::nullopt;
    }

    // Commit stage first. Masked mode materializes one Check per committed
    // instruction; a failing check crashes without materializing.
    if (cfg_.mode == Mode::Masked && !rob_.empty() &&
        !rob_.front().speculative && !rob_.front().blocks_commit)
      return commit_masked();

    // Speculation resolution: the window closes when its budget is spent or
    // the predicted path cannot continue.
    if (spec_active_ && (spec_depth_ >= cfg_.speculation_window || blocked()))
      return resolve_mispredict();

    // Pending non-speculative supply failure: fault delivery.
    if (!supply_ok_ && (spec_pc_ >> kPageShift) == supply_page_) {
      crash(Fault::FetchTranslate);
      return std::nullopt;
    }

    std::optional<Request> req = issue();
    if (req && cfg_.mode == Mode::Baseline) retire_baseline();
    return req;
  }

  /// Steps until halt, crash, or budget exhaustion.
  RunTrace run(u64 budget) {
    RunTrace t;
    t.observations.push_back(observe(mu_));
    for (u64 s = 0; s < budget; ++s) {
      if (halted_ || crashed_) break;
      trace_.step = s;
      auto req = step();
      if (!req) break;  // crashed at step s
      t.requests.push_back(*req);
      t.cycle_timeline.push_back(cycles_);
      t.observations.push_back(observe(mu_));
    }
    if (halted_) {
      t.status = TerminalStatus::Halted;
    } else if (crashed_) {
      t.status = TerminalStatus::Crashed;
      t.crash_step = crash_step_;
    } else {
      t.status = TerminalStatus::Budget;
    }
    t.steps = t.requests.size();
    t.cycles = cycles_;
    t.committed = committed_;
    t.trace = std::move(trace_);
    trace_ = TraceLog{};
    trace_.step = t.steps;
    return t;
  }

  // --- inspection ----------------------------------------------------------

  const std::array<u64, kNumRegs>& arch_regs() const { return arch_regs_; }
  u64 arch_pc() const { return arch_pc_; }
  u64 fetch_pc() const { return spec_pc_; }
  u64 cycles() const { return cycles_; }
  u64 committed() const { return committed_; }
  bool halted() const { return halted_; }
  bool crashed() const { return crashed_; }
  Fault crash_fault() const { return crash_fault_; }
  const PhysMem& mem() const { return mem_; }
  const Uarch& mu() const { return mu_; }

  /// Moves the microarchitecture out, for the next phase of a shared-state
  /// schedule.
  Uarch release_mu() { return std::move(mu_); }
  PhysMem release_mem() { return std::move(mem_); }

 private:
  struct RobEntry {
    Inst inst;
    u64 pc_key = 0;
    u64 correct_offset = 0;  // widened stored offset for the pc's page
    bool speculative = false;
    bool blocks_commit = false;  // unresolved mispredicted branch
    Fault fault = Fault::None;
    bool writes_reg = false;
    unsigned dst = 0;
    u64 dst_value = 0;
    bool is_store = false;
    bool store_translated = false;
    PhysAddr store_phys;
    u64 store_value = 0;
    std::optional<bool> precheck_ok;
    bool is_halt = false;
    enum class Next { Seq, Taken, Indirect } next = Next::Seq;
    std::int64_t rel = 0;
    u64 indirect_target = 0;  // virtual
  };

  struct StoreQueueEntry {
    u64 key = 0;
    u64 data = 0;
    bool translated = false;
    u64 ppn = 0;
    u64 offset = 0;  // stored offset of the page (masked mode)
    bool speculative = false;
  };

  struct Translation {
    bool ok = false;
    PhysAddr phys;
    Perms perms;
    u64 offset = 0;  // widened
    u64 latency = 0;
  };

  u64 key_of(u64 v) const {
    return cfg_.mode == Mode::Masked ? virt2mask(VirtAddr(v), regions_).value
                                     : v;
  }

  void assert_masked(u64 key) const {
    if (cfg_.mode != Mode::Masked) return;
    const RandRegion* r = classify(VirtAddr(key), regions_);
    if (r != nullptr && (key & r->protected_mask) != 0)
      throw std::logic_error("masking discipline violated");
  }

  /// Address translation through TLB and page table walker, with the
  /// update discipline: a TLB hit skips the walk entirely; a miss touches
  /// every walked PTE line and fills the TLB only when the page is mapped.
  Translation translate(u64 lookup) {
    assert_masked(lookup);
    Translation t;
    u64 page = lookup >> kPageShift;
    TlbResult hit = mu_.tlb.access(page, &trace_);
    if (hit.hit) {
      t.ok = true;
      t.phys = PhysAddr((hit.ppn << kPageShift) | (lookup & (kPageSize - 1)));
      t.perms = hit.perms;
      t.offset = cfg_.mode == Mode::Masked
                     ? widen_offset(lookup, hit.offset_field)
                     : 0;
      t.latency = cfg_.latency.tlb_hit;
      return t;
    }
    WalkResult walk = mem_.walk(lookup);
    std::string ptes;
    for (const auto& a : walk.pte_addrs) {
      mu_.cache.touch(CacheLevel::L1D, a.value, cfg_.latency, &trace_);
      if (!ptes.empty()) ptes += ',';
      ptes += to_hex(a.value);
    }
    t.latency = walk.pte_addrs.size() * cfg_.latency.ptw_level;
    trace_.emit(Structure::MMU,
                "req=" + to_hex(lookup) + " ptw=[" + ptes + "] res=" +
                    (walk.leaf ? to_hex(walk.leaf->ppn) : std::string("-")),
                {lookup});
    if (!walk.leaf) return t;
    t.ok = true;
    t.phys = *walk.phys(lookup);
    t.perms = walk.leaf->perms;
    t.offset = cfg_.mode == Mode::Masked
                   ? widen_offset(lookup, walk.leaf->offset_field)
                   : 0;
    mu_.tlb.fill(page, walk.leaf->ppn, walk.leaf->perms,
                 walk.leaf->offset_field, &trace_);
    return t;
  }

  u64 widen_offset(u64 lookup, u32 field) const {
    const RandRegion* r = classify(VirtAddr(lookup), regions_);
    if (r == nullptr) return 0;
    return decode_offset_field(field, *r);
  }

  /// The instruction stored at a key-domain pc, resolved through a pure
  /// walk (the observable translation happened at the materialized fetch).
  const Inst* inst_at(u64 pc_key) const {
    auto phys = trans(pc_key, mem_);
    if (!phys) return nullptr;
    auto it = mem_.program.find(phys->value);
    if (it == mem_.program.end()) return nullptr;
    return &pool_[it->second];
  }

  /// Materialized fetch of a control-transfer target or of a sequential page
  /// crossing: updates BP, walks/updates TLB and cache, establishes supply.
  Request fetch_to(u64 target_key, u64 src_key, u64 request_v) {
    assert_masked(target_key);
    assert_masked(src_key);
    mu_.bp.update(target_key, src_key, &trace_);
    Translation t = translate(target_key);
    step_latency_ += t.latency;
    if (t.ok)
      step_latency_ +=
          mu_.cache.touch(CacheLevel::L1I, t.phys.value, cfg_.latency, &trace_)
              .latency;
    spec_pc_ = target_key;
    supply_page_ = target_key >> kPageShift;
    supply_offset_ = t.offset;
    supply_ok_ = t.ok && t.perms.execute && priv_ok(t.perms) &&
                 inst_at(target_key) != nullptr;
    Request r;
    r.kind = ReqKind::Fetch;
    r.v = request_v;
    r.v_src = src_key;
    return r;
  }

  bool priv_ok(const Perms& p) const {
    return !p.privileged || cfg_.privileged;
  }

  /// Whether the speculative path cannot issue its next instruction.
  bool blocked() const {
    if (!supply_ok_ && (spec_pc_ >> kPageShift) == supply_page_) return true;
    if ((spec_pc_ >> kPageShift) != supply_page_) return false;  // crossing ok
    const Inst* inst = inst_at(spec_pc_);
    if (inst == nullptr) return true;
    // One unresolved branch at a time; a halt never executes transiently.
    return inst->op == Op::CondBranch || inst->op == Op::Halt;
  }

  std::optional<Request> issue() {
    step_latency_ = 1;
    // Sequential supply crossing into a new page materializes a fetch.
    if ((spec_pc_ >> kPageShift) != supply_page_) {
      Request r = fetch_to(spec_pc_, last_pc_key_, spec_pc_);
      finish_step();
      return r;
    }
    const Inst* ip = inst_at(spec_pc_);
    if (ip == nullptr) {
      crash(Fault::FetchTranslate);
      return std::nullopt;
    }
    Inst inst = *ip;
    u64 pc_key = spec_pc_;
    last_pc_key_ = pc_key;

    RobEntry e;
    e.inst = inst;
    e.pc_key = pc_key;
    e.correct_offset = supply_offset_;
    e.speculative = spec_active_;
    if (spec_active_) ++spec_depth_;

    Request req;
    switch (inst.op) {
      case Op::Nop:
        spec_pc_ += kInstBytes;
        break;
      case Op::MovImm:
        e.writes_reg = true;
        e.dst = inst.a;
        e.dst_value = inst.imm;
        exec_regs_[inst.a] = inst.imm;
        spec_pc_ += kInstBytes;
        break;
      case Op::ReadTimer:
        cycles_ += step_latency_;
        step_latency_ = 0;
        e.writes_reg = true;
        e.dst = inst.a;
        e.dst_value = cycles_;
        exec_regs_[inst.a] = cycles_;
        spec_pc_ += kInstBytes;
        break;
      case Op::Halt:
        e.is_halt = true;
        break;  // nothing follows a halt; supply stalls here
      case Op::DirectBranch:
        e.next = RobEntry::Next::Taken;
        e.rel = inst.rel;
        req = fetch_to(pc_key + inst.rel, pc_key, pc_key + inst.rel);
        break;
      case Op::CondBranch: {
        bool actual = exec_regs_[inst.a] != 0;
        bool predicted = mu_.bp.predict_taken(pc_key);
        mu_.bp.train_direction(pc_key, actual, &trace_);
        e.next = actual ? RobEntry::Next::Taken : RobEntry::Next::Seq;
        e.rel = inst.rel;
        bool follow_taken = predicted;  // execution follows the prediction
        if (actual != predicted) {
          e.blocks_commit = true;
          begin_speculation(pc_key, actual, inst.rel);
        }
        if (follow_taken)
          req = fetch_to(pc_key + inst.rel, pc_key, pc_key + inst.rel);
        else
          spec_pc_ += kInstBytes;
        break;
      }
      case Op::IndirectJump: {
        u64 target_v = exec_regs_[inst.a];
        u64 target_key = key_of(target_v);
        auto predicted = mu_.bp.predict_target(pc_key);
        step_latency_ += (predicted && *predicted == target_key)
                             ? cfg_.latency.btb_hit
                             : cfg_.latency.btb_miss;
        e.next = RobEntry::Next::Indirect;
        e.indirect_target = target_v;
        req = fetch_to(target_key, pc_key, target_v);
        break;
      }
      case Op::Load:
      case Op::Prefetch: {
        unsigned addr_reg = inst.op == Op::Load ? inst.b : inst.a;
        u64 v = exec_regs_[addr_reg];
        req.kind = ReqKind::Load;
        req.v = v;
        mem_access(e, LsqKind::Load, v, 0, inst.op == Op::Prefetch);
        if (inst.op == Op::Load && e.fault == Fault::None) {
          e.writes_reg = true;
          e.dst = inst.a;
          e.dst_value = load_value_;
          exec_regs_[inst.a] = load_value_;
        }
        spec_pc_ += kInstBytes;
        break;
      }
      case Op::Store: {
        u64 v = exec_regs_[inst.a];
        u64 d = exec_regs_[inst.b];
        req.kind = ReqKind::Store;
        req.v = v;
        req.data = d;
        mem_access(e, LsqKind::Store, v, d, false);
        spec_pc_ += kInstBytes;
        break;
      }
    }
    rob_.push_back(e);
    finish_step();
    return req;
  }

  /// Load/store/prefetch issue: masking, forwarding, translation,
  /// permission checks, LSQ residue, masked-mode precheck.
  void mem_access(RobEntry& e, LsqKind kind, u64 v, u64 data,
                  bool is_prefetch) {
    u64 key = key_of(v);
    u64 extracted = 0;
    if (cfg_.mode == Mode::Masked) {
      const RandRegion* r = classify(VirtAddr(v), regions_);
      extracted = r ? extract_oblivious_bits(VirtAddr(v), *r) : 0;
    }
    // Store-to-load forwarding: the youngest in-flight store with the same
    // key, triggered only when that store's address translated.
    if (kind == LsqKind::Load && !is_prefetch) {
      for (auto it = store_queue_.rbegin(); it != store_queue_.rend(); ++it) {
        if (it->key != key) continue;
        if (!it->translated) break;  // unmapped store address: no forwarding
        step_latency_ = cfg_.latency.forward;
        load_value_ = it->data;
        std::optional<bool> precheck;
        if (cfg_.mode == Mode::Masked) precheck = extracted == it->offset;
        mu_.lsq.record({kind, key, it->ppn, extracted, precheck});
        e.precheck_ok = precheck;
        return;
      }
    }
    Translation t = translate(key);
    step_latency_ += t.latency;
    if (t.ok)
      step_latency_ +=
          mu_.cache.touch(CacheLevel::L1D, t.phys.value, cfg_.latency, &trace_)
              .latency;
    std::optional<bool> precheck;
    if (cfg_.mode == Mode::Masked && !is_prefetch)
      precheck = t.ok && extracted == t.offset;
    mu_.lsq.record({kind, key,
                    t.ok ? std::optional<u64>(t.phys.value >> kPageShift)
                         : std::nullopt,
                    extracted, precheck});
    e.precheck_ok = precheck;
    if (is_prefetch) return;  // never faults, never reads, retires freely

    if (!t.ok) {
      e.fault = kind == LsqKind::Load ? Fault::LoadTranslate
                                      : Fault::StoreTranslate;
    } else if (!priv_ok(t.perms) ||
               !(kind == LsqKind::Load ? t.perms.read : t.perms.write)) {
      e.fault = Fault::Perms;
    }
    if (kind == LsqKind::Load) {
      load_value_ = e.fault == Fault::None ? mem_.data_load(t.phys) : 0;
    } else {
      e.is_store = true;
      e.store_translated = e.fault == Fault::None;
      e.store_phys = t.phys;
      e.store_value = data;
      store_queue_.push_back({key, data, t.ok,
                              t.ok ? t.phys.value >> kPageShift : 0, t.offset,
                              spec_active_});
    }
  }

  void begin_speculation(u64 branch_pc_key, bool actual_taken,
                         std::int64_t rel) {
    spec_active_ = true;
    spec_depth_ = 0;
    snapshot_regs_ = exec_regs_;
    spec_branch_pc_key_ = branch_pc_key;
    spec_actual_taken_ = actual_taken;
    spec_rel_ = rel;
    spec_supply_page_ = supply_page_;
    spec_supply_offset_ = supply_offset_;
  }

  /// Window close: squash every speculative effect on the architectural
  /// side, keep every microarchitectural side effect, redirect to the
  /// correct path, charge the misprediction penalty.
  std::optional<Request> resolve_mispredict() {
    step_latency_ = cfg_.latency.btb_miss;
    exec_regs_ = snapshot_regs_;
    while (!rob_.empty() && rob_.back().speculative) rob_.pop_back();
    while (!store_queue_.empty() && store_queue_.back().speculative)
      store_queue_.pop_back();
    // The youngest surviving entry is the mispredicted branch.
    if (!rob_.empty() && rob_.back().blocks_commit)
      rob_.back().blocks_commit = false;
    spec_active_ = false;
    spec_depth_ = 0;
    Request out;
    if (spec_actual_taken_) {
      out = fetch_to(spec_branch_pc_key_ + spec_rel_, spec_branch_pc_key_,
                     spec_branch_pc_key_ + spec_rel_);
    } else {
      spec_pc_ = spec_branch_pc_key_ + kInstBytes;
      supply_page_ = spec_supply_page_;
      supply_offset_ = spec_supply_offset_;
      supply_ok_ = true;
      last_pc_key_ = spec_branch_pc_key_;
    }
    finish_step();
    if (cfg_.mode == Mode::Baseline) retire_baseline();
    return out;
  }

  /// Masked-mode commit: one Check request per committed instruction.
  /// Other exceptions take priority over the oblivious-bits check; a failing
  /// commit crashes without materializing a step.
  std::optional<Request> commit_masked() {
    RobEntry& e = rob_.front();
    u64 check_v = arch_pc_;
    if (e.fault != Fault::None) {
      crash(e.fault);
      return std::nullopt;
    }
    const RandRegion* r = classify(VirtAddr(arch_pc_), regions_);
    u64 extracted = r ? extract_oblivious_bits(VirtAddr(arch_pc_), *r) : 0;
    if (extracted != e.correct_offset) {
      crash(Fault::AddrCheck);
      return std::nullopt;
    }
    if (e.precheck_ok.has_value() && !*e.precheck_ok) {
      crash(Fault::AddrCheck);
      return std::nullopt;
    }
    step_latency_ = 1;
    retire(e);
    rob_.pop_front();
    finish_step();
    Request req;
    req.kind = ReqKind::Check;
    req.v = check_v;
    return req;
  }

  /// Baseline commit: free bookkeeping after each step; a faulting head
  /// crashes the next step attempt.
  void retire_baseline() {
    while (!rob_.empty() && !rob_.front().speculative &&
           !rob_.front().blocks_commit) {
      RobEntry& e = rob_.front();
      if (e.fault != Fault::None) {
        pending_crash_ = e.fault;
        return;
      }
      retire(e);
      rob_.pop_front();
      if (halted_) return;
    }
  }

  void retire(RobEntry& e) {
    if (e.writes_reg) arch_regs_[e.dst] = e.dst_value;
    if (e.is_store) {
      if (e.store_translated) mem_.data_store(e.store_phys, e.store_value);
      if (!store_queue_.empty()) store_queue_.pop_front();
    }
    if (e.is_halt) halted_ = true;
    ++committed_;
    switch (e.next) {
      case RobEntry::Next::Seq:
        arch_pc_ += kInstBytes;
        break;
      case RobEntry::Next::Taken:
        arch_pc_ += e.rel;
        break;
      case RobEntry::Next::Indirect:
        arch_pc_ = e.indirect_target;
        break;
    }
  }

  void crash(Fault f) {
    crashed_ = true;
    crash_fault_ = f;
    crash_step_ = trace_.step;
    cycles_ += cfg_.latency.fault_delivery;
  }

  void finish_step() { cycles_ += step_latency_; }

  // --- state ---------------------------------------------------------------

  PhysMem mem_;
  std::vector<Inst> pool_;
  std::vector<RandRegion> regions_;
  MachineConfig cfg_;
  Uarch mu_;
  TraceLog trace_;

  std::array<u64, kNumRegs> exec_regs_{};
  std::array<u64, kNumRegs> arch_regs_{};
  u64 arch_pc_ = 0;
  u64 spec_pc_ = 0;
  u64 last_pc_key_ = 0;
  u64 supply_page_ = 0;
  u64 supply_offset_ = 0;
  bool supply_ok_ = true;

  std::deque<RobEntry> rob_;
  std::deque<StoreQueueEntry> store_queue_;

  bool spec_active_ = false;
  u64 spec_depth_ = 0;
  std::array<u64, kNumRegs> snapshot_regs_{};
  u64 spec_branch_pc_key_ = 0;
  bool spec_actual_taken_ = false;
  std::int64_t spec_rel_ = 0;
  u64 spec_supply_page_ = 0;
  u64 spec_supply_offset_ = 0;

  bool halted_ = false;
  bool crashed_ = false;
  Fault crash_fault_ = Fault::None;
  std::optional<Fault> pending_crash_;
  u64 crash_step_ = 0;
  u64 committed_ = 0;
  u64 cycles_ = 0;
  u64 step_latency_ = 0;
  u64 load_value_ = 0;
};

// ---------------------------------------------------------------------------
// Image assembly: placing programs into physical memory.

struct MachineImage {
  PhysMem mem;
  std::vector<Inst> pool;
  std::map<std::string, u64> entry_points;  // name -> virtual entry

  u64 entry(const std::string& name) const {
    auto it = entry_points.find(name);
    if (it == entry_points.end())
      throw ConfigError("unknown entry point: " + name);
    return it->second;
  }
};

/// Writes a program's instructions at a physical base and records its entry
/// plus labels at the given virtual base.
inline void place_program(MachineImage& image, const Program& prog,
                          PhysAddr phys_base, VirtAddr virt_base,
                          const std::string& name) {
  for (size_t i = 0; i < prog.insts.size(); ++i) {
    u64 slot = phys_base.value + i * kInstBytes;
    if (image.mem.program.count(slot))
      throw ConfigError("program placement overlaps: " + name);
    image.mem.program[slot] = static_cast<u32>(image.pool.size());
    image.pool.push_back(prog.insts[i]);
  }
  image.entry_points[name] = virt_base.value;
  for (const auto& [label, off] : prog.labels)
    image.entry_points[name + ":" + label] = virt_base.value + off;
}

}  // namespace masksim
