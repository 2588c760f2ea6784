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

#include <cctype>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "masksim/common.hpp"

namespace masksim {

constexpr u64 kInstBytes = 8;
constexpr unsigned kNumRegs = 16;

enum class Op {
  Nop,
  MovImm,        // reg <- imm
  DirectBranch,  // pc <- pc + rel (always taken)
  CondBranch,    // pc <- pc + rel if reg != 0
  IndirectJump,  // pc <- reg
  Load,          // dst <- mem[addr_reg]
  Store,         // mem[addr_reg] <- val_reg
  Prefetch,      // translate + warm structures, never faults
  ReadTimer,     // dst <- cycle counter
  Halt,
};

struct Inst {
  Op op = Op::Nop;
  unsigned a = 0;   // dst / addr reg / cond reg
  unsigned b = 0;   // src / val reg
  u64 imm = 0;      // MovImm immediate
  std::int64_t rel = 0;  // branch displacement in bytes

  bool operator==(const Inst&) const = default;
};

inline Inst nop() { return {}; }
inline Inst mov_imm(unsigned reg, u64 imm) {
  return {Op::MovImm, reg, 0, imm, 0};
}
inline Inst jmp(std::int64_t rel) { return {Op::DirectBranch, 0, 0, 0, rel}; }
inline Inst brnz(unsigned reg, std::int64_t rel) {
  return {Op::CondBranch, reg, 0, 0, rel};
}
inline Inst jmpr(unsigned reg) { return {Op::IndirectJump, reg, 0, 0, 0}; }
inline Inst load(unsigned dst, unsigned addr_reg) {
  return {Op::Load, dst, addr_reg, 0, 0};
}
inline Inst store(unsigned addr_reg, unsigned val_reg) {
  return {Op::Store, addr_reg, val_reg, 0, 0};
}
inline Inst prefetch(unsigned addr_reg) {
  return {Op::Prefetch, addr_reg, 0, 0, 0};
}
inline Inst rdtime(unsigned dst) { return {Op::ReadTimer, dst, 0, 0, 0}; }
inline Inst halt() { return {Op::Halt, 0, 0, 0, 0}; }

/// A program: the instruction list plus its label table (byte offsets
/// relative to the program entry).
struct Program {
  std::vector<Inst> insts;
  std::map<std::string, u64> labels;

  u64 byte_len() const { return insts.size() * kInstBytes; }

  u64 label_offset(const std::string& name) const {
    auto it = labels.find(name);
    if (it == labels.end()) throw ConfigError("unknown label: " + name);
    return it->second;
  }
};

// ---------------------------------------------------------------------------
// Assembler for the scenario-file format: one mnemonic per line, labels with
// a trailing colon, hex or decimal immediates, ';' or '#' comments.
//
//   entry:
//       mov r1, 0x2000040
//       prefetch r1
//       rdtime r2
//       brnz r3, entry
//       jmp +8
//       load r4, [r1]
//       store [r1], r4
//       jmpr r1
//       nop
//       halt

namespace detail {

inline std::string strip(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline unsigned parse_reg(const std::string& tok, int line_no) {
  if (tok.size() < 2 || (tok[0] != 'r' && tok[0] != 'R'))
    throw ConfigError("line " + std::to_string(line_no) +
                      ": expected a register, got '" + tok + "'");
  u64 n = 0;
  for (size_t i = 1; i < tok.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(tok[i])))
      throw ConfigError("line " + std::to_string(line_no) +
                        ": bad register '" + tok + "'");
    n = n * 10 + (tok[i] - '0');
  }
  if (n >= kNumRegs)
    throw ConfigError("line " + std::to_string(line_no) +
                      ": register out of range '" + tok + "'");
  return static_cast<unsigned>(n);
}

inline u64 parse_u64(const std::string& tok, int line_no) {
  try {
    size_t used = 0;
    u64 v = std::stoull(tok, &used, 0);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(line_no) +
                      ": bad immediate '" + tok + "'");
  }
}

inline std::vector<std::string> split_operands(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(strip(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  cur = strip(cur);
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::string strip_brackets(const std::string& tok, int line_no) {
  if (tok.size() < 3 || tok.front() != '[' || tok.back() != ']')
    throw ConfigError("line " + std::to_string(line_no) +
                      ": expected [reg], got '" + tok + "'");
  return strip(tok.substr(1, tok.size() - 2));
}

}  // namespace detail

inline Program assemble(const std::string& text) {
  using namespace detail;
  struct Pending {
    size_t inst_index;
    std::string label;
    int line_no;
  };
  Program prog;
  std::vector<Pending> fixups;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    size_t cut = raw.find_first_of(";#");
    std::string line = strip(cut == std::string::npos ? raw : raw.substr(0, cut));
    if (line.empty()) continue;
    // Leading labels, possibly followed by an instruction on the same line.
    while (true) {
      size_t colon = line.find(':');
      size_t space = line.find_first_of(" \t");
      if (colon != std::string::npos &&
          (space == std::string::npos || colon < space)) {
        std::string label = strip(line.substr(0, colon));
        if (label.empty())
          throw ConfigError("line " + std::to_string(line_no) + ": empty label");
        if (prog.labels.count(label))
          throw ConfigError("line " + std::to_string(line_no) +
                            ": duplicate label '" + label + "'");
        prog.labels[label] = prog.insts.size() * kInstBytes;
        line = strip(line.substr(colon + 1));
        if (line.empty()) break;
        continue;
      }
      break;
    }
    if (line.empty()) continue;

    size_t sp = line.find_first_of(" \t");
    std::string mnem = sp == std::string::npos ? line : line.substr(0, sp);
    std::string rest = sp == std::string::npos ? "" : strip(line.substr(sp));
    std::vector<std::string> ops = split_operands(rest);
    auto need = [&](size_t n) {
      if (ops.size() != n)
        throw ConfigError("line " + std::to_string(line_no) + ": '" + mnem +
                          "' takes " + std::to_string(n) + " operand(s)");
    };
    auto branch_target = [&](const std::string& tok) -> std::int64_t {
      if (tok[0] == '+' || tok[0] == '-' ||
          std::isdigit(static_cast<unsigned char>(tok[0]))) {
        bool neg = tok[0] == '-';
        u64 mag = parse_u64(tok[0] == '+' || neg ? tok.substr(1) : tok,
                            line_no);
        return neg ? -static_cast<std::int64_t>(mag)
                   : static_cast<std::int64_t>(mag);
      }
      fixups.push_back({prog.insts.size(), tok, line_no});
      return 0;
    };

    if (mnem == "nop") {
      need(0);
      prog.insts.push_back(nop());
    } else if (mnem == "mov") {
      need(2);
      prog.insts.push_back(mov_imm(parse_reg(ops[0], line_no),
                                   parse_u64(ops[1], line_no)));
    } else if (mnem == "jmp") {
      need(1);
      prog.insts.push_back(jmp(branch_target(ops[0])));
    } else if (mnem == "brnz") {
      need(2);
      unsigned reg = parse_reg(ops[0], line_no);
      prog.insts.push_back(brnz(reg, branch_target(ops[1])));
    } else if (mnem == "jmpr") {
      need(1);
      prog.insts.push_back(jmpr(parse_reg(ops[0], line_no)));
    } else if (mnem == "load") {
      need(2);
      prog.insts.push_back(load(parse_reg(ops[0], line_no),
                                parse_reg(strip_brackets(ops[1], line_no),
                                          line_no)));
    } else if (mnem == "store") {
      need(2);
      prog.insts.push_back(store(parse_reg(strip_brackets(ops[0], line_no),
                                           line_no),
                                 parse_reg(ops[1], line_no)));
    } else if (mnem == "prefetch") {
      need(1);
      prog.insts.push_back(prefetch(parse_reg(ops[0], line_no)));
    } else if (mnem == "rdtime") {
      need(1);
      prog.insts.push_back(rdtime(parse_reg(ops[0], line_no)));
    } else if (mnem == "halt") {
      need(0);
      prog.insts.push_back(halt());
    } else {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": unknown mnemonic '" + mnem + "'");
    }
  }
  for (const auto& f : fixups) {
    auto it = prog.labels.find(f.label);
    if (it == prog.labels.end())
      throw ConfigError("line " + std::to_string(f.line_no) +
                        ": unknown label '" + f.label + "'");
    prog.insts[f.inst_index].rel =
        static_cast<std::int64_t>(it->second) -
        static_cast<std::int64_t>(f.inst_index * kInstBytes);
  }
  return prog;
}

}  // namespace masksim
