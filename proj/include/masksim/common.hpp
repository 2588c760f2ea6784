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

#include <cstdint>
#include <stdexcept>
#include <string>

namespace masksim {

using u64 = std::uint64_t;
using u32 = std::uint32_t;

/// Raised for malformed configurations: bad regions, offsets outside the
/// protected mask, oversized programs, scenario schema violations.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

inline bool is_pow2(u64 x) { return x != 0 && (x & (x - 1)) == 0; }

inline unsigned floor_log2(u64 x) {
  unsigned n = 0;
  while (x > 1) {
    x >>= 1;
    ++n;
  }
  return n;
}

/// log2 of a power of two.
inline unsigned log2_exact(u64 x) { return floor_log2(x); }

inline unsigned popcount64(u64 x) {
  unsigned n = 0;
  while (x) {
    x &= x - 1;
    ++n;
  }
  return n;
}

inline unsigned lowest_set_bit(u64 x) {
  unsigned i = 0;
  while (((x >> i) & 1) == 0) ++i;
  return i;
}

inline unsigned highest_set_bit(u64 x) {
  unsigned i = 63;
  while (((x >> i) & 1) == 0) --i;
  return i;
}

inline std::string to_hex(u64 x) {
  char buf[19];
  static const char digits[] = "0123456789abcdef";
  int pos = 18;
  buf[pos] = '\0';
  do {
    buf[--pos] = digits[x & 0xF];
    x >>= 4;
  } while (x != 0);
  buf[--pos] = 'x';
  buf[--pos] = '0';
  return std::string(buf + pos);
}

/// Deterministic splittable PRNG (splitmix64). Every randomized operation in
/// the simulator is keyed by an explicit seed so runs replay bit-exactly.
class SplitMix64 {
 public:
  explicit SplitMix64(u64 seed) : state_(seed) {}

  u64 next() {
    u64 z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform value in [0, bound), rejection-sampled.
  u64 below(u64 bound) {
    u64 threshold = (0 - bound) % bound;
    for (;;) {
      u64 r = next();
      if (r >= threshold) return r % bound;
    }
  }

  /// Derive an independent stream; used to fan seeds out to parallel runs.
  SplitMix64 split() { return SplitMix64(next() ^ 0xA5A5A5A55A5A5A5AULL); }

 private:
  u64 state_;
};

}  // namespace masksim
