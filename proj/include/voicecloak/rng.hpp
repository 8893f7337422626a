// Copyright (c) 2026 The voicecloak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Seeded randomness. The mt19937_64 engine is fully specified by the C++
// standard; the samplers on top of it are hand-rolled because std::
// distributions are implementation-defined and would break bit-level
// reproducibility across standard libraries.

#ifndef VOICECLOAK_RNG_HPP_
#define VOICECLOAK_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "voicecloak/errors.hpp"

namespace voicecloak {

// splitmix64 mixing step, used to derive independent substream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives a substream seed from a base seed and up to three stream tags.
// Pure function of its arguments, so generation order never leaks between
// streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = mix_seed(base);
  s = mix_seed(s ^ mix_seed(a + 0x1000));
  s = mix_seed(s ^ mix_seed(b + 0x2000));
  s = mix_seed(s ^ mix_seed(c + 0x3000));
  return s;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; one value per call, no cached state.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in [lo, hi], rejection-sampled to avoid modulo bias.
  int uniform_int(int lo, int hi) {
    require(lo <= hi, ErrorCode::kInvalidParameter, "empty integer range");
    const std::uint64_t range = static_cast<std::uint64_t>(hi) - lo + 1;
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() -
        std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t r = next_u64();
    while (r >= limit) r = next_u64();
    return lo + static_cast<int>(r % range);
  }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(
          uniform_int(0, static_cast<int>(i) - 1));
      std::swap(values[i - 1], values[j]);
    }
  }

  // First k entries of a seeded permutation of {0, ..., n-1}.
  std::vector<int> sample_indices(int n, int k) {
    std::vector<int> indices(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) indices[static_cast<std::size_t>(i)] = i;
    shuffle(indices);
    indices.resize(static_cast<std::size_t>(k < n ? k : n));
    return indices;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace voicecloak

#endif  // VOICECLOAK_RNG_HPP_
