// Copyright 2026 The idexpo Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef IDEXPO_RNG_HPP_
#define IDEXPO_RNG_HPP_

#include <cstdint>
#include <initializer_list>
#include <random>
#include <utility>
#include <vector>

namespace idexpo {

// Every random quantity is drawn from its own keyed stream, so consuming one
// stream never shifts another: perturbation masks drawn during training do not
// move the shuffle order, and evaluation draws are identical across methods.
namespace streams {
inline constexpr uint64_t kWeightInit = 0xA1;
inline constexpr uint64_t kPretrainShuffle = 0xA2;
inline constexpr uint64_t kFinetuneShuffle = 0xA3;
inline constexpr uint64_t kTrainPerturb = 0xA4;
inline constexpr uint64_t kEvalPerturb = 0xA5;
inline constexpr uint64_t kSensitivity = 0xA6;
inline constexpr uint64_t kSplit = 0xA7;
inline constexpr uint64_t kSynthetic = 0xA8;
}  // namespace streams

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Folds a key tuple (seed, stream tag, indices...) into one 64-bit seed.
inline uint64_t derive_seed(std::initializer_list<uint64_t> parts) {
  uint64_t h = 0x8A5CD789635D2DFFULL;
  for (uint64_t p : parts) {
    uint64_t state = h ^ p;
    h = splitmix64(state);
  }
  return h;
}

// Deterministic RNG with platform-stable draws: the engine is the exactly
// specified std::mt19937_64 and all derived quantities (uniforms, bounded
// ints, bits) are computed from raw 64-bit words by fixed arithmetic. The
// standard library distributions are deliberately not used because their
// algorithms are implementation-defined.
class SeedStream {
 public:
  explicit SeedStream(uint64_t seed) : eng_(seed) {}
  SeedStream(uint64_t seed, uint64_t stream, std::initializer_list<uint64_t> indices)
      : eng_([&] {
          uint64_t h = derive_seed({seed, stream});
          for (uint64_t ix : indices) h = derive_seed({h, ix});
          return h;
        }()) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  int bernoulli_bit() { return int(next_u64() >> 63); }

  // Unbiased integer in [0, n).
  uint64_t bounded(uint64_t n) {
    uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t x = next_u64();
      if (x >= threshold) return x % n;
    }
  }

  // Fisher-Yates over v.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = size_t(bounded(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace idexpo

#endif  // IDEXPO_RNG_HPP_
