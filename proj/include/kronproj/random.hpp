// Copyright 2026 The kronproj Authors
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

#pragma once

#include <array>
#include <cstdint>
#include <random>

namespace kronproj {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent child seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed for stream `stream` of a parent seed.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) {
  return mix_seed(mix_seed(parent) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t a,
                                 std::uint64_t b) {
  return derive_seed(derive_seed(parent, a), b);
}

/// Polynomial hash of degree k-1 over the Mersenne prime 2^61 - 1; a random
/// member of this family is k-wise independent on [0, 2^61 - 1).
template <int K>
class PolyHash {
 public:
  static constexpr std::uint64_t kPrime = (std::uint64_t{1} << 61) - 1;

  PolyHash() = default;

  explicit PolyHash(Rng& rng) {
    std::uniform_int_distribution<std::uint64_t> dist(0, kPrime - 1);
    for (auto& c : coeffs_) c = dist(rng);
  }

  std::uint64_t operator()(std::uint64_t x) const {
    x = reduce(x);
    std::uint64_t acc = coeffs_[K - 1];
    for (int i = K - 2; i >= 0; --i) {
      acc = add(mul(acc, x), coeffs_[i]);
    }
    return acc;
  }

  /// Bucket in [0, range).
  std::uint64_t bucket(std::uint64_t x, std::uint64_t range) const {
    return (*this)(x) % range;
  }

  /// +1 or -1.
  int sign(std::uint64_t x) const { return ((*this)(x)&1U) ? 1 : -1; }

 private:
  static std::uint64_t reduce(std::uint64_t x) {
    x = (x & kPrime) + (x >> 61);
    return x >= kPrime ? x - kPrime : x;
  }
  static std::uint64_t add(std::uint64_t a, std::uint64_t b) {
    return reduce(a + b);
  }
  static std::uint64_t mul(std::uint64_t a, std::uint64_t b) {
    const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
    const std::uint64_t lo = static_cast<std::uint64_t>(p) & kPrime;
    const std::uint64_t hi = static_cast<std::uint64_t>(p >> 61);
    return reduce(lo + hi);
  }

  std::array<std::uint64_t, K> coeffs_{};
};

}  // namespace kronproj
