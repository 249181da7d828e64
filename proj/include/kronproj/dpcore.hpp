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

/** @file dpcore.hpp

    @brief Differential-privacy building blocks: the signed geometric output
    grid, multiplicative rounding onto it, a private median over the grid
    (exponential mechanism with rank utility) and privacy accountants.
*/

#pragma once

#include "kronproj/kronlinalg.hpp"
#include "kronproj/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace kronproj {

/// {0} together with +-(1+alpha)^j for every integer j with
/// 1/U <= (1+alpha)^j <= U (1+alpha). Points are stored in increasing order.
class SignedGeometricGrid {
 public:
  SignedGeometricGrid(double u_bound, double alpha)
      : u_bound_(u_bound), alpha_(alpha) {
    if (!(u_bound > 1.0) || !std::isfinite(u_bound)) {
      throw DomainError("grid: U must be a finite value > 1");
    }
    if (!(alpha > 0.0 && alpha <= 1.0)) {
      throw DomainError("grid: alpha must lie in (0, 1]");
    }
    const double base = std::log1p(alpha);
    const double slack = 1e-9;
    const auto j_lo =
        static_cast<long>(std::ceil(-std::log(u_bound) / base - slack));
    const auto j_hi = static_cast<long>(
        std::floor((std::log(u_bound) + base) / base + slack));
    for (long j = j_lo; j <= j_hi; ++j) {
      magnitudes_.push_back(std::pow(1.0 + alpha, double(j)));
    }
  }

  double u_bound() const { return u_bound_; }
  double alpha() const { return alpha_; }
  std::size_t size() const { return 2 * magnitudes_.size() + 1; }
  /// Index of the point 0.
  std::size_t zero_index() const { return magnitudes_.size(); }
  double min_magnitude() const { return magnitudes_.front(); }
  double max_magnitude() const { return magnitudes_.back(); }

  double point(std::size_t k) const {
    const std::size_t z = zero_index();
    if (k == z) return 0.0;
    if (k < z) return -magnitudes_[z - 1 - k];
    return magnitudes_[k - z - 1];
  }

  std::vector<double> points() const {
    std::vector<double> out(size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = point(k);
    return out;
  }

  /// Grid index of v if v is (to 1e-12 relative) a grid point.
  std::optional<std::size_t> index_of(double v) const {
    if (v == 0.0) return zero_index();
    const double a = std::abs(v);
    auto it = std::lower_bound(magnitudes_.begin(), magnitudes_.end(),
                               a * (1.0 - 1e-12));
    if (it == magnitudes_.end() || std::abs(*it - a) > 1e-12 * a) {
      return std::nullopt;
    }
    const auto m = static_cast<std::size_t>(it - magnitudes_.begin());
    return v > 0 ? zero_index() + 1 + m : zero_index() - 1 - m;
  }

  /// Index of sign(v) (1+alpha)^ceil(log_{1+alpha} |v|). Magnitudes below
  /// 1/U are lifted to the smallest grid magnitude.
  std::size_t round_index(double v) const {
    if (!std::isfinite(v)) throw DomainError("grid: non-finite value");
    if (v == 0.0) return zero_index();
    const double a = std::abs(v);
    if (a > u_bound_ * (1.0 + alpha_) * (1.0 + 1e-12)) {
      throw DomainError("grid: value exceeds U (1 + alpha)");
    }
    auto it = std::lower_bound(magnitudes_.begin(), magnitudes_.end(),
                               a * (1.0 - 1e-12));
    if (it == magnitudes_.end()) {
      throw DomainError("grid: value beyond the largest grid magnitude");
    }
    const auto m = static_cast<std::size_t>(it - magnitudes_.begin());
    return v > 0 ? zero_index() + 1 + m : zero_index() - 1 - m;
  }

  double round(double v) const { return point(round_index(v)); }

  /// Clamps into [-U, U] (counted by callers) before rounding.
  double clamp(double v) const { return std::clamp(v, -u_bound_, u_bound_); }

 private:
  double u_bound_;
  double alpha_;
  std::vector<double> magnitudes_;
};

inline void to_json(nlohmann::json& j, const SignedGeometricGrid& g) {
  j = nlohmann::json{
      {"U", g.u_bound()}, {"alpha", g.alpha()}, {"points", g.size()}};
}

/// round_to_grid: sign(v) (1+alpha)^ceil(log_{1+alpha}|v|), 0 stays 0.
inline double round_to_grid(double v, const SignedGeometricGrid& grid) {
  return grid.round(v);
}

struct PrivacyBudget {
  double epsilon = 0.0;
  double delta = 0.0;
};

inline void to_json(nlohmann::json& j, const PrivacyBudget& b) {
  j = nlohmann::json::array({b.epsilon, b.delta});
}

// ---- private median ------------------------------------------------------

/// Rank utility u(x) = max(#{v < x}, #{v > x}) - ceil(N/2), floored at 0,
/// for every grid point. `counts[k]` is the multiplicity of grid point k.
inline std::vector<long> rank_utility(std::span<const long> counts) {
  long total = 0;
  for (long c : counts) total += c;
  const long half = (total + 1) / 2;
  std::vector<long> u(counts.size());
  long below = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const long above = total - below - counts[k];
    u[k] = std::max(0L, std::max(below, above) - half);
    below += counts[k];
  }
  return u;
}

/// Output distribution of the private median: P(x) proportional to
/// exp(-epsilon u(x) / 2).
inline std::vector<double> private_median_distribution(
    std::span<const long> counts, double epsilon) {
  const std::vector<long> u = rank_utility(counts);
  const long u_min = *std::min_element(u.begin(), u.end());
  std::vector<long double> w(u.size());
  long double total = 0.0L;
  for (std::size_t k = 0; k < u.size(); ++k) {
    w[k] = std::exp(-static_cast<long double>(epsilon) * (u[k] - u_min) / 2);
    total += w[k];
  }
  std::vector<double> p(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    p[k] = static_cast<double>(w[k] / total);
  }
  return p;
}

/// Multiplicities of `values` on the grid; every value must be a grid point.
inline std::vector<long> grid_counts(std::span<const double> values,
                                     const SignedGeometricGrid& grid) {
  std::vector<long> counts(grid.size(), 0);
  for (double v : values) {
    const auto k = grid.index_of(v);
    if (!k) throw DomainError("private_median: value is not a grid point");
    ++counts[*k];
  }
  return counts;
}

/// Grid index chosen by the private median with an explicit RNG state.
inline std::size_t private_median_index(std::span<const double> values,
                                        const SignedGeometricGrid& grid,
                                        double epsilon, double beta,
                                        Rng& rng) {
  if (values.empty()) throw DomainError("private_median: empty input");
  if (!(epsilon > 0.0 && epsilon <= 1.0)) {
    throw DomainError("private_median: epsilon must lie in (0, 1]");
  }
  if (!(beta > 0.0 && beta < 1.0)) {
    throw DomainError("private_median: beta must lie in (0, 1)");
  }
  const std::vector<long> counts = grid_counts(values, grid);
  const std::vector<long> u = rank_utility(counts);
  const long u_min = *std::min_element(u.begin(), u.end());
  std::vector<long double> cum(u.size());
  long double acc = 0.0L;
  for (std::size_t k = 0; k < u.size(); ++k) {
    acc += std::exp(-static_cast<long double>(epsilon) * (u[k] - u_min) / 2);
    cum[k] = acc;
  }
  const long double r =
      std::generate_canonical<long double, 64>(rng) * acc;
  const auto it = std::upper_bound(cum.begin(), cum.end(), r);
  return it == cum.end() ? cum.size() - 1
                         : static_cast<std::size_t>(it - cum.begin());
}

/// Approximate median of grid values; (epsilon, 0)-DP in the values.
inline double private_median(std::span<const double> values,
                             const SignedGeometricGrid& grid, double epsilon,
                             double beta, Rng& rng) {
  return grid.point(private_median_index(values, grid, epsilon, beta, rng));
}

inline double private_median(std::span<const double> values,
                             const SignedGeometricGrid& grid, double epsilon,
                             double beta, std::uint64_t seed) {
  Rng rng(seed);
  return private_median(values, grid, epsilon, beta, rng);
}

/// How far x is from being a median: max(0, N/2 - min(#{v >= x}, #{v <= x})).
inline double median_rank_error(std::span<const double> values, double x) {
  long ge = 0, le = 0;
  for (double v : values) {
    ge += v >= x ? 1 : 0;
    le += v <= x ? 1 : 0;
  }
  return std::max(0.0, double(values.size()) / 2.0 - double(std::min(ge, le)));
}

/// Rank slack c / epsilon * ln(|X| / beta).
inline double median_rank_slack(double epsilon, std::size_t domain_size,
                                double beta, double c_gamma = 4.0) {
  return c_gamma / epsilon * std::log(double(domain_size) / beta);
}

// ---- accountants ---------------------------------------------------------

/// Basic composition: epsilons and deltas add.
inline PrivacyBudget simple_composition(std::span<const PrivacyBudget> parts) {
  PrivacyBudget out;
  for (const auto& p : parts) {
    if (p.epsilon < 0.0 || p.delta < 0.0) {
      throw DomainError("simple_composition: negative budget");
    }
    out.epsilon += p.epsilon;
    out.delta += p.delta;
  }
  return out;
}

/// k-fold adaptive composition of (epsilon, delta)-DP mechanisms:
/// (sqrt(2 k ln(1/delta0)) epsilon + 2 k epsilon^2, delta0 + k delta).
inline PrivacyBudget advanced_composition(double epsilon, double delta,
                                          long k, double delta0) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw DomainError("advanced_composition: epsilon must lie in [0, 1]");
  }
  if (!(delta0 > 0.0 && delta0 <= 1.0)) {
    throw DomainError("advanced_composition: delta0 must lie in (0, 1]");
  }
  if (!(delta >= 0.0 && delta <= 1.0) || k < 0) {
    throw DomainError("advanced_composition: bad delta or k");
  }
  const double kd = double(k);
  return {std::sqrt(2.0 * kd * std::log(1.0 / delta0)) * epsilon +
              2.0 * kd * epsilon * epsilon,
          delta0 + kd * delta};
}

/// Privacy of an epsilon-DP algorithm run on k rows subsampled (with
/// replacement) from n: (6 k / n) epsilon. Requires k <= n/2.
inline double amplification(double epsilon, long k, long n) {
  if (n < 1 || k < 0 || 2 * k > n) {
    throw DomainError("amplification: requires 0 <= k <= n/2");
  }
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw DomainError("amplification: epsilon must lie in [0, 1]");
  }
  return 6.0 * double(k) / double(n) * epsilon;
}

}  // namespace kronproj
