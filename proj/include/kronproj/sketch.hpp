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

/** @file sketch.hpp

    @brief Random sketching matrices R (b x n) from five families, plus an
    empirical estimator for the coordinate-wise embedding parameters.

    Families:
      - Gaussian: i.i.d. N(0, 1/b) entries.
      - SRHT: sqrt(N/b) * S H D with N the next power of two >= n, D random
        signs, H the orthonormal Walsh-Hadamard matrix and S sampling b rows
        without replacement. Inputs are zero-padded to N; the scaling uses N.
      - AMS: R(i, j) = g_i(j) with g_i 4-wise independent into {+-1/sqrt(b)}.
      - CountSketch: one +-1 per column, row from a 2-wise hash, sign from a
        4-wise hash.
      - SparseEmbedding: `sparsity` blocks of b/sparsity rows; each column
        has one +-1/sqrt(sparsity) per block.

    A Sketch is immutable after generation and a deterministic function of
    (family, b, n, seed).
*/

#pragma once

#include "kronproj/fwht.hpp"
#include "kronproj/kronlinalg.hpp"
#include "kronproj/random.hpp"

#include <boost/random/normal_distribution.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

namespace kronproj {

enum class SketchKind { Gaussian, SRHT, AMS, CountSketch, SparseEmbedding };

struct SketchFamily {
  SketchKind kind = SketchKind::Gaussian;
  Index sparsity = 1;  // SparseEmbedding only

  static SketchFamily gaussian() { return {SketchKind::Gaussian, 1}; }
  static SketchFamily srht() { return {SketchKind::SRHT, 1}; }
  static SketchFamily ams() { return {SketchKind::AMS, 1}; }
  static SketchFamily count_sketch() { return {SketchKind::CountSketch, 1}; }
  static SketchFamily sparse_embedding(Index s) {
    return {SketchKind::SparseEmbedding, s};
  }

  std::string name() const {
    switch (kind) {
      case SketchKind::Gaussian: return "gaussian";
      case SketchKind::SRHT: return "srht";
      case SketchKind::AMS: return "ams";
      case SketchKind::CountSketch: return "countsketch";
      case SketchKind::SparseEmbedding: return "sparse";
    }
    return "unknown";
  }

  /// Accepts the names produced by name(); "sparse:<s>" sets the sparsity.
  static SketchFamily parse(std::string_view text) {
    if (text == "gaussian") return gaussian();
    if (text == "srht") return srht();
    if (text == "ams") return ams();
    if (text == "countsketch") return count_sketch();
    if (text == "sparse") return sparse_embedding(4);
    if (text.substr(0, 7) == "sparse:") {
      return sparse_embedding(std::stol(std::string(text.substr(7))));
    }
    throw DomainError("unknown sketch family: " + std::string(text));
  }

  friend bool operator==(const SketchFamily&, const SketchFamily&) = default;
};

class Sketch {
 public:
  static Sketch generate(SketchFamily family, Index b, Index n,
                         std::uint64_t seed) {
    if (b < 1 || n < 1) throw DomainError("sketch: b and n must be >= 1");
    Sketch sk;
    sk.family_ = family;
    sk.b_ = b;
    sk.n_ = n;
    sk.seed_ = seed;
    Rng rng(seed);
    switch (family.kind) {
      case SketchKind::Gaussian: {
        boost::random::normal_distribution<double> nd(
            0.0, 1.0 / std::sqrt(double(b)));
        sk.dense_.resize(b, n);
        for (Index j = 0; j < n; ++j)
          for (Index i = 0; i < b; ++i) sk.dense_(i, j) = nd(rng);
        break;
      }
      case SketchKind::AMS: {
        const double v = 1.0 / std::sqrt(double(b));
        std::vector<PolyHash<4>> rows;
        rows.reserve(std::size_t(b));
        for (Index i = 0; i < b; ++i) rows.emplace_back(rng);
        sk.dense_.resize(b, n);
        for (Index j = 0; j < n; ++j)
          for (Index i = 0; i < b; ++i)
            sk.dense_(i, j) = v * rows[std::size_t(i)].sign(j);
        break;
      }
      case SketchKind::CountSketch: {
        const PolyHash<2> h(rng);
        const PolyHash<4> sigma(rng);
        sk.row_.resize(n);
        sk.val_.resize(n);
        for (Index j = 0; j < n; ++j) {
          sk.row_[j] = static_cast<Index>(h.bucket(j, b));
          sk.val_[j] = sigma.sign(j);
        }
        break;
      }
      case SketchKind::SparseEmbedding: {
        const Index s = family.sparsity;
        if (s < 1 || b % s != 0) {
          throw DomainError("sparse embedding: sparsity must divide b");
        }
        const Index block = b / s;
        const PolyHash<2> h(rng);
        const PolyHash<4> sigma(rng);
        const double v = 1.0 / std::sqrt(double(s));
        sk.row_.resize(n * s);
        sk.val_.resize(n * s);
        for (Index j = 0; j < n; ++j) {
          for (Index k = 0; k < s; ++k) {
            const std::uint64_t key = std::uint64_t(j) * s + k;
            sk.row_[j * s + k] =
                k * block + static_cast<Index>(h.bucket(key, block));
            sk.val_[j * s + k] = v * sigma.sign(key);
          }
        }
        break;
      }
      case SketchKind::SRHT: {
        const auto padded = static_cast<Index>(next_pow2(n));
        if (b > padded) {
          throw DomainError("srht: b exceeds the padded dimension");
        }
        sk.padded_ = padded;
        sk.val_.resize(padded);
        std::bernoulli_distribution coin(0.5);
        for (auto& d : sk.val_) d = coin(rng) ? 1.0 : -1.0;
        std::vector<Index> perm(padded);
        std::iota(perm.begin(), perm.end(), Index{0});
        for (Index i = 0; i < b; ++i) {
          std::uniform_int_distribution<Index> pick(i, padded - 1);
          std::swap(perm[i], perm[pick(rng)]);
        }
        sk.row_.assign(perm.begin(), perm.begin() + b);
        break;
      }
    }
    return sk;
  }

  const SketchFamily& family() const { return family_; }
  Index rows() const { return b_; }
  Index cols() const { return n_; }
  std::uint64_t seed() const { return seed_; }
  /// Working dimension of the Hadamard transform (SRHT only; else n).
  Index padded_dim() const {
    return family_.kind == SketchKind::SRHT ? padded_ : n_;
  }
  /// Scale factor sqrt(N/b) of an SRHT sketch.
  double srht_scale() const { return std::sqrt(double(padded_) / double(b_)); }

  /// R x.
  Vector apply(const Vector& x) const {
    if (x.size() != n_) throw DimensionError("sketch apply: length mismatch");
    switch (family_.kind) {
      case SketchKind::Gaussian:
      case SketchKind::AMS:
        return dense_ * x;
      case SketchKind::CountSketch:
      case SketchKind::SparseEmbedding: {
        const Index per = static_cast<Index>(row_.size()) / n_;
        Vector y = Vector::Zero(b_);
        for (Index j = 0; j < n_; ++j) {
          const double xj = x(j);
          if (xj == 0.0) continue;
          for (Index k = 0; k < per; ++k) {
            y(row_[j * per + k]) += val_[j * per + k] * xj;
          }
        }
        return y;
      }
      case SketchKind::SRHT: {
        std::vector<double> buf(padded_, 0.0);
        for (Index j = 0; j < n_; ++j) buf[j] = val_[j] * x(j);
        fwht_inplace(buf);
        const double scale = srht_scale();
        Vector y(b_);
        for (Index i = 0; i < b_; ++i) y(i) = scale * buf[row_[i]];
        return y;
      }
    }
    return {};
  }

  /// R^T y.
  Vector apply_transpose(const Vector& y) const {
    if (y.size() != b_) {
      throw DimensionError("sketch apply_transpose: length mismatch");
    }
    switch (family_.kind) {
      case SketchKind::Gaussian:
      case SketchKind::AMS:
        return dense_.transpose() * y;
      case SketchKind::CountSketch:
      case SketchKind::SparseEmbedding: {
        const Index per = static_cast<Index>(row_.size()) / n_;
        Vector x = Vector::Zero(n_);
        for (Index j = 0; j < n_; ++j) {
          double acc = 0.0;
          for (Index k = 0; k < per; ++k) {
            acc += val_[j * per + k] * y(row_[j * per + k]);
          }
          x(j) = acc;
        }
        return x;
      }
      case SketchKind::SRHT: {
        std::vector<double> buf(padded_, 0.0);
        for (Index i = 0; i < b_; ++i) buf[row_[i]] += y(i);
        fwht_inplace(buf);
        const double scale = srht_scale();
        Vector x(n_);
        for (Index j = 0; j < n_; ++j) x(j) = scale * val_[j] * buf[j];
        return x;
      }
    }
    return {};
  }

  /// The b x n matrix R, materialized.
  DenseMatrix to_dense() const {
    if (family_.kind == SketchKind::Gaussian ||
        family_.kind == SketchKind::AMS) {
      return dense_;
    }
    DenseMatrix r(b_, n_);
    Vector e = Vector::Zero(b_);
    for (Index i = 0; i < b_; ++i) {
      e(i) = 1.0;
      r.row(i) = apply_transpose(e).transpose();
      e(i) = 0.0;
    }
    return r;
  }

  /// Padded H D x (SRHT only); an isometry of R^n into R^N.
  Vector srht_rotate(const Vector& x) const {
    if (family_.kind != SketchKind::SRHT) {
      throw DomainError("srht_rotate: not an SRHT sketch");
    }
    if (x.size() != n_) throw DimensionError("srht_rotate: length mismatch");
    std::vector<double> buf(padded_, 0.0);
    for (Index j = 0; j < n_; ++j) buf[j] = val_[j] * x(j);
    fwht_inplace(buf);
    return Eigen::Map<const Vector>(buf.data(), padded_);
  }

 private:
  SketchFamily family_;
  Index b_ = 0;
  Index n_ = 0;
  Index padded_ = 0;
  std::uint64_t seed_ = 0;
  DenseMatrix dense_;       // Gaussian, AMS
  std::vector<Index> row_;  // hashed rows / SRHT sampled rows
  std::vector<double> val_; // hashed values / SRHT diagonal signs
};

/// Empirical coordinate-wise embedding statistics for one (g, h) pair.
struct CeReport {
  std::string family;
  Index b = 0;
  Index n = 0;
  Index trials = 0;
  double delta = 0.01;
  double inner = 0.0;          // <g, h>
  double mean_estimate = 0.0;  // trial mean of <Rg, Rh>
  double std_error = 0.0;      // standard error of that mean
  double mean_bias = 0.0;      // |mean_estimate - inner|
  double alpha_hat = 0.0;      // b (E[<Rg,Rh>^2] - <g,h>^2) / (|g|^2 |h|^2)
  double beta_hat = 0.0;       // sqrt(b) (1-delta)-quantile of the deviation
};

inline void to_json(nlohmann::json& j, const CeReport& r) {
  j = nlohmann::json{{"family", r.family},       {"b", r.b},
                     {"n", r.n},                 {"trials", r.trials},
                     {"delta", r.delta},         {"inner", r.inner},
                     {"mean_estimate", r.mean_estimate},
                     {"std_error", r.std_error}, {"mean_bias", r.mean_bias},
                     {"alpha_hat", r.alpha_hat}, {"beta_hat", r.beta_hat}};
}

/// Runs `trials` independent sketches (seeds derived from `seed`) on a fixed
/// pair (g, h).
inline CeReport ce_estimate_pair(SketchFamily family, Index b, const Vector& g,
                                 const Vector& h, Index trials,
                                 std::uint64_t seed, double delta = 0.01) {
  if (g.size() != h.size()) throw DimensionError("ce_estimate: g, h differ");
  if (trials < 2) throw DomainError("ce_estimate: need at least 2 trials");
  const Index n = g.size();
  const double inner = g.dot(h);
  const double norms = g.norm() * h.norm();
  std::vector<double> est(static_cast<std::size_t>(trials));
  for (Index t = 0; t < trials; ++t) {
    const Sketch sk = Sketch::generate(family, b, n, derive_seed(seed, 1, t));
    est[t] = sk.apply(g).dot(sk.apply(h));
  }
  double sum = 0.0, sum_sq = 0.0;
  for (double e : est) {
    sum += e;
    sum_sq += e * e;
  }
  const double mean = sum / double(trials);
  double var = 0.0;
  for (double e : est) var += (e - mean) * (e - mean);
  var /= double(trials - 1);

  std::vector<double> dev(est.size());
  for (std::size_t i = 0; i < est.size(); ++i) {
    dev[i] = std::abs(est[i] - inner);
  }
  std::sort(dev.begin(), dev.end());
  const auto q_idx = static_cast<std::size_t>(std::clamp<double>(
      std::ceil((1.0 - delta) * double(trials)) - 1.0, 0.0,
      double(trials - 1)));

  CeReport r;
  r.family = family.name();
  r.b = b;
  r.n = n;
  r.trials = trials;
  r.delta = delta;
  r.inner = inner;
  r.mean_estimate = mean;
  r.std_error = std::sqrt(var / double(trials));
  r.mean_bias = std::abs(mean - inner);
  r.alpha_hat = norms > 0.0
                    ? double(b) * (sum_sq / double(trials) - inner * inner) /
                          (norms * norms)
                    : 0.0;
  r.beta_hat = norms > 0.0 ? std::sqrt(double(b)) * dev[q_idx] / norms : 0.0;
  return r;
}

/// Random unit vector of length n.
inline Vector random_unit(Index n, Rng& rng) {
  std::normal_distribution<double> nd;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = nd(rng);
  return v / v.norm();
}

/// CE statistics for a random unit pair (g, h) drawn from `seed`.
inline CeReport ce_estimate(SketchFamily family, Index b, Index n,
                            Index trials, std::uint64_t seed,
                            double delta = 0.01) {
  if (trials < 100) throw DomainError("ce_estimate: trials must be >= 100");
  Rng rng(derive_seed(seed, 0));
  const Vector g = random_unit(n, rng);
  const Vector h = random_unit(n, rng);
  return ce_estimate_pair(family, b, g, h, trials, seed, delta);
}

}  // namespace kronproj
