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

/** @file projmaint.hpp

    @brief Dynamic maintenance of the Kronecker projection
    B^T (B B^T)^{-1} B with B = A (W^{1/2} kron W^{1/2}), under weight updates
    W = U diag(lam) U^T that share a fixed eigenbasis U, answering sketched
    projection-vector queries.

    Notation used in the comments:
      K     = U kron U            (never materialized)
      G     = A K                 (m x n^2)
      D     = diag(sqrt(lam) kron sqrt(lam))
      M     = G^T (G D^2 G^T)^{-1} G
      Q     = M D K^T R^T         (n^2 x s*b, R the stacked sketch pool)
      P     = K D Q               = projection * R^T

    The exact projection at lam is K D M D K^T, so P's block l equals the
    projection applied to R_l^T. Updates move lam lazily: coordinates whose
    log-ratio stays within eps/2 are deferred, the rest are folded into M by
    a Woodbury correction on the affected Kronecker coordinates. Queries
    correct for the deferred part (lam_tilde - lam) on the fly.
*/

#pragma once

#include "kronproj/constraints.hpp"
#include "kronproj/kronlinalg.hpp"
#include "kronproj/oracle.hpp"
#include "kronproj/random.hpp"
#include "kronproj/sketch.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

namespace kronproj {

/// Raised when a query finds the sketch pool used up and automatic
/// regeneration is disabled.
class PoolExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MaintParams {
  double eps_mp = 0.05;  // in (0, 0.1)
  double a_exp = 0.5;    // lazy-update exponent, in (0, 1)
  SketchFamily family = SketchFamily::gaussian();
  Index pool_size = 8;     // s
  Index sketch_dim = 64;   // b
  std::uint64_t seed = 0;
  // Full rebuild after this many Woodbury updates since the last build.
  Index recompute_every = 256;
  // Regenerate the pool on every non-lazy update. When false, Q and P are
  // advanced incrementally against the existing pool.
  bool regenerate_on_update = true;
  // Regenerate the pool once every sketch in it has been used by a query.
  bool auto_regenerate_pool = true;
};

struct MaintCounters {
  std::vector<Index> woodbury_ranks;  // one entry per update; 0 when lazy
  Index updates = 0;
  Index lazy_updates = 0;
  Index full_recomputes = 0;
  Index condition_fallbacks = 0;
  Index queries = 0;
  Index query_fallbacks = 0;
  Index pool_regenerations = 0;
};

inline void to_json(nlohmann::json& j, const MaintCounters& c) {
  j = nlohmann::json{{"woodbury_ranks", c.woodbury_ranks},
                     {"updates", c.updates},
                     {"lazy_updates", c.lazy_updates},
                     {"full_recomputes", c.full_recomputes},
                     {"condition_fallbacks", c.condition_fallbacks},
                     {"queries", c.queries},
                     {"query_fallbacks", c.query_fallbacks},
                     {"pool_regenerations", c.pool_regenerations}};
}

inline void from_json(const nlohmann::json& j, MaintCounters& c) {
  j.at("woodbury_ranks").get_to(c.woodbury_ranks);
  j.at("updates").get_to(c.updates);
  j.at("lazy_updates").get_to(c.lazy_updates);
  j.at("full_recomputes").get_to(c.full_recomputes);
  j.at("condition_fallbacks").get_to(c.condition_fallbacks);
  j.at("queries").get_to(c.queries);
  j.at("query_fallbacks").get_to(c.query_fallbacks);
  j.at("pool_regenerations").get_to(c.pool_regenerations);
}

struct SoftThresholdResult {
  Vector lam_hat;
  Index r = 0;
  std::vector<Index> order;  // the sorting permutation pi
};

/// Chooses how many of the largest log-changes to fold in at once.
///
/// Sorts y_i = ln lam_new_i - ln lam_i by |y| descending (stable, so ties
/// keep ascending index order), then grows r to ceil(1.5 r) while
/// 1.5 r < n and |y_pi(ceil(1.5 r))| >= (1 - 1/ln n) |y_pi(r)| > 0.
/// lam_hat takes lam_new on the first r sorted coordinates and lam elsewhere.
inline SoftThresholdResult soft_threshold(const Vector& lam,
                                          const Vector& lam_new, Index r) {
  const Index n = lam.size();
  if (lam_new.size() != n) {
    throw DimensionError("soft_threshold: length mismatch");
  }
  if (r < 1) throw DomainError("soft_threshold: r must be >= 1");
  if ((lam.array() <= 0.0).any() || (lam_new.array() <= 0.0).any()) {
    throw DomainError("soft_threshold: entries must be positive");
  }
  const Vector y = lam_new.array().log() - lam.array().log();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return std::abs(y(a)) > std::abs(y(b));
  });

  r = std::min(r, n);
  const double shrink = n > 1 ? 1.0 - 1.0 / std::log(double(n)) : 0.0;
  while (1.5 * double(r) < double(n)) {
    const auto next = static_cast<Index>(std::ceil(1.5 * double(r)));
    const double at_r = std::abs(y(order[r - 1]));
    if (at_r == 0.0 || std::abs(y(order[next - 1])) < shrink * at_r) {
      break;
    }
    r = std::min(next, n);
  }

  SoftThresholdResult out{lam, r, std::move(order)};
  for (Index k = 0; k < r; ++k) {
    out.lam_hat(out.order[k]) = lam_new(out.order[k]);
  }
  return out;
}

/// Kronecker indices i*n + j with i in S or j in S, ascending. These are
/// the diagonal positions where lam_hat kron lam_hat - lam kron lam can be
/// nonzero when lam changes only on S. Size 2 n |S| - |S|^2.
inline std::vector<Index> expand_index_set(std::vector<Index> s, Index n) {
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  std::vector<char> in_s(static_cast<std::size_t>(n), 0);
  for (Index i : s) {
    if (i < 0 || i >= n) throw DomainError("expand_index_set: out of range");
    in_s[i] = 1;
  }
  std::vector<Index> out;
  if (s.empty()) return out;
  out.reserve(static_cast<std::size_t>(2 * n * Index(s.size())));
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (in_s[i] || in_s[j]) out.push_back(i * n + j);
  return out;
}

class KroneckerProjMaintain {
 public:
  static constexpr int kSnapshotVersion = 1;

  /// Initializes from a constraint batch and a PSD weight W.
  KroneckerProjMaintain(ConstraintBatch constraints, const DenseMatrix& w,
                        MaintParams params)
      : KroneckerProjMaintain(std::move(constraints), sym_eigen(w),
                              std::move(params)) {}

  /// Initializes from an explicit eigenbasis and eigenvalues.
  KroneckerProjMaintain(ConstraintBatch constraints, const EigenWeight& weight,
                        MaintParams params)
      : constraints_(std::move(constraints)), params_(std::move(params)) {
    const Index n = constraints_.n();
    if (weight.basis.rows() != n || weight.basis.cols() != n ||
        weight.eigvals.size() != n) {
      throw DimensionError("projmaint: weight does not match constraints");
    }
    if (!(params_.eps_mp > 0.0 && params_.eps_mp < 0.1)) {
      throw DomainError("projmaint: eps_mp must lie in (0, 0.1)");
    }
    if (!(params_.a_exp > 0.0 && params_.a_exp < 1.0)) {
      throw DomainError("projmaint: a_exp must lie in (0, 1)");
    }
    if (params_.pool_size < 1 || params_.sketch_dim < 1) {
      throw DomainError("projmaint: pool size and sketch dim must be >= 1");
    }
    const DenseMatrix gram = weight.basis.transpose() * weight.basis;
    if (max_abs(gram - DenseMatrix::Identity(n, n)) > 1e-10) {
      throw DomainError("projmaint: basis is not orthonormal");
    }
    if (constraints_.m() > n * n || constraints_.rank() < constraints_.m()) {
      throw DomainError("projmaint: constraint rows are linearly dependent");
    }
    basis_ = weight.basis;
    eig_floor_ = 1e-12 * std::max(1.0, weight.eigvals.maxCoeff());
    lam_ = clamp_eigvals(weight.eigvals);
    lam_tilde_ = lam_;
    lam_external_ = lam_;

    g_.resize(constraints_.m(), n * n);
    const DenseMatrix basis_t = basis_.transpose();
    for (Index i = 0; i < constraints_.m(); ++i) {
      const Vector row = constraints_.rows().row(i).transpose();
      g_.row(i) = kron_apply(basis_t, basis_t, row).transpose();
    }
    try {
      rebuild_inverse();
    } catch (const ConditionError&) {
      throw DomainError("projmaint: singular Gram matrix at initialization");
    }
    regenerate_pool();
    rebuild_qp();
  }

  // ---- accessors -------------------------------------------------------

  Index n() const { return constraints_.n(); }
  Index m() const { return constraints_.m(); }
  const ConstraintBatch& constraints() const { return constraints_; }
  const MaintParams& params() const { return params_; }
  const DenseMatrix& basis() const { return basis_; }
  const DenseMatrix& g() const { return g_; }
  const Vector& lam() const { return lam_; }
  const Vector& lam_tilde() const { return lam_tilde_; }
  /// Last eigenvalues passed to update (after flooring).
  const Vector& lam_external() const { return lam_external_; }
  const DenseMatrix& m_matrix() const { return m_; }
  const DenseMatrix& q_matrix() const { return q_; }
  const DenseMatrix& p_matrix() const { return p_; }
  double eig_floor() const { return eig_floor_; }
  Index cursor() const { return cursor_; }
  std::uint64_t pool_generation() const { return pool_generation_; }
  const std::vector<Sketch>& pool() const { return pool_; }
  const MaintCounters& counters() const { return counters_; }
  /// The sketch consumed by the most recent query.
  const std::optional<Sketch>& last_sketch() const { return last_sketch_; }
  /// Woodbury part p_g of the most recent query (debug).
  const Vector& last_pg() const { return last_pg_; }

  // ---- update ----------------------------------------------------------

  /// Update with a weight given by its eigenbasis; the basis must match.
  Vector update(const EigenWeight& w_new) {
    if (w_new.basis.rows() != n() || w_new.basis.cols() != n() ||
        max_abs(w_new.basis - basis_) > 1e-10) {
      throw DomainError("projmaint: update basis differs from the fixed one");
    }
    return update(w_new.eigvals);
  }

  /// Update with a dense weight; U^T W U must be diagonal.
  Vector update(const DenseMatrix& w_new) {
    if (w_new.rows() != n() || w_new.cols() != n()) {
      throw DimensionError("projmaint: W has wrong shape");
    }
    const DenseMatrix d = basis_.transpose() * w_new * basis_;
    const Vector diag = d.diagonal();
    const DenseMatrix off = d - DenseMatrix(diag.asDiagonal());
    if (max_abs(off) > 1e-10 * std::max(1.0, max_abs(d))) {
      throw DomainError("projmaint: W is not diagonal in the fixed basis");
    }
    return update(Vector(diag));
  }

  /// Update with new eigenvalues in the fixed basis. Returns lam_tilde, the
  /// eigenvalues of the approximation V = U diag(lam_tilde) U^T that later
  /// queries answer for.
  Vector update(const Vector& eigvals_new) {
    if (eigvals_new.size() != n()) {
      throw DimensionError("projmaint: eigenvalue vector has wrong length");
    }
    if (!eigvals_new.allFinite()) {
      throw DomainError("projmaint: non-finite eigenvalues");
    }
    const Vector lam_new = clamp_eigvals(eigvals_new);
    lam_external_ = lam_new;
    ++counters_.updates;

    const double half_eps = 0.5 * params_.eps_mp;
    const Vector y = lam_new.array().log() - lam_.array().log();
    Index r = 0;
    for (Index i = 0; i < n(); ++i) r += std::abs(y(i)) >= half_eps ? 1 : 0;

    if (double(r) < std::pow(double(n()), params_.a_exp)) {
      ++counters_.lazy_updates;
      counters_.woodbury_ranks.push_back(0);
    } else {
      const SoftThresholdResult st = soft_threshold(lam_, lam_new, r);
      apply_eigen_change(st.lam_hat);
    }

    for (Index i = 0; i < n(); ++i) {
      const double dev = std::abs(std::log(lam_new(i)) - std::log(lam_(i)));
      lam_tilde_(i) = dev <= half_eps ? lam_(i) : lam_new(i);
    }
    return lam_tilde_;
  }

  // ---- query -----------------------------------------------------------

  /// Returns P_tilde R_l^T R_l h for the next unused sketch R_l, where
  /// P_tilde is the exact projection at lam_tilde.
  Vector query(const Vector& h) {
    const Index nn = n() * n();
    if (h.size() != nn) throw DimensionError("projmaint: h has wrong length");
    if (cursor_ >= params_.pool_size) {
      if (!params_.auto_regenerate_pool) {
        throw PoolExhausted("projmaint: sketch pool exhausted");
      }
      regenerate_pool();
      rebuild_qp();
    }
    const Index l = cursor_;
    const Index b = params_.sketch_dim;
    const Sketch& sk = pool_[l];
    const Vector z = sk.apply(h);
    const DenseMatrix basis_t = basis_.transpose();
    const Vector t = kron_apply(basis_t, basis_t, sk.apply_transpose(z));

    const Vector d = sqrt_kron(lam_);
    const Vector d_tilde = sqrt_kron(lam_tilde_);
    const Vector gamma = d_tilde - d;

    // w = M D_tilde K^T R_l^T z, using Q's block for the D part.
    Vector w = q_.middleCols(l * b, b) * z + m_ * gamma.cwiseProduct(t);

    Vector corr = Vector::Zero(nn);
    const auto sel = woodbury_support(lam_tilde_);
    if (!sel.idx.empty()) {
      const Index k = static_cast<Index>(sel.idx.size());
      DenseMatrix m_cols(nn, k);
      for (Index c = 0; c < k; ++c) m_cols.col(c) = m_.col(sel.idx[c]);
      DenseMatrix inner = DenseMatrix::Identity(k, k);
      Vector rhs(k);
      for (Index a = 0; a < k; ++a) {
        rhs(a) = sel.delta(a) * w(sel.idx[a]);
        for (Index c = 0; c < k; ++c) {
          inner(a, c) += sel.delta(a) * m_(sel.idx[a], sel.idx[c]);
        }
      }
      try {
        corr = m_cols * solve_general(inner, rhs);
      } catch (const ConditionError&) {
        // Fall back to an explicit inverse at lam_tilde.
        ++counters_.query_fallbacks;
        const DenseMatrix m_tilde = inverse_at(lam_tilde_);
        const Vector w_tilde = m_tilde * d_tilde.cwiseProduct(t);
        corr = w - w_tilde;
      }
    }

    last_pg_ = kron_apply(basis_, basis_, d_tilde.cwiseProduct(corr));
    Vector p_l = kron_apply(basis_, basis_, d_tilde.cwiseProduct(w - corr));

    last_sketch_ = sk;
    ++cursor_;
    ++counters_.queries;
    if (cursor_ >= params_.pool_size && params_.auto_regenerate_pool) {
      regenerate_pool();
      rebuild_qp();
    }
    return p_l;
  }

  /// Unsketched reference: P_tilde h with P_tilde materialized. Does not
  /// consume a sketch.
  Vector query_exactish(const Vector& h) const {
    if (h.size() != n() * n()) {
      throw DimensionError("projmaint: h has wrong length");
    }
    return oracle::exact_projection(constraints_, basis_, lam_tilde_) * h;
  }

  // ---- invariants ------------------------------------------------------

  struct InvariantReport {
    double symmetry = 0.0;     // |M - M^T|_F / |M|_F
    double idempotency = 0.0;  // |M D^2 M - M|_F / |M|_F
    double log_gap = 0.0;      // max_i |ln lam_ext_i - ln lam_tilde_i|
    double min_lam = 0.0;
  };

  InvariantReport check_invariants() const {
    InvariantReport rep;
    const double mf = std::max(m_.norm(), 1e-300);
    rep.symmetry = (m_ - m_.transpose()).norm() / mf;
    const Vector ll = kron_diag(lam_, lam_);
    rep.idempotency = (m_ * ll.asDiagonal() * m_ - m_).norm() / mf;
    rep.log_gap = (lam_external_.array().log() - lam_tilde_.array().log())
                      .abs()
                      .maxCoeff();
    rep.min_lam = lam_.minCoeff();
    return rep;
  }

  // ---- snapshots -------------------------------------------------------

  /// Versioned JSON bundle sufficient to resume: constraints, basis, lam,
  /// lam_tilde, parameters, pool seed/generation and cursor.
  nlohmann::json snapshot() const {
    nlohmann::json j;
    j["version"] = kSnapshotVersion;
    j["n"] = n();
    j["m"] = m();
    j["constraints"] = rows_to_json(constraints_.rows());
    j["basis"] = rows_to_json(basis_);
    j["lam"] = std::vector<double>(lam_.data(), lam_.data() + lam_.size());
    j["lam_tilde"] = std::vector<double>(lam_tilde_.data(),
                                         lam_tilde_.data() + lam_tilde_.size());
    j["lam_external"] = std::vector<double>(
        lam_external_.data(), lam_external_.data() + lam_external_.size());
    j["eig_floor"] = eig_floor_;
    j["params"] = {{"eps_mp", params_.eps_mp},
                   {"a_exp", params_.a_exp},
                   {"family", params_.family.name()},
                   {"sparsity", params_.family.sparsity},
                   {"pool_size", params_.pool_size},
                   {"sketch_dim", params_.sketch_dim},
                   {"seed", params_.seed},
                   {"recompute_every", params_.recompute_every},
                   {"regenerate_on_update", params_.regenerate_on_update},
                   {"auto_regenerate_pool", params_.auto_regenerate_pool}};
    j["pool_generation"] = pool_generation_;
    j["cursor"] = cursor_;
    j["rank_since_build"] = rank_since_build_;
    j["updates_since_build"] = updates_since_build_;
    j["counters"] = counters_;
    return j;
  }

  static KroneckerProjMaintain restore(const nlohmann::json& j) {
    if (j.at("version").get<int>() != kSnapshotVersion) {
      throw DomainError("projmaint: unsupported snapshot version");
    }
    const Index n = j.at("n").get<Index>();
    const auto& p = j.at("params");
    MaintParams params;
    params.eps_mp = p.at("eps_mp").get<double>();
    params.a_exp = p.at("a_exp").get<double>();
    params.family = SketchFamily::parse(p.at("family").get<std::string>());
    params.family.sparsity = p.at("sparsity").get<Index>();
    params.pool_size = p.at("pool_size").get<Index>();
    params.sketch_dim = p.at("sketch_dim").get<Index>();
    params.seed = p.at("seed").get<std::uint64_t>();
    params.recompute_every = p.at("recompute_every").get<Index>();
    params.regenerate_on_update = p.at("regenerate_on_update").get<bool>();
    params.auto_regenerate_pool = p.at("auto_regenerate_pool").get<bool>();

    ConstraintBatch constraints(n, rows_from_json(j.at("constraints")));
    const DenseMatrix basis = rows_from_json(j.at("basis"));
    const Vector lam = vector_from_json(j.at("lam"));
    KroneckerProjMaintain out(std::move(constraints), EigenWeight{basis, lam},
                              params);
    out.eig_floor_ = j.at("eig_floor").get<double>();
    out.lam_tilde_ = vector_from_json(j.at("lam_tilde"));
    out.lam_external_ = vector_from_json(j.at("lam_external"));
    out.pool_generation_ = j.at("pool_generation").get<std::uint64_t>() - 1;
    out.regenerate_pool();
    out.rebuild_qp();
    out.cursor_ = j.at("cursor").get<Index>();
    out.rank_since_build_ = j.at("rank_since_build").get<Index>();
    out.updates_since_build_ = j.at("updates_since_build").get<Index>();
    out.counters_ = j.at("counters").get<MaintCounters>();
    return out;
  }

 private:
  struct Support {
    std::vector<Index> idx;  // Kronecker coordinates with nonzero delta
    Vector delta;            // the matching diagonal entries
  };

  Vector clamp_eigvals(const Vector& v) const {
    const double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
    Vector out = v;
    for (Index i = 0; i < v.size(); ++i) {
      if (out(i) < -kEigenClamp * scale) {
        throw DomainError("projmaint: eigenvalue is negative");
      }
      out(i) = std::max(out(i), eig_floor_);
    }
    return out;
  }

  static Vector sqrt_kron(const Vector& lam) {
    const Vector root = lam.cwiseSqrt();
    return kron_diag(root, root);
  }

  // Nonzero entries of lam_target kron lam_target - lam kron lam.
  Support woodbury_support(const Vector& lam_target) const {
    std::vector<Index> changed;
    for (Index i = 0; i < n(); ++i) {
      if (lam_target(i) != lam_(i)) changed.push_back(i);
    }
    Support s;
    const std::vector<Index> expanded = expand_index_set(changed, n());
    std::vector<double> vals;
    for (Index p : expanded) {
      const Index i = p / n();
      const Index j = p % n();
      const double delta =
          lam_target(i) * lam_target(j) - lam_(i) * lam_(j);
      if (delta != 0.0) {
        s.idx.push_back(p);
        vals.push_back(delta);
      }
    }
    s.delta = Eigen::Map<const Vector>(vals.data(),
                                       static_cast<Index>(vals.size()));
    return s;
  }

  DenseMatrix inverse_at(const Vector& lam) const {
    const Vector ll = kron_diag(lam, lam);
    const DenseMatrix gram = g_ * ll.asDiagonal() * g_.transpose();
    return g_.transpose() * solve_spd(gram, g_);
  }

  void rebuild_inverse() {
    m_ = inverse_at(lam_);
    rank_since_build_ = 0;
    updates_since_build_ = 0;
  }

  void regenerate_pool() {
    ++pool_generation_;
    const Index nn = n() * n();
    pool_.clear();
    pool_.reserve(static_cast<std::size_t>(params_.pool_size));
    for (Index l = 0; l < params_.pool_size; ++l) {
      pool_.push_back(Sketch::generate(
          params_.family, params_.sketch_dim, nn,
          derive_seed(params_.seed, pool_generation_, std::uint64_t(l))));
    }
    const Index b = params_.sketch_dim;
    DenseMatrix rt(nn, params_.pool_size * b);
    for (Index l = 0; l < params_.pool_size; ++l) {
      rt.middleCols(l * b, b) = pool_[l].to_dense().transpose();
    }
    const DenseMatrix basis_t = basis_.transpose();
    krt_ = kron_apply_cols(basis_t, basis_t, rt);
    cursor_ = 0;
    ++counters_.pool_regenerations;
  }

  // Q = M D K^T R^T, P = K D Q.
  void rebuild_qp() {
    const Vector d = sqrt_kron(lam_);
    q_ = m_ * (d.asDiagonal() * krt_);
    p_ = kron_apply_cols(basis_, basis_, d.asDiagonal() * q_);
  }

  // Moves the maintained lam to lam_hat, updating M, Q and P.
  void apply_eigen_change(const Vector& lam_hat) {
    const Index nn = n() * n();
    const Support sel = woodbury_support(lam_hat);
    const auto k = static_cast<Index>(sel.idx.size());
    counters_.woodbury_ranks.push_back(k);

    const DenseMatrix m_old = m_;
    const Vector d_old = sqrt_kron(lam_);
    bool rebuilt = false;

    if (rank_since_build_ + k > nn ||
        updates_since_build_ + 1 >= params_.recompute_every) {
      lam_ = lam_hat;
      rebuild_inverse();
      ++counters_.full_recomputes;
      rebuilt = true;
    } else if (k > 0) {
      try {
        woodbury_inplace(sel);
        rank_since_build_ += k;
        ++updates_since_build_;
      } catch (const ConditionError&) {
        ++counters_.condition_fallbacks;
        ++counters_.full_recomputes;
        m_ = m_old;
        rebuilt = true;
      }
      lam_ = lam_hat;
      if (rebuilt) rebuild_inverse();
    } else {
      lam_ = lam_hat;
    }

    if (rebuilt || params_.regenerate_on_update) {
      regenerate_pool();
      rebuild_qp();
      return;
    }

    // Incremental Q/P against the unchanged pool:
    //   Q' = Q + M' Gamma K^T R^T + (M' - M) D K^T R^T
    //   P' = P + K Gamma Q' + K D (Q' - Q)
    const Vector gamma = sqrt_kron(lam_) - d_old;
    const DenseMatrix q_new = q_ + m_ * (gamma.asDiagonal() * krt_) +
                              (m_ - m_old) * (d_old.asDiagonal() * krt_);
    p_ += kron_apply_cols(basis_, basis_, gamma.asDiagonal() * q_new) +
          kron_apply_cols(basis_, basis_, d_old.asDiagonal() * (q_new - q_));
    q_ = q_new;
  }

  // M <- M - M_{*,S} (Delta^{-1} + M_SS)^{-1} M_{S,*}, evaluated as
  // M - M_{*,S} (I + Delta M_SS)^{-1} Delta M_{S,*} so that tiny Delta
  // entries stay harmless.
  void woodbury_inplace(const Support& sel) {
    const auto k = static_cast<Index>(sel.idx.size());
    const Index nn = n() * n();
    DenseMatrix m_cols(nn, k);
    for (Index c = 0; c < k; ++c) m_cols.col(c) = m_.col(sel.idx[c]);
    DenseMatrix inner = DenseMatrix::Identity(k, k);
    for (Index a = 0; a < k; ++a)
      for (Index c = 0; c < k; ++c)
        inner(a, c) += sel.delta(a) * m_cols(sel.idx[a], c);
    const DenseMatrix rhs = sel.delta.asDiagonal() * m_cols.transpose();
    m_ -= m_cols * solve_general(inner, rhs);
    m_ = 0.5 * (m_ + m_.transpose()).eval();
  }

  static nlohmann::json rows_to_json(const DenseMatrix& a) {
    nlohmann::json rows = nlohmann::json::array();
    for (Index i = 0; i < a.rows(); ++i) {
      std::vector<double> r(static_cast<std::size_t>(a.cols()));
      for (Index j = 0; j < a.cols(); ++j) r[j] = a(i, j);
      rows.push_back(r);
    }
    return rows;
  }

  static DenseMatrix rows_from_json(const nlohmann::json& j) {
    const auto rows = static_cast<Index>(j.size());
    const Index cols = rows == 0 ? 0 : static_cast<Index>(j[0].size());
    DenseMatrix a(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index c = 0; c < cols; ++c) a(i, c) = j[i][c].get<double>();
    return a;
  }

  static Vector vector_from_json(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
  }

  ConstraintBatch constraints_;
  MaintParams params_;
  DenseMatrix basis_;
  DenseMatrix g_;
  Vector lam_;
  Vector lam_tilde_;
  Vector lam_external_;
  double eig_floor_ = 0.0;
  DenseMatrix m_;
  DenseMatrix q_;
  DenseMatrix p_;
  DenseMatrix krt_;  // K^T R^T for the current pool
  std::vector<Sketch> pool_;
  std::uint64_t pool_generation_ = 0;
  Index cursor_ = 0;
  Index rank_since_build_ = 0;
  Index updates_since_build_ = 0;
  MaintCounters counters_;
  std::optional<Sketch> last_sketch_;
  Vector last_pg_;
};

}  // namespace kronproj
