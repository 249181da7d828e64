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

/** @file kronlinalg.hpp

    @brief Dense kernels for Kronecker-structured linear algebra.

    Vectorization convention, shared by every module in this library:
    vec(X) stacks the columns of X (Eigen's native storage order). With that
    convention the Kronecker pair (i, j) of two n-vectors lives at index
    i*n + j, and

        (A kron B) vec(X) = vec(B X A^T).

    None of the routines here materialize an n^2 x n^2 Kronecker product.
*/

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>

namespace kronproj {

using Index = Eigen::Index;
using DenseMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Inputs whose shapes do not conform.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input violates a mathematical precondition (not symmetric, not PSD, ...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A solve exceeded the condition-number guard. Recoverable: callers fall
/// back to a full recompute.
class ConditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Solves refuse systems whose estimated condition number exceeds this.
inline constexpr double kConditionBound = 1e12;
/// Eigenvalues in [-kEigenClamp, 0) are treated as round-off and set to 0.
inline constexpr double kEigenClamp = 1e-10;
inline constexpr double kSymmetryTol = 1e-10;

/// Orthonormal eigenbasis plus nonnegative eigenvalues, W = U diag(eigvals) U^T.
struct EigenWeight {
  DenseMatrix basis;
  Vector eigvals;

  Index dim() const { return eigvals.size(); }

  DenseMatrix reconstruct() const {
    return basis * eigvals.asDiagonal() * basis.transpose();
  }
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

// 2-norm condition numbers. Exact (eigen/SVD based); matrices here are small.
inline double spd_condition(const DenseMatrix& a) {
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(a, Eigen::EigenvaluesOnly);
  const Vector& ev = es.eigenvalues();
  if (ev.size() == 0) return 1.0;
  const double lo = ev.minCoeff();
  const double hi = ev.maxCoeff();
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

inline double general_condition(const DenseMatrix& a) {
  if (a.rows() == 0) return 1.0;
  Eigen::JacobiSVD<DenseMatrix> svd(a);
  const Vector& sv = svd.singularValues();
  const double lo = sv(sv.size() - 1);
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return sv(0) / lo;
}

}  // namespace detail

inline double max_abs(const DenseMatrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

inline bool all_finite(const DenseMatrix& a) { return a.allFinite(); }

/// Reads a length-n^2 vector as the n x n matrix X with x = vec(X).
inline Eigen::Map<const DenseMatrix> unvec(const Vector& x, Index n) {
  detail::require(x.size() == n * n, "unvec: length is not n^2");
  return Eigen::Map<const DenseMatrix>(x.data(), n, n);
}

inline Vector vec(const DenseMatrix& x) {
  return Eigen::Map<const Vector>(x.data(), x.size());
}

/// (A kron B) x for square n x n factors in O(n^3), via vec(B X A^T).
inline Vector kron_apply(const DenseMatrix& a, const DenseMatrix& b,
                         const Vector& x) {
  detail::require(a.rows() == a.cols() && b.rows() == b.cols(),
                  "kron_apply: factors must be square");
  detail::require(a.rows() == b.rows(), "kron_apply: factor sizes differ");
  const Index n = a.rows();
  detail::require(x.size() == n * n, "kron_apply: x must have length n^2");
  const DenseMatrix y = b * unvec(x, n) * a.transpose();
  return vec(y);
}

/// Applies (A kron B) to every column of X.
inline DenseMatrix kron_apply_cols(const DenseMatrix& a, const DenseMatrix& b,
                                   const DenseMatrix& x) {
  DenseMatrix out(x.rows(), x.cols());
  for (Index c = 0; c < x.cols(); ++c) {
    out.col(c) = kron_apply(a, b, x.col(c));
  }
  return out;
}

/// Diagonal of diag(a) kron diag(b): entry i*n + j equals a_i * b_j.
inline Vector kron_diag(const Vector& a, const Vector& b) {
  Vector out(a.size() * b.size());
  for (Index i = 0; i < a.size(); ++i) {
    out.segment(i * b.size(), b.size()) = a(i) * b;
  }
  return out;
}

/// Symmetric eigendecomposition of a PSD matrix, eigenvalues nonincreasing.
inline EigenWeight sym_eigen(const DenseMatrix& w) {
  detail::require(w.rows() == w.cols(), "sym_eigen: matrix must be square");
  if (!w.allFinite()) throw DomainError("sym_eigen: non-finite entries");
  const double scale = std::max(1.0, max_abs(w));
  if (max_abs(w - w.transpose()) > kSymmetryTol * scale) {
    throw DomainError("sym_eigen: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(0.5 * (w + w.transpose()));
  if (es.info() != Eigen::Success) {
    throw DomainError("sym_eigen: eigensolver did not converge");
  }
  // Eigen returns ascending order.
  const Index n = w.rows();
  EigenWeight out{DenseMatrix(n, n), Vector(n)};
  for (Index k = 0; k < n; ++k) {
    double lam = es.eigenvalues()(n - 1 - k);
    if (lam < 0.0) {
      if (lam < -kEigenClamp * scale) {
        throw DomainError("sym_eigen: matrix is not positive semidefinite");
      }
      lam = 0.0;
    }
    out.eigvals(k) = lam;
    out.basis.col(k) = es.eigenvectors().col(n - 1 - k);
  }
  return out;
}

/// Solves A X = B for symmetric positive definite A.
inline DenseMatrix solve_spd(const DenseMatrix& a, const DenseMatrix& b) {
  detail::require(a.rows() == a.cols(), "solve_spd: A must be square");
  detail::require(a.rows() == b.rows(), "solve_spd: row count mismatch");
  const double scale = std::max(1.0, max_abs(a));
  if (max_abs(a - a.transpose()) > kSymmetryTol * scale) {
    throw DomainError("solve_spd: A is not symmetric");
  }
  Eigen::LLT<DenseMatrix> llt(a);
  if (llt.info() != Eigen::Success) {
    throw ConditionError("solve_spd: A is not positive definite");
  }
  if (detail::spd_condition(a) > kConditionBound) {
    throw ConditionError("solve_spd: condition number exceeds bound");
  }
  return llt.solve(b);
}

/// Solves a general square system with the condition guard.
inline DenseMatrix solve_general(const DenseMatrix& a, const DenseMatrix& b) {
  detail::require(a.rows() == a.cols(), "solve_general: A must be square");
  detail::require(a.rows() == b.rows(), "solve_general: row count mismatch");
  if (!a.allFinite()) throw ConditionError("solve_general: non-finite matrix");
  if (detail::general_condition(a) > kConditionBound) {
    throw ConditionError("solve_general: condition number exceeds bound");
  }
  return Eigen::PartialPivLU<DenseMatrix>(a).solve(b);
}

/// (A + U C V)^{-1} from A^{-1} by the Woodbury identity:
///   A^{-1} - A^{-1} U (C^{-1} + V A^{-1} U)^{-1} V A^{-1}.
/// Throws ConditionError when C or the inner k x k matrix is too close to
/// singular, which callers treat as a signal to recompute from scratch.
inline DenseMatrix woodbury_update(const DenseMatrix& a_inv,
                                   const DenseMatrix& u, const DenseMatrix& c,
                                   const DenseMatrix& v) {
  const Index n = a_inv.rows();
  const Index k = c.rows();
  detail::require(a_inv.cols() == n, "woodbury_update: A^{-1} must be square");
  detail::require(c.cols() == k, "woodbury_update: C must be square");
  detail::require(u.rows() == n && u.cols() == k,
                  "woodbury_update: U must be n x k");
  detail::require(v.rows() == k && v.cols() == n,
                  "woodbury_update: V must be k x n");
  if (k == 0) return a_inv;

  const DenseMatrix c_inv =
      solve_general(c, DenseMatrix::Identity(k, k));
  const DenseMatrix ainv_u = a_inv * u;
  const DenseMatrix v_ainv = v * a_inv;
  const DenseMatrix inner = c_inv + v * ainv_u;
  return a_inv - ainv_u * solve_general(inner, v_ainv);
}

}  // namespace kronproj
