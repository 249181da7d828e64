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

/** @file oracle.hpp

    @brief Brute-force reference computations.

    Everything here materializes the n^2 x n^2 Kronecker products and inverts
    Gram matrices directly. Nothing calls into the maintained data structure
    or the implicit Kronecker kernels, so these routines can serve as ground
    truth for them. Cost is O(n^6); intended for n <= 16 or so.
*/

#pragma once

#include "kronproj/constraints.hpp"
#include "kronproj/kronlinalg.hpp"

#include <vector>

namespace kronproj::oracle {

enum class Variant {
  kSymmetric,  // B = A (W^{1/2} kron W^{1/2})
  kLeft,       // B = A (W kron I)
};

/// Explicit Kronecker product.
inline DenseMatrix kron(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Symmetric PSD square root through Eigen's eigensolver.
inline DenseMatrix psd_sqrt(const DenseMatrix& w) {
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(0.5 * (w + w.transpose()));
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() *
         es.eigenvectors().transpose();
}

/// B^T (B B^T)^{-1} B for an m x N matrix B of full row rank.
inline DenseMatrix row_space_projection(const DenseMatrix& b) {
  const DenseMatrix gram = b * b.transpose();
  Eigen::JacobiSVD<DenseMatrix> svd(gram);
  const Vector& sv = svd.singularValues();
  if (sv.size() > 0 &&
      (sv(sv.size() - 1) <= 0.0 ||
       sv(0) / sv(sv.size() - 1) > kConditionBound)) {
    throw ConditionError("oracle: singular Gram matrix");
  }
  return b.transpose() * gram.fullPivLu().solve(b);
}

/// The materialized matrix B for a constraint batch and weight W.
inline DenseMatrix weighted_constraints(const ConstraintBatch& constraints,
                                        const DenseMatrix& w,
                                        Variant variant) {
  const Index n = constraints.n();
  if (w.rows() != n || w.cols() != n) {
    throw DimensionError("oracle: W must be n x n");
  }
  DenseMatrix factor;
  if (variant == Variant::kSymmetric) {
    const DenseMatrix root = psd_sqrt(w);
    factor = kron(root, root);
  } else {
    factor = kron(w, DenseMatrix::Identity(n, n));
  }
  return constraints.rows() * factor;
}

inline DenseMatrix exact_projection(const ConstraintBatch& constraints,
                                    const DenseMatrix& w,
                                    Variant variant = Variant::kSymmetric) {
  return row_space_projection(weighted_constraints(constraints, w, variant));
}

/// Exact projection for W = U diag(lam) U^T.
inline DenseMatrix exact_projection(const ConstraintBatch& constraints,
                                    const DenseMatrix& basis,
                                    const Vector& lam) {
  const DenseMatrix w = basis * lam.asDiagonal() * basis.transpose();
  return exact_projection(constraints, w, Variant::kSymmetric);
}

/// From-scratch G^T (G (Lam kron Lam) G^T)^{-1} G with G = A (U kron U).
inline DenseMatrix maintained_inverse(const ConstraintBatch& constraints,
                                      const DenseMatrix& basis,
                                      const Vector& lam) {
  const DenseMatrix g = constraints.rows() * kron(basis, basis);
  const DenseMatrix ll = kron(lam.asDiagonal().toDenseMatrix(),
                              lam.asDiagonal().toDenseMatrix());
  const DenseMatrix gram = g * ll * g.transpose();
  return g.transpose() * gram.fullPivLu().solve(g);
}

/// ||G h||_2^2.
inline double exact_norm(const DenseMatrix& g, const Vector& h) {
  if (g.cols() != h.size()) throw DimensionError("exact_norm: size mismatch");
  return (g * h).squaredNorm();
}

/// ((g_j^T h)^2) for j in `query`, g_j the rows of G.
inline Vector exact_set_query(const DenseMatrix& g, const Vector& h,
                              const std::vector<Index>& query) {
  if (g.cols() != h.size()) {
    throw DimensionError("exact_set_query: size mismatch");
  }
  Vector out(static_cast<Index>(query.size()));
  for (std::size_t k = 0; k < query.size(); ++k) {
    const Index j = query[k];
    if (j < 0 || j >= g.rows()) {
      throw DimensionError("exact_set_query: index out of range");
    }
    const double v = g.row(j).dot(h);
    out(static_cast<Index>(k)) = v * v;
  }
  return out;
}

}  // namespace kronproj::oracle
