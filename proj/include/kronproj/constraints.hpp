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

#include "kronproj/kronlinalg.hpp"

#include <vector>

namespace kronproj {

/// m constraint matrices A_1..A_m (each n x n), stored as the m x n^2 matrix
/// whose i-th row is vec(A_i)^T.
class ConstraintBatch {
 public:
  ConstraintBatch() = default;

  ConstraintBatch(Index n, DenseMatrix rows) : n_(n), rows_(std::move(rows)) {
    if (rows_.cols() != n_ * n_) {
      throw DimensionError("ConstraintBatch: rows must have n^2 columns");
    }
  }

  static ConstraintBatch from_matrices(const std::vector<DenseMatrix>& mats) {
    if (mats.empty()) throw DimensionError("ConstraintBatch: no matrices");
    const Index n = mats.front().rows();
    DenseMatrix rows(static_cast<Index>(mats.size()), n * n);
    for (std::size_t i = 0; i < mats.size(); ++i) {
      if (mats[i].rows() != n || mats[i].cols() != n) {
        throw DimensionError("ConstraintBatch: matrices must all be n x n");
      }
      rows.row(static_cast<Index>(i)) = vec(mats[i]).transpose();
    }
    return ConstraintBatch(n, std::move(rows));
  }

  Index m() const { return rows_.rows(); }
  Index n() const { return n_; }
  const DenseMatrix& rows() const { return rows_; }

  /// A_i as an n x n matrix.
  DenseMatrix matrix(Index i) const {
    const Vector r = rows_.row(i).transpose();
    return unvec(r, n_);
  }

  /// Numerical rank via column-pivoted QR of the n^2 x m transpose.
  Index rank(double rel_tol = 1e-10) const {
    Eigen::ColPivHouseholderQR<DenseMatrix> qr(rows_.transpose());
    qr.setThreshold(rel_tol);
    return qr.rank();
  }

 private:
  Index n_ = 0;
  DenseMatrix rows_;
};

}  // namespace kronproj
