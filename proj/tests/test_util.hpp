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
#include "kronproj/random.hpp"

#include <random>

namespace kronproj::testing {

inline DenseMatrix random_matrix(Index r, Index c, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  DenseMatrix a(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) a(i, j) = normal(rng);
  return a;
}

inline Vector random_vector(Index n, Rng& rng) {
  return random_matrix(n, 1, rng).col(0);
}

inline DenseMatrix random_spd(Index n, Rng& rng) {
  const DenseMatrix x = random_matrix(n, n, rng);
  return x * x.transpose() + double(n) * DenseMatrix::Identity(n, n);
}

inline double rel_err(const DenseMatrix& a, const DenseMatrix& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

}  // namespace kronproj::testing
