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


#include "kronproj/harness.hpp"
#include "kronproj/oracle.hpp"
#include "kronproj/projmaint.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace kronproj {
namespace {

using testing::rel_err;

struct Instance {
  ConstraintBatch cons;
  DenseMatrix basis;
  Vector lam;
};

Instance random_instance(Index n, Index m, std::uint64_t seed) {
  Rng rng(seed);
  Instance in{random_constraints(n, m, rng), random_orthonormal(n, rng),
              Vector(n)};
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (Index i = 0; i < n; ++i) in.lam(i) = u(rng);
  return in;
}

// K D M D K^T, the projection the maintained state represents.
DenseMatrix represented_projection(const KroneckerProjMaintain& pm) {
  const DenseMatrix k = oracle::kron(pm.basis(), pm.basis());
  const Vector root = pm.lam().cwiseSqrt();
  const Vector d = kron_diag(root, root);
  return k * d.asDiagonal() * pm.m_matrix() * d.asDiagonal() * k.transpose();
}

MaintParams small_params(std::uint64_t seed = 1) {
  MaintParams p;
  p.sketch_dim = 8;
  p.pool_size = 4;
  p.seed = seed;
  return p;
}

// ---- soft threshold / index sets -----------------------------------------

TEST(SoftThreshold, UnchangedInputKeepsRank) {
  const Vector lam = Vector::Ones(4);
  const SoftThresholdResult st = soft_threshold(lam, lam, 2);
  EXPECT_EQ(st.r, 2);
  EXPECT_EQ(st.lam_hat, lam);
}

TEST(SoftThreshold, SingleLargeChangeStopsImmediately) {
  const Vector lam = Vector::Ones(4);
  Vector lam_new = Vector::Ones(4);
  lam_new(0) = std::exp(1.0);
  const SoftThresholdResult st = soft_threshold(lam, lam_new, 1);
  EXPECT_EQ(st.r, 1);
  EXPECT_EQ(st.lam_hat, lam_new);
}

TEST(SoftThreshold, NearUniformChangesGrowGeometrically) {
  const Index n = 8;
  const Vector lam = Vector::Ones(n);
  Vector lam_new(n);
  for (Index i = 0; i < n; ++i) lam_new(i) = std::exp(1.0 - 0.01 * double(i));
  // 1 -> 2 -> 3 -> 5 -> 8.
  const SoftThresholdResult st = soft_threshold(lam, lam_new, 1);
  EXPECT_EQ(st.r, 8);
  EXPECT_LT((st.lam_hat - lam_new).norm(), 1e-15);
  EXPECT_EQ(soft_threshold(lam, lam_new, 3).r, 8);
}

TEST(SoftThreshold, SelectsLargestChanges) {
  const Vector lam = Vector::Ones(6);
  Vector lam_new = Vector::Ones(6);
  lam_new(4) = 5.0;
  lam_new(1) = 0.9;
  const SoftThresholdResult st = soft_threshold(lam, lam_new, 1);
  EXPECT_EQ(st.r, 1);
  EXPECT_EQ(st.order.front(), 4);
  EXPECT_DOUBLE_EQ(st.lam_hat(4), 5.0);
  EXPECT_DOUBLE_EQ(st.lam_hat(1), 1.0);
}

TEST(SoftThreshold, RejectsNonPositive) {
  Vector bad = Vector::Ones(3);
  bad(1) = 0.0;
  EXPECT_THROW(soft_threshold(Vector::Ones(3), bad, 1), DomainError);
}

TEST(ExpandIndexSet, Examples) {
  EXPECT_TRUE(expand_index_set({}, 3).empty());
  const std::vector<Index> s = expand_index_set({0}, 2);
  // Pairs (0,0), (0,1), (1,0).
  EXPECT_EQ(s, (std::vector<Index>{0, 1, 2}));
  EXPECT_EQ(expand_index_set({0, 1, 2}, 3).size(), 9u);
  EXPECT_THROW(expand_index_set({3}, 3), DomainError);
}

TEST(ExpandIndexSet, SizeFormula) {
  for (Index n = 1; n <= 6; ++n) {
    for (Index k = 0; k <= n; ++k) {
      std::vector<Index> s;
      for (Index i = 0; i < k; ++i) s.push_back(i);
      EXPECT_EQ(Index(expand_index_set(s, n).size()), 2 * n * k - k * k);
    }
  }
}

// ---- init ----------------------------------------------------------------

TEST(Init, SingleIdentityConstraint) {
  const ConstraintBatch cons =
      ConstraintBatch::from_matrices({DenseMatrix::Identity(2, 2)});
  KroneckerProjMaintain pm(cons, DenseMatrix::Identity(2, 2), small_params());
  const Vector v = vec(DenseMatrix::Identity(2, 2));
  EXPECT_LT(rel_err(pm.m_matrix(), v * v.transpose() / 2.0), 1e-12);
}

TEST(Init, IdentityWeightGivesPlainProjection) {
  Rng rng(3);
  const ConstraintBatch cons = random_constraints(3, 4, rng);
  const DenseMatrix a = cons.rows();
  const DenseMatrix want = a.transpose() * (a * a.transpose()).inverse() * a;
  KroneckerProjMaintain pm(cons, DenseMatrix::Identity(3, 3), small_params());
  EXPECT_LT(rel_err(represented_projection(pm), want), 1e-10);
  KroneckerProjMaintain plain(
      cons, EigenWeight{DenseMatrix::Identity(3, 3), Vector::Ones(3)},
      small_params());
  EXPECT_LT(rel_err(plain.m_matrix(), want), 1e-10);
}

TEST(Init, RepresentsOracleProjection) {
  const Instance in = random_instance(4, 5, 4);
  KroneckerProjMaintain pm(in.cons, EigenWeight{in.basis, in.lam},
                           small_params());
  const DenseMatrix want = oracle::exact_projection(in.cons, in.basis, in.lam);
  EXPECT_LT(rel_err(represented_projection(pm), want), 1e-8);
  EXPECT_EQ(pm.lam_tilde(), pm.lam());
  EXPECT_EQ(pm.cursor(), 0);
}

TEST(Init, QAndPMatchDefinitions) {
  const Instance in = random_instance(3, 4, 5);
  KroneckerProjMaintain pm(in.cons, EigenWeight{in.basis, in.lam},
                           small_params());
  const DenseMatrix k = oracle::kron(in.basis, in.basis);
  const Vector root = in.lam.cwiseSqrt();
  const Vector d = kron_diag(root, root);
  DenseMatrix rt(9, 4 * 8);
  for (Index l = 0; l < 4; ++l) {
    rt.middleCols(l * 8, 8) = pm.pool()[l].to_dense().transpose();
  }
  const DenseMatrix q = pm.m_matrix() * d.asDiagonal() * k.transpose() * rt;
  EXPECT_LT(rel_err(pm.q_matrix(), q), 1e-10);
  EXPECT_LT(rel_err(pm.p_matrix(), k * d.asDiagonal() * q), 1e-10);
}

TEST(Init, Errors) {
  const Instance in = random_instance(3, 4, 6);
  const EigenWeight w{in.basis, in.lam};
  MaintParams p = small_params();
  p.eps_mp = 0.2;
  EXPECT_THROW(KroneckerProjMaintain(in.cons, w, p), DomainError);
  p = small_params();
  p.a_exp = 1.0;
  EXPECT_THROW(KroneckerProjMaintain(in.cons, w, p), DomainError);

  DenseMatrix rows = in.cons.rows();
  rows.row(3) = rows.row(0) + rows.row(1);
  EXPECT_THROW(KroneckerProjMaintain(ConstraintBatch(3, rows), w,
                                     small_params()),
               DomainError);
  EXPECT_THROW(KroneckerProjMaintain(in.cons,
                                     EigenWeight{2.0 * in.basis, in.lam},
                                     small_params()),
               DomainError);
}

// ---- update / query ------------------------------------------------------

void check_against_oracle(bool regenerate, std::uint64_t seed) {
  const Index n = 4;
  const Instance in = random_instance(n, 6, seed);
  MaintParams p = small_params(seed);
  p.regenerate_on_update = regenerate;
  KroneckerProjMaintain pm(in.cons, EigenWeight{in.basis, in.lam}, p);

  DriftConfig drift;
  drift.n = n;
  drift.steps = 50;
  drift.c1 = 0.15;
  drift.c2 = 0.01;
  drift.seed = seed;
  const std::vector<Vector> seq = gen_drift_sequence(drift);
  Rng rng(seed + 99);
  for (std::size_t t = 1; t < seq.size(); ++t) {
    const Vector lam_tilde = pm.update(seq[t]);
    const DenseMatrix m_ref =
        oracle::maintained_inverse(in.cons, in.basis, pm.lam());
    ASSERT_LT(rel_err(pm.m_matrix(), m_ref), 1e-7) << "t=" << t;

    const Vector h = random_gaussian(n * n, rng);
    const Vector out = pm.query(h);
    const DenseMatrix r = pm.last_sketch()->to_dense();
    const Vector want = oracle::exact_projection(in.cons, in.basis, lam_tilde) *
                        (r.transpose() * (r * h));
    ASSERT_LT((out - want).norm(), 1e-7 * want.norm()) << "t=" << t;

    const double gap =
        (seq[t].array().log() - lam_tilde.array().log()).abs().maxCoeff();
    ASSERT_LE(gap, 0.5 * p.eps_mp + 1e-12);
  }
  if (!regenerate) {
    // Q and P advanced incrementally still agree with their definitions.
    const DenseMatrix k = oracle::kron(in.basis, in.basis);
    const Vector root = pm.lam().cwiseSqrt();
    const Vector d = kron_diag(root, root);
    DenseMatrix rt(n * n, p.pool_size * p.sketch_dim);
    for (Index l = 0; l < p.pool_size; ++l) {
      rt.middleCols(l * p.sketch_dim, p.sketch_dim) =
          pm.pool()[l].to_dense().transpose();
    }
    const DenseMatrix q = pm.m_matrix() * d.asDiagonal() * k.transpose() * rt;
    EXPECT_LT(rel_err(pm.q_matrix(), q), 1e-8);
    EXPECT_LT(rel_err(pm.p_matrix(), k * d.asDiagonal() * q), 1e-8);
  }
}

TEST(Update, MatchesOracleWithRegeneratedSketches) {
  check_against_oracle(true, 21);
  check_against_oracle(true, 22);
}

TEST(Update, MatchesOracleWithIncrementalQP) {
  check_against_oracle(false, 23);
  check_against_oracle(false, 24);
}

TEST(Update, SmallDriftTakesLazyBranch) {
  const Instance in = random_instance(4, 5, 30);
  KroneckerProjMaintain pm(in.cons, EigenWeight{in.basis, in.lam},
                           small_params());
  const DenseMatrix m0 = pm.m_matrix();
  Vector lam = in.lam;
  for (int t = 0; t < 10; ++t) {
    lam(0) *= std::exp(0.001);
    const Vector lt = pm.update(lam);
    EXPECT_EQ(lt, in.lam);
  }
  EXPECT_EQ(pm.m_matrix(), m0);
  EXPECT_EQ(pm.counters().lazy_updates, 10);
  for (Index r : pm.counters().woodbury_ranks) EXPECT_EQ(r, 0);
}

TEST(Update, LargeSingleChangeIsServedAtQueryTime) {
  // One coordinate moving past eps/2 stays below n^a = 2 coordinates, so the
  // maintained lam is untouched while lam_tilde follows the new value.
  const Instance in = random_instance(4, 5, 31);
  KroneckerProjMaintain pm(in.cons, EigenWeight{in.basis, in.lam},
                           small_params());
  Vector lam = in.lam;
  lam(2) *= 1.5;
  const Vector lt = pm.update(lam);
  EXPECT_EQ(pm.lam(), in.lam);
  EXPECT_DOUBLE_EQ(lt(2), lam(2));
  const Vector h = Vector::Ones(16);
  const Vector out = pm.query(h);
  const DenseMatrix r = pm.last_sketch()->to_dense();
  const Vector want = oracle::exact_projection(in.cons, in.basis, lam) *
                      (r.transpose() * (r * h));
  EXPECT_LT((out - want).norm(), 1e-8 * want.norm());
}

TEST(Update, AcceptsMatrixAndEigenWeightForms) {
  const Instance in = random_instance(3, 4, 32);
  KroneckerProjMaintain a(in.cons, EigenWeight{in.basis, in.lam},
                          small_params());
  KroneckerProjMaintain b(in.cons, EigenWeight{in.basis, in.lam},
                          small_params());
  const Vector lam2 = 1.3 * in.lam;
  const Vector x = a.update(EigenWeight{in.basis, lam2});
  const Vector y =
      b.update(DenseMatrix(in.basis * lam2.asDiagonal() * in.basis.transpose()));
  EXPECT_LT((x - y).norm(), 1e-10);
  EXPECT_THROW(a.update(EigenWeight{DenseMatrix::Identity(3, 3), lam2}),
               DomainError);
  EXPECT_THROW(a.update(Vector(Vector::Ones(2))), DimensionError);
}

TEST(Update, InvariantsHold) {
  const Instance in = random_instance(4, 6, 33);
  KroneckerProjMaintain pm(in.cons, EigenWeight{in.basis, in.lam},
                           small_params());
  Vector lam = in.lam;
  for (int t = 0; t < 20; ++t) {
    lam = lam.array() * (0.2 * Vector::LinSpaced(4, -1, 1).array()).exp();
    pm.update(lam);
    const auto inv = pm.check_invariants();
    EXPECT_LE(inv.symmetry, 1e-8);
    EXPECT_LE(inv.idempotency, 1e-7);
    EXPECT_LE(inv.log_gap, 0.5 * pm.params().eps_mp + 1e-12);
    EXPECT_GE(inv.min_lam, pm.eig_floor());
    EXPECT_LT(pm.cursor(), pm.params().pool_size);
  }
}

TEST(Query, PoolRegeneratesAfterUse) {
  const Instance in = random_instance(3, 4, 34);
  KroneckerProjMaintain pm(in.cons, EigenWeight{in.basis, in.lam},
                           small_params());
  const auto gen0 = pm.pool_generation();
  for (int i = 0; i < 4; ++i) pm.query(Vector::Ones(9));
  EXPECT_EQ(pm.pool_generation(), gen0 + 1);
  EXPECT_EQ(pm.cursor(), 0);

  MaintParams p = small_params();
  p.auto_regenerate_pool = false;
  KroneckerProjMaintain strict(in.cons, EigenWeight{in.basis, in.lam}, p);
  for (int i = 0; i < 4; ++i) strict.query(Vector::Ones(9));
  EXPECT_THROW(strict.query(Vector::Ones(9)), PoolExhausted);
}

TEST(Query, SketchFamiliesAllMatchOracle) {
  const Instance in = random_instance(3, 4, 35);
  for (const auto& f :
       {SketchFamily::gaussian(), SketchFamily::srht(), SketchFamily::ams(),
        SketchFamily::count_sketch(), SketchFamily::sparse_embedding(2)}) {
    MaintParams p = small_params();
    p.family = f;
    KroneckerProjMaintain pm(in.cons, EigenWeight{in.basis, in.lam}, p);
    const Vector lt = pm.update(Vector(in.lam * 1.2));
    const Vector h = Vector::LinSpaced(9, -1, 1);
    const Vector out = pm.query(h);
    const DenseMatrix r = pm.last_sketch()->to_dense();
    const Vector want = oracle::exact_projection(in.cons, in.basis, lt) *
                        (r.transpose() * (r * h));
    EXPECT_LT((out - want).norm(), 1e-8 * std::max(1.0, want.norm()))
        << f.name();
  }
}

TEST(Snapshot, RestoreResumesIdentically) {
  const Instance in = random_instance(3, 4, 36);
  KroneckerProjMaintain pm(in.cons, EigenWeight{in.basis, in.lam},
                           small_params());
  pm.update(Vector(in.lam * 1.3));
  pm.query(Vector::Ones(9));
  const nlohmann::json snap = pm.snapshot();
  KroneckerProjMaintain back = KroneckerProjMaintain::restore(snap);
  EXPECT_EQ(back.cursor(), pm.cursor());
  EXPECT_EQ(back.pool_generation(), pm.pool_generation());
  EXPECT_EQ(back.lam_tilde(), pm.lam_tilde());
  const Vector h = Vector::LinSpaced(9, 0, 1);
  const Vector a = pm.query(h);
  const Vector b = back.query(h);
  EXPECT_LT((a - b).norm(), 1e-9 * a.norm());
  EXPECT_EQ(back.snapshot()["version"], KroneckerProjMaintain::kSnapshotVersion);
  nlohmann::json bad = snap;
  bad["version"] = 99;
  EXPECT_THROW(KroneckerProjMaintain::restore(bad), DomainError);
}

}  // namespace
}  // namespace kronproj
