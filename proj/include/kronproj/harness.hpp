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

/** @file harness.hpp

    @brief Experiment drivers: eigenvalue drift generators, maintenance and
    adaptive-adversary runs checked against the brute-force oracle, and the
    rectangular-multiplication cost model. Every experiment is a pure
    function of its config (seed included) and produces a RunReport.
*/

#pragma once

#include "kronproj/adaptive.hpp"
#include "kronproj/constraints.hpp"
#include "kronproj/dpcore.hpp"
#include "kronproj/kronlinalg.hpp"
#include "kronproj/oracle.hpp"
#include "kronproj/projmaint.hpp"
#include "kronproj/random.hpp"
#include "kronproj/sketch.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace kronproj {

// ---- drift ---------------------------------------------------------------

enum class RankPattern { kSparseK, kUniform, kBursty };

inline std::string to_string(RankPattern p) {
  switch (p) {
    case RankPattern::kSparseK: return "sparse-k";
    case RankPattern::kUniform: return "uniform";
    case RankPattern::kBursty: return "bursty";
  }
  return "?";
}

inline RankPattern parse_rank_pattern(const std::string& s) {
  if (s == "sparse-k") return RankPattern::kSparseK;
  if (s == "uniform") return RankPattern::kUniform;
  if (s == "bursty") return RankPattern::kBursty;
  throw DomainError("unknown rank pattern '" + s + "'");
}

struct DriftConfig {
  Index n = 4;
  Index m = 5;
  Index steps = 100;  // T
  double c1 = 0.1;    // bound on the norm of the mean log-increment
  double c2 = 0.0;    // bound on the norm of the per-coordinate variances
  RankPattern pattern = RankPattern::kUniform;
  Index k = 1;             // coordinates moved per step (sparse-k)
  Index burst_every = 10;  // bursty: one move every this many steps
  double eig_floor = 1e-3;
  std::uint64_t seed = 0;
};

/// lambda^(0..T). Log-increments per step have mean vector mu with
/// ||mu||_2 <= c1 and independent Gaussian parts with variances v_i,
/// ||v||_2 <= c2:
///  - sparse-k: k distinct coordinates move by +-c1/sqrt(k) (no noise);
///  - uniform: every coordinate gets +-c1/sqrt(n) plus N(0, c2/n) noise;
///  - bursty: uniform moves on every burst_every-th step, none otherwise.
/// Log-eigenvalues are reflected at ln(eig_floor).
inline std::vector<Vector> gen_drift_sequence(const DriftConfig& cfg) {
  if (cfg.n < 1 || cfg.steps < 0 || cfg.c1 < 0.0 || cfg.c2 < 0.0 ||
      !(cfg.eig_floor > 0.0)) {
    throw DomainError("drift: invalid config");
  }
  Rng rng(derive_seed(cfg.seed, 11));
  std::uniform_real_distribution<double> init(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);

  const Index n = cfg.n;
  Vector log_lam(n);
  for (Index i = 0; i < n; ++i) log_lam(i) = std::log(0.5) + 1.5 * init(rng);
  const double log_floor = std::log(cfg.eig_floor);

  std::vector<Vector> seq;
  seq.reserve(std::size_t(cfg.steps) + 1);
  seq.push_back(log_lam.array().exp());

  auto uniform_move = [&](Vector& inc) {
    const double mu = cfg.c1 / std::sqrt(double(n));
    const double sd = std::sqrt(cfg.c2 / double(n));
    for (Index i = 0; i < n; ++i) {
      inc(i) = (coin(rng) ? mu : -mu) + sd * normal(rng);
    }
  };

  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (Index t = 1; t <= cfg.steps; ++t) {
    Vector inc = Vector::Zero(n);
    switch (cfg.pattern) {
      case RankPattern::kSparseK: {
        const Index k = std::clamp<Index>(cfg.k, 0, n);
        std::iota(idx.begin(), idx.end(), Index(0));
        for (Index a = 0; a < k; ++a) {
          std::uniform_int_distribution<Index> pick(a, n - 1);
          std::swap(idx[a], idx[pick(rng)]);
          const double mu = k > 0 ? cfg.c1 / std::sqrt(double(k)) : 0.0;
          inc(idx[a]) = coin(rng) ? mu : -mu;
        }
        break;
      }
      case RankPattern::kUniform:
        uniform_move(inc);
        break;
      case RankPattern::kBursty:
        if (cfg.burst_every > 0 && t % cfg.burst_every == 0) uniform_move(inc);
        break;
    }
    log_lam += inc;
    for (Index i = 0; i < n; ++i) {
      if (log_lam(i) < log_floor) log_lam(i) = 2.0 * log_floor - log_lam(i);
    }
    seq.push_back(log_lam.array().exp());
  }
  return seq;
}

// ---- random problem instances --------------------------------------------

inline DenseMatrix random_orthonormal(Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  DenseMatrix x(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) x(i, j) = normal(rng);
  Eigen::HouseholderQR<DenseMatrix> qr(x);
  return qr.householderQ() * DenseMatrix::Identity(n, n);
}

/// m random symmetric n x n constraint matrices.
inline ConstraintBatch random_constraints(Index n, Index m, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<DenseMatrix> mats;
  mats.reserve(std::size_t(m));
  for (Index i = 0; i < m; ++i) {
    DenseMatrix a(n, n);
    for (Index c = 0; c < n; ++c)
      for (Index r = 0; r < n; ++r) a(r, c) = normal(rng);
    mats.push_back(0.5 * (a + a.transpose()));
  }
  return ConstraintBatch::from_matrices(mats);
}

inline Vector random_gaussian(Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

// ---- reports -------------------------------------------------------------

struct RunReport {
  std::string kind;
  nlohmann::json config;
  nlohmann::json records = nlohmann::json::array();
  nlohmann::json counters = nlohmann::json::object();
  nlohmann::json summary = nlohmann::json::object();
  nlohmann::json timings;  // null unless requested
  bool threshold_violated = false;

  nlohmann::json to_json() const {
    nlohmann::json j{{"kind", kind},
                     {"config", config},
                     {"records", records},
                     {"counters", counters},
                     {"summary", summary}};
    if (!timings.is_null()) j["timings"] = timings;
    return j;
  }

  /// One CSV row per record; columns are the union of scalar record keys
  /// in first-seen order. Arrays are joined with ';'.
  std::string to_csv() const {
    std::vector<std::string> cols;
    for (const auto& r : records)
      for (auto it = r.begin(); it != r.end(); ++it)
        if (std::find(cols.begin(), cols.end(), it.key()) == cols.end())
          cols.push_back(it.key());
    for (const char* key : {"t", "i", "run", "trajectory", "instance"}) {
      if (auto t = std::find(cols.begin(), cols.end(), key); t != cols.end())
        std::rotate(cols.begin(), t, t + 1);
    }
    std::ostringstream out;
    for (std::size_t c = 0; c < cols.size(); ++c)
      out << (c ? "," : "") << cols[c];
    out << '\n';
    for (const auto& r : records) {
      for (std::size_t c = 0; c < cols.size(); ++c) {
        if (c) out << ',';
        if (!r.contains(cols[c])) continue;
        const auto& v = r.at(cols[c]);
        if (v.is_array()) {
          for (std::size_t i = 0; i < v.size(); ++i)
            out << (i ? ";" : "") << v[i].dump();
        } else if (v.is_string()) {
          out << v.get<std::string>();
        } else {
          out << v.dump();
        }
      }
      out << '\n';
    }
    return out.str();
  }
};

namespace detail {

class PhaseClock {
 public:
  explicit PhaseClock(bool enabled) : enabled_(enabled) {}
  void start() {
    if (enabled_) t0_ = std::chrono::steady_clock::now();
  }
  void stop(const char* phase) {
    if (!enabled_) return;
    const auto dt = std::chrono::steady_clock::now() - t0_;
    seconds_[phase] =
        seconds_.value(phase, 0.0) +
        std::chrono::duration<double>(dt).count();
  }
  nlohmann::json result() const {
    return enabled_ ? seconds_ : nlohmann::json();
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point t0_;
  nlohmann::json seconds_ = nlohmann::json::object();
};

inline std::vector<double> to_std(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace detail

// ---- maintenance experiment ----------------------------------------------

struct MaintExperimentConfig {
  DriftConfig drift;
  MaintParams maint;
  bool check_oracle = true;
  bool record_timings = false;
  // Acceptance thresholds; a violation marks the report.
  double max_m_error = 1e-7;
  double max_query_error = 1e-7;
};

inline nlohmann::json describe(const MaintExperimentConfig& c) {
  return {{"drift",
           {{"n", c.drift.n},
            {"m", c.drift.m},
            {"T", c.drift.steps},
            {"C1", c.drift.c1},
            {"C2", c.drift.c2},
            {"rank_pattern", to_string(c.drift.pattern)},
            {"k", c.drift.k},
            {"burst_every", c.drift.burst_every},
            {"eig_floor", c.drift.eig_floor},
            {"seed", c.drift.seed}}},
          {"maint",
           {{"eps_mp", c.maint.eps_mp},
            {"a_exp", c.maint.a_exp},
            {"family", c.maint.family.name()},
            {"sparsity", c.maint.family.sparsity},
            {"pool_size", c.maint.pool_size},
            {"sketch_dim", c.maint.sketch_dim},
            {"seed", c.maint.seed},
            {"recompute_every", c.maint.recompute_every},
            {"regenerate_on_update", c.maint.regenerate_on_update}}},
          {"check_oracle", c.check_oracle},
          {"max_m_error", c.max_m_error},
          {"max_query_error", c.max_query_error}};
}

/// Drives the maintained projection over a drift sequence. One query per
/// step with a fresh Gaussian h; when `check_oracle` is set, M is compared
/// with the from-scratch inverse at the stored lambda and the query with
/// exact_projection(lambda_tilde) R_l^T R_l h.
inline RunReport run_maintenance_experiment(const MaintExperimentConfig& cfg) {
  RunReport rep;
  rep.kind = "maintenance";
  rep.config = describe(cfg);
  detail::PhaseClock clock(cfg.record_timings);

  const Index n = cfg.drift.n;
  Rng rng(derive_seed(cfg.drift.seed, 12));
  clock.start();
  const std::vector<Vector> lams = gen_drift_sequence(cfg.drift);
  const DenseMatrix basis = random_orthonormal(n, rng);
  const ConstraintBatch cons = random_constraints(n, cfg.drift.m, rng);
  KroneckerProjMaintain maint(cons, EigenWeight{basis, lams.front()},
                              cfg.maint);
  clock.stop("init");

  double worst_m = 0.0, worst_q = 0.0, worst_gap = 0.0;
  for (std::size_t t = 1; t < lams.size(); ++t) {
    clock.start();
    const Vector lam_tilde = maint.update(lams[t]);
    clock.stop("update");
    const Vector h = random_gaussian(n * n, rng);
    clock.start();
    const Vector p = maint.query(h);
    clock.stop("query");

    nlohmann::json rec;
    rec["t"] = t;
    rec["woodbury_rank"] = maint.counters().woodbury_ranks.back();
    const double gap = (lams[t].array().log() - lam_tilde.array().log())
                           .abs()
                           .maxCoeff();
    worst_gap = std::max(worst_gap, gap);
    rec["log_gap"] = gap;
    if (cfg.check_oracle) {
      clock.start();
      const DenseMatrix m_ref =
          oracle::maintained_inverse(cons, basis, maint.lam());
      const double m_err =
          (maint.m_matrix() - m_ref).norm() / std::max(m_ref.norm(), 1e-300);
      const DenseMatrix r = maint.last_sketch()->to_dense();
      const Vector p_ref = oracle::exact_projection(cons, basis, lam_tilde) *
                           (r.transpose() * (r * h));
      const double q_err =
          (p - p_ref).norm() / std::max(p_ref.norm(), 1e-300);
      clock.stop("oracle");
      worst_m = std::max(worst_m, m_err);
      worst_q = std::max(worst_q, q_err);
      rec["m_error"] = m_err;
      rec["query_error"] = q_err;
    }
    rep.records.push_back(rec);
  }

  rep.counters = maint.counters();
  rep.summary = {{"steps", Index(lams.size()) - 1},
                 {"max_log_gap", worst_gap},
                 {"eps_mp_half", 0.5 * cfg.maint.eps_mp}};
  if (cfg.check_oracle) {
    rep.summary["max_m_error"] = worst_m;
    rep.summary["max_query_error"] = worst_q;
    rep.threshold_violated =
        worst_m > cfg.max_m_error || worst_q > cfg.max_query_error;
  }
  if (worst_gap > 0.5 * cfg.maint.eps_mp + 1e-12) rep.threshold_violated = true;
  rep.summary["threshold_violated"] = rep.threshold_violated;
  rep.timings = clock.result();
  return rep;
}

// ---- adaptive experiment -------------------------------------------------

enum class Adversary { kOblivious, kFeedback };

struct AdaptiveExperimentConfig {
  AdaptiveWrapper::Mode mode = AdaptiveWrapper::Mode::kNorm;
  Adversary adversary = Adversary::kFeedback;
  AdaptiveParams params;
  Index rows = 8;   // rows of G
  Index dim = 16;   // columns of G
  Index k = 1;      // set size (set-query mode)
  std::string estimator = "exact";  // "exact" or a sketch family name
  Index sketch_dim = 256;
  double gamma = 0.0;  // approximation claimed for the inner estimator
  double noise = 0.1;  // feedback adversary perturbation
  bool zero_matrix = false;
  std::uint64_t seed = 0;
  bool record_timings = false;
};

inline nlohmann::json describe(const AdaptiveExperimentConfig& c) {
  nlohmann::json j{
      {"mode", c.mode == AdaptiveWrapper::Mode::kNorm ? "norm" : "setquery"},
      {"adversary", c.adversary == Adversary::kFeedback ? "feedback"
                                                        : "oblivious"},
      {"T", c.params.steps},
      {"U", c.params.u_bound},
      {"alpha", c.params.alpha},
      {"delta", c.params.delta},
      {"scale", c.params.scale},
      {"c_q", c.params.c_q},
      {"delta0_divisor", c.params.delta0_divisor},
      {"rows", c.rows},
      {"dim", c.dim},
      {"k", c.k},
      {"estimator", c.estimator},
      {"sketch_dim", c.sketch_dim},
      {"gamma", c.gamma},
      {"noise", c.noise},
      {"zero_matrix", c.zero_matrix},
      {"seed", c.seed}};
  if (c.params.copies) j["L"] = *c.params.copies;
  if (c.params.subsample) j["q"] = *c.params.subsample;
  return j;
}

inline EstimatorFactory make_estimator_factory(const std::string& name,
                                               Index sketch_dim) {
  if (name == "exact") return exact_factory();
  return sketch_factory(SketchFamily::parse(name), sketch_dim);
}

/// Runs T steps of the wrapper. The oblivious adversary draws every h_t
/// (and Q_t) up front; the feedback adversary sets
/// h_{t+1} = normalize(u_t h_t + noise xi) in norm mode and
/// h_{t+1} = normalize(sum_j (u_t)_j g_j + noise xi) in set-query mode, and
/// keeps the half of Q_t with the largest outputs.
inline RunReport run_adaptive_experiment(const AdaptiveExperimentConfig& cfg) {
  using Mode = AdaptiveWrapper::Mode;
  RunReport rep;
  rep.kind = cfg.mode == Mode::kNorm ? "adaptive-norm" : "adaptive-setquery";
  rep.config = describe(cfg);
  detail::PhaseClock clock(cfg.record_timings);

  if (cfg.rows < 1 || cfg.dim < 1) throw DomainError("adaptive: bad shape");
  const Index k = cfg.mode == Mode::kNorm ? 1 : cfg.k;
  if (k > cfg.rows) throw DomainError("adaptive: k exceeds the row count");

  Rng rng(derive_seed(cfg.seed, 21));
  std::normal_distribution<double> normal(0.0, 1.0);
  DenseMatrix g = DenseMatrix::Zero(cfg.rows, cfg.dim);
  if (!cfg.zero_matrix) {
    for (Index c = 0; c < cfg.dim; ++c)
      for (Index r = 0; r < cfg.rows; ++r) g(r, c) = normal(rng);
    g /= g.norm();
  }

  clock.start();
  const EstimatorFactory factory =
      make_estimator_factory(cfg.estimator, cfg.sketch_dim);
  AdaptiveWrapper wrapper =
      cfg.mode == Mode::kNorm
          ? make_norm_wrapper(factory, cfg.params, derive_seed(cfg.seed, 22))
          : make_setquery_wrapper(factory, cfg.params, k,
                                  derive_seed(cfg.seed, 22));
  clock.stop("init");

  auto unit = [&](Vector v) {
    const double nv = v.norm();
    return nv > 0.0 ? Vector(v / nv) : v;
  };
  auto random_set = [&](std::vector<Index> keep) {
    std::vector<Index> pool;
    for (Index j = 0; j < cfg.rows; ++j)
      if (std::find(keep.begin(), keep.end(), j) == keep.end())
        pool.push_back(j);
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::size_t i = 0; Index(keep.size()) < k; ++i)
      keep.push_back(pool[i]);
    std::sort(keep.begin(), keep.end());
    return keep;
  };

  const Index steps = cfg.params.steps;
  std::vector<Vector> planned_h;
  std::vector<std::vector<Index>> planned_q;
  if (cfg.adversary == Adversary::kOblivious) {
    for (Index t = 0; t < steps; ++t) {
      planned_h.push_back(unit(random_gaussian(cfg.dim, rng)));
      if (cfg.mode == Mode::kSetQuery) planned_q.push_back(random_set({}));
    }
  }

  Vector h = unit(random_gaussian(cfg.dim, rng));
  std::vector<Index> query = cfg.mode == Mode::kSetQuery
                                 ? random_set({})
                                 : std::vector<Index>{};
  Index failed_steps = 0;
  double worst_excess = 0.0;
  const double g_fro2 = g.squaredNorm();

  for (Index t = 0; t < steps; ++t) {
    if (cfg.adversary == Adversary::kOblivious) {
      h = planned_h[std::size_t(t)];
      if (cfg.mode == Mode::kSetQuery) query = planned_q[std::size_t(t)];
    }
    nlohmann::json rec;
    rec["t"] = t + 1;
    const double h2 = h.squaredNorm();
    bool step_ok = true;

    if (cfg.mode == Mode::kNorm) {
      clock.start();
      const double u = wrapper.norm_step(g, h);
      clock.stop("step");
      const double truth = oracle::exact_norm(g, h);
      const double bound = approximation_bound(cfg.params.alpha, cfg.gamma,
                                               g_fro2 * h2);
      const double excess = std::abs(u - truth) - bound;
      step_ok = excess <= 1e-12 * std::max(1.0, bound);
      worst_excess = std::max(worst_excess, excess);
      rec["u"] = u;
      rec["true_value"] = truth;
      rec["bound"] = bound;
      if (cfg.adversary == Adversary::kFeedback) {
        h = unit(u * h + cfg.noise * random_gaussian(cfg.dim, rng));
      }
    } else {
      clock.start();
      const Vector u = wrapper.setquery_step(g, h, query);
      clock.stop("step");
      const Vector truth = oracle::exact_set_query(g, h, query);
      std::vector<double> bounds(static_cast<std::size_t>(k));
      for (Index j = 0; j < k; ++j) {
        const double bound = approximation_bound(
            cfg.params.alpha, cfg.gamma, g.row(query[j]).squaredNorm() * h2);
        const double excess = std::abs(u(j) - truth(j)) - bound;
        worst_excess = std::max(worst_excess, excess);
        if (excess > 1e-12 * std::max(1.0, bound)) step_ok = false;
        bounds[std::size_t(j)] = bound;
      }
      rec["query_set"] = query;
      rec["u"] = detail::to_std(u);
      rec["true_value"] = detail::to_std(truth);
      rec["bound"] = bounds;
      if (cfg.adversary == Adversary::kFeedback) {
        Vector dir = cfg.noise * random_gaussian(cfg.dim, rng);
        for (Index j = 0; j < k; ++j)
          dir += u(j) * g.row(query[j]).transpose();
        h = unit(dir);
        std::vector<Index> order(std::size_t(k), 0);
        std::iota(order.begin(), order.end(), Index(0));
        std::stable_sort(order.begin(), order.end(),
                         [&](Index a, Index b) { return u(a) > u(b); });
        std::vector<Index> keep;
        for (Index i = 0; i < k / 2; ++i) keep.push_back(query[order[i]]);
        query = random_set(keep);
      }
    }
    rec["sampled"] = wrapper.last_sample();
    rec["rank_slack"] = wrapper.rank_slack();
    rec["ok"] = step_ok;
    if (!step_ok) ++failed_steps;
    rep.records.push_back(rec);
  }

  rep.counters = wrapper.counters();
  rep.summary = {{"wrapper", wrapper.describe()},
                 {"failed_steps", failed_steps},
                 {"all_within_bound", failed_steps == 0},
                 {"max_excess", worst_excess},
                 {"expected_copy_updates", wrapper.copies() * steps},
                 {"expected_inner_queries", wrapper.subsample() * steps}};
  rep.threshold_violated = failed_steps > 0;
  rep.timings = clock.result();
  return rep;
}

// ---- complexity model ----------------------------------------------------

struct ComplexityModel {
  double a = 0.5;
  double c = 0.0;
  double omega = 2.0;
  double theta = 4.0;
  double f_ac = 0.0;

  /// g_i = n^-a for i < n^a, otherwise
  /// i^((omega-2)/(1-a) - 1) n^(-a (omega-2)/(1-a)).
  double weight(double i, double n) const {
    if (i < std::pow(n, a)) return std::pow(n, -a);
    const double e = (omega - 2.0) / (1.0 - a);
    return std::pow(i, e - 1.0) * std::pow(n, -a * e);
  }
};

/// f(a, c) = (c(theta - omega - 2) + a(2 + theta - c theta - omega + 2 c
/// omega) - theta) / (a - 1). theta defaults to omega + 2.
inline ComplexityModel complexity_model(double a, double c, double omega,
                                        std::optional<double> theta = {}) {
  if (!(a > 0.0 && a < 1.0)) throw DomainError("complexity: a must lie in (0,1)");
  if (!(c >= 0.0 && c < 1.0)) throw DomainError("complexity: c must lie in [0,1)");
  ComplexityModel out;
  out.a = a;
  out.c = c;
  out.omega = omega;
  out.theta = theta.value_or(omega + 2.0);
  const double th = out.theta;
  out.f_ac = (c * (th - omega - 2.0) +
              a * (2.0 + th - c * th - omega + 2.0 * c * omega) - th) /
             (a - 1.0);
  return out;
}

inline RunReport complexity_report(double a, double c, double omega,
                                   std::optional<double> theta, Index n) {
  const ComplexityModel cm = complexity_model(a, c, omega, theta);
  RunReport rep;
  rep.kind = "complexity";
  rep.config = {{"a", a}, {"c", c}, {"omega", omega}, {"theta", cm.theta},
                {"n", n}};
  for (Index i = 1; i <= n; ++i) {
    rep.records.push_back(
        {{"i", i}, {"g_i", cm.weight(double(i), double(n))}});
  }
  rep.summary = {{"f_ac", cm.f_ac}};
  return rep;
}

// ---- oracle batteries ----------------------------------------------------

struct OracleSuiteConfig {
  Index trajectories = 50;
  Index steps = 100;
  double eps_mp = 0.05;
  std::vector<Index> ns{4, 6, 8};
  std::vector<Index> ms{5, 8, 12};
  Index sketch_dim = 16;
  double tol = 1e-7;
  std::uint64_t seed = 0;
};

/// Seeded maintenance trajectories over the (n, m) grid, each checked
/// against the oracle after every update. Pairs with m > n(n+1)/2 are
/// skipped: symmetric constraints would be linearly dependent.
inline RunReport verify_maintenance_suite(const OracleSuiteConfig& cfg) {
  RunReport rep;
  rep.kind = "verify-maintenance";
  rep.config = {{"trajectories", cfg.trajectories}, {"T", cfg.steps},
                {"eps_mp", cfg.eps_mp},             {"ns", cfg.ns},
                {"ms", cfg.ms},                     {"sketch_dim", cfg.sketch_dim},
                {"tol", cfg.tol},                   {"seed", cfg.seed}};
  std::vector<std::pair<Index, Index>> shapes;
  for (Index m : cfg.ms)
    for (Index n : cfg.ns)
      if (m <= n * (n + 1) / 2) shapes.emplace_back(n, m);
  if (shapes.empty()) throw DomainError("verify: no admissible (n, m) pair");
  const RankPattern patterns[] = {RankPattern::kSparseK, RankPattern::kUniform,
                                  RankPattern::kBursty};
  double worst_m = 0.0, worst_q = 0.0, worst_gap_excess = -1.0;
  Index failed = 0;
  for (Index i = 0; i < cfg.trajectories; ++i) {
    const auto [n, m] = shapes[std::size_t(i) % shapes.size()];
    MaintExperimentConfig mc;
    mc.drift.n = n;
    mc.drift.m = m;
    mc.drift.steps = cfg.steps;
    mc.drift.pattern = patterns[std::size_t(i) % 3];
    mc.drift.c1 = mc.drift.pattern == RankPattern::kBursty ? 0.3 : 0.1;
    mc.drift.c2 = mc.drift.pattern == RankPattern::kUniform ? 0.01 : 0.0;
    mc.drift.k = 1 + i % 3;
    mc.drift.burst_every = 5;
    mc.drift.seed = derive_seed(cfg.seed, 31, std::uint64_t(i));
    mc.maint.eps_mp = cfg.eps_mp;
    mc.maint.sketch_dim = cfg.sketch_dim;
    mc.maint.seed = derive_seed(cfg.seed, 32, std::uint64_t(i));
    mc.max_m_error = cfg.tol;
    mc.max_query_error = cfg.tol;
    const RunReport r = run_maintenance_experiment(mc);
    const double me = r.summary.value("max_m_error", 0.0);
    const double qe = r.summary.value("max_query_error", 0.0);
    const double gap = r.summary["max_log_gap"].get<double>();
    worst_m = std::max(worst_m, me);
    worst_q = std::max(worst_q, qe);
    worst_gap_excess = std::max(worst_gap_excess, gap - 0.5 * cfg.eps_mp);
    failed += r.threshold_violated ? 1 : 0;
    rep.records.push_back({{"trajectory", i},
                           {"n", n},
                           {"m", m},
                           {"rank_pattern", to_string(mc.drift.pattern)},
                           {"max_m_error", me},
                           {"max_query_error", qe},
                           {"max_log_gap", gap},
                           {"full_recomputes", r.counters["full_recomputes"]},
                           {"lazy_updates", r.counters["lazy_updates"]},
                           {"ok", !r.threshold_violated}});
  }
  rep.threshold_violated = failed > 0;
  rep.summary = {{"failed_trajectories", failed},
                 {"max_m_error", worst_m},
                 {"max_query_error", worst_q},
                 {"max_log_gap_minus_half_eps", worst_gap_excess},
                 {"threshold_violated", rep.threshold_violated}};
  return rep;
}

/// Mixed-product, inversion, vec-of-triple-product and trace identities on
/// random instances; records the worst relative error of each.
inline RunReport kron_identity_suite(Index instances, Index max_n,
                                     std::uint64_t seed, double tol = 1e-12) {
  RunReport rep;
  rep.kind = "verify-kron";
  rep.config = {{"instances", instances}, {"max_n", max_n}, {"seed", seed},
                {"tol", tol}};
  Rng rng(derive_seed(seed, 41));
  std::uniform_int_distribution<Index> pick_n(2, max_n);
  auto mat = [&](Index n) {
    DenseMatrix a(n, n);
    for (Index c = 0; c < n; ++c) a.col(c) = random_gaussian(n, rng);
    return a;
  };
  auto well_conditioned = [&](Index n) {
    return DenseMatrix(mat(n) + 2.0 * std::sqrt(double(n)) *
                                    DenseMatrix::Identity(n, n));
  };
  auto rel = [](const auto& x, const auto& y) {
    return (x - y).norm() / std::max(y.norm(), 1e-300);
  };
  double mixed = 0.0, inverse = 0.0, triple = 0.0, trace = 0.0;
  for (Index i = 0; i < instances; ++i) {
    const Index n = pick_n(rng);
    const DenseMatrix a = mat(n), b = mat(n), c = mat(n), d = mat(n);
    mixed = std::max(mixed, rel(oracle::kron(a, b) * oracle::kron(c, d),
                                oracle::kron(a * c, b * d)));
    const DenseMatrix p = well_conditioned(n), q = well_conditioned(n);
    inverse = std::max(
        inverse, rel(DenseMatrix(oracle::kron(p, q).inverse()),
                     oracle::kron(DenseMatrix(p.inverse()),
                                  DenseMatrix(q.inverse()))));
    const DenseMatrix x = mat(n);
    triple = std::max(triple, rel(kron_apply(a, b, vec(x)),
                                  Vector(oracle::kron(a, b) * vec(x))));
    triple = std::max(triple, rel(vec(b * x * a.transpose()),
                                  Vector(oracle::kron(a, b) * vec(x))));
    const double tr = oracle::kron(a, b).trace();
    trace = std::max(trace, std::abs(tr - a.trace() * b.trace()) /
                                std::max(std::abs(tr), 1.0));
  }
  rep.records = {{{"identity", "mixed_product"}, {"max_error", mixed}},
                 {{"identity", "inverse"}, {"max_error", inverse}},
                 {{"identity", "vec_triple_product"}, {"max_error", triple}},
                 {{"identity", "trace"}, {"max_error", trace}}};
  const double worst = std::max({mixed, inverse, triple, trace});
  rep.threshold_violated = worst > tol;
  rep.summary = {{"max_error", worst},
                 {"threshold_violated", rep.threshold_violated}};
  return rep;
}

/// woodbury_update against a direct inverse of A + U C V on random
/// instances with rank k <= max_k and size n <= max_n.
inline RunReport woodbury_suite(Index instances, Index max_n, Index max_k,
                                std::uint64_t seed, double tol = 1e-9) {
  RunReport rep;
  rep.kind = "verify-woodbury";
  rep.config = {{"instances", instances}, {"max_n", max_n}, {"max_k", max_k},
                {"seed", seed}, {"tol", tol}};
  Rng rng(derive_seed(seed, 42));
  double worst = 0.0;
  for (Index i = 0; i < instances; ++i) {
    const Index n = std::uniform_int_distribution<Index>(2, max_n)(rng);
    const Index k =
        std::uniform_int_distribution<Index>(1, std::min(max_k, n))(rng);
    DenseMatrix a(n, n), u(n, k), v(k, n), c(k, k);
    for (Index j = 0; j < n; ++j) a.col(j) = random_gaussian(n, rng);
    a = a * a.transpose() + double(n) * DenseMatrix::Identity(n, n);
    for (Index j = 0; j < k; ++j) u.col(j) = random_gaussian(n, rng);
    for (Index j = 0; j < n; ++j) v.col(j) = random_gaussian(k, rng);
    for (Index j = 0; j < k; ++j) c.col(j) = random_gaussian(k, rng);
    c += 2.0 * std::sqrt(double(k)) * DenseMatrix::Identity(k, k);
    const DenseMatrix got = woodbury_update(a.inverse(), u, c, v);
    const DenseMatrix want = (a + u * c * v).inverse();
    const double err = (got - want).norm() / want.norm();
    worst = std::max(worst, err);
    rep.records.push_back({{"instance", i}, {"n", n}, {"k", k},
                           {"error", err}});
  }
  rep.threshold_violated = worst > tol;
  rep.summary = {{"max_error", worst},
                 {"threshold_violated", rep.threshold_violated}};
  return rep;
}

// ---- coordinate-wise embedding bench -------------------------------------

struct CeBenchConfig {
  std::vector<std::string> families{"gaussian", "srht", "ams", "countsketch",
                                    "sparse:4"};
  Index b = 256;
  Index n = 1024;
  Index trials = 10000;
  double delta = 0.01;
  std::uint64_t seed = 0;
};

/// 20 log^1.5(n / delta), natural log.
inline double ce_beta_bound(Index n, double delta) {
  return 20.0 * std::pow(std::log(double(n) / delta), 1.5);
}

/// Per family: bias in standard errors and the empirical beta. Bias beyond
/// 4 standard errors, or beta above the bound for the dense families,
/// marks the report; the hashing families are reported only.
inline RunReport ce_bench(const CeBenchConfig& cfg) {
  RunReport rep;
  rep.kind = "ce-bench";
  rep.config = {{"families", cfg.families}, {"b", cfg.b},
                {"n", cfg.n},               {"trials", cfg.trials},
                {"delta", cfg.delta},       {"seed", cfg.seed}};
  const double bound = ce_beta_bound(cfg.n, cfg.delta);
  bool bad = false;
  for (const auto& name : cfg.families) {
    const SketchFamily fam = SketchFamily::parse(name);
    const CeReport r = ce_estimate(fam, cfg.b, cfg.n, cfg.trials, cfg.seed,
                                   cfg.delta);
    const double z = r.std_error > 0.0 ? r.mean_bias / r.std_error : 0.0;
    const bool beta_checked = fam.kind == SketchKind::Gaussian ||
                              fam.kind == SketchKind::SRHT ||
                              fam.kind == SketchKind::AMS;
    const bool ok = z <= 4.0 && (!beta_checked || r.beta_hat <= bound);
    bad = bad || !ok;
    nlohmann::json rec = r;
    rec["bias_in_se"] = z;
    rec["beta_bound"] = bound;
    rec["beta_checked"] = beta_checked;
    rec["ok"] = ok;
    rep.records.push_back(rec);
  }
  rep.threshold_violated = bad;
  rep.summary = {{"beta_bound", bound}, {"threshold_violated", bad}};
  return rep;
}

// ---- private median bench ------------------------------------------------

struct DpBenchConfig {
  double u_bound = 16777216.0;  // with alpha = 1: 101 grid points
  double alpha = 1.0;
  Index set_size = 2000;
  double epsilon = 0.25;
  double beta = 0.05;
  Index trials = 1000;
  std::vector<std::string> distributions{"point", "uniform", "bimodal",
                                         "heavy-tail", "lognormal"};
  double min_success = 0.95;
  // Neighbouring-database smoke test.
  Index smoke_samples = 100000;
  Index smoke_set_size = 9;
  double smoke_u_bound = 16.0;
  double smoke_min_mass = 1e-3;
  std::uint64_t seed = 0;
};

/// Draws `size` grid points from a named distribution.
inline std::vector<double> draw_grid_values(const std::string& dist,
                                            const SignedGeometricGrid& grid,
                                            Index size, Rng& rng) {
  const auto last = static_cast<long>(grid.size()) - 1;
  const auto z = static_cast<long>(grid.zero_index());
  std::vector<double> out(static_cast<std::size_t>(size));
  if (dist == "point") {
    const long k = std::uniform_int_distribution<long>(0, last)(rng);
    std::fill(out.begin(), out.end(), grid.point(std::size_t(k)));
  } else if (dist == "uniform") {
    std::uniform_int_distribution<long> pick(0, last);
    for (auto& v : out) v = grid.point(std::size_t(pick(rng)));
  } else if (dist == "bimodal") {
    std::normal_distribution<double> nd(0.0, 2.0);
    for (auto& v : out) {
      const long c = std::bernoulli_distribution(0.5)(rng) ? z - 30 : z + 30;
      v = grid.point(std::size_t(
          std::clamp<long>(c + std::lround(nd(rng)), 0, last)));
    }
  } else if (dist == "heavy-tail") {
    std::geometric_distribution<long> geo(0.15);
    for (auto& v : out) v = grid.point(std::size_t(std::min(z + 1 + geo(rng), last)));
  } else if (dist == "lognormal") {
    std::lognormal_distribution<double> ln(0.0, 3.0);
    for (auto& v : out) {
      const double x = std::min(ln(rng), grid.u_bound());
      v = grid.round(std::bernoulli_distribution(0.5)(rng) ? x : -x);
    }
  } else {
    throw DomainError("unknown value distribution '" + dist + "'");
  }
  return out;
}

/// Rank error of the private median per distribution, plus an empirical
/// privacy check: for two databases differing in one element, the output
/// frequency ratio on every point with enough mass stays within
/// e^epsilon (1 + 4 sigma).
inline RunReport dp_bench(const DpBenchConfig& cfg) {
  RunReport rep;
  rep.kind = "dp-bench";
  rep.config = {{"U", cfg.u_bound},
                {"alpha", cfg.alpha},
                {"set_size", cfg.set_size},
                {"epsilon", cfg.epsilon},
                {"beta", cfg.beta},
                {"trials", cfg.trials},
                {"distributions", cfg.distributions},
                {"min_success", cfg.min_success},
                {"smoke_samples", cfg.smoke_samples},
                {"smoke_set_size", cfg.smoke_set_size},
                {"smoke_U", cfg.smoke_u_bound},
                {"smoke_min_mass", cfg.smoke_min_mass},
                {"seed", cfg.seed}};
  const SignedGeometricGrid grid(cfg.u_bound, cfg.alpha);
  const double slack = median_rank_slack(cfg.epsilon, grid.size(), cfg.beta);
  bool bad = false;
  for (std::size_t d = 0; d < cfg.distributions.size(); ++d) {
    Rng rng(derive_seed(cfg.seed, 51, d));
    Index within = 0;
    double worst = 0.0;
    for (Index t = 0; t < cfg.trials; ++t) {
      const std::vector<double> s =
          draw_grid_values(cfg.distributions[d], grid, cfg.set_size, rng);
      const double x = private_median(s, grid, cfg.epsilon, cfg.beta, rng);
      const double err = median_rank_error(s, x);
      worst = std::max(worst, err);
      within += err <= slack ? 1 : 0;
    }
    const double rate = double(within) / double(std::max<Index>(cfg.trials, 1));
    const bool ok = rate >= cfg.min_success;
    bad = bad || !ok;
    rep.records.push_back({{"distribution", cfg.distributions[d]},
                           {"success_rate", rate},
                           {"max_rank_error", worst},
                           {"rank_slack", slack},
                           {"ok", ok}});
  }

  // Neighbouring databases: the same multiset except one element moved to
  // the far end of the grid.
  const SignedGeometricGrid small(cfg.smoke_u_bound, cfg.alpha);
  Rng rng(derive_seed(cfg.seed, 52));
  std::vector<double> s0 =
      draw_grid_values("uniform", small, cfg.smoke_set_size, rng);
  std::sort(s0.begin(), s0.end());
  std::vector<double> s1 = s0;
  s1.front() = small.point(small.size() - 1);
  std::vector<Index> f0(small.size(), 0), f1(small.size(), 0);
  for (Index i = 0; i < cfg.smoke_samples; ++i) {
    ++f0[private_median_index(s0, small, cfg.epsilon, cfg.beta, rng)];
    ++f1[private_median_index(s1, small, cfg.epsilon, cfg.beta, rng)];
  }
  const double n_s = double(cfg.smoke_samples);
  double worst_ratio = 0.0, worst_allowed = 0.0;
  Index checked = 0;
  bool smoke_ok = true;
  for (std::size_t k = 0; k < small.size(); ++k) {
    const double p0 = double(f0[k]) / n_s, p1 = double(f1[k]) / n_s;
    if (p0 < cfg.smoke_min_mass || p1 < cfg.smoke_min_mass) continue;
    ++checked;
    const double sigma =
        std::sqrt((1.0 - p0) / (n_s * p0) + (1.0 - p1) / (n_s * p1));
    const double allowed = std::exp(cfg.epsilon) * (1.0 + 4.0 * sigma);
    const double ratio = std::max(p0 / p1, p1 / p0);
    if (ratio / allowed > worst_ratio / std::max(worst_allowed, 1e-300)) {
      worst_ratio = ratio;
      worst_allowed = allowed;
    }
    smoke_ok = smoke_ok && ratio <= allowed;
  }
  bad = bad || !smoke_ok;
  rep.threshold_violated = bad;
  rep.summary = {{"grid_points", grid.size()},
                 {"rank_slack", slack},
                 {"smoke",
                  {{"grid_points", small.size()},
                   {"points_checked", checked},
                   {"worst_ratio", worst_ratio},
                   {"allowed_at_worst", worst_allowed},
                   {"ok", smoke_ok}}},
                 {"threshold_violated", bad}};
  return rep;
}

// ---- batch adaptive runs -------------------------------------------------

/// Repeats an adaptive experiment over `runs` seeds and counts the runs in
/// which every output met its bound.
inline RunReport adaptive_batch(const AdaptiveExperimentConfig& base,
                                Index runs, double min_success) {
  RunReport rep;
  rep.kind = base.mode == AdaptiveWrapper::Mode::kNorm ? "adaptive-batch-norm"
                                                       : "adaptive-batch-setquery";
  rep.config = describe(base);
  rep.config["runs"] = runs;
  rep.config["min_success"] = min_success;
  Index good = 0;
  nlohmann::json copies, subsample;
  for (Index r = 0; r < runs; ++r) {
    AdaptiveExperimentConfig cfg = base;
    cfg.seed = derive_seed(base.seed, 61, std::uint64_t(r));
    const RunReport one = run_adaptive_experiment(cfg);
    const bool ok = one.summary["all_within_bound"].get<bool>();
    good += ok ? 1 : 0;
    copies = one.summary["wrapper"]["L"];
    subsample = one.summary["wrapper"]["q"];
    rep.records.push_back({{"run", r},
                           {"failed_steps", one.summary["failed_steps"]},
                           {"max_excess", one.summary["max_excess"]},
                           {"ok", ok}});
  }
  const double rate = runs > 0 ? double(good) / double(runs) : 1.0;
  rep.threshold_violated = rate < min_success;
  rep.summary = {{"runs", runs},
                 {"good_runs", good},
                 {"success_rate", rate},
                 {"L", copies},
                 {"q", subsample},
                 {"threshold_violated", rep.threshold_violated}};
  return rep;
}

// ---- config loading ------------------------------------------------------

namespace detail {

template <class T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace detail

inline DriftConfig drift_from_json(const nlohmann::json& j) {
  DriftConfig c;
  detail::maybe(j, "n", c.n);
  detail::maybe(j, "m", c.m);
  detail::maybe(j, "T", c.steps);
  detail::maybe(j, "C1", c.c1);
  detail::maybe(j, "C2", c.c2);
  if (j.contains("rank_pattern")) {
    c.pattern = parse_rank_pattern(j.at("rank_pattern").get<std::string>());
  }
  detail::maybe(j, "k", c.k);
  detail::maybe(j, "burst_every", c.burst_every);
  detail::maybe(j, "eig_floor", c.eig_floor);
  detail::maybe(j, "seed", c.seed);
  return c;
}

inline MaintParams maint_from_json(const nlohmann::json& j) {
  MaintParams p;
  detail::maybe(j, "eps_mp", p.eps_mp);
  detail::maybe(j, "a_exp", p.a_exp);
  if (j.contains("family")) {
    p.family = SketchFamily::parse(j.at("family").get<std::string>());
  }
  detail::maybe(j, "sparsity", p.family.sparsity);
  detail::maybe(j, "pool_size", p.pool_size);
  detail::maybe(j, "sketch_dim", p.sketch_dim);
  detail::maybe(j, "seed", p.seed);
  detail::maybe(j, "recompute_every", p.recompute_every);
  detail::maybe(j, "regenerate_on_update", p.regenerate_on_update);
  return p;
}

inline MaintExperimentConfig maint_experiment_from_json(
    const nlohmann::json& j) {
  MaintExperimentConfig c;
  if (j.contains("drift")) c.drift = drift_from_json(j.at("drift"));
  if (j.contains("maint")) c.maint = maint_from_json(j.at("maint"));
  detail::maybe(j, "check_oracle", c.check_oracle);
  detail::maybe(j, "record_timings", c.record_timings);
  detail::maybe(j, "max_m_error", c.max_m_error);
  detail::maybe(j, "max_query_error", c.max_query_error);
  return c;
}

inline AdaptiveExperimentConfig adaptive_experiment_from_json(
    const nlohmann::json& j) {
  AdaptiveExperimentConfig c;
  if (j.contains("mode")) {
    const auto m = j.at("mode").get<std::string>();
    if (m == "norm") {
      c.mode = AdaptiveWrapper::Mode::kNorm;
    } else if (m == "setquery") {
      c.mode = AdaptiveWrapper::Mode::kSetQuery;
    } else {
      throw DomainError("unknown adaptive mode '" + m + "'");
    }
  }
  if (j.contains("adversary")) {
    const auto a = j.at("adversary").get<std::string>();
    if (a == "oblivious") {
      c.adversary = Adversary::kOblivious;
    } else if (a == "feedback") {
      c.adversary = Adversary::kFeedback;
    } else {
      throw DomainError("unknown adversary '" + a + "'");
    }
  }
  detail::maybe(j, "T", c.params.steps);
  detail::maybe(j, "U", c.params.u_bound);
  detail::maybe(j, "alpha", c.params.alpha);
  detail::maybe(j, "delta", c.params.delta);
  detail::maybe(j, "scale", c.params.scale);
  detail::maybe(j, "c_q", c.params.c_q);
  detail::maybe(j, "delta0_divisor", c.params.delta0_divisor);
  if (j.contains("L")) c.params.copies = j.at("L").get<Index>();
  if (j.contains("q")) c.params.subsample = j.at("q").get<Index>();
  detail::maybe(j, "rows", c.rows);
  detail::maybe(j, "dim", c.dim);
  detail::maybe(j, "k", c.k);
  detail::maybe(j, "estimator", c.estimator);
  detail::maybe(j, "sketch_dim", c.sketch_dim);
  detail::maybe(j, "gamma", c.gamma);
  detail::maybe(j, "noise", c.noise);
  detail::maybe(j, "zero_matrix", c.zero_matrix);
  detail::maybe(j, "seed", c.seed);
  detail::maybe(j, "record_timings", c.record_timings);
  return c;
}

inline OracleSuiteConfig oracle_suite_from_json(const nlohmann::json& j) {
  OracleSuiteConfig c;
  detail::maybe(j, "trajectories", c.trajectories);
  detail::maybe(j, "T", c.steps);
  detail::maybe(j, "eps_mp", c.eps_mp);
  detail::maybe(j, "ns", c.ns);
  detail::maybe(j, "ms", c.ms);
  detail::maybe(j, "sketch_dim", c.sketch_dim);
  detail::maybe(j, "tol", c.tol);
  detail::maybe(j, "seed", c.seed);
  return c;
}

inline CeBenchConfig ce_bench_from_json(const nlohmann::json& j) {
  CeBenchConfig c;
  detail::maybe(j, "families", c.families);
  detail::maybe(j, "b", c.b);
  detail::maybe(j, "n", c.n);
  detail::maybe(j, "trials", c.trials);
  detail::maybe(j, "delta", c.delta);
  detail::maybe(j, "seed", c.seed);
  return c;
}

inline DpBenchConfig dp_bench_from_json(const nlohmann::json& j) {
  DpBenchConfig c;
  detail::maybe(j, "U", c.u_bound);
  detail::maybe(j, "alpha", c.alpha);
  detail::maybe(j, "set_size", c.set_size);
  detail::maybe(j, "epsilon", c.epsilon);
  detail::maybe(j, "beta", c.beta);
  detail::maybe(j, "trials", c.trials);
  detail::maybe(j, "distributions", c.distributions);
  detail::maybe(j, "min_success", c.min_success);
  detail::maybe(j, "smoke_samples", c.smoke_samples);
  detail::maybe(j, "smoke_set_size", c.smoke_set_size);
  detail::maybe(j, "smoke_U", c.smoke_u_bound);
  detail::maybe(j, "smoke_min_mass", c.smoke_min_mass);
  detail::maybe(j, "seed", c.seed);
  return c;
}

}  // namespace kronproj
