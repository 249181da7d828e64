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

/** @file adaptive.hpp

    @brief Robustness against adaptive adversaries by private aggregation.

    An AdaptiveWrapper runs L independent copies of an estimator that is
    only correct against oblivious inputs. Each step it updates every copy,
    queries q copies drawn uniformly with replacement, rounds their answers
    onto a signed geometric grid and releases the private median of the
    rounded answers. Two modes exist: a scalar norm estimate ||G h||^2 and a
    set query returning (g_j^T h)^2 for a requested index set.
*/

#pragma once

#include "kronproj/dpcore.hpp"
#include "kronproj/kronlinalg.hpp"
#include "kronproj/projmaint.hpp"
#include "kronproj/random.hpp"
#include "kronproj/sketch.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace kronproj {

// ---- oblivious estimators ------------------------------------------------

class ObliviousEstimator {
 public:
  virtual ~ObliviousEstimator() = default;
  virtual void update(const DenseMatrix& g, const Vector& h) = 0;
  /// Estimate of ||G h||^2.
  virtual double query() = 0;
  /// Estimates of (g_j^T h)^2 for j in `rows`.
  virtual Vector query_set(const std::vector<Index>& rows) = 0;
};

using EstimatorFactory =
    std::function<std::unique_ptr<ObliviousEstimator>(std::uint64_t seed)>;

namespace detail {

inline void check_rows(const std::vector<Index>& rows, Index m) {
  for (Index j : rows) {
    if (j < 0 || j >= m) throw DimensionError("estimator: row out of range");
  }
}

}  // namespace detail

/// Exact answers; gamma = 0.
class ExactEstimator final : public ObliviousEstimator {
 public:
  void update(const DenseMatrix& g, const Vector& h) override {
    if (g.cols() != h.size()) throw DimensionError("estimator: G h mismatch");
    gh_ = g * h;
  }
  double query() override { return gh_.squaredNorm(); }
  Vector query_set(const std::vector<Index>& rows) override {
    detail::check_rows(rows, gh_.size());
    Vector out(static_cast<Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      out(Index(k)) = gh_(rows[k]) * gh_(rows[k]);
    }
    return out;
  }

 private:
  Vector gh_;
};

/// ||G R^T R h||^2 with one sketch R fixed for the estimator's lifetime.
/// Per-row answers are <R g_j, R h>^2.
class SketchNormEstimator final : public ObliviousEstimator {
 public:
  SketchNormEstimator(SketchFamily family, Index b, std::uint64_t seed)
      : family_(family), b_(b), seed_(seed) {
    if (b < 1) throw DomainError("estimator: sketch dimension must be >= 1");
  }

  void update(const DenseMatrix& g, const Vector& h) override {
    if (g.cols() != h.size()) throw DimensionError("estimator: G h mismatch");
    if (!sketch_ || sketch_->cols() != h.size()) {
      sketch_ = Sketch::generate(family_, b_, h.size(), seed_);
    }
    const Vector rh = sketch_->apply(h);
    dots_.resize(g.rows());
    for (Index j = 0; j < g.rows(); ++j) {
      dots_(j) = sketch_->apply(g.row(j).transpose()).dot(rh);
    }
  }
  double query() override { return dots_.squaredNorm(); }
  Vector query_set(const std::vector<Index>& rows) override {
    detail::check_rows(rows, dots_.size());
    Vector out(static_cast<Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      out(Index(k)) = dots_(rows[k]) * dots_(rows[k]);
    }
    return out;
  }

 private:
  SketchFamily family_;
  Index b_;
  std::uint64_t seed_;
  std::optional<Sketch> sketch_;
  Vector dots_;
};

/// Sketched projection queries through a maintained Kronecker projection.
/// `update` takes the new weight W (n x n, diagonal in the shared basis) as
/// G and the query vector h (length n^2); answers are ||p_l||^2 and
/// (p_l)_j^2 with p_l the sketched query output.
class ProjectionSketchEstimator final : public ObliviousEstimator {
 public:
  ProjectionSketchEstimator(ConstraintBatch constraints, EigenWeight w0,
                            MaintParams params)
      : maint_(std::move(constraints), std::move(w0), std::move(params)) {}

  void update(const DenseMatrix& w, const Vector& h) override {
    maint_.update(w);
    h_ = h;
    fresh_ = false;
  }
  double query() override { return answer().squaredNorm(); }
  Vector query_set(const std::vector<Index>& rows) override {
    const Vector& p = answer();
    detail::check_rows(rows, p.size());
    Vector out(static_cast<Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      out(Index(k)) = p(rows[k]) * p(rows[k]);
    }
    return out;
  }
  const KroneckerProjMaintain& maintainer() const { return maint_; }

 private:
  const Vector& answer() {
    if (!fresh_) {
      p_ = maint_.query(h_);
      fresh_ = true;
    }
    return p_;
  }

  KroneckerProjMaintain maint_;
  Vector h_;
  Vector p_;
  bool fresh_ = false;
};

inline EstimatorFactory exact_factory() {
  return [](std::uint64_t) { return std::make_unique<ExactEstimator>(); };
}

inline EstimatorFactory sketch_factory(SketchFamily family, Index b) {
  return [family, b](std::uint64_t seed) {
    return std::make_unique<SketchNormEstimator>(family, b, seed);
  };
}

/// Each copy gets its own maintained structure seeded from the copy seed.
inline EstimatorFactory projection_factory(ConstraintBatch constraints,
                                           EigenWeight w0,
                                           MaintParams params) {
  return [=](std::uint64_t seed) {
    MaintParams p = params;
    p.seed = seed;
    return std::make_unique<ProjectionSketchEstimator>(constraints, w0, p);
  };
}

// ---- parameter formulas --------------------------------------------------

/// q = ceil(c_q ln(log_{1+alpha}(U) T / (alpha delta))), at least 1.
inline Index subsample_count(Index steps, double u_bound, double alpha,
                             double delta, double c_q = 8.0) {
  const double levels = std::log(u_bound) / std::log1p(alpha);
  const double arg = levels * double(steps) / (alpha * delta);
  return std::max<Index>(1, Index(std::ceil(c_q * std::log(arg))));
}

/// L = ceil(scale 600 q sqrt(4 T ln(400 / delta0))).
inline Index norm_copy_count(Index q, Index steps, double delta0,
                             double scale = 1.0) {
  return Index(std::ceil(scale * 600.0 * double(q) *
                         std::sqrt(4.0 * double(steps) *
                                   std::log(400.0 / delta0))));
}

/// L = ceil(scale 1200 sqrt(2) q sqrt(k T ln(800 T / beta) ln(1 / beta))),
/// the smallest L for which k-fold advanced composition of the per-coordinate
/// medians stays within 1 / (800 sqrt(T ln(1/beta))) per step.
inline Index setquery_copy_count(Index q, Index k, Index steps, double beta,
                                 double scale = 1.0) {
  const double t = double(steps);
  return Index(std::ceil(scale * 1200.0 * std::sqrt(2.0) * double(q) *
                         std::sqrt(double(k) * t * std::log(800.0 * t / beta) *
                                   std::log(1.0 / beta))));
}

// ---- wrapper -------------------------------------------------------------

struct AdaptiveParams {
  Index steps = 1;          // T
  double u_bound = 1 << 20;  // U
  double alpha = 0.25;
  double delta = 0.1;
  double scale = 1.0;       // multiplies the closed-form L
  double c_q = 8.0;
  double delta0_divisor = 4.0;  // delta0 = delta / (divisor T)
  double eps_pm = 0.25;
  double c_gamma = 4.0;
  std::optional<Index> copies;     // overrides L
  std::optional<Index> subsample;  // overrides q
};

struct AdaptiveCounters {
  Index copy_updates = 0;
  Index inner_queries = 0;
  Index clamps = 0;
  Index steps = 0;
};

inline void to_json(nlohmann::json& j, const AdaptiveCounters& c) {
  j = nlohmann::json{{"copy_updates", c.copy_updates},
                     {"inner_queries", c.inner_queries},
                     {"clamps", c.clamps},
                     {"steps", c.steps}};
}

class AdaptiveWrapper {
 public:
  enum class Mode { kNorm, kSetQuery };

  static AdaptiveWrapper make_norm(const EstimatorFactory& factory,
                                   const AdaptiveParams& params,
                                   std::uint64_t seed) {
    return AdaptiveWrapper(Mode::kNorm, factory, params, 1, seed);
  }

  static AdaptiveWrapper make_setquery(const EstimatorFactory& factory,
                                       const AdaptiveParams& params, Index k,
                                       std::uint64_t seed) {
    return AdaptiveWrapper(Mode::kSetQuery, factory, params, k, seed);
  }

  Mode mode() const { return mode_; }
  Index copies() const { return Index(copies_.size()); }
  Index subsample() const { return q_; }
  Index k() const { return k_; }
  Index step() const { return step_; }
  const AdaptiveParams& params() const { return params_; }
  const SignedGeometricGrid& grid() const { return grid_; }
  /// beta passed to the private median (delta0 in norm mode).
  double median_beta() const { return beta_; }
  double rank_slack() const {
    return median_rank_slack(params_.eps_pm, grid_.size(), beta_,
                             params_.c_gamma);
  }
  const AdaptiveCounters& counters() const { return counters_; }
  const std::vector<Index>& last_sample() const { return last_sample_; }

  double norm_step(const DenseMatrix& g, const Vector& h) {
    if (mode_ != Mode::kNorm) throw DomainError("adaptive: not a norm wrapper");
    begin_step(g, h);
    std::vector<double> vals(last_sample_.size());
    for (std::size_t i = 0; i < last_sample_.size(); ++i) {
      vals[i] = to_grid(copies_[last_sample_[i]]->query());
      ++counters_.inner_queries;
    }
    return private_median(vals, grid_, params_.eps_pm, beta_, rng_);
  }

  Vector setquery_step(const DenseMatrix& g, const Vector& h,
                       const std::vector<Index>& rows) {
    if (mode_ != Mode::kSetQuery) {
      throw DomainError("adaptive: not a set-query wrapper");
    }
    if (Index(rows.size()) != k_) {
      throw DimensionError("adaptive: query set must have k indices");
    }
    begin_step(g, h);
    std::vector<Vector> answers;
    answers.reserve(last_sample_.size());
    for (Index l : last_sample_) {
      answers.push_back(copies_[l]->query_set(rows));
      ++counters_.inner_queries;
    }
    Vector out(k_);
    std::vector<double> vals(last_sample_.size());
    for (Index j = 0; j < k_; ++j) {
      for (std::size_t i = 0; i < answers.size(); ++i) {
        vals[i] = to_grid(answers[i](j));
      }
      out(j) = private_median(vals, grid_, params_.eps_pm, beta_, rng_);
    }
    return out;
  }

  nlohmann::json describe() const {
    nlohmann::json j;
    j["mode"] = mode_ == Mode::kNorm ? "norm" : "setquery";
    j["L"] = copies();
    j["q"] = q_;
    j["k"] = k_;
    j["T"] = params_.steps;
    j["scale"] = params_.scale;
    j["eps_pm"] = params_.eps_pm;
    j["beta"] = beta_;
    j["delta0_divisor"] = params_.delta0_divisor;
    j["rank_slack"] = rank_slack();
    j["grid"] = grid_;
    return j;
  }

 private:
  AdaptiveWrapper(Mode mode, const EstimatorFactory& factory,
                  const AdaptiveParams& params, Index k, std::uint64_t seed)
      : mode_(mode),
        params_(params),
        k_(k),
        grid_(params.u_bound, params.alpha),
        rng_(derive_seed(seed, 2)) {
    if (params.steps < 1) throw DomainError("adaptive: T must be >= 1");
    if (!(params.alpha > 0.0 && params.alpha < 1.0) ||
        !(params.delta > 0.0 && params.delta < 1.0)) {
      throw DomainError("adaptive: alpha and delta must lie in (0, 1)");
    }
    if (!(params.scale > 0.0) || !(params.delta0_divisor > 0.0)) {
      throw DomainError("adaptive: scale and delta0 divisor must be > 0");
    }
    if (k < 1) throw DomainError("adaptive: k must be >= 1");
    beta_ = params.delta / (params.delta0_divisor * double(params.steps));
    q_ = params.subsample.value_or(subsample_count(
        params.steps, params.u_bound, params.alpha, params.delta, params.c_q));
    Index l_count = 0;
    if (params.copies) {
      l_count = *params.copies;
    } else if (mode == Mode::kNorm) {
      l_count = norm_copy_count(q_, params.steps, beta_, params.scale);
    } else {
      l_count = setquery_copy_count(q_, k, params.steps, beta_, params.scale);
    }
    if (!params.copies) l_count = std::max(l_count, q_);
    if (q_ < 1 || l_count < q_) {
      throw DomainError("adaptive: requires L >= q >= 1");
    }
    copies_.reserve(std::size_t(l_count));
    for (Index l = 0; l < l_count; ++l) {
      copies_.push_back(factory(derive_seed(seed, 1, std::uint64_t(l))));
    }
  }

  void begin_step(const DenseMatrix& g, const Vector& h) {
    if (step_ >= params_.steps) {
      throw DomainError("adaptive: step budget exhausted");
    }
    for (auto& c : copies_) {
      c->update(g, h);
      ++counters_.copy_updates;
    }
    std::uniform_int_distribution<Index> pick(0, copies() - 1);
    last_sample_.resize(std::size_t(q_));
    for (auto& l : last_sample_) l = pick(rng_);
    ++step_;
    ++counters_.steps;
  }

  double to_grid(double v) {
    if (!std::isfinite(v)) throw DomainError("adaptive: non-finite estimate");
    if (std::abs(v) > grid_.u_bound()) {
      ++counters_.clamps;
      v = grid_.clamp(v);
    }
    return grid_.round(v);
  }

  Mode mode_;
  AdaptiveParams params_;
  Index k_;
  SignedGeometricGrid grid_;
  Rng rng_;
  double beta_ = 0.0;
  Index q_ = 1;
  Index step_ = 0;
  std::vector<std::unique_ptr<ObliviousEstimator>> copies_;
  std::vector<Index> last_sample_;
  AdaptiveCounters counters_;
};

/// Norm-mode wrapper with the closed-form L and q.
inline AdaptiveWrapper make_norm_wrapper(const EstimatorFactory& factory,
                                         const AdaptiveParams& params,
                                         std::uint64_t seed) {
  return AdaptiveWrapper::make_norm(factory, params, seed);
}

inline AdaptiveWrapper make_setquery_wrapper(const EstimatorFactory& factory,
                                             const AdaptiveParams& params,
                                             Index k, std::uint64_t seed) {
  return AdaptiveWrapper::make_setquery(factory, params, k, seed);
}

/// Additive tolerance (alpha + gamma + alpha gamma) scale.
inline double approximation_bound(double alpha, double gamma, double scale) {
  return (alpha + gamma + alpha * gamma) * scale;
}

}  // namespace kronproj
