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


// Acceptance runner: one PASS/FAIL line per criterion. `--only N` runs a
// single criterion; the exit status is nonzero when any selected one fails.

#include "kronproj/kronproj.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

namespace {

using namespace kronproj;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(3);
  o << v;
  return o.str();
}

// Criteria 1 and 2 share the same 50 trajectories.
const RunReport& maintenance_suite() {
  static const RunReport rep = [] {
    OracleSuiteConfig cfg;
    cfg.trajectories = 50;
    cfg.steps = 100;
    cfg.eps_mp = 0.05;
    cfg.seed = 2024;
    return verify_maintenance_suite(cfg);
  }();
  return rep;
}

Outcome oracle_equivalence() {
  const auto& s = maintenance_suite().summary;
  const double me = s["max_m_error"], qe = s["max_query_error"];
  return {me <= 1e-7 && qe <= 1e-7 && s["failed_trajectories"] == 0,
          "50 trajectories, max M error " + fmt(me) + ", max query error " +
              fmt(qe)};
}

Outcome spectral_approximation() {
  const double excess = maintenance_suite().summary["max_log_gap_minus_half_eps"];
  return {excess <= 1e-12,
          "max_i |ln(lambda/lambda_tilde)| - eps_mp/2 = " + fmt(excess)};
}

Outcome kron_identities() {
  const RunReport r = kron_identity_suite(100, 6, 7, 1e-12);
  return {!r.threshold_violated,
          "100 instances per identity, worst error " +
              fmt(r.summary["max_error"])};
}

Outcome woodbury() {
  const RunReport r = woodbury_suite(100, 10, 5, 8, 1e-9);
  return {!r.threshold_violated,
          "100 instances, worst relative error " + fmt(r.summary["max_error"])};
}

Outcome coordinate_embedding() {
  CeBenchConfig cfg;
  cfg.b = 256;
  cfg.n = 1024;
  cfg.trials = 10000;
  cfg.delta = 0.01;
  cfg.seed = 5;
  const RunReport r = ce_bench(cfg);
  std::string d = "beta bound " + fmt(r.summary["beta_bound"]);
  for (const auto& rec : r.records) {
    d += "; " + rec["family"].get<std::string>() + " bias " +
         fmt(rec["bias_in_se"]) + " se, beta " + fmt(rec["beta_hat"]) +
         (rec["beta_checked"].get<bool>() ? "" : " (reported)");
  }
  return {!r.threshold_violated, d};
}

Outcome median_rank_slack_check() {
  DpBenchConfig cfg;
  cfg.u_bound = 16777216.0;
  cfg.alpha = 1.0;
  cfg.set_size = 2000;
  cfg.epsilon = 0.25;
  cfg.beta = 0.05;
  cfg.trials = 1000;
  cfg.smoke_samples = 0;
  cfg.seed = 6;
  const RunReport r = dp_bench(cfg);
  bool ok = r.summary["grid_points"] == 101;
  std::string d = "|X| = " + r.summary["grid_points"].dump() + ", slack " +
                  fmt(r.summary["rank_slack"]);
  for (const auto& rec : r.records) {
    ok = ok && rec["ok"].get<bool>();
    d += "; " + rec["distribution"].get<std::string>() + " " +
         fmt(rec["success_rate"]);
  }
  return {ok, d};
}

Outcome dp_smoke() {
  DpBenchConfig cfg;
  cfg.distributions.clear();
  cfg.epsilon = 0.25;
  cfg.smoke_samples = 100000;
  cfg.seed = 7;
  const RunReport r = dp_bench(cfg);
  const auto& s = r.summary["smoke"];
  return {s["ok"].get<bool>() && s["points_checked"].get<Index>() > 0,
          s["points_checked"].dump() + " points checked, worst ratio " +
              fmt(s["worst_ratio"]) + " vs allowed " +
              fmt(s["allowed_at_worst"])};
}

// Smallest power-of-two b whose calibrated per-row error gives gamma <= 0.1.
std::pair<Index, double> calibrate_gaussian(Index dim) {
  Vector e1 = Vector::Zero(dim);
  e1(0) = 1.0;
  for (Index b = 64;; b *= 2) {
    const CeReport ce =
        ce_estimate_pair(SketchFamily::gaussian(), b, e1, e1, 2000, 81, 0.01);
    const double eps = ce.beta_hat / std::sqrt(double(b));
    const double gamma = 2.0 * eps + eps * eps;
    if (gamma <= 0.1 || b >= (Index(1) << 16)) return {b, gamma};
  }
}

AdaptiveExperimentConfig adaptive_desk(AdaptiveWrapper::Mode mode, Index k) {
  AdaptiveExperimentConfig cfg;
  cfg.mode = mode;
  cfg.adversary = Adversary::kFeedback;
  cfg.params.steps = 50;
  cfg.params.alpha = 0.25;
  cfg.params.delta = 0.1;
  cfg.params.copies = 20;
  cfg.params.subsample = 7;
  cfg.rows = 8;
  cfg.dim = 16;
  cfg.k = k;
  cfg.estimator = "gaussian";
  const auto [b, gamma] = calibrate_gaussian(cfg.dim);
  cfg.sketch_dim = b;
  cfg.gamma = gamma;
  cfg.seed = 9;
  return cfg;
}

Outcome adaptive_run(AdaptiveWrapper::Mode mode, Index k) {
  const AdaptiveExperimentConfig cfg = adaptive_desk(mode, k);
  const RunReport r = adaptive_batch(cfg, 200, 0.9);
  return {!r.threshold_violated,
          "b = " + std::to_string(cfg.sketch_dim) + " (gamma " +
              fmt(cfg.gamma) + "), L = 20, q = 7: " +
              r.summary["good_runs"].dump() + "/200 runs within bound"};
}

Outcome composition_formulas() {
  bool ok = true;
  double worst = 0.0;
  auto close = [&](double got, double want) {
    const double e = std::abs(got - want) / std::max(1.0, std::abs(want));
    worst = std::max(worst, e);
    ok = ok && e <= 1e-15;
  };
  const std::vector<PrivacyBudget> parts{{0.1, 1e-6}, {0.25, 0.0}, {0.05, 2e-5}};
  const PrivacyBudget s = simple_composition(parts);
  close(s.epsilon, 0.1 + 0.25 + 0.05);
  close(s.delta, 1e-6 + 0.0 + 2e-5);
  for (long k : {1L, 10L, 500L}) {
    const double e = 0.01, d = 1e-7, d0 = 1e-5;
    const PrivacyBudget a = advanced_composition(e, d, k, d0);
    close(a.epsilon, std::sqrt(2.0 * k * std::log(1.0 / d0)) * e +
                         2.0 * k * e * e);
    close(a.delta, d0 + k * d);
  }
  close(amplification(0.25, 7, 100), 6.0 * 7 / 100 * 0.25);

  // L = 600 q sqrt(4T ln(400/delta0)) makes the whole transcript
  // (1/200, delta0/400)-DP.
  double worst_eps = 0.0;
  for (Index steps : {1, 50, 1000, 100000}) {
    for (double delta : {0.1, 1e-3}) {
      const double delta0 = delta / (4.0 * double(steps));
      const Index q = subsample_count(steps, 1 << 20, 0.25, delta);
      const Index l = norm_copy_count(q, steps, delta0);
      const double per_step = amplification(0.25, q, l);
      const PrivacyBudget total =
          advanced_composition(per_step, 0.0, steps, delta0 / 400.0);
      worst_eps = std::max(worst_eps, total.epsilon);
      ok = ok && total.epsilon <= 1.0 / 200.0 &&
           total.delta == delta0 / 400.0;
    }
  }
  return {ok, "closed forms within " + fmt(worst) +
                  ", worst transcript epsilon " + fmt(worst_eps) +
                  " <= 1/200"};
}

Outcome complexity_flat() {
  double worst = 0.0;
  for (int i = 1; i <= 10; ++i)
    for (int j = 0; j < 10; ++j)
      worst = std::max(worst, std::abs(complexity_model(i / 11.0, j / 10.0,
                                                        2.0, 4.0)
                                           .f_ac -
                                       4.0));
  return {worst <= 1e-12, "100 (a, c) pairs, max |f - 4| = " + fmt(worst)};
}

bool same_file(const std::string& a, const std::string& b) {
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  };
  const std::string x = slurp(a);
  return !x.empty() && x == slurp(b);
}

Outcome determinism() {
  int compared = 0;
  bool ok = true;
  auto twice = [&](const std::function<RunReport()>& run) {
    const RunReport a = run(), b = run();
    ok = ok && a.to_json().dump() == b.to_json().dump() &&
         a.to_csv() == b.to_csv();
    ++compared;
  };
  twice([] {
    MaintExperimentConfig c;
    c.drift.steps = 30;
    c.drift.seed = 4;
    return run_maintenance_experiment(c);
  });
  for (auto mode : {AdaptiveWrapper::Mode::kNorm,
                    AdaptiveWrapper::Mode::kSetQuery}) {
    twice([mode] {
      AdaptiveExperimentConfig c;
      c.mode = mode;
      c.k = 3;
      c.params.steps = 10;
      c.params.copies = 20;
      c.params.subsample = 7;
      c.estimator = "srht";
      c.sketch_dim = 8;
      c.seed = 12;
      return run_adaptive_experiment(c);
    });
  }
  twice([] {
    CeBenchConfig c;
    c.n = 64;
    c.b = 16;
    c.trials = 200;
    return ce_bench(c);
  });
  twice([] {
    DpBenchConfig c;
    c.trials = 20;
    c.set_size = 50;
    c.smoke_samples = 1000;
    return dp_bench(c);
  });
  twice([] { return complexity_report(0.4, 0.2, 2.38, {}, 32); });

#ifdef KRONPROJ_CLI_PATH
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "kronproj_acceptance";
  fs::create_directories(dir);
  const std::string cli = KRONPROJ_CLI_PATH;
  for (const char* sub : {"run-maint", "adaptive-sim", "setquery-sim",
                          "dp-bench", "complexity"}) {
    for (const char* format : {"json", "csv"}) {
      const std::string base = (dir / (std::string(sub) + "." + format)).string();
      const std::string cfg =
          std::string(sub) == "dp-bench"
              ? (dir / "dp.json").string()
              : std::string();
      if (!cfg.empty()) {
        std::ofstream(cfg) << R"({"trials": 20, "set_size": 50, "smoke_samples": 1000})";
      }
      for (int rep = 0; rep < 2; ++rep) {
        const std::string cmd = "\"" + cli + "\" " + sub + " --seed 3 --format " +
                                format + (cfg.empty() ? "" : " --config " + cfg) +
                                " --out \"" + base + "." + std::to_string(rep) +
                                "\" > /dev/null 2>&1";
        const int rc = std::system(cmd.c_str());
        ok = ok && rc != -1 && WEXITSTATUS(rc) != 1;
      }
      ok = ok && same_file(base + ".0", base + ".1");
      ++compared;
    }
  }
#endif
  return {ok, std::to_string(compared) + " report pairs byte-identical"};
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kronproj acceptance criteria"};
  int only = 0;
  app.add_option("--only", only, "Run a single criterion (1-12)")
      ->check(CLI::Range(1, 12));
  CLI11_PARSE(app, argc, argv);

  using Mode = AdaptiveWrapper::Mode;
  const std::vector<Criterion> criteria{
      {"maintenance matches the oracle", oracle_equivalence},
      {"spectral approximation of the stored eigenvalues",
       spectral_approximation},
      {"Kronecker identities", kron_identities},
      {"Woodbury update", woodbury},
      {"coordinate-wise embedding", coordinate_embedding},
      {"private median rank slack", median_rank_slack_check},
      {"private median neighbouring-database ratio", dp_smoke},
      {"adaptive norm estimation under feedback",
       [] { return adaptive_run(Mode::kNorm, 1); }},
      {"adaptive set queries under feedback",
       [] { return adaptive_run(Mode::kSetQuery, 8); }},
      {"composition formulas", composition_formulas},
      {"cost model f(a, c) = 4 at omega = 2, theta = 4", complexity_flat},
      {"determinism", determinism},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && std::size_t(only) != i + 1) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " ("
              << criteria[i].name << "): " << o.detail << " [" << fmt(secs)
              << " s]" << std::endl;
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
