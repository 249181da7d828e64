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


// kronproj command-line harness. Every subcommand reads an optional JSON
// config, runs one experiment and writes a report as JSON or CSV.
//
// Exit status: 0 on success, 2 when a report crosses its acceptance
// threshold, 1 on any error.

#include "kronproj/kronproj.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using kronproj::RunReport;
using nlohmann::json;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_path;
  std::string format = "json";
  std::string check_oracle = "on";
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "JSON config file")
      ->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Overrides the config seed");
  sub->add_option("--out", c.out_path, "Report path (default: stdout)");
  sub->add_option("--format", c.format, "Report format")
      ->check(CLI::IsMember({"json", "csv"}));
  sub->add_option("--check-oracle", c.check_oracle,
                  "Compare against the brute-force oracle (run-maint)")
      ->check(CLI::IsMember({"on", "off"}));
}

json load_config(const Common& c) {
  if (c.config_path.empty()) return json::object();
  std::ifstream in(c.config_path);
  if (!in) throw std::runtime_error("cannot open " + c.config_path);
  return json::parse(in, nullptr, true, /*ignore_comments=*/true);
}

std::string render(const std::vector<RunReport>& reports,
                   const std::string& format) {
  if (format == "csv") {
    std::string out;
    for (std::size_t i = 0; i < reports.size(); ++i) {
      if (reports.size() > 1) {
        out += (i ? "\n# " : "# ") + reports[i].kind + "\n";
      }
      out += reports[i].to_csv();
    }
    return out;
  }
  if (reports.size() == 1) return reports.front().to_json().dump(2) + "\n";
  json all = json::array();
  for (const auto& r : reports) all.push_back(r.to_json());
  return json{{"reports", all}}.dump(2) + "\n";
}

int emit(const std::vector<RunReport>& reports, const Common& c) {
  const std::string text = render(reports, c.format);
  if (c.out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(c.out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + c.out_path);
    out << text;
  }
  for (const auto& r : reports) {
    if (r.threshold_violated) return 2;
  }
  return 0;
}

int verify_oracle(const Common& c, const std::string& suite) {
  json j = load_config(c);
  const std::uint64_t seed = c.seed.value_or(j.value("seed", 0ULL));
  std::vector<RunReport> reps;
  if (suite == "kron" || suite == "all") {
    const json k = j.value("kron", json::object());
    reps.push_back(kronproj::kron_identity_suite(
        k.value("instances", 100), k.value("max_n", 6), seed,
        k.value("tol", 1e-12)));
  }
  if (suite == "woodbury" || suite == "all") {
    const json w = j.value("woodbury", json::object());
    reps.push_back(kronproj::woodbury_suite(
        w.value("instances", 100), w.value("max_n", 10), w.value("max_k", 5),
        seed, w.value("tol", 1e-9)));
  }
  if (suite == "maint" || suite == "all") {
    auto cfg = kronproj::oracle_suite_from_json(
        j.value("maint", json::object()));
    cfg.seed = seed;
    reps.push_back(kronproj::verify_maintenance_suite(cfg));
  }
  return emit(reps, c);
}

int run_maint(const Common& c) {
  auto cfg = kronproj::maint_experiment_from_json(load_config(c));
  if (c.seed) {
    cfg.drift.seed = *c.seed;
    cfg.maint.seed = *c.seed;
  }
  cfg.check_oracle = c.check_oracle == "on";
  return emit({kronproj::run_maintenance_experiment(cfg)}, c);
}

int ce_bench(const Common& c) {
  auto cfg = kronproj::ce_bench_from_json(load_config(c));
  if (c.seed) cfg.seed = *c.seed;
  return emit({kronproj::ce_bench(cfg)}, c);
}

int dp_bench(const Common& c) {
  auto cfg = kronproj::dp_bench_from_json(load_config(c));
  if (c.seed) cfg.seed = *c.seed;
  return emit({kronproj::dp_bench(cfg)}, c);
}

int adaptive_sim(const Common& c, kronproj::AdaptiveWrapper::Mode mode) {
  const json j = load_config(c);
  auto cfg = kronproj::adaptive_experiment_from_json(j);
  cfg.mode = mode;
  if (c.seed) cfg.seed = *c.seed;
  if (j.contains("runs")) {
    return emit({kronproj::adaptive_batch(cfg, j.at("runs").get<kronproj::Index>(),
                                          j.value("min_success", 0.9))},
                c);
  }
  return emit({kronproj::run_adaptive_experiment(cfg)}, c);
}

int complexity(const Common& c, std::optional<double> a,
               std::optional<double> cc, std::optional<double> omega,
               std::optional<double> theta, std::optional<kronproj::Index> n) {
  const json j = load_config(c);
  std::optional<double> th = theta;
  if (!th && j.contains("theta")) th = j.at("theta").get<double>();
  return emit({kronproj::complexity_report(
                  a.value_or(j.value("a", 0.5)), cc.value_or(j.value("c", 0.0)),
                  omega.value_or(j.value("omega", 2.373)), th,
                  n.value_or(j.value("n", kronproj::Index(64))))},
              c);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kronproj: projection maintenance and adaptive-sketch harness"};
  app.require_subcommand(1);

  Common common;
  std::string suite = "all";
  std::optional<double> a, cc, omega, theta;
  std::optional<kronproj::Index> n;

  auto* verify = app.add_subcommand("verify-oracle",
                                    "Oracle batteries: kron, woodbury, maint");
  add_common(verify, common);
  verify->add_option("--suite", suite, "Which battery to run")
      ->check(CLI::IsMember({"kron", "woodbury", "maint", "all"}));
  auto* maint = app.add_subcommand("run-maint", "One maintenance trajectory");
  add_common(maint, common);
  auto* ce = app.add_subcommand("ce-bench", "Coordinate-wise embedding stats");
  add_common(ce, common);
  auto* dp = app.add_subcommand("dp-bench", "Private median benchmarks");
  add_common(dp, common);
  auto* anorm = app.add_subcommand("adaptive-sim", "Adaptive norm estimation");
  add_common(anorm, common);
  auto* aset = app.add_subcommand("setquery-sim", "Adaptive set queries");
  add_common(aset, common);
  auto* cx = app.add_subcommand("complexity", "Cost model f(a, c) and g_i");
  add_common(cx, common);
  cx->add_option("--a", a);
  cx->add_option("--c", cc);
  cx->add_option("--omega", omega);
  cx->add_option("--theta", theta);
  cx->add_option("--n", n);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    using Mode = kronproj::AdaptiveWrapper::Mode;
    if (*verify) return verify_oracle(common, suite);
    if (*maint) return run_maint(common);
    if (*ce) return ce_bench(common);
    if (*dp) return dp_bench(common);
    if (*anorm) return adaptive_sim(common, Mode::kNorm);
    if (*aset) return adaptive_sim(common, Mode::kSetQuery);
    if (*cx) return complexity(common, a, cc, omega, theta, n);
  } catch (const std::exception& e) {
    std::cerr << "kronproj: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
