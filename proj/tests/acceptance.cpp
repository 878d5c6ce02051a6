// Copyright 2026 The fedq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "fedq/env_gen.hpp"
#include "fedq/errors.hpp"
#include "fedq/fedq_engine.hpp"
#include "fedq/harness.hpp"
#include "fedq/theory_oracle.hpp"

namespace fs = std::filesystem;
using fedq::ExperimentConfig;
using fedq::ExperimentKind;
using nlohmann::json;

namespace {

constexpr double kOracleTolerance = 1e-10;
constexpr double kIdentityTolerance = 1e-9;
constexpr double kLambertTolerance = 1e-12;
constexpr double kHorizonLow = 16.9;
constexpr double kHorizonHigh = 17.1;
constexpr double kPlateauRatioHet = 2.0;
constexpr double kPlateauRatioHom = 1.2;
constexpr double kT0Fraction = 0.8;
constexpr double kHomSpread = 0.2;
constexpr double kSpeedupRatio = 0.6;
constexpr std::size_t kRequiredRepeats = 4;
constexpr std::size_t kRepeats = 5;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double time_limit;  // seconds, 0 for none
  Outcome outcome;
  double seconds = 0.0;
};

// Coarse-bound violations seen anywhere in this process.
std::size_t g_coarse_violations = 0;
std::size_t g_coarse_runs = 0;

fs::path work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "fedq_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// Runs an experiment; a coarse-bound failure surfaces as a VerificationError.
json run_counted(const ExperimentConfig& c) {
  try {
    json s = fedq::run_experiment(c);
    g_coarse_runs += c.num_repeats * c.periods.size() * c.schedules.size();
    return s;
  } catch (const fedq::VerificationError&) {
    ++g_coarse_violations;
    throw;
  }
}

ExperimentConfig fast_config(ExperimentKind kind, const std::string& out) {
  ExperimentConfig c = fedq::default_config(kind, true);
  c.num_repeats = kRepeats;
  c.seed = 0;
  c.out_dir = work_dir() / out;
  return c;
}

std::string join(const std::vector<double>& v, const char* f = "{:.3g}") {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    s += (i ? "," : "") + fmt::format(fmt::runtime(f), v[i]);
  }
  return "[" + s + "]";
}

Outcome oracle_equivalence() {
  double worst = 0.0;
  std::size_t points = 0;
  for (double gamma : {0.3, 0.5, 0.9}) {
    for (std::uint64_t e : {1, 2, 4, 8}) {
      for (double lambda : fedq::lower_bound_lambda_grid(gamma, e, 10'000)) {
        const auto c = fedq::compare_lower_bound({2, {1.0, 0.0}, gamma}, lambda, e, 10'000);
        worst = std::max(worst, c.max_deviation);
        ++points;
      }
    }
  }
  return {worst <= kOracleTolerance,
          fmt::format("max deviation {:.3g} over {} grid points (tol {:g})", worst, points,
                      kOracleTolerance)};
}

Outcome error_identity() {
  double worst_inc = 0.0;
  double worst_direct = 0.0;
  int runs = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ExperimentConfig c = fedq::default_config(ExperimentKind::kSingleRun, true);
    c.seed = seed;
    const fedq::Ensemble env = fedq::make_environment(c, 0);
    const fedq::FederatedQLearning engine(env);
    for (double lambda : {0.1, 0.5}) {
      fedq::RunConfig rc;
      rc.period = c.periods.front();
      rc.horizon = c.horizon;
      rc.schedule = fedq::StepsizeSchedule::constant(lambda);
      rc.seed = fedq::repeat_seed(seed, 0);
      rc.record_locals = true;
      rc.verify_identities = true;
      const fedq::RunTrace t = engine.run(rc);
      const auto res = fedq::error_iteration_residuals(t, env);
      worst_inc = std::max(worst_inc, *std::max_element(res.begin(), res.end()));
      for (std::uint64_t s = 0; s <= rc.horizon; s += 97) {
        worst_direct = std::max(worst_direct, fedq::verify_error_iteration(t, env, s));
      }
      const auto cb = fedq::verify_coarse_bounds(t);
      g_coarse_violations += cb.violations.size();
      ++g_coarse_runs;
      ++runs;
    }
  }
  const double worst = std::max(worst_inc, worst_direct);
  return {worst <= kIdentityTolerance,
          fmt::format("{} runs, max residual {:.3g} (incremental {:.3g}, direct {:.3g}, tol {:g})",
                      runs, worst, worst_inc, worst_direct, kIdentityTolerance)};
}

Outcome kappa_suite() {
  std::size_t checks = 0;
  std::size_t points = 0;
  std::string failures;
  for (double gamma : {0.3, 0.5, 0.7, 0.9, 0.99}) {
    for (std::uint64_t e : {2, 4, 8, 16, 32}) {
      const double top = 1.0 / (1.0 + gamma);
      std::vector<double> grid;
      for (int i = 0; i < 4; ++i) grid.push_back(top * std::pow(1e-3, (3 - i) / 3.0));
      points += grid.size();
      const fedq::KappaReport r = fedq::verify_kappa_properties(gamma, e, grid);
      checks += r.checks.size();
      if (!r.ok()) failures += r.failures();
    }
  }
  return {failures.empty(),
          fmt::format("{} points, {} checks{}", points, checks,
                      failures.empty() ? "" : ", failures: " + failures)};
}

Outcome lower_bound_floor() {
  std::size_t total = 0;
  std::size_t below = 0;
  std::string worst;
  double worst_ratio = INFINITY;
  for (std::uint64_t e : {2, 4}) {
    for (std::uint64_t r : {32, 64, 128}) {
      const double l0 = fedq::lambda0(0.5, e, r);
      std::vector<double> lambdas;
      for (double f : {0.1, 0.3, 1.0, 2.0, 5.0, 20.0}) {
        lambdas.push_back(std::min(f * l0, 1.0 / 1.5));
      }
      for (double lambda : lambdas) {
        const auto c = fedq::compare_lower_bound({2, {1.0, 0.0}, 0.5}, lambda, e, r);
        if (!c.floor.applicable) {
          return {false, "floor inapplicable: " + c.floor.reason};
        }
        ++total;
        const double ratio = c.final_error / c.floor.floor;
        if (ratio < 1.0) ++below;
        if (ratio < worst_ratio) {
          worst_ratio = ratio;
          worst = fmt::format("E={} T={} lambda={:.3g}={:.2g}*lambda0", e, r * e, lambda,
                              lambda / l0);
        }
      }
    }
  }
  return {below == 0, fmt::format("{}/{} points below the floor; smallest error/floor {:.3f} at {}",
                                  below, total, worst_ratio, worst)};
}

// Criterion 6 experiment, also reused for determinism.
ExperimentConfig two_phase_phenomenon_config(bool homogeneous, const std::string& out) {
  ExperimentConfig c = fast_config(ExperimentKind::kSingleRun, out);
  c.periods = {fedq::SyncPeriod{10}};
  c.schedules = {fedq::StepsizeSchedule::constant(0.2)};
  if (homogeneous) c.environment = fedq::EnvironmentKind::kHomogeneous;
  return c;
}

Outcome two_phase_phenomenon() {
  const ExperimentConfig het = two_phase_phenomenon_config(false, "c6_het");
  const ExperimentConfig hom = two_phase_phenomenon_config(true, "c6_hom");
  const json a = run_counted(het)["curves"][0];
  const json b = run_counted(hom)["curves"][0];
  const double horizon = static_cast<double>(het.horizon);

  std::vector<double> het_ratio;
  std::vector<double> hom_ratio;
  std::size_t het_ok = 0;
  std::size_t hom_ok = 0;
  for (std::size_t i = 0; i < kRepeats; ++i) {
    const double r = a["plateau_errors"][i].get<double>() / a["min_smoothed_errors"][i].get<double>();
    const double t0 = a["t0"][i].get<double>();
    het_ratio.push_back(r);
    if (t0 < kT0Fraction * horizon && r >= kPlateauRatioHet) ++het_ok;
    const double h = b["plateau_errors"][i].get<double>() / b["min_smoothed_errors"][i].get<double>();
    hom_ratio.push_back(h);
    if (h <= kPlateauRatioHom) ++hom_ok;
  }
  std::vector<double> t0s;
  for (const auto& x : a["t0"]) t0s.push_back(x.get<double>());
  return {het_ok >= kRequiredRepeats && hom_ok >= kRequiredRepeats,
          fmt::format("heterogeneous plateau/min {} with t0 {} ({}/5 need >= {:g}x); "
                      "homogeneous {} ({}/5 need <= {:g}x)",
                      join(het_ratio), join(t0s, "{:g}"), het_ok, kPlateauRatioHet,
                      join(hom_ratio), hom_ok, kPlateauRatioHom)};
}

Outcome e_degradation() {
  auto sweep = [](bool homogeneous, const std::string& out) {
    ExperimentConfig c = fast_config(ExperimentKind::kESweep, out);
    c.periods = {fedq::SyncPeriod{1}, fedq::SyncPeriod{10}, fedq::SyncPeriod{20}};
    c.schedules = {fedq::StepsizeSchedule::constant(0.1)};
    if (homogeneous) c.environment = fedq::EnvironmentKind::kHomogeneous;
    std::vector<double> mean;
    std::vector<double> sd;
    const json summary = run_counted(c);
    for (const auto& curve : summary["curves"]) {
      mean.push_back(curve["mean_plateau"].get<double>());
      sd.push_back(curve["std_plateau"].get<double>());
    }
    return std::pair{mean, sd};
  };
  const auto [het, het_sd] = sweep(false, "c7_het");
  const auto [hom, hom_sd] = sweep(true, "c7_hom");
  bool monotone = true;
  for (std::size_t i = 0; i + 1 < het.size(); ++i) {
    monotone = monotone && het[i + 1] >= het[i] - std::max(het_sd[i], het_sd[i + 1]);
  }
  const auto [lo, hi] = std::minmax_element(hom.begin(), hom.end());
  const double spread = (*hi - *lo) / *lo;
  return {monotone && spread < kHomSpread,
          fmt::format("heterogeneous mean plateau {} (std {}) for E=1,10,20; homogeneous {} "
                      "spread {:.1f}% (limit {:g}%)",
                      join(het, "{:.4g}"), join(het_sd), join(hom, "{:.4g}"), 100 * spread,
                      100 * kHomSpread)};
}

Outcome linear_speedup() {
  auto final_error = [](std::size_t k) {
    ExperimentConfig c = fast_config(ExperimentKind::kSingleRun, fmt::format("c8_k{}", k));
    c.environment = fedq::EnvironmentKind::kHomogeneous;
    c.fixed_environment = true;
    c.num_agents = k;
    c.horizon = 4000;
    c.periods = {fedq::SyncPeriod{1}};
    c.schedules = {fedq::StepsizeSchedule::corollary()};
    return run_counted(c)["curves"][0]["mean_final"].get<double>();
  };
  const double k4 = final_error(4);
  const double k16 = final_error(16);
  return {k16 <= kSpeedupRatio * k4,
          fmt::format("mean final error K=4 {:.4g}, K=16 {:.4g}, ratio {:.3f} (limit {:g})", k4,
                      k16, k16 / k4, kSpeedupRatio)};
}

Outcome two_phase_benefit() {
  ExperimentConfig c = fast_config(ExperimentKind::kTwoPhase, "c9");
  c.two_phase.phase1_lambdas = {0.05};
  const json s = run_counted(c);
  json baseline;
  json twophase;
  for (const auto& curve : s["curves"]) {
    const auto label = curve["label"].get<std::string>();
    if (label.rfind("baseline_", 0) == 0) baseline = curve;
    if (label.rfind("twophase_", 0) == 0) twophase = curve;
  }
  std::size_t earlier = 0;
  std::string base_hits;
  std::string two_hits;
  for (std::size_t i = 0; i < kRepeats; ++i) {
    const json& b = baseline["tolerance_iterations"][i]["0.1"];
    const json& t = twophase["tolerance_iterations"][i]["0.1"];
    base_hits += fmt::format("{}{}", i ? "," : "", b.dump());
    two_hits += fmt::format("{}{}", i ? "," : "", t.dump());
    if (!t.is_null() && (b.is_null() || t.get<std::uint64_t>() < b.get<std::uint64_t>())) {
      ++earlier;
    }
  }
  return {earlier >= kRequiredRepeats,
          fmt::format("10% tolerance reached at [{}] two-phase vs [{}] baseline ({}/5 earlier)",
                      two_hits, base_hits, earlier)};
}

Outcome numerics() {
  const double lo = std::log(1e-6);
  const double hi = -1.0;
  double worst = 0.0;
  for (int i = 1; i <= 100; ++i) {
    const double x = -std::exp(lo + (hi - lo) * i / 101.0);
    const double w = fedq::lambert_w_minus1(x);
    worst = std::max(worst, std::abs(w * std::exp(w) - x) / -x);
  }
  double rmin = INFINITY;
  double rmax = 0.0;
  for (std::uint64_t e : {1, 2, 3, 10, 100, 12345}) {
    const double r = static_cast<double>(fedq::min_horizon(e, 0.5).t_min) / static_cast<double>(e);
    rmin = std::min(rmin, r);
    rmax = std::max(rmax, r);
  }
  return {worst <= kLambertTolerance && rmin >= kHorizonLow && rmax <= kHorizonHigh,
          fmt::format("max relative residual {:.3g} (tol {:g}); min_horizon/E in [{:g}, {:g}]",
                      worst, kLambertTolerance, rmin, rmax)};
}

std::vector<std::pair<fs::path, std::string>> csv_files(const fs::path& dir) {
  std::vector<std::pair<fs::path, std::string>> out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.path().extension() != ".csv") continue;
    std::ifstream f(entry.path(), std::ios::binary);
    out.emplace_back(fs::relative(entry.path(), dir),
                     std::string(std::istreambuf_iterator<char>(f), {}));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Outcome determinism() {
  ExperimentConfig c = two_phase_phenomenon_config(false, "c11_a");
  run_counted(c);
  c.out_dir = work_dir() / "c11_b";
  run_counted(c);
  c.out_dir = work_dir() / "c11_c";
  c.threads = 4;
  run_counted(c);
  const auto a = csv_files(work_dir() / "c11_a");
  const auto b = csv_files(work_dir() / "c11_b");
  const auto d = csv_files(work_dir() / "c11_c");
  const bool same = !a.empty() && a == b && a == d;
  return {same, fmt::format("{} CSV files compared across two runs and threads 1 vs 4: {}",
                            a.size(), same ? "byte-identical" : "differ")};
}

Outcome coarse_bounds() {
  return {g_coarse_violations == 0 && g_coarse_runs > 0,
          fmt::format("{} violations across {} verified runs", g_coarse_violations,
                      g_coarse_runs)};
}

}  // namespace

int main() {
  std::vector<std::pair<Criterion, std::function<Outcome()>>> plan = {
      {{1, "oracle equivalence", 10}, oracle_equivalence},
      {{2, "error-iteration identity", 30}, error_identity},
      {{4, "kappa property suite", 1}, kappa_suite},
      {{5, "lower-bound floor", 5}, lower_bound_floor},
      {{6, "two-phase phenomenon", 120}, two_phase_phenomenon},
      {{7, "E degradation direction", 180}, e_degradation},
      {{8, "linear speed-up direction", 120}, linear_speedup},
      {{9, "two-phase training benefit", 120}, two_phase_benefit},
      {{10, "numerics", 1}, numerics},
      {{11, "determinism", 0}, determinism},
      // Last, so it covers every run above.
      {{3, "coarse bounds", 0}, coarse_bounds},
  };

  std::vector<Criterion> done;
  for (auto& [criterion, fn] : plan) {
    const auto start = std::chrono::steady_clock::now();
    try {
      criterion.outcome = fn();
    } catch (const std::exception& e) {
      criterion.outcome = {false, std::string("exception: ") + e.what()};
    }
    criterion.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (criterion.time_limit > 0 && criterion.seconds > criterion.time_limit) {
      criterion.outcome.pass = false;
      criterion.outcome.detail += fmt::format("; over the {:g} s limit", criterion.time_limit);
    }
    done.push_back(criterion);
  }
  std::sort(done.begin(), done.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

  int failed = 0;
  for (const Criterion& c : done) {
    failed += c.outcome.pass ? 0 : 1;
    fmt::print("criterion {:2} {} {}: {} ({:.2f} s)\n", c.id, c.outcome.pass ? "PASS" : "FAIL",
               c.name, c.outcome.detail, c.seconds);
  }
  fmt::print("{} of {} criteria passed\n", done.size() - failed, done.size());
  fs::remove_all(work_dir());
  return failed == 0 ? 0 : 1;
}
