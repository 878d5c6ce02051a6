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


// Experiment orchestration: configuration, repeated runs, aggregation and the
// files written for each experiment (per-repeat traces, aggregates, an SVG
// chart and a JSON summary).

#ifndef FEDQ_HARNESS_HPP_
#define FEDQ_HARNESS_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedq/env_gen.hpp"
#include "fedq/fedq_engine.hpp"
#include "fedq/schedules.hpp"
#include "fedq/theory_oracle.hpp"

namespace fedq {

inline constexpr const char* kVersion = "fedq 1.0.0";

enum class ExperimentKind {
  kSingleRun,
  kStepsizeSweep,
  kESweep,
  kTwoPhase,
  kLowerBoundCheck,
  kVerifyAll,
};

enum class EnvironmentKind { kMaze, kHomogeneous, kLowerBound };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);

struct TwoPhaseSpec {
  std::vector<double> phase1_lambdas = {0.9, 0.5, 0.2, 0.1, 0.05};
  StepsizeSchedule phase2 = StepsizeSchedule::poly(0.5);
  std::optional<std::uint64_t> t0;  // detected on a pilot run when unset
  std::vector<double> tolerances = {0.10, 0.05, 0.03, 0.01};
};

struct LowerBoundGrid {
  std::vector<double> gammas = {0.3, 0.5, 0.9};
  std::vector<std::uint64_t> periods = {1, 2, 4, 8};
  std::vector<double> lambdas;  // empty: lower_bound_lambda_grid per (gamma, E)
  std::uint64_t rounds = 10'000;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kSingleRun;
  EnvironmentKind environment = EnvironmentKind::kMaze;
  MazeSpec maze;  // maze.seed is replaced by the per-repeat seed
  LowerBoundSpec lower_bound;
  std::size_t num_agents = 5;
  std::uint64_t horizon = 20'000;
  std::vector<SyncPeriod> periods = {SyncPeriod{10}};
  std::vector<StepsizeSchedule> schedules = {StepsizeSchedule::constant(0.05)};
  std::size_t num_repeats = 5;
  std::uint64_t seed = 0;
  // Same environment (from the master seed) in every repeat; only sampling varies.
  bool fixed_environment = false;
  bool verify = true;
  std::size_t window = 50;
  double delta = 0.1;
  TwoPhaseSpec two_phase;
  LowerBoundGrid grid;
  unsigned threads = 1;
  std::filesystem::path out_dir = "out";
};

/// Defaults for a kind: the desk-scale setup (K=5, gamma=0.99, 5x5, T=20000,
/// 5 repeats) or, with `fast`, T=2000, 3 repeats, gamma=0.9.
ExperimentConfig default_config(ExperimentKind kind, bool fast);

/// Overlays the fields present in `doc` onto `base`. Throws ConfigError.
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc,
                                             ExperimentConfig base);
nlohmann::json experiment_config_to_json(const ExperimentConfig& config);

/// Throws ConfigError describing the first invalid field.
void validate(const ExperimentConfig& config);

std::uint64_t repeat_seed(std::uint64_t master_seed, std::size_t repeat);

/// Environment of one repeat.
Ensemble make_environment(const ExperimentConfig& config, std::size_t repeat);

/// Mean of the last 5% of the series (at least one point).
double plateau_error(std::span<const double> errors);

/// Trailing moving average with window w (shorter at the start).
std::vector<double> smoothed(std::span<const double> errors, std::size_t window);

/// First t with errors[t] <= fraction * errors[0].
std::optional<std::uint64_t> iterations_to_tolerance(std::span<const double> errors,
                                                     double fraction);

struct AggregateSeries {
  std::string label;
  std::vector<double> mean;  // t = 0..T
  std::vector<double> std;   // sample standard deviation, 0 for one repeat
  std::vector<double> final_errors;
  std::vector<double> plateau_errors;
  std::vector<double> min_smoothed;
  std::vector<std::uint64_t> t0;
};

/// Throws ConfigError for an empty list or unequal lengths.
AggregateSeries aggregate(const std::string& label, std::span<const RunTrace> traces,
                          std::size_t window);

void write_aggregate_csv(std::ostream& out, const AggregateSeries& series);

struct SvgSeries {
  std::string label;
  std::vector<double> mean;
  std::vector<double> std;
};

struct SvgStyle {
  std::string title;
  std::string x_label = "iteration t";
  std::string y_label = "l_inf error";
  int width = 800;
  int height = 500;
};

/// Standalone SVG line chart with axes, legend and +-1 std bands.
/// Throws ConfigError for an empty series list.
std::string emit_svg(std::span<const SvgSeries> series, const SvgStyle& style);

/// Largest deviation between the simulated and closed-form Delta over the
/// sync rounds of one lower-bound run, plus the final error.
struct LowerBoundComparison {
  double gamma = 0.0;
  std::uint64_t sync_period = 1;
  double lambda = 0.0;
  std::uint64_t rounds = 0;
  double max_deviation = 0.0;
  double final_error = 0.0;
  FloorResult floor;
};

LowerBoundComparison compare_lower_bound(const LowerBoundSpec& spec, double lambda,
                                         std::uint64_t sync_period, std::uint64_t rounds);

/// `count` log-spaced stepsizes from 0.3 lambda0(r) up to 1/(1+gamma).
std::vector<double> lower_bound_lambda_grid(double gamma, std::uint64_t sync_period,
                                            std::uint64_t rounds, std::size_t count = 6);

/// Runs the experiment and writes its files under config.out_dir. Files are
/// built in a staging directory that is removed on failure. Returns the
/// summary document.
nlohmann::json run_experiment(const ExperimentConfig& config);

}  // namespace fedq

#endif  // FEDQ_HARNESS_HPP_
