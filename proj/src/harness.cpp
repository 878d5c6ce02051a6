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


#include "fedq/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

#include <fmt/core.h>

#include "fedq/errors.hpp"
#include "fedq/seeding.hpp"

namespace fedq {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::map<ExperimentKind, std::string> kKindNames = {
    {ExperimentKind::kSingleRun, "single_run"},
    {ExperimentKind::kStepsizeSweep, "stepsize_sweep"},
    {ExperimentKind::kESweep, "E_sweep"},
    {ExperimentKind::kTwoPhase, "two_phase"},
    {ExperimentKind::kLowerBoundCheck, "lower_bound_check"},
    {ExperimentKind::kVerifyAll, "verify_all"},
};

const std::map<EnvironmentKind, std::string> kEnvNames = {
    {EnvironmentKind::kMaze, "maze"},
    {EnvironmentKind::kHomogeneous, "homogeneous"},
    {EnvironmentKind::kLowerBound, "lower_bound"},
};

SyncPeriod period_from_json(const json& doc) {
  if (doc.is_string()) {
    if (doc.get<std::string>() == "inf") return SyncPeriod::never();
    throw ConfigError("E must be an integer or \"inf\"");
  }
  const auto every = doc.get<std::uint64_t>();
  if (every == 0) throw ConfigError("E must be >= 1; use \"inf\" to never average");
  return SyncPeriod{every};
}

json period_to_json(const SyncPeriod& p) {
  return p.is_never() ? json("inf") : json(p.every);
}

// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(threads, 1u), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct Curve {
  std::string label;
  SyncPeriod period;
  std::vector<StepsizeSchedule> schedules;  // one per repeat
  std::vector<RunTrace> traces;
};

std::string curve_label(const SyncPeriod& period, const StepsizeSchedule& schedule) {
  return fmt::format("E{}_{}", period.label(), schedule.label());
}

// Environments and engines for every repeat, kept alive together.
class Testbed {
 public:
  explicit Testbed(const ExperimentConfig& config) : config_(config) {
    for (std::size_t i = 0; i < config.num_repeats; ++i) {
      envs_.push_back(std::make_unique<Ensemble>(make_environment(config, i)));
      engines_.push_back(std::make_unique<FederatedQLearning>(*envs_.back()));
    }
  }

  std::size_t size() const { return envs_.size(); }
  const Ensemble& env(std::size_t i) const { return *envs_[i]; }

  RunTrace run(std::size_t i, const SyncPeriod& period, const StepsizeSchedule& schedule,
               const std::string& label, unsigned threads) const {
    RunConfig rc;
    rc.period = period;
    rc.horizon = config_.horizon;
    rc.schedule = schedule;
    rc.seed = repeat_seed(config_.seed, i);
    rc.verify_identities = config_.verify;
    rc.threads = threads;
    rc.run_id = fmt::format("{}_r{}", label, i);
    return engines_[i]->run(rc);
  }

  // Runs one curve across all repeats, with per-repeat schedules.
  Curve run_curve(const std::string& label, const SyncPeriod& period,
                  std::vector<StepsizeSchedule> schedules) const {
    Curve curve{label, period, std::move(schedules), {}};
    curve.traces.resize(size());
    const unsigned outer = std::max(1u, std::min<unsigned>(config_.threads,
                                                           static_cast<unsigned>(size())));
    const unsigned inner = std::max(1u, config_.threads / outer);
    parallel_for(size(), outer, [&](std::size_t i) {
      curve.traces[i] = run(i, period, curve.schedules[i], label, inner);
    });
    return curve;
  }

 private:
  const ExperimentConfig& config_;
  std::vector<std::unique_ptr<Ensemble>> envs_;
  std::vector<std::unique_ptr<FederatedQLearning>> engines_;
};

class Staging {
 public:
  explicit Staging(fs::path out) : out_(std::move(out)) {
    dir_ = out_;
    dir_ += ".staging";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  ~Staging() {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }

  void write(const fs::path& rel, const std::string& content) {
    const fs::path path = dir_ / rel;
    fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    f << content;
    f.close();
    if (!f) throw std::runtime_error("failed to write " + path.string());
  }

  void commit() {
    fs::create_directories(out_);
    for (const auto& entry : fs::directory_iterator(dir_)) {
      const fs::path target = out_ / entry.path().filename();
      fs::remove_all(target);
      fs::rename(entry.path(), target);
    }
  }

 private:
  fs::path out_;
  fs::path dir_;
};

json tolerance_json(std::span<const double> errors, std::span<const double> tolerances) {
  json out = json::object();
  for (double tol : tolerances) {
    const auto hit = iterations_to_tolerance(errors, tol);
    out[fmt::format("{:g}", tol)] = hit ? json(*hit) : json(nullptr);
  }
  return out;
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

json bounds_json(const ExperimentConfig& config, const Ensemble& env, const Curve& curve,
                 double kappa) {
  const StepsizeSchedule& schedule = curve.schedules.front();
  BoundParams p;
  p.gamma = env.discount();
  p.sync_period = curve.period.is_never() ? config.horizon : curve.period.every;
  p.num_agents = env.size();
  p.horizon = config.horizon;
  p.kappa = kappa;
  p.delta = config.delta;
  p.num_states = env.shape().num_states;
  p.num_actions = env.shape().num_actions;
  json out = json::object();
  if (schedule.kind() == ScheduleKind::kConstant) {
    p.lambda = schedule.lambda();
    const auto bad = theorem1_violations(p);
    if (bad.empty()) {
      const Theorem1Terms t = theorem1_bound(p);
      out["theorem"] = {{"optimization", t.optimization},
                        {"heterogeneity", t.heterogeneity},
                        {"local_sampling", t.local_sampling},
                        {"averaged_sampling", t.averaged_sampling},
                        {"total", t.total()}};
    } else {
      out["theorem"] = {{"violations", bad}};
    }
  }
  const auto bad = corollary1_violations(p);
  if (bad.empty()) {
    const Corollary1Terms c = corollary1_bound(p);
    out["corollary"] = {{"optimization", c.optimization},
                        {"sampling", c.sampling},
                        {"heterogeneity", c.heterogeneity},
                        {"total", c.total()}};
  } else {
    out["corollary"] = {{"violations", bad}};
  }
  return out;
}

struct Bundle {
  std::vector<Curve> curves;
  json extra = json::object();
};

json curve_summary(const ExperimentConfig& config, const Ensemble& env, const Curve& curve,
                   const AggregateSeries& agg, double kappa) {
  json schedules = json::array();
  for (const auto& s : curve.schedules) schedules.push_back(schedule_to_json(s));
  json tol = json::array();
  for (const RunTrace& t : curve.traces) {
    tol.push_back(tolerance_json(t.linf_error, config.two_phase.tolerances));
  }
  return {{"label", curve.label},
          {"E", period_to_json(curve.period)},
          {"schedules", schedules},
          {"final_errors", agg.final_errors},
          {"plateau_errors", agg.plateau_errors},
          {"min_smoothed_errors", agg.min_smoothed},
          {"t0", agg.t0},
          {"mean_plateau", mean_of(agg.plateau_errors)},
          {"std_plateau", sample_std(agg.plateau_errors)},
          {"mean_final", mean_of(agg.final_errors)},
          {"tolerance_iterations", tol},
          {"bounds", bounds_json(config, env, curve, kappa)}};
}

Bundle run_curves(const ExperimentConfig& config, const Testbed& bed) {
  Bundle b;
  auto same = [&](const StepsizeSchedule& s) {
    return std::vector<StepsizeSchedule>(bed.size(), s);
  };
  switch (config.kind) {
    case ExperimentKind::kSingleRun: {
      const auto& p = config.periods.front();
      const auto& s = config.schedules.front();
      b.curves.push_back(bed.run_curve(curve_label(p, s), p, same(s)));
      break;
    }
    case ExperimentKind::kStepsizeSweep:
      for (const auto& s : config.schedules) {
        const auto& p = config.periods.front();
        b.curves.push_back(bed.run_curve(curve_label(p, s), p, same(s)));
      }
      break;
    case ExperimentKind::kESweep:
      for (const auto& p : config.periods) {
        const auto& s = config.schedules.front();
        b.curves.push_back(bed.run_curve(curve_label(p, s), p, same(s)));
      }
      break;
    case ExperimentKind::kTwoPhase: {
      const TwoPhaseSpec& tp = config.two_phase;
      const auto& p = config.periods.front();
      b.curves.push_back(
          bed.run_curve(fmt::format("baseline_{}", tp.phase2.label()), p, same(tp.phase2)));
      json phases = json::array();
      for (double l1 : tp.phase1_lambdas) {
        const StepsizeSchedule pilot = StepsizeSchedule::constant(l1);
        Curve pilot_curve =
            bed.run_curve(fmt::format("pilot_{}", pilot.label()), p, same(pilot));
        std::vector<StepsizeSchedule> two;
        std::vector<std::uint64_t> t0s;
        for (const RunTrace& t : pilot_curve.traces) {
          const std::uint64_t t0 =
              tp.t0 ? *tp.t0 : detect_phase_transition(t.linf_error, config.window);
          t0s.push_back(t0);
          two.push_back(StepsizeSchedule::two_phase(l1, t0, tp.phase2));
        }
        b.curves.push_back(std::move(pilot_curve));
        b.curves.push_back(bed.run_curve(fmt::format("twophase_{}", l1), p, std::move(two)));
        phases.push_back({{"phase1_lambda", l1}, {"switch_times", t0s}});
      }
      b.extra["two_phase"] = phases;
      break;
    }
    default:
      break;
  }
  return b;
}

std::string trace_csv(const RunTrace& t) {
  std::ostringstream out;
  write_trace_csv(out, t);
  return out.str();
}

json run_lower_bound(const ExperimentConfig& config, Staging& staging) {
  std::ostringstream csv;
  csv << "gamma,E,lambda,rounds,max_deviation,final_error,floor,floor_applicable\n";
  json rows = json::array();
  double worst = 0.0;
  std::vector<std::function<LowerBoundComparison()>> jobs;
  for (double gamma : config.grid.gammas) {
    for (std::uint64_t e : config.grid.periods) {
      const std::vector<double> lambdas =
          config.grid.lambdas.empty()
              ? lower_bound_lambda_grid(gamma, e, config.grid.rounds)
              : config.grid.lambdas;
      for (double lambda : lambdas) {
        LowerBoundSpec spec = config.lower_bound;
        spec.discount = gamma;
        jobs.push_back([=, rounds = config.grid.rounds] {
          return compare_lower_bound(spec, lambda, e, rounds);
        });
      }
    }
  }
  std::vector<LowerBoundComparison> results(jobs.size());
  parallel_for(jobs.size(), config.threads, [&](std::size_t i) { results[i] = jobs[i](); });
  for (const auto& c : results) {
    worst = std::max(worst, c.max_deviation);
    csv << fmt::format("{:.17g},{},{:.17g},{},{:.17g},{:.17g},{:.17g},{}\n", c.gamma,
                       c.sync_period, c.lambda, c.rounds, c.max_deviation, c.final_error,
                       c.floor.floor, c.floor.applicable ? 1 : 0);
    rows.push_back({{"gamma", c.gamma},
                    {"E", c.sync_period},
                    {"lambda", c.lambda},
                    {"rounds", c.rounds},
                    {"max_deviation", c.max_deviation},
                    {"final_error", c.final_error},
                    {"floor", c.floor.floor},
                    {"floor_applicable", c.floor.applicable},
                    {"floor_note", c.floor.reason}});
  }
  staging.write("lower_bound.csv", csv.str());
  return {{"max_deviation", worst}, {"tolerance", 1e-10}, {"pass", worst <= 1e-10},
          {"comparisons", rows}};
}

json run_verify_all(const ExperimentConfig& config, Staging& staging) {
  std::vector<CheckResult> checks;

  // Stepsize-coefficient lemma on a (gamma, E, lambda) grid.
  for (double gamma : {0.3, 0.5, 0.7, 0.9, 0.99}) {
    for (std::uint64_t e : {1, 2, 4, 8, 16}) {
      const double top = 1.0 / (1.0 + gamma);
      std::vector<double> grid;
      for (int i = 0; i < 4; ++i) grid.push_back(top * std::pow(1e-3, (3 - i) / 3.0));
      const KappaReport r = verify_kappa_properties(gamma, e, grid);
      checks.insert(checks.end(), r.checks.begin(), r.checks.end());
    }
  }

  // Lambert W identity.
  const double lo = std::log(1e-6);
  const double hi = std::log(std::exp(-1.0));
  for (int i = 1; i <= 20; ++i) {
    const double x = -std::exp(lo + (hi - lo) * i / 21.0);
    const double w = lambert_w_minus1(x);
    const double rel = std::abs(w * std::exp(w) - x) / -x;
    checks.push_back({"lambert_identity", {{"x", x}}, rel, 1e-12, rel <= 1e-12});
  }

  // Error iteration and coarse bounds on short recorded maze runs.
  ExperimentConfig small = config;
  small.horizon = std::min<std::uint64_t>(config.horizon, 300);
  for (std::size_t i = 0; i < config.num_repeats; ++i) {
    const Ensemble env = make_environment(small, i);
    const FederatedQLearning engine(env);
    for (double lambda : {0.1, 0.5}) {
      RunConfig rc;
      rc.period = config.periods.front();
      rc.horizon = small.horizon;
      rc.schedule = StepsizeSchedule::constant(lambda);
      rc.seed = repeat_seed(config.seed, i);
      rc.record_locals = true;
      const RunTrace t = engine.run(rc);
      const auto res = error_iteration_residuals(t, env);
      const double worst = *std::max_element(res.begin(), res.end());
      const json at = {{"repeat", i}, {"lambda", lambda}};
      checks.push_back({"error_iteration", at, worst, 1e-9, worst <= 1e-9});
      const CoarseBoundReport cb = verify_coarse_bounds(t);
      checks.push_back({"coarse_bounds", at, static_cast<double>(cb.violations.size()), 0.0,
                        cb.ok});
    }
  }

  // Closed form against simulation on a small grid.
  for (double gamma : {0.3, 0.9}) {
    for (std::uint64_t e : {1, 4}) {
      LowerBoundSpec spec = config.lower_bound;
      spec.discount = gamma;
      for (double lambda : lower_bound_lambda_grid(gamma, e, 200, 3)) {
        const auto c = compare_lower_bound(spec, lambda, e, 200);
        checks.push_back({"closed_form",
                          {{"gamma", gamma}, {"E", e}, {"lambda", lambda}},
                          c.max_deviation,
                          1e-10,
                          c.max_deviation <= 1e-10});
      }
    }
  }

  json list = json::array();
  bool ok = true;
  for (const auto& c : checks) {
    list.push_back(to_json(c));
    ok = ok && c.pass;
  }
  const json report = {{"ok", ok}, {"checks", list}};
  staging.write("verification.json", report.dump(2) + "\n");
  return report;
}

}  // namespace

std::string to_string(ExperimentKind kind) { return kKindNames.at(kind); }

ExperimentKind experiment_kind_from_string(const std::string& name) {
  for (const auto& [k, v] : kKindNames) {
    if (v == name) return k;
  }
  throw ConfigError("unknown experiment kind '" + name + "'");
}

ExperimentConfig default_config(ExperimentKind kind, bool fast) {
  ExperimentConfig c;
  c.kind = kind;
  if (fast) {
    c.horizon = 2000;
    c.num_repeats = 3;
    c.maze.discount = 0.9;
  }
  switch (kind) {
    case ExperimentKind::kStepsizeSweep:
      c.schedules.clear();
      for (double l : {0.9, 0.5, 0.2, 0.1, 0.05}) {
        c.schedules.push_back(StepsizeSchedule::constant(l));
      }
      break;
    case ExperimentKind::kESweep:
      c.periods = {SyncPeriod{1}, SyncPeriod{10}, SyncPeriod{20}, SyncPeriod{40},
                   SyncPeriod::never()};
      break;
    case ExperimentKind::kLowerBoundCheck:
      c.environment = EnvironmentKind::kLowerBound;
      c.num_repeats = 1;
      break;
    case ExperimentKind::kVerifyAll:
      c.num_repeats = 3;
      c.maze.discount = 0.9;
      break;
    default:
      break;
  }
  return c;
}

ExperimentConfig experiment_config_from_json(const json& doc, ExperimentConfig c) {
  if (!doc.is_object()) throw ConfigError("experiment config must be a JSON object");
  try {
    if (doc.contains("kind")) c.kind = experiment_kind_from_string(doc.at("kind"));
    if (doc.contains("environment")) {
      const json& env = doc.at("environment");
      const std::string type = env.value("type", kEnvNames.at(c.environment));
      bool found = false;
      for (const auto& [k, v] : kEnvNames) {
        if (v == type) {
          c.environment = k;
          found = true;
        }
      }
      if (!found) throw ConfigError("unknown environment type '" + type + "'");
      json fields = env;
      fields.erase("type");
      if (c.environment == EnvironmentKind::kLowerBound) {
        json merged = lower_bound_spec_to_json(c.lower_bound);
        merged.update(fields);
        c.lower_bound = lower_bound_spec_from_json(merged);
      } else {
        json merged = maze_spec_to_json(c.maze);
        merged.update(fields);
        c.maze = maze_spec_from_json(merged);
      }
    }
    c.num_agents = doc.value("num_agents", c.num_agents);
    c.horizon = doc.value("T", c.horizon);
    if (doc.contains("E")) {
      c.periods.clear();
      const json& e = doc.at("E");
      if (e.is_array()) {
        for (const json& x : e) c.periods.push_back(period_from_json(x));
      } else {
        c.periods.push_back(period_from_json(e));
      }
    }
    if (doc.contains("schedules")) {
      c.schedules.clear();
      for (const json& s : doc.at("schedules")) c.schedules.push_back(schedule_from_json(s));
    }
    c.num_repeats = doc.value("repeats", c.num_repeats);
    c.seed = doc.value("seed", c.seed);
    c.fixed_environment = doc.value("fixed_environment", c.fixed_environment);
    c.verify = doc.value("verify", c.verify);
    c.window = doc.value("window", c.window);
    c.delta = doc.value("delta", c.delta);
    c.threads = doc.value("threads", c.threads);
    if (doc.contains("out")) c.out_dir = doc.at("out").get<std::string>();
    if (doc.contains("two_phase")) {
      const json& tp = doc.at("two_phase");
      c.two_phase.phase1_lambdas = tp.value("phase1_lambdas", c.two_phase.phase1_lambdas);
      if (tp.contains("phase2")) c.two_phase.phase2 = schedule_from_json(tp.at("phase2"));
      if (tp.contains("t0") && !tp.at("t0").is_null()) {
        c.two_phase.t0 = tp.at("t0").get<std::uint64_t>();
      }
      c.two_phase.tolerances = tp.value("tolerances", c.two_phase.tolerances);
    }
    if (doc.contains("lower_bound")) {
      const json& lb = doc.at("lower_bound");
      c.grid.gammas = lb.value("gammas", c.grid.gammas);
      c.grid.periods = lb.value("periods", c.grid.periods);
      c.grid.lambdas = lb.value("lambdas", c.grid.lambdas);
      c.grid.rounds = lb.value("rounds", c.grid.rounds);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
  validate(c);
  return c;
}

json experiment_config_to_json(const ExperimentConfig& c) {
  json env = c.environment == EnvironmentKind::kLowerBound ? lower_bound_spec_to_json(c.lower_bound)
                                                           : maze_spec_to_json(c.maze);
  env.erase("seed");
  env["type"] = kEnvNames.at(c.environment);
  json periods = json::array();
  for (const auto& p : c.periods) periods.push_back(period_to_json(p));
  json schedules = json::array();
  for (const auto& s : c.schedules) schedules.push_back(schedule_to_json(s));
  return {{"kind", to_string(c.kind)},
          {"environment", env},
          {"num_agents", c.num_agents},
          {"T", c.horizon},
          {"E", periods},
          {"schedules", schedules},
          {"repeats", c.num_repeats},
          {"seed", c.seed},
          {"fixed_environment", c.fixed_environment},
          {"verify", c.verify},
          {"window", c.window},
          {"delta", c.delta},
          {"two_phase",
           {{"phase1_lambdas", c.two_phase.phase1_lambdas},
            {"phase2", schedule_to_json(c.two_phase.phase2)},
            {"t0", c.two_phase.t0 ? json(*c.two_phase.t0) : json(nullptr)},
            {"tolerances", c.two_phase.tolerances}}},
          {"lower_bound",
           {{"gammas", c.grid.gammas},
            {"periods", c.grid.periods},
            {"lambdas", c.grid.lambdas},
            {"rounds", c.grid.rounds}}}};
}

void validate(const ExperimentConfig& c) {
  if (c.num_repeats < 1) throw ConfigError("repeats must be >= 1");
  if (c.horizon < 1) throw ConfigError("T must be >= 1");
  if (c.num_agents < 1) throw ConfigError("num_agents must be >= 1");
  if (c.periods.empty()) throw ConfigError("E list is empty");
  if (c.schedules.empty()) throw ConfigError("schedule list is empty");
  if (c.window < 1) throw ConfigError("window must be >= 1");
  // Every schedule must emit valid stepsizes over the whole horizon.
  const double gamma = c.environment == EnvironmentKind::kLowerBound ? c.lower_bound.discount
                                                                      : c.maze.discount;
  const std::size_t k =
      c.environment == EnvironmentKind::kLowerBound ? c.lower_bound.num_agents : c.num_agents;
  for (const auto& s : c.schedules) {
    s.at(0, c.horizon, k, gamma);
    s.at(c.horizon - 1, c.horizon, k, gamma);
  }
  if (c.kind == ExperimentKind::kTwoPhase) {
    for (double l : c.two_phase.phase1_lambdas) StepsizeSchedule::constant(l);
    c.two_phase.phase2.at(c.horizon - 1, c.horizon, k, gamma);
  }
  if (c.kind == ExperimentKind::kLowerBoundCheck && c.grid.rounds > kMaxRounds) {
    throw ConfigError("lower-bound rounds above the cap");
  }
}

std::uint64_t repeat_seed(std::uint64_t master_seed, std::size_t repeat) {
  return derive_seed(master_seed, {kRepeatStream, repeat});
}

Ensemble make_environment(const ExperimentConfig& config, std::size_t repeat) {
  MazeSpec spec = config.maze;
  spec.seed = config.fixed_environment ? config.seed : repeat_seed(config.seed, repeat);
  switch (config.environment) {
    case EnvironmentKind::kMaze:
      return make_maze_ensemble(spec, config.num_agents);
    case EnvironmentKind::kHomogeneous:
      return make_homogeneous_ensemble(spec, config.num_agents);
    case EnvironmentKind::kLowerBound:
      return make_lower_bound_ensemble(config.lower_bound);
  }
  throw ConfigError("unknown environment");
}

double plateau_error(std::span<const double> errors) {
  if (errors.empty()) return 0.0;
  const auto n = static_cast<std::size_t>(
      std::max<double>(1.0, std::ceil(0.05 * static_cast<double>(errors.size()))));
  return mean_of(errors.subspan(errors.size() - n));
}

std::vector<double> smoothed(std::span<const double> errors, std::size_t window) {
  std::vector<double> out(errors.size());
  const std::size_t w = std::max<std::size_t>(window, 1);
  double sum = 0.0;
  for (std::size_t t = 0; t < errors.size(); ++t) {
    sum += errors[t];
    if (t >= w) sum -= errors[t - w];
    out[t] = sum / static_cast<double>(std::min(t + 1, w));
  }
  return out;
}

std::optional<std::uint64_t> iterations_to_tolerance(std::span<const double> errors,
                                                     double fraction) {
  if (errors.empty()) return std::nullopt;
  const double target = fraction * errors.front();
  for (std::size_t t = 0; t < errors.size(); ++t) {
    if (errors[t] <= target) return t;
  }
  return std::nullopt;
}

AggregateSeries aggregate(const std::string& label, std::span<const RunTrace> traces,
                          std::size_t window) {
  if (traces.empty()) throw ConfigError("nothing to aggregate");
  const std::size_t len = traces.front().linf_error.size();
  for (const RunTrace& t : traces) {
    if (t.linf_error.size() != len) throw ConfigError("traces of unequal length");
  }
  AggregateSeries a;
  a.label = label;
  a.mean.resize(len);
  a.std.resize(len);
  std::vector<double> column(traces.size());
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t i = 0; i < traces.size(); ++i) column[i] = traces[i].linf_error[t];
    a.mean[t] = mean_of(column);
    a.std[t] = sample_std(column);
  }
  for (const RunTrace& t : traces) {
    a.final_errors.push_back(t.linf_error.back());
    a.plateau_errors.push_back(plateau_error(t.linf_error));
    const std::vector<double> s = smoothed(t.linf_error, window);
    a.min_smoothed.push_back(*std::min_element(s.begin(), s.end()));
    a.t0.push_back(detect_phase_transition(t.linf_error, window));
  }
  return a;
}

void write_aggregate_csv(std::ostream& out, const AggregateSeries& series) {
  out << "t,mean,std\n";
  for (std::size_t t = 0; t < series.mean.size(); ++t) {
    out << fmt::format("{},{:.17g},{:.17g}\n", t, series.mean[t], series.std[t]);
  }
}

std::vector<double> lower_bound_lambda_grid(double gamma, std::uint64_t sync_period,
                                            std::uint64_t rounds, std::size_t count) {
  const double lo = 0.3 * lambda0(gamma, sync_period, rounds);
  const double hi = 1.0 / (1.0 + gamma);
  if (!(lo > 0.0 && lo < hi)) {
    throw DomainError(fmt::format("empty stepsize grid [{}, {}]", lo, hi));
  }
  std::vector<double> grid;
  for (std::size_t i = 0; i < count; ++i) {
    const double f = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    grid.push_back(i + 1 == count ? hi : lo * std::pow(hi / lo, f));
  }
  return grid;
}

LowerBoundComparison compare_lower_bound(const LowerBoundSpec& spec, double lambda,
                                         std::uint64_t sync_period, std::uint64_t rounds) {
  const Ensemble env = make_lower_bound_ensemble(spec);
  const FederatedQLearning engine(env, 1e-13);
  RunConfig rc;
  rc.period = SyncPeriod{sync_period};
  rc.horizon = rounds * sync_period;
  rc.schedule = StepsizeSchedule::constant(lambda);
  const RunTrace trace = engine.run(rc);

  LowerBoundComparison c;
  c.gamma = spec.discount;
  c.sync_period = sync_period;
  c.lambda = lambda;
  c.rounds = rounds;
  for (std::uint64_t r = 0; r <= rounds; ++r) {
    const DeltaResult d = closed_form_delta(r, sync_period, lambda, spec.discount, spec.reward);
    c.max_deviation =
        std::max(c.max_deviation, std::abs(trace.linf_error[r * sync_period] - d.linf));
    if (r == rounds) {
      const QTable& q = trace.final_average;
      for (std::size_t s = 0; s < 2; ++s) {
        c.max_deviation =
            std::max(c.max_deviation, std::abs((trace.q_star[s] - q[s]) - d.delta[s]));
      }
    }
  }
  c.final_error = trace.linf_error.back();
  c.floor = lower_bound_floor(rc.horizon, sync_period, spec.discount, spec.reward);
  return c;
}

json run_experiment(const ExperimentConfig& config) {
  validate(config);
  Staging staging(config.out_dir);

  json summary = {{"version", kVersion},
                  {"kind", to_string(config.kind)},
                  {"config", experiment_config_to_json(config)}};
  summary["config_hash"] = fmt::format("{:016x}", config_hash(summary["config"]));
  summary["master_seed"] = config.seed;

  if (config.kind == ExperimentKind::kLowerBoundCheck) {
    summary["lower_bound"] = run_lower_bound(config, staging);
  } else if (config.kind == ExperimentKind::kVerifyAll) {
    summary["verification"] = run_verify_all(config, staging);
  } else {
    const Testbed bed(config);
    json seeds = json::array();
    json kappas = json::array();
    double kappa_max = 0.0;
    for (std::size_t i = 0; i < bed.size(); ++i) {
      seeds.push_back(repeat_seed(config.seed, i));
      kappas.push_back({{"max_entry", bed.env(i).kappa_inf()}, {"l1", bed.env(i).kappa_l1()}});
      kappa_max = std::max(kappa_max, bed.env(i).kappa_l1());
    }
    summary["repeat_seeds"] = seeds;
    summary["kappa"] = kappas;

    Bundle bundle = run_curves(config, bed);
    json curves = json::array();
    std::vector<SvgSeries> svg;
    for (const Curve& curve : bundle.curves) {
      const AggregateSeries agg = aggregate(curve.label, curve.traces, config.window);
      for (std::size_t i = 0; i < curve.traces.size(); ++i) {
        staging.write(fs::path(curve.label) / fmt::format("repeat_{}.csv", i),
                      trace_csv(curve.traces[i]));
      }
      std::ostringstream csv;
      write_aggregate_csv(csv, agg);
      staging.write(fs::path(curve.label) / "aggregate.csv", csv.str());
      curves.push_back(curve_summary(config, bed.env(0), curve, agg, kappa_max));
      if (curve.label.rfind("pilot_", 0) != 0) svg.push_back({curve.label, agg.mean, agg.std});
    }
    summary["curves"] = curves;
    for (auto& [k, v] : bundle.extra.items()) summary[k] = v;
    SvgStyle style;
    style.title = fmt::format("{} (K={}, gamma={}, T={})", to_string(config.kind),
                              config.num_agents, config.maze.discount, config.horizon);
    staging.write("figure.svg", emit_svg(svg, style));
  }

  staging.write("summary.json", summary.dump(2) + "\n");
  staging.commit();
  return summary;
}

}  // namespace fedq
