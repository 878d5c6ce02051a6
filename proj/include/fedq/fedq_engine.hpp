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

// Synchronous federated Q-learning.
//
// Every iteration each agent draws one successor per (s,a) from its own
// kernel and applies
//   Q^k <- (1 - lambda) Q^k + lambda (R + gamma max_a' Q^k(s', a')),
// and after iterations with (t+1) mod E == 0 the server replaces every local
// table by the mean. The traced error at t is || Q* - mean_k Q_t^k ||_inf,
// with the mean taken at every t whether or not t is a sync round.

#ifndef FEDQ_FEDQ_ENGINE_HPP_
#define FEDQ_FEDQ_ENGINE_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedq/mdp.hpp"
#include "fedq/sampler.hpp"
#include "fedq/schedules.hpp"

namespace fedq {

/// Synchronization period E. `every == 0` encodes E = infinity.
struct SyncPeriod {
  std::uint64_t every = 1;

  static SyncPeriod never() { return {0}; }
  bool is_never() const { return every == 0; }
  bool syncs_after(std::uint64_t t) const { return every != 0 && (t + 1) % every == 0; }
  std::string label() const { return every == 0 ? "inf" : std::to_string(every); }
};

struct RunConfig {
  SyncPeriod period;
  std::uint64_t horizon = 1;  // T
  StepsizeSchedule schedule = StepsizeSchedule::constant(0.05);
  std::uint64_t seed = 0;
  std::optional<QTable> q_init;  // all-zero when unset
  bool record_locals = false;
  bool verify_identities = false;
  unsigned threads = 1;
  std::string run_id = "run";
};

/// Full local state of a recorded run.
struct RunRecord {
  std::vector<std::vector<QTable>> locals;      // [t][k] for t = 0..T
  std::vector<std::vector<SampleDraw>> draws;   // [t][k] for t = 0..T-1
};

struct RunTrace {
  std::vector<double> linf_error;      // t = 0..T
  std::vector<double> lambda;          // stepsize producing iterate t; 0 at t = 0
  std::vector<std::uint8_t> synced;    // 1 when iterate t is an averaging result
  std::vector<std::vector<double>> local_errors;  // [t][k], only with record_locals
  std::optional<RunRecord> record;

  QTable q_star;
  QTable final_average;  // mean_k Q_T^k
  double discount = 0.0;
  bool constant_lambda = false;
  // Largest relative residual of the error-iteration identity; NaN when the
  // identity was not checked.
  double max_identity_residual = 0.0;

  std::string run_id;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  double wall_seconds = 0.0;

  std::uint64_t horizon() const { return linf_error.empty() ? 0 : linf_error.size() - 1; }
};

/// Line 6 of the update for one agent. Throws ConfigError for lambda outside (0,1].
QTable local_step(const QTable& q_k, const SampleDraw& draw, double lambda,
                  std::span<const double> reward, double discount);

/// Entrywise mean of the tables, summed in index order.
QTable sync_average(std::span<const QTable> tables);

class FederatedQLearning {
 public:
  /// Computes Q* of the global MDP once (value iteration to `q_star_tolerance`).
  explicit FederatedQLearning(const Ensemble& ensemble, double q_star_tolerance = 1e-10);

  const Ensemble& ensemble() const { return ensemble_; }
  const QTable& q_star() const { return q_star_; }

  /// Runs T iterations. Throws ConfigError on invalid configuration and
  /// VerificationError when `verify_identities` is set and a check fails.
  /// Results do not depend on `threads`.
  RunTrace run(const RunConfig& config) const;

 private:
  const Ensemble& ensemble_;
  QTable q_star_;
  GenerativeModel model_;
};

/// Relative residual ||Delta_t - rhs_t||_inf / max(1, ||Delta_0||_inf) of the
/// unrolled error iteration at one t >= 0, evaluated term by term from the
/// recorded draws and local tables. Needs a recorded constant-stepsize trace;
/// throws UnsupportedIdentityError otherwise.
double verify_error_iteration(const RunTrace& trace, const Ensemble& ensemble,
                              std::uint64_t t);

/// The same residual for every t, accumulated incrementally.
std::vector<double> error_iteration_residuals(const RunTrace& trace, const Ensemble& ensemble);

struct BoundViolation {
  std::uint64_t t = 0;
  std::size_t agent = 0;
  std::size_t state = 0;
  std::size_t action = 0;
  std::string what;
  double value = 0.0;
};

struct CoarseBoundReport {
  bool ok = true;
  std::vector<BoundViolation> violations;
};

/// Checks 0 <= Q_t^k <= 1/(1-gamma), ||Q* - Q_t^k||_inf <= 1/(1-gamma) and
/// ||V* - V_t^k||_inf <= 1/(1-gamma) on every recorded (t, k).
CoarseBoundReport verify_coarse_bounds(const RunTrace& trace);

/// Iteration where the trailing moving average (window w) of the error series
/// is smallest; the series' last index when it never increases.
std::uint64_t detect_phase_transition(std::span<const double> errors,
                                      std::size_t window = 50);

/// CSV with header t,linf_error,lambda,synced,run_id,seed; 17 significant digits.
void write_trace_csv(std::ostream& out, const RunTrace& trace);

nlohmann::json run_config_to_json(const RunConfig& config);

/// FNV-1a over the compact JSON dump.
std::uint64_t config_hash(const nlohmann::json& doc);

}  // namespace fedq

#endif  // FEDQ_FEDQ_ENGINE_HPP_
