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

// Stepsize schedules and evaluators for the finite-time upper bounds.
// Logarithms are natural throughout.

#ifndef FEDQ_SCHEDULES_HPP_
#define FEDQ_SCHEDULES_HPP_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

namespace fedq {

enum class ScheduleKind { kConstant, kPoly, kCorollary, kTwoPhase };

/// Maps iteration t (given horizon T, agent count K and discount) to a
/// stepsize in (0, 1].
///
///   constant   lambda_t = lambda
///   poly       lambda_t = 1 / T^alpha
///   corollary  lambda_t = 4 log^2(TK) / ((1-gamma) T), clamped to 1
///   two_phase  lambda1 for t < t0, then the phase-2 schedule
class StepsizeSchedule {
 public:
  static StepsizeSchedule constant(double lambda);
  static StepsizeSchedule poly(double alpha);
  static StepsizeSchedule corollary();
  /// Phase 2 defaults to 1/sqrt(T).
  static StepsizeSchedule two_phase(double lambda1, std::uint64_t t0,
                                    StepsizeSchedule phase2 = poly(0.5));

  ScheduleKind kind() const { return kind_; }
  double lambda() const { return lambda_; }
  double alpha() const { return alpha_; }
  std::uint64_t switch_time() const { return t0_; }
  const StepsizeSchedule* phase2() const { return phase2_.get(); }

  /// Throws ConfigError when t >= T or the emitted value leaves (0, 1].
  double at(std::uint64_t t, std::uint64_t horizon, std::size_t num_agents,
            double discount) const;

  /// True when every t < T gets the same stepsize.
  bool is_constant(std::uint64_t horizon) const;

  /// Short label used in file names and legends, e.g. "const0.05".
  std::string label() const;

 private:
  StepsizeSchedule() = default;

  ScheduleKind kind_ = ScheduleKind::kConstant;
  double lambda_ = 0.0;
  double alpha_ = 0.0;
  std::uint64_t t0_ = 0;
  std::shared_ptr<const StepsizeSchedule> phase2_;
};

double stepsize(const StepsizeSchedule& schedule, std::uint64_t t, std::uint64_t horizon,
                std::size_t num_agents, double discount);

/// 4 log^2(TK) / ((1-gamma) T), unclamped.
double corollary_stepsize(std::uint64_t horizon, std::size_t num_agents, double discount);

StepsizeSchedule schedule_from_json(const nlohmann::json& doc);
nlohmann::json schedule_to_json(const StepsizeSchedule& schedule);

struct BoundParams {
  double gamma = 0.99;
  double lambda = 0.05;
  std::uint64_t sync_period = 1;  // E
  std::size_t num_agents = 1;     // K
  std::uint64_t horizon = 1;      // T
  double kappa = 0.0;
  double delta = 0.1;
  std::size_t num_states = 1;
  std::size_t num_actions = 1;
};

struct Theorem1Terms {
  double optimization = 0.0;       // 4/(1-g)^2 exp(-sqrt((1-g) lambda T)/2)
  double heterogeneity = 0.0;      // 2g^2/(1-g)^2 (6 l^2 (E-1)^2 + l (E-1)) kappa
  double local_sampling = 0.0;     // (12g^2 l sqrt(E-1) + 2g^2 sqrt(l))/(1-g)^2 * sqrt(l (E-1) log(SAKT/d))
  double averaged_sampling = 0.0;  // 2g/(1-g)^2 sqrt(l log(SATK/d) / K)
  double total() const {
    return optimization + heterogeneity + local_sampling + averaged_sampling;
  }
};

struct Corollary1Terms {
  double optimization = 0.0;   // 4 / ((1-g)^2 T K)
  double sampling = 0.0;       // 36/(1-g)^3 log(TK)/sqrt(TK) sqrt(log(SATK/d))
  double heterogeneity = 0.0;  // 56 log^2(TK)/(1-g)^3 (E-1)/T kappa
  double total() const { return optimization + sampling + heterogeneity; }
};

/// Hypotheses of the convergence theorem that `p` violates (empty when all hold).
std::vector<std::string> theorem1_violations(const BoundParams& p);
/// Same for the corollary; p.lambda is ignored in favour of the corollary stepsize.
std::vector<std::string> corollary1_violations(const BoundParams& p);

/// Throw ConfigError naming the first failed hypothesis.
Theorem1Terms theorem1_bound(const BoundParams& p);
Corollary1Terms corollary1_bound(const BoundParams& p);

}  // namespace fedq

#endif  // FEDQ_SCHEDULES_HPP_
