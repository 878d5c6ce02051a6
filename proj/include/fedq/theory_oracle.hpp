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


// Closed forms for the two-state identity/swap construction and the
// horizon threshold of the lower bound.
//
// With P_odd = I, P_even = swap and Pbar = 11^T/2, the mean local operator
// has eigenvalues nu1 = 1 - (1+gamma) lambda and nu2 = 1 - (1-gamma) lambda,
//   alpha_l = (nu1^l + nu2^l) / 2,   beta_l = nu2^l,
//   kappa_E = -gamma/2 ((1 - nu2^E)/(1-gamma) - (1 - nu1^E)/(1+gamma)),
// and from Q_0 = 0
//   Delta_rE = beta_E^r Pbar Q* + (alpha_E^r + (1-alpha_E^r)/(1-alpha_E) kappa_E)(I - Pbar) Q*.

#ifndef FEDQ_THEORY_ORACLE_HPP_
#define FEDQ_THEORY_ORACLE_HPP_

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedq/mdp.hpp"

namespace fedq {

using TwoVector = std::array<double, 2>;

struct LbCoefficients {
  double lambda = 0.0;
  double gamma = 0.0;
  std::uint64_t sync_period = 1;  // E
  double nu1 = 1.0;
  double nu2 = 1.0;
  double alpha = 1.0;            // alpha_E
  double beta = 1.0;             // beta_E
  double one_minus_alpha = 0.0;  // 1 - alpha_E without cancellation
  double kappa = 0.0;            // kappa_E
  std::optional<double> lambda0; // set when a round count is given
};

/// Throws DomainError unless 0 < lambda <= 1/(1+gamma), gamma in (0,1), E >= 1.
/// Throws NumericalError if the closed and finite-sum forms of kappa_E differ
/// by more than 1e-12.
LbCoefficients lb_coefficients(double lambda, double gamma, std::uint64_t sync_period,
                               std::optional<std::uint64_t> rounds = std::nullopt);

/// -(lambda gamma / 2) sum_{i=1}^{E-1} (nu2^i - nu1^i).
double kappa_sum_form(double lambda, double gamma, std::uint64_t sync_period);

/// log r / ((1-gamma) r E), the stepsize separating the two regimes.
double lambda0(double gamma, std::uint64_t sync_period, std::uint64_t rounds);

/// Q* of the averaged two-state chain: (I - Pbar) R + Pbar R / (1-gamma).
TwoVector two_state_q_star(double gamma, const TwoVector& reward);

struct DeltaResult {
  TwoVector delta;
  double linf = 0.0;
};

inline constexpr std::uint64_t kMaxRounds = 10'000'000;

/// Delta_rE from a zero start. Throws DomainError for r > kMaxRounds.
DeltaResult closed_form_delta(std::uint64_t rounds, std::uint64_t sync_period, double lambda,
                              double gamma, const TwoVector& reward);

/// Lower branch of Lambert W on [-1/e, 0). Throws DomainError outside.
double lambert_w_minus1(double x);

struct HorizonThreshold {
  double argument = 0.0;  // -(1-gamma)/(2(1+gamma))
  double factor = 0.0;    // exp(-W_{-1}(argument))
  std::uint64_t t_min = 0;
  bool overflow = false;  // t_min does not fit; t_min holds the max value
};

/// Smallest multiple of E that is >= E exp(-W_{-1}(-(1-gamma)/(2(1+gamma)))).
/// Throws DomainError when gamma is outside (0,1) or the argument is below -1/e.
HorizonThreshold min_horizon(std::uint64_t sync_period, double gamma);

struct CheckResult {
  std::string name;
  nlohmann::json params;
  double measured = 0.0;
  double bound = 0.0;
  bool pass = true;
};

nlohmann::json to_json(const CheckResult& check);

struct KappaReport {
  std::vector<CheckResult> checks;
  bool ok() const;
  /// Diagnostics for the failed checks, one per line.
  std::string failures() const;
  nlohmann::json to_json() const;
};

/// Negativity, monotonicity of kappa_E/(1-alpha_E) in lambda (adjacent points
/// of the sorted grid), |ratio| <= gamma^2/(1-gamma^2), and
/// |ratio| >= lambda gamma^2 (E-1)/4 where (1+gamma) lambda <= 1/(2E).
KappaReport verify_kappa_properties(double gamma, std::uint64_t sync_period,
                                    std::span<const double> lambdas);

struct FloorResult {
  bool applicable = false;
  std::string reason;  // why no floor is claimed
  double c_r = 0.0;
  double floor = 0.0;  // (c_R / sqrt 2) E / ((1-gamma) T)
  std::uint64_t t_min = 0;
};

/// Throws DomainError when Pbar Q* = 0 or (I - Pbar) Q* = 0.
FloorResult lower_bound_floor(std::uint64_t horizon, std::uint64_t sync_period, double gamma,
                              const TwoVector& reward);

/// One synchronization round of the expected-update recursion for
/// single-action kernels P^k (|S| x |S|):
///   Delta' = Abar^(E) Delta + ((I - Abar^(E)) - (I + ... + Abar^(E-1))(I - Abar^(1))) Q*,
/// Abar^(l) = mean_k ((1-lambda) I + lambda gamma P^k)^l.
std::vector<double> sync_round_recursion(std::span<const Matrix> kernels, double lambda,
                                         double gamma, std::uint64_t sync_period,
                                         std::span<const double> delta,
                                         std::span<const double> q_star);

}  // namespace fedq

#endif  // FEDQ_THEORY_ORACLE_HPP_
