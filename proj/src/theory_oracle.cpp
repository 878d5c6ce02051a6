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


#include "fedq/theory_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>
#include <fmt/core.h>

#include "fedq/errors.hpp"

namespace fedq {
namespace {

const double kInvE = std::exp(-1.0);

// 1 - (1 - mu)^n, accurate for small mu.
double one_minus_pow(double mu, double n) {
  if (mu >= 1.0) return 1.0;
  return -std::expm1(n * std::log1p(-mu));
}

void check_stepsize(double lambda, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw DomainError(fmt::format("discount {} outside (0, 1)", gamma));
  }
  if (!(lambda > 0.0 && lambda <= 1.0 / (1.0 + gamma))) {
    throw DomainError(
        fmt::format("stepsize {} outside (0, 1/(1+gamma)] = (0, {:.17g}]", lambda,
                    1.0 / (1.0 + gamma)));
  }
}

}  // namespace

double kappa_sum_form(double lambda, double gamma, std::uint64_t sync_period) {
  const double nu1 = 1.0 - (1.0 + gamma) * lambda;
  const double nu2 = 1.0 - (1.0 - gamma) * lambda;
  double p1 = 1.0;
  double p2 = 1.0;
  double sum = 0.0;
  for (std::uint64_t i = 1; i < sync_period; ++i) {
    p1 *= nu1;
    p2 *= nu2;
    sum += p2 - p1;
  }
  return -0.5 * lambda * gamma * sum;
}

double lambda0(double gamma, std::uint64_t sync_period, std::uint64_t rounds) {
  const double r = static_cast<double>(rounds);
  return std::log(r) / ((1.0 - gamma) * r * static_cast<double>(sync_period));
}

LbCoefficients lb_coefficients(double lambda, double gamma, std::uint64_t sync_period,
                               std::optional<std::uint64_t> rounds) {
  check_stepsize(lambda, gamma);
  if (sync_period < 1) throw DomainError("E must be >= 1");
  const double e = static_cast<double>(sync_period);
  const double mu1 = (1.0 + gamma) * lambda;
  const double mu2 = (1.0 - gamma) * lambda;

  LbCoefficients c;
  c.lambda = lambda;
  c.gamma = gamma;
  c.sync_period = sync_period;
  c.nu1 = 1.0 - mu1;
  c.nu2 = 1.0 - mu2;
  const double om1 = one_minus_pow(mu1, e);
  const double om2 = one_minus_pow(mu2, e);
  c.alpha = 0.5 * (std::pow(c.nu1, e) + std::pow(c.nu2, e));
  c.beta = std::pow(c.nu2, e);
  c.one_minus_alpha = 0.5 * (om1 + om2);
  c.kappa = sync_period == 1 ? 0.0 : -0.5 * gamma * (om2 / (1.0 - gamma) - om1 / (1.0 + gamma));
  if (rounds) c.lambda0 = lambda0(gamma, sync_period, *rounds);

  if (sync_period <= 1'000'000) {
    const double alt = kappa_sum_form(lambda, gamma, sync_period);
    if (std::abs(alt - c.kappa) > 1e-12) {
      throw NumericalError(
          fmt::format("kappa_E closed form {:.17g} and sum form {:.17g} disagree", c.kappa, alt),
          std::abs(alt - c.kappa));
    }
  }
  return c;
}

TwoVector two_state_q_star(double gamma, const TwoVector& reward) {
  const double mean = 0.5 * (reward[0] + reward[1]);
  return {reward[0] - mean + mean / (1.0 - gamma), reward[1] - mean + mean / (1.0 - gamma)};
}

DeltaResult closed_form_delta(std::uint64_t rounds, std::uint64_t sync_period, double lambda,
                              double gamma, const TwoVector& reward) {
  if (rounds > kMaxRounds) {
    throw DomainError(fmt::format("round count {} above the cap {}", rounds, kMaxRounds));
  }
  const LbCoefficients c = lb_coefficients(lambda, gamma, sync_period);
  const TwoVector q = two_state_q_star(gamma, reward);
  const double r = static_cast<double>(rounds);

  const double mean = 0.5 * (q[0] + q[1]);
  const TwoVector centered = {q[0] - mean, q[1] - mean};
  const double alpha_r = std::pow(c.alpha, r);
  const double beta_r = std::pow(c.beta, r);
  // (1 - alpha^r) / (1 - alpha), tending to r as alpha -> 1.
  const double geometric = c.one_minus_alpha == 0.0
                               ? r
                               : one_minus_pow(c.one_minus_alpha, r) / c.one_minus_alpha;
  const double coef = alpha_r + geometric * c.kappa;

  DeltaResult out;
  out.delta = {beta_r * mean + coef * centered[0], beta_r * mean + coef * centered[1]};
  out.linf = std::max(std::abs(out.delta[0]), std::abs(out.delta[1]));
  return out;
}

double lambert_w_minus1(double x) {
  if (!(x >= -kInvE && x < 0.0)) {
    throw DomainError(fmt::format("W_-1 argument {} outside [-1/e, 0)", x));
  }
  if (x == -kInvE) return -1.0;

  // h(w) = log(w e^w / x) is increasing on (-inf, -1] with its root at W_-1(x).
  const double log_neg_x = std::log(-x);
  auto h = [&](double w) { return w + std::log(-w) - log_neg_x; };

  double lo = -50.0;
  double hi = -1.0;
  while (h(lo) > 0.0) {
    hi = lo;
    lo *= 2.0;
  }
  while (hi - lo > 1e-3 * std::max(1.0, -hi)) {
    const double mid = 0.5 * (lo + hi);
    (h(mid) < 0.0 ? lo : hi) = mid;
  }

  double w = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    const double hw = h(w);
    if (hw == 0.0) break;
    (hw < 0.0 ? lo : hi) = w;
    double next = w - hw / (1.0 + 1.0 / w);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const bool done = std::abs(next - w) <= 4.0 * std::numeric_limits<double>::epsilon() * -w;
    w = next;
    if (done || hi - lo <= std::numeric_limits<double>::epsilon() * -lo) break;
  }

  const double residual = std::abs(w * std::exp(w) - x) / -x;
  if (residual > 1e-12) {
    throw NumericalError(fmt::format("W_-1({}) did not converge", x), residual);
  }
  return w;
}

HorizonThreshold min_horizon(std::uint64_t sync_period, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw DomainError(fmt::format("discount {} outside (0, 1)", gamma));
  }
  if (sync_period < 1) throw DomainError("E must be >= 1");
  HorizonThreshold h;
  h.argument = -(1.0 - gamma) / (2.0 * (1.0 + gamma));
  if (h.argument < -kInvE) {
    throw DomainError(fmt::format(
        "discount {} puts the threshold argument {:.6g} below -1/e", gamma, h.argument));
  }
  h.factor = std::exp(-lambert_w_minus1(h.argument));
  const double rounds = std::ceil(h.factor);
  const double t_min = rounds * static_cast<double>(sync_period);
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  if (!std::isfinite(t_min) || t_min >= static_cast<double>(kMax)) {
    h.overflow = true;
    h.t_min = kMax;
  } else {
    h.t_min = static_cast<std::uint64_t>(rounds) * sync_period;
  }
  return h;
}

nlohmann::json to_json(const CheckResult& check) {
  return {{"name", check.name},
          {"params", check.params},
          {"measured", check.measured},
          {"bound", check.bound},
          {"pass", check.pass}};
}

bool KappaReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

std::string KappaReport::failures() const {
  std::ostringstream out;
  for (const CheckResult& c : checks) {
    if (c.pass) continue;
    out << c.name << " failed at " << c.params.dump() << ": measured "
        << fmt::format("{:.17g}", c.measured) << " vs bound "
        << fmt::format("{:.17g}", c.bound) << '\n';
  }
  return out.str();
}

nlohmann::json KappaReport::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const CheckResult& c : checks) list.push_back(fedq::to_json(c));
  return {{"ok", ok()}, {"checks", list}};
}

KappaReport verify_kappa_properties(double gamma, std::uint64_t sync_period,
                                    std::span<const double> lambdas) {
  std::vector<double> grid(lambdas.begin(), lambdas.end());
  std::sort(grid.begin(), grid.end());
  const double e = static_cast<double>(sync_period);
  const double upper = gamma * gamma / (1.0 - gamma * gamma);

  KappaReport report;
  std::vector<double> ratios;
  for (double lambda : grid) {
    const LbCoefficients c = lb_coefficients(lambda, gamma, sync_period);
    const double ratio = c.kappa / c.one_minus_alpha;
    ratios.push_back(ratio);
    const nlohmann::json at = {{"gamma", gamma}, {"E", sync_period}, {"lambda", lambda}};

    if (sync_period >= 2) {
      report.checks.push_back({"negativity", at, c.kappa, 0.0, c.kappa < 0.0});
    } else {
      report.checks.push_back({"kappa_one_zero", at, c.kappa, 0.0, c.kappa == 0.0});
    }
    report.checks.push_back({"upper_bound", at, std::abs(ratio), upper, std::abs(ratio) <= upper});
    if (sync_period >= 2 && (1.0 + gamma) * lambda <= 1.0 / (2.0 * e)) {
      const double lower = lambda * gamma * gamma * (e - 1.0) / 4.0;
      report.checks.push_back(
          {"lower_bound", at, std::abs(ratio), lower, std::abs(ratio) >= lower});
    }
  }
  if (sync_period >= 2) {
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
      if (grid[i + 1] == grid[i]) continue;
      const nlohmann::json at = {
          {"gamma", gamma}, {"E", sync_period}, {"lambda", grid[i]}, {"lambda_next", grid[i + 1]}};
      const double step = ratios[i + 1] - ratios[i];
      report.checks.push_back({"monotonicity", at, step, 0.0, step < 0.0});
    }
  }
  return report;
}

FloorResult lower_bound_floor(std::uint64_t horizon, std::uint64_t sync_period, double gamma,
                              const TwoVector& reward) {
  const TwoVector q = two_state_q_star(gamma, reward);
  const double mean = 0.5 * (q[0] + q[1]);
  const double centered_norm = std::abs(q[0] - q[1]) / std::sqrt(2.0);
  const double mean_norm = std::sqrt(2.0) * std::abs(mean);
  const double scale = std::max(std::abs(q[0]), std::abs(q[1]));
  if (centered_norm <= 1e-15 * scale || mean_norm <= 1e-15 * scale) {
    throw DomainError(
        "reward not in general position: Pbar Q* = 0 or (I - Pbar) Q* = 0 leaves no floor");
  }

  FloorResult f;
  f.c_r = std::min(centered_norm, mean_norm);
  f.t_min = min_horizon(sync_period, gamma).t_min;
  if (horizon == 0 || horizon % sync_period != 0) {
    f.reason = fmt::format("T={} is not a positive multiple of E={}", horizon, sync_period);
    return f;
  }
  f.floor = f.c_r / std::sqrt(2.0) * static_cast<double>(sync_period) /
            ((1.0 - gamma) * static_cast<double>(horizon));
  if (horizon < f.t_min) {
    f.reason = fmt::format("T={} is below the horizon threshold {}", horizon, f.t_min);
    return f;
  }
  f.applicable = true;
  return f;
}

std::vector<double> sync_round_recursion(std::span<const Matrix> kernels, double lambda,
                                         double gamma, std::uint64_t sync_period,
                                         std::span<const double> delta,
                                         std::span<const double> q_star) {
  if (kernels.empty()) throw ConfigError("no kernels");
  const auto n = static_cast<Eigen::Index>(kernels.front().rows());
  if (delta.size() != static_cast<std::size_t>(n) || q_star.size() != delta.size()) {
    throw ConfigError("recursion: vector size mismatch");
  }
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  std::vector<Eigen::MatrixXd> step;  // A^k
  for (const Matrix& p : kernels) {
    if (p.rows() != p.cols() || static_cast<Eigen::Index>(p.rows()) != n) {
      throw ConfigError("recursion needs square single-action kernels of equal size");
    }
    Eigen::MatrixXd pk(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) pk(i, j) = p(i, j);
    }
    step.push_back((1.0 - lambda) * eye + lambda * gamma * pk);
  }

  // abar[l] = mean_k (A^k)^l for l = 0..E.
  const double k_inv = 1.0 / static_cast<double>(step.size());
  std::vector<Eigen::MatrixXd> abar(sync_period + 1, Eigen::MatrixXd::Zero(n, n));
  for (const Eigen::MatrixXd& a : step) {
    Eigen::MatrixXd power = eye;
    for (std::uint64_t l = 0; l <= sync_period; ++l) {
      abar[l] += k_inv * power;
      power = power * a;
    }
  }
  Eigen::MatrixXd partial = Eigen::MatrixXd::Zero(n, n);
  for (std::uint64_t l = 0; l < sync_period; ++l) partial += abar[l];

  const Eigen::Map<const Eigen::VectorXd> d(delta.data(), n);
  const Eigen::Map<const Eigen::VectorXd> q(q_star.data(), n);
  const Eigen::MatrixXd drift = (eye - abar[sync_period]) - partial * (eye - abar[1]);
  const Eigen::VectorXd next = abar[sync_period] * d + drift * q;
  return {next.data(), next.data() + n};
}

}  // namespace fedq
