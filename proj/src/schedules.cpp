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

#include "fedq/schedules.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "fedq/errors.hpp"

namespace fedq {

StepsizeSchedule StepsizeSchedule::constant(double lambda) {
  if (!(lambda > 0.0 && lambda <= 1.0)) {
    throw ConfigError(fmt::format("constant stepsize {} outside (0, 1]", lambda));
  }
  StepsizeSchedule s;
  s.kind_ = ScheduleKind::kConstant;
  s.lambda_ = lambda;
  return s;
}

StepsizeSchedule StepsizeSchedule::poly(double alpha) {
  if (!(alpha >= 0.0)) {
    throw ConfigError(fmt::format("poly exponent {} makes 1/T^alpha exceed 1", alpha));
  }
  StepsizeSchedule s;
  s.kind_ = ScheduleKind::kPoly;
  s.alpha_ = alpha;
  return s;
}

StepsizeSchedule StepsizeSchedule::corollary() {
  StepsizeSchedule s;
  s.kind_ = ScheduleKind::kCorollary;
  return s;
}

StepsizeSchedule StepsizeSchedule::two_phase(double lambda1, std::uint64_t t0,
                                             StepsizeSchedule phase2) {
  if (!(lambda1 > 0.0 && lambda1 <= 1.0)) {
    throw ConfigError(fmt::format("phase-1 stepsize {} outside (0, 1]", lambda1));
  }
  if (phase2.kind() == ScheduleKind::kTwoPhase) {
    throw ConfigError("phase-2 schedule cannot itself be two-phase");
  }
  StepsizeSchedule s;
  s.kind_ = ScheduleKind::kTwoPhase;
  s.lambda_ = lambda1;
  s.t0_ = t0;
  s.phase2_ = std::make_shared<const StepsizeSchedule>(std::move(phase2));
  return s;
}

double corollary_stepsize(std::uint64_t horizon, std::size_t num_agents, double discount) {
  const double log_tk =
      std::log(static_cast<double>(horizon) * static_cast<double>(num_agents));
  return 4.0 * log_tk * log_tk / ((1.0 - discount) * static_cast<double>(horizon));
}

double StepsizeSchedule::at(std::uint64_t t, std::uint64_t horizon, std::size_t num_agents,
                            double discount) const {
  if (t >= horizon) {
    throw ConfigError(fmt::format("stepsize requested at t={} >= T={}", t, horizon));
  }
  double value = 0.0;
  switch (kind_) {
    case ScheduleKind::kConstant:
      value = lambda_;
      break;
    case ScheduleKind::kPoly:
      value = std::pow(static_cast<double>(horizon), -alpha_);
      break;
    case ScheduleKind::kCorollary:
      value = std::min(1.0, corollary_stepsize(horizon, num_agents, discount));
      break;
    case ScheduleKind::kTwoPhase:
      value = t < t0_ ? lambda_ : phase2_->at(t, horizon, num_agents, discount);
      break;
  }
  if (!(value > 0.0 && value <= 1.0)) {
    throw ConfigError(fmt::format("{} emits stepsize {} outside (0, 1]", label(), value));
  }
  return value;
}

bool StepsizeSchedule::is_constant(std::uint64_t horizon) const {
  switch (kind_) {
    case ScheduleKind::kConstant:
    case ScheduleKind::kPoly:
    case ScheduleKind::kCorollary:
      return true;
    case ScheduleKind::kTwoPhase:
      if (t0_ >= horizon) return true;
      return t0_ == 0 && phase2_->is_constant(horizon);
  }
  return false;
}

std::string StepsizeSchedule::label() const {
  switch (kind_) {
    case ScheduleKind::kConstant:
      return fmt::format("const{}", lambda_);
    case ScheduleKind::kPoly:
      return fmt::format("poly{}", alpha_);
    case ScheduleKind::kCorollary:
      return "corollary";
    case ScheduleKind::kTwoPhase:
      return fmt::format("twophase{}-t{}-{}", lambda_, t0_, phase2_->label());
  }
  return "unknown";
}

double stepsize(const StepsizeSchedule& schedule, std::uint64_t t, std::uint64_t horizon,
                std::size_t num_agents, double discount) {
  return schedule.at(t, horizon, num_agents, discount);
}

StepsizeSchedule schedule_from_json(const nlohmann::json& doc) {
  try {
    const std::string kind = doc.at("kind").get<std::string>();
    if (kind == "constant") return StepsizeSchedule::constant(doc.at("lambda").get<double>());
    if (kind == "poly") return StepsizeSchedule::poly(doc.at("alpha").get<double>());
    if (kind == "corollary") return StepsizeSchedule::corollary();
    if (kind == "two_phase") {
      StepsizeSchedule phase2 = doc.contains("phase2") ? schedule_from_json(doc.at("phase2"))
                                                       : StepsizeSchedule::poly(0.5);
      return StepsizeSchedule::two_phase(doc.at("lambda1").get<double>(),
                                         doc.value("t0", std::uint64_t{0}), std::move(phase2));
    }
    throw ConfigError("unknown schedule kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed schedule: ") + e.what());
  }
}

nlohmann::json schedule_to_json(const StepsizeSchedule& schedule) {
  switch (schedule.kind()) {
    case ScheduleKind::kConstant:
      return {{"kind", "constant"}, {"lambda", schedule.lambda()}};
    case ScheduleKind::kPoly:
      return {{"kind", "poly"}, {"alpha", schedule.alpha()}};
    case ScheduleKind::kCorollary:
      return {{"kind", "corollary"}};
    case ScheduleKind::kTwoPhase:
      return {{"kind", "two_phase"},
              {"lambda1", schedule.lambda()},
              {"t0", schedule.switch_time()},
              {"phase2", schedule_to_json(*schedule.phase2())}};
  }
  return {};
}

namespace {

void check_common(const BoundParams& p, std::vector<std::string>& out) {
  if (!(p.gamma > 0.0 && p.gamma < 1.0)) out.push_back("gamma must lie in (0, 1)");
  if (!(p.delta > 0.0 && p.delta < 1.0 / 3.0)) out.push_back("delta must lie in (0, 1/3)");
  if (p.sync_period < 1) out.push_back("E must be >= 1");
  if (p.num_agents < 1) out.push_back("K must be >= 1");
  if (p.horizon < 1) out.push_back("T must be >= 1");
  if (!(p.kappa >= 0.0)) out.push_back("kappa must be >= 0");
  if (p.num_states < 1 || p.num_actions < 1) out.push_back("|S| and |A| must be >= 1");
}

double log_sakt(const BoundParams& p) {
  return std::log(static_cast<double>(p.num_states) * static_cast<double>(p.num_actions) *
                  static_cast<double>(p.num_agents) * static_cast<double>(p.horizon) /
                  p.delta);
}

}  // namespace

std::vector<std::string> theorem1_violations(const BoundParams& p) {
  std::vector<std::string> out;
  check_common(p, out);
  if (!(p.lambda > 0.0 && p.lambda <= 1.0)) out.push_back("lambda must lie in (0, 1]");
  if (!out.empty()) return out;
  const double e_minus_1 = static_cast<double>(p.sync_period - 1);
  if (e_minus_1 > (1.0 - p.gamma) / (4.0 * p.gamma * p.lambda)) {
    out.push_back(fmt::format("E-1 = {} exceeds (1-gamma)/(4 gamma lambda) = {:.6g}", e_minus_1,
                              (1.0 - p.gamma) / (4.0 * p.gamma * p.lambda)));
  }
  if (p.lambda > 1.0 / static_cast<double>(p.sync_period)) {
    out.push_back(fmt::format("lambda = {} exceeds 1/E = {:.6g}", p.lambda,
                              1.0 / static_cast<double>(p.sync_period)));
  }
  return out;
}

std::vector<std::string> corollary1_violations(const BoundParams& p) {
  std::vector<std::string> out;
  check_common(p, out);
  if (!out.empty()) return out;
  const double lambda = corollary_stepsize(p.horizon, p.num_agents, p.gamma);
  if (!(lambda > 0.0)) out.push_back("TK must exceed 1 for a positive stepsize");
  const double e_minus_1 = static_cast<double>(p.sync_period - 1);
  const double cap = std::min(p.gamma / (1.0 - p.gamma),
                              1.0 / static_cast<double>(p.num_agents)) / lambda;
  if (e_minus_1 > cap) {
    out.push_back(fmt::format(
        "E-1 = {} exceeds min(gamma/(1-gamma), 1/K)/lambda = {:.6g}", e_minus_1, cap));
  }
  if (p.horizon < p.sync_period) out.push_back("T must be >= E");
  return out;
}

Theorem1Terms theorem1_bound(const BoundParams& p) {
  if (auto bad = theorem1_violations(p); !bad.empty()) {
    throw ConfigError("convergence-theorem hypothesis failed: " + bad.front());
  }
  const double g = p.gamma;
  const double l = p.lambda;
  const double em1 = static_cast<double>(p.sync_period - 1);
  const double c = 1.0 / ((1.0 - g) * (1.0 - g));
  const double log_term = log_sakt(p);

  Theorem1Terms t;
  t.optimization =
      4.0 * c * std::exp(-0.5 * std::sqrt((1.0 - g) * l * static_cast<double>(p.horizon)));
  t.heterogeneity = 2.0 * g * g * c * (6.0 * l * l * em1 * em1 + l * em1) * p.kappa;
  t.local_sampling = (12.0 * g * g * l * c * std::sqrt(em1) + 2.0 * g * g * std::sqrt(l) * c) *
                     std::sqrt(l * em1 * log_term);
  t.averaged_sampling =
      2.0 * g * c * std::sqrt(l * log_term / static_cast<double>(p.num_agents));
  return t;
}

Corollary1Terms corollary1_bound(const BoundParams& p) {
  if (auto bad = corollary1_violations(p); !bad.empty()) {
    throw ConfigError("corollary hypothesis failed: " + bad.front());
  }
  const double g = p.gamma;
  const double tk = static_cast<double>(p.horizon) * static_cast<double>(p.num_agents);
  const double log_tk = std::log(tk);
  const double c3 = 1.0 / std::pow(1.0 - g, 3);

  Corollary1Terms t;
  t.optimization = 4.0 / ((1.0 - g) * (1.0 - g) * tk);
  t.sampling = 36.0 * c3 * log_tk / std::sqrt(tk) * std::sqrt(log_sakt(p));
  t.heterogeneity = 56.0 * log_tk * log_tk * c3 * static_cast<double>(p.sync_period - 1) /
                    static_cast<double>(p.horizon) * p.kappa;
  return t;
}

}  // namespace fedq
