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


#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedq/errors.hpp"
#include "fedq/schedules.hpp"

using namespace fedq;

namespace {

BoundParams example_params() {
  BoundParams p;
  p.gamma = 0.5;
  p.lambda = 0.01;
  p.sync_period = 5;
  p.num_agents = 4;
  p.horizon = 10'000;
  p.kappa = 0.5;
  p.delta = 0.1;
  p.num_states = 2;
  p.num_actions = 1;
  return p;
}

// Second evaluation of the convergence bound in long double, factored differently.
long double theorem_reference(const BoundParams& p) {
  const long double g = p.gamma, l = p.lambda, k = p.kappa;
  const long double m = static_cast<long double>(p.sync_period) - 1.0L;
  const long double one_minus = 1.0L - g;
  const long double sq = one_minus * one_minus;
  const long double logt = logl(static_cast<long double>(p.num_states * p.num_actions) *
                                p.num_agents * p.horizon / static_cast<long double>(p.delta));
  const long double a = 4.0L * expl(-sqrtl(one_minus * l * p.horizon) / 2.0L) / sq;
  const long double b = 2.0L * g * g * (6.0L * l * l * m * m + l * m) * k / sq;
  const long double c =
      2.0L * g * g / sq * (6.0L * l * sqrtl(m) + sqrtl(l)) * sqrtl(l * m * logt);
  const long double d = 2.0L * g / sq * sqrtl(l * logt / p.num_agents);
  return a + b + c + d;
}

}  // namespace

TEST_CASE("constant, poly and two-phase stepsizes") {
  const auto c = StepsizeSchedule::constant(0.05);
  for (std::uint64_t t : {0, 10, 19'999}) CHECK(c.at(t, 20'000, 5, 0.99) == 0.05);
  CHECK(c.is_constant(20'000));

  const auto p = StepsizeSchedule::poly(0.5);
  CHECK(p.at(0, 20'000, 5, 0.99) == doctest::Approx(7.0711e-3).epsilon(1e-4));
  CHECK(p.at(0, 20'000, 5, 0.99) == 1.0 / std::sqrt(20'000.0));

  const auto two = StepsizeSchedule::two_phase(0.05, 5550);
  CHECK(two.at(5549, 20'000, 5, 0.99) == 0.05);
  CHECK(two.at(5550, 20'000, 5, 0.99) == doctest::Approx(7.0711e-3).epsilon(1e-4));
  CHECK_FALSE(two.is_constant(20'000));
  CHECK(two.is_constant(5000));
  CHECK(stepsize(two, 0, 20'000, 5, 0.99) == 0.05);
}

TEST_CASE("corollary stepsize is clamped to 1") {
  const auto s = StepsizeSchedule::corollary();
  const double raw = corollary_stepsize(10'000, 4, 0.9);
  CHECK(raw == doctest::Approx(4.0 * std::pow(std::log(40'000.0), 2) / (0.1 * 10'000)));
  CHECK(s.at(0, 10'000, 4, 0.9) == std::min(1.0, raw));
  CHECK(s.at(0, 100, 4, 0.9) == 1.0);
}

TEST_CASE("invalid schedules") {
  CHECK_THROWS_AS(StepsizeSchedule::constant(0.0), ConfigError);
  CHECK_THROWS_AS(StepsizeSchedule::constant(1.5), ConfigError);
  CHECK_THROWS_AS(StepsizeSchedule::poly(-1.0), ConfigError);
  CHECK_THROWS_AS(StepsizeSchedule::two_phase(2.0, 5), ConfigError);
  CHECK_THROWS_AS(StepsizeSchedule::constant(0.1).at(10, 10, 1, 0.9), ConfigError);
  // T K = 1 gives log(TK) = 0, a zero stepsize.
  CHECK_THROWS_AS(StepsizeSchedule::corollary().at(0, 1, 1, 0.9), ConfigError);
}

TEST_CASE("schedule JSON") {
  const nlohmann::json doc = nlohmann::json::parse(
      R"({"kind":"two_phase","lambda1":0.05,"t0":5550,"phase2":{"kind":"poly","alpha":0.5}})");
  const auto s = schedule_from_json(doc);
  CHECK(s.kind() == ScheduleKind::kTwoPhase);
  CHECK(s.switch_time() == 5550);
  CHECK(schedule_to_json(s) == doc);
  for (const char* text : {R"({"kind":"constant","lambda":0.2})", R"({"kind":"corollary"})",
                           R"({"kind":"poly","alpha":0.4})"}) {
    const auto j = nlohmann::json::parse(text);
    CHECK(schedule_to_json(schedule_from_json(j)) == j);
  }
  CHECK_THROWS_AS(schedule_from_json({{"kind", "cosine"}}), ConfigError);
  CHECK_THROWS_AS(schedule_from_json({{"kind", "constant"}}), ConfigError);
}

TEST_CASE("convergence bound matches an independent evaluation") {
  const BoundParams p = example_params();
  const Theorem1Terms t = theorem1_bound(p);
  CHECK(t.total() == doctest::Approx(static_cast<double>(theorem_reference(p))).epsilon(1e-12));
}

TEST_CASE("convergence bound special cases") {
  BoundParams p = example_params();
  p.sync_period = 1;
  CHECK(theorem1_bound(p).heterogeneity == 0.0);
  CHECK(theorem1_bound(p).local_sampling == 0.0);
  p = example_params();
  p.kappa = 0.0;
  CHECK(theorem1_bound(p).heterogeneity == 0.0);
}

TEST_CASE("convergence bound is nondecreasing in kappa and E") {
  BoundParams p = example_params();
  double last = 0.0;
  for (double k : {0.0, 0.1, 0.5, 1.0, 2.0}) {
    p.kappa = k;
    const double v = theorem1_bound(p).total();
    CHECK(v >= last);
    last = v;
  }
  p = example_params();
  last = 0.0;
  for (std::uint64_t e = 1; e <= 26; ++e) {  // (1-g)/(4 g l) = 25 caps E-1
    p.sync_period = e;
    const double v = theorem1_bound(p).total();
    CHECK(v >= last);
    last = v;
  }
}

TEST_CASE("convergence bound hypotheses") {
  BoundParams p = example_params();
  p.sync_period = 27;
  CHECK_THROWS_WITH_AS(theorem1_bound(p), doctest::Contains("E-1"), ConfigError);
  p = example_params();
  p.delta = 0.5;
  CHECK_THROWS_WITH_AS(theorem1_bound(p), doctest::Contains("delta"), ConfigError);
  p = example_params();
  p.lambda = 0.5;
  p.sync_period = 3;
  CHECK_FALSE(theorem1_violations(p).empty());
  p = example_params();
  CHECK(theorem1_violations(p).empty());
}

TEST_CASE("corollary bound") {
  BoundParams p = example_params();
  p.gamma = 0.9;
  p.horizon = 1'000'000;  // keeps E-1 = 2 under min(g/(1-g), 1/K)/lambda
  p.sync_period = 2;
  const Corollary1Terms a = corollary1_bound(p);
  p.sync_period = 3;
  const Corollary1Terms b = corollary1_bound(p);
  CHECK(b.heterogeneity == doctest::Approx(2.0 * a.heterogeneity));
  CHECK(b.sampling == a.sampling);

  p.kappa = 0.0;
  p.sync_period = 2;
  const double x = corollary1_bound(p).total();
  p.sync_period = 3;
  CHECK(corollary1_bound(p).total() == x);

  p.sync_period = 1000;
  CHECK_THROWS_AS(corollary1_bound(p), ConfigError);
}

TEST_CASE("corollary sampling term shows the K speed-up") {
  BoundParams p = example_params();
  p.gamma = 0.9;
  p.sync_period = 1;
  p.num_agents = 4;
  const double s4 = corollary1_bound(p).sampling;
  p.num_agents = 16;
  const double s16 = corollary1_bound(p).sampling;
  CHECK(s16 < s4);
  // Remove log(TK) sqrt(log(SATK/d)) to leave 1/sqrt(TK).
  auto strip = [&](double s, double k) {
    const double tk = 1e4 * k;
    return s / (std::log(tk) * std::sqrt(std::log(2.0 * tk / 0.1)));
  };
  CHECK(strip(s16, 16) / strip(s4, 4) == doctest::Approx(0.5).epsilon(1e-12));
}
