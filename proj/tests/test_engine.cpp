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

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "fedq/env_gen.hpp"
#include "fedq/errors.hpp"
#include "fedq/fedq_engine.hpp"
#include "fedq/theory_oracle.hpp"
#include "test_util.hpp"

using namespace fedq;

namespace {

Ensemble small_maze(std::uint64_t seed, std::size_t k, double gamma = 0.9) {
  MazeSpec spec;
  spec.grid_side = 3;
  spec.seed = seed;
  spec.discount = gamma;
  spec.reward_probability = 0.3;
  return make_maze_ensemble(spec, k);
}

RunConfig constant_run(std::uint64_t e, std::uint64_t t, double lambda, std::uint64_t seed = 1) {
  RunConfig rc;
  rc.period = SyncPeriod{e};
  rc.horizon = t;
  rc.schedule = StepsizeSchedule::constant(lambda);
  rc.seed = seed;
  return rc;
}

}  // namespace

TEST_CASE("local_step by hand") {
  const Ensemble e = make_lower_bound_ensemble({2, {1.0, 0.0}, 0.5});
  const SampleDraw d = sample_draw(e, 0, 0, RngStream(0));
  const QTable out = local_step(QTable({2, 1}), d, 0.1, e.reward(), 0.5);
  CHECK(out[0] == doctest::Approx(0.1));
  CHECK(out[1] == 0.0);

  const QTable r = local_step(QTable({2, 1}, {3.0, 4.0}), d, 1.0, e.reward(), 0.0);
  CHECK(r == QTable({2, 1}, {1.0, 0.0}));

  CHECK_THROWS_AS(local_step(QTable({2, 1}), d, 0.0, e.reward(), 0.5), ConfigError);
  CHECK_THROWS_AS(local_step(QTable({2, 1}), d, 1.1, e.reward(), 0.5), ConfigError);
}

TEST_CASE("local_step keeps a Bellman fixed point under an exact kernel") {
  const Ensemble e({TabularMdp({3, 1}, Matrix(3, 3, {0, 1, 0, 0, 0, 1, 1, 0, 0}),
                               {0.2, 0.5, 1.0}, 0.8)});
  const QTable q = optimal_q(e.global(), 1e-13);
  const SampleDraw d = sample_draw(e, 0, 0, RngStream(3));
  CHECK(linf_error(local_step(q, d, 0.37, e.reward(), 0.8), q) <= 1e-12);
}

TEST_CASE("sync_average") {
  const std::vector<QTable> same(3, QTable({2, 1}, {0.3, 0.4}));
  CHECK(linf_error(sync_average(same), same.front()) <= 1e-16);
  const std::vector<QTable> two = {QTable({2, 1}, {0.0, 2.0}), QTable({2, 1}, {2.0, 0.0})};
  CHECK(sync_average(two) == QTable({2, 1}, {1.0, 1.0}));

  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::vector<QTable> four(4, QTable({5, 2}));
  for (auto& q : four) {
    for (double& x : q.values()) x = u(gen);
  }
  const QTable mean = sync_average(four);
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double pairwise = ((four[0][i] + four[1][i]) + (four[2][i] + four[3][i])) / 4.0;
    CHECK(std::abs(mean[i] - pairwise) <= 1e-15 * 10.0);
  }
  CHECK_THROWS_AS(sync_average(std::vector<QTable>{}), ConfigError);
}

TEST_CASE("single agent with E=1 is classic synchronous Q-learning") {
  std::mt19937_64 gen(4);
  const Shape shape{9, 4};
  const Matrix kernel = maze_kernel(3, 0.0, std::vector<bool>(9, false));
  const std::vector<double> reward = fedq::testing::random_reward(gen, shape.pairs());
  const Ensemble e({TabularMdp(shape, kernel, reward, 0.9)});
  const FederatedQLearning engine(e);
  const RunTrace trace = engine.run(constant_run(1, 300, 0.3));

  // Deterministic successor of each pair.
  std::vector<std::size_t> next(shape.pairs());
  for (std::size_t i = 0; i < shape.pairs(); ++i) {
    next[i] = static_cast<std::size_t>(
        std::find(kernel.row(i).begin(), kernel.row(i).end(), 1.0) - kernel.row(i).begin());
  }
  std::vector<double> q(shape.pairs(), 0.0);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> v(shape.num_states);
    for (std::size_t s = 0; s < shape.num_states; ++s) {
      v[s] = *std::max_element(q.begin() + s * 4, q.begin() + s * 4 + 4);
    }
    for (std::size_t i = 0; i < q.size(); ++i) {
      q[i] = (1.0 - 0.3) * q[i] + 0.3 * (reward[i] + 0.9 * v[next[i]]);
    }
    double err = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) err = std::max(err, std::abs(engine.q_star()[i] - q[i]));
    CHECK(std::abs(trace.linf_error[static_cast<std::size_t>(t) + 1] - err) <= 1e-14);
  }
}

TEST_CASE("lower-bound run matches the closed form at every sync round") {
  const LowerBoundSpec spec{2, {1.0, 0.0}, 0.5};
  const Ensemble e = make_lower_bound_ensemble(spec);
  const FederatedQLearning engine(e, 1e-13);
  for (std::uint64_t period : {1, 2, 3, 5}) {
    for (double lambda : {0.01, 0.1, 0.4, 1.0 / 1.5}) {
      const RunTrace t = engine.run(constant_run(period, 100 * period, lambda));
      for (std::uint64_t r = 0; r <= 100; ++r) {
        const DeltaResult d = closed_form_delta(r, period, lambda, 0.5, spec.reward);
        CHECK(std::abs(t.linf_error[r * period] - d.linf) <= 1e-10);
      }
    }
  }
}

TEST_CASE("horizon zero and invalid configurations") {
  const Ensemble e = small_maze(1, 2);
  const FederatedQLearning engine(e);
  const RunTrace t = engine.run(constant_run(1, 0, 0.1));
  REQUIRE(t.linf_error.size() == 1);
  CHECK(t.linf_error[0] == linf_error(QTable(e.shape()), engine.q_star()));
  CHECK(t.lambda[0] == 0.0);

  RunConfig rc = constant_run(1, 10, 0.1);
  rc.q_init = QTable(e.shape(), 2.0 / (1.0 - 0.9));
  CHECK_THROWS_AS(engine.run(rc), ConfigError);
  rc.q_init = QTable(Shape{2, 1});
  CHECK_THROWS_AS(engine.run(rc), ConfigError);
}

TEST_CASE("coarse bounds hold, tightly at t=0 from the ceiling") {
  const Ensemble e = small_maze(2, 3);
  const FederatedQLearning engine(e);
  RunConfig rc = constant_run(4, 200, 0.5);
  rc.q_init = QTable(e.shape(), 1.0 / (1.0 - 0.9));
  rc.record_locals = true;
  rc.verify_identities = true;
  const RunTrace t = engine.run(rc);
  const CoarseBoundReport report = verify_coarse_bounds(t);
  CHECK(report.ok);
  CHECK(report.violations.empty());
  double top = 0.0;
  for (double x : t.record->locals[0][0].values()) top = std::max(top, x);
  CHECK(top == 1.0 / (1.0 - 0.9));
}

TEST_CASE("error-iteration identity") {
  const Ensemble e = small_maze(3, 4);
  const FederatedQLearning engine(e);
  RunConfig rc = constant_run(5, 100, 0.1);
  rc.record_locals = true;
  rc.verify_identities = true;
  const RunTrace t = engine.run(rc);

  CHECK(verify_error_iteration(t, e, 0) == 0.0);
  CHECK(verify_error_iteration(t, e, 1) <= 1e-12);
  double worst = 0.0;
  for (std::uint64_t s = 0; s <= 100; ++s) worst = std::max(worst, verify_error_iteration(t, e, s));
  CHECK(worst <= 1e-9);
  const std::vector<double> inc = error_iteration_residuals(t, e);
  CHECK(inc.size() == 101);
  CHECK(*std::max_element(inc.begin(), inc.end()) <= 1e-9);
  CHECK(t.max_identity_residual <= 1e-9);

  RunConfig bare = rc;
  bare.record_locals = false;
  CHECK_THROWS_AS(verify_error_iteration(engine.run(bare), e, 1), UnsupportedIdentityError);
  RunConfig varying = rc;
  varying.schedule = StepsizeSchedule::two_phase(0.2, 50, StepsizeSchedule::constant(0.05));
  const RunTrace vt = engine.run(varying);
  CHECK(std::isnan(vt.max_identity_residual));
  CHECK_THROWS_AS(verify_error_iteration(vt, e, 1), UnsupportedIdentityError);
  CHECK_THROWS_AS(error_iteration_residuals(vt, e), UnsupportedIdentityError);
}

TEST_CASE("deterministic homogeneous draws reproduce Pbar exactly") {
  const Matrix kernel = maze_kernel(3, 0.0, std::vector<bool>(9, false));
  const TabularMdp m(Shape{9, 4}, kernel, std::vector<double>(36, 0.5), 0.9);
  const Ensemble e({m, m, m});
  const FederatedQLearning engine(e);
  const std::vector<double> v = greedy_value(engine.q_star());
  for (std::size_t k = 0; k < 3; ++k) {
    const SampleDraw d = sample_draw(e, k, 7, RngStream(2));
    const std::vector<double> pv = apply_empirical(d, v);
    for (std::size_t i = 0; i < pv.size(); ++i) {
      double expected = 0.0;
      for (std::size_t j = 0; j < 9; ++j) expected += kernel(i, j) * v[j];
      CHECK(pv[i] == expected);
    }
  }
}

TEST_CASE("locals agree after every averaging round") {
  MazeSpec spec;
  spec.seed = 5;
  spec.discount = 0.9;
  const Ensemble e = make_maze_ensemble(spec, 3);
  const FederatedQLearning engine(e);
  RunConfig rc = constant_run(7, 70, 0.3);
  rc.record_locals = true;
  const RunTrace t = engine.run(rc);
  std::size_t diverged = 0;
  for (std::uint64_t s = 1; s <= 70; ++s) {
    const auto& locals = t.record->locals[s];
    const bool equal = locals[0] == locals[1] && locals[1] == locals[2];
    CHECK(t.synced[s] == (s % 7 == 0 ? 1 : 0));
    if (s % 7 == 0) CHECK(equal);
    diverged += equal ? 0 : 1;
  }
  CHECK(diverged > 30);
}

TEST_CASE("homogeneous deterministic Q-iteration contracts") {
  const Matrix kernel = maze_kernel(4, 0.0, std::vector<bool>(16, false));
  std::mt19937_64 gen(6);
  const TabularMdp m(Shape{16, 4}, kernel, fedq::testing::random_reward(gen, 64), 0.9);
  const Ensemble e({m, m});
  const FederatedQLearning engine(e);
  const double lambda = 0.2;
  const RunTrace t = engine.run(constant_run(1, 500, lambda));
  for (std::size_t s = 0; s + 1 < t.linf_error.size(); ++s) {
    CHECK(t.linf_error[s + 1] <= (1.0 - (1.0 - 0.9) * lambda) * t.linf_error[s] + 1e-12);
  }
}

TEST_CASE("results do not depend on the thread count") {
  MazeSpec spec;
  spec.seed = 8;
  spec.discount = 0.9;
  const Ensemble e = make_maze_ensemble(spec, 5);
  const FederatedQLearning engine(e);
  RunConfig rc = constant_run(10, 400, 0.2, 99);
  rc.verify_identities = true;
  const RunTrace base = engine.run(rc);
  std::ostringstream base_csv;
  write_trace_csv(base_csv, base);
  for (unsigned threads : {2u, 3u, 5u, 16u}) {
    rc.threads = threads;
    const RunTrace t = engine.run(rc);
    CHECK(t.linf_error == base.linf_error);
    CHECK(t.final_average == base.final_average);
    std::ostringstream csv;
    write_trace_csv(csv, t);
    CHECK(csv.str() == base_csv.str());
  }
}

TEST_CASE("errors raised inside threaded runs propagate") {
  const Ensemble e = small_maze(9, 4);
  const FederatedQLearning engine(e);
  RunConfig rc = constant_run(1, 50, 0.2);
  rc.threads = 4;
  rc.q_init = QTable(e.shape(), 1.0 / (1.0 - 0.9));
  CHECK_NOTHROW(engine.run(rc));
}

TEST_CASE("E = infinity never averages") {
  const Ensemble e = small_maze(10, 2);
  const FederatedQLearning engine(e);
  RunConfig rc = constant_run(0, 120, 0.3, 5);
  rc.period = SyncPeriod::never();
  rc.record_locals = true;
  const RunTrace t = engine.run(rc);
  CHECK(std::all_of(t.synced.begin(), t.synced.end(), [](auto x) { return x == 0; }));
  CHECK_FALSE(t.record->locals.back()[0] == t.record->locals.back()[1]);

  // Agent 0 evolves exactly as it would alone.
  const Ensemble alone({e.agent(0)});
  const FederatedQLearning solo(alone);
  RunConfig rs = rc;
  const RunTrace s = solo.run(rs);
  CHECK(s.record->locals.back()[0] == t.record->locals.back()[0]);
  CHECK(t.final_average == sync_average(t.record->locals.back()));
}

TEST_CASE("phase-transition detection") {
  std::vector<double> dec(40);
  for (std::size_t i = 0; i < dec.size(); ++i) dec[i] = 1.0 / static_cast<double>(i + 1);
  CHECK(detect_phase_transition(dec) == 39);

  const std::vector<double> v = {9, 8, 7, 6, 5, 1, 2, 3, 4, 5};
  CHECK(detect_phase_transition(v, 1) == 5);
  CHECK(detect_phase_transition(v, 3) == 7);  // trailing means 4, 2.67, 2, 3
}

TEST_CASE("detected t0 is close to the raw minimum on a heterogeneous maze") {
  MazeSpec spec;
  spec.seed = 0;
  spec.discount = 0.9;
  const Ensemble e = make_maze_ensemble(spec, 5);
  const FederatedQLearning engine(e);
  const RunTrace t = engine.run(constant_run(10, 2000, 0.05, 3));
  const auto raw = static_cast<double>(
      std::min_element(t.linf_error.begin(), t.linf_error.end()) - t.linf_error.begin());
  const auto t0 = static_cast<double>(detect_phase_transition(t.linf_error));
  CHECK(std::abs(t0 - raw) <= 0.2 * raw);
}

TEST_CASE("trace CSV") {
  const Ensemble e = small_maze(11, 2);
  const FederatedQLearning engine(e);
  RunConfig rc = constant_run(2, 5, 0.25, 42);
  rc.run_id = "abc";
  const RunTrace t = engine.run(rc);
  std::ostringstream out;
  write_trace_csv(out, t);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,linf_error,lambda,synced,run_id,seed");
  int rows = 0;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string tok;
    std::getline(fields, tok, ',');
    CHECK(std::stoi(tok) == rows);
    std::getline(fields, tok, ',');
    CHECK(std::stod(tok) == t.linf_error[static_cast<std::size_t>(rows)]);
    std::getline(fields, tok, ',');
    CHECK(std::stod(tok) == (rows == 0 ? 0.0 : 0.25));
    std::getline(fields, tok, ',');
    CHECK(tok == (rows % 2 == 0 && rows > 0 ? "1" : "0"));
    std::getline(fields, tok, ',');
    CHECK(tok == "abc");
    std::getline(fields, tok, ',');
    CHECK(tok == "42");
    ++rows;
  }
  CHECK(rows == 6);
}

TEST_CASE("config hash tracks the configuration") {
  const RunConfig a = constant_run(2, 5, 0.25, 42);
  RunConfig b = a;
  CHECK(config_hash(run_config_to_json(a)) == config_hash(run_config_to_json(b)));
  b.seed = 43;
  CHECK(config_hash(run_config_to_json(a)) != config_hash(run_config_to_json(b)));
  b = a;
  b.threads = 8;
  CHECK(config_hash(run_config_to_json(a)) == config_hash(run_config_to_json(b)));
}
