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

#include "fedq/fedq_engine.hpp"

#include <algorithm>
#include <barrier>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <ostream>
#include <thread>
#include <utility>

#include <fmt/core.h>

#include "fedq/errors.hpp"

namespace fedq {
namespace {

// Rounding slack on the 1/(1-gamma) ceiling, relative to the ceiling.
constexpr double kBoundSlack = 1e-9;
constexpr double kIdentityTolerance = 1e-9;

void check_lambda(double lambda) {
  if (!(lambda > 0.0 && lambda <= 1.0)) {
    throw ConfigError(fmt::format("stepsize {} outside (0, 1]", lambda));
  }
}

// out = (1 - lambda) q + lambda (R + gamma v(successor)), with v = max_a q.
void local_step_into(const QTable& q, std::span<const double> v, const SampleDraw& draw,
                     double lambda, std::span<const double> reward, double discount,
                     QTable& out) {
  for (std::size_t i = 0; i < q.size(); ++i) {
    out[i] = (1.0 - lambda) * q[i] +
             lambda * (reward[i] + discount * v[draw.successors[i]]);
  }
}

void mean_into(std::span<const QTable> tables, QTable& out) {
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (const QTable& t : tables) sum += t[i];
    out[i] = sum / static_cast<double>(tables.size());
  }
}

std::vector<double> expected_next_value(const Ensemble& ensemble, std::span<const double> v) {
  const Matrix& p = ensemble.global().kernel();
  std::vector<double> out(p.rows(), 0.0);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    std::span<const double> row = p.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) out[i] += row[j] * v[j];
  }
  return out;
}

double linf(std::span<const double> a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

// Running sums of the second and third terms of the unrolled error iteration.
class ErrorIterationAccumulator {
 public:
  ErrorIterationAccumulator(const QTable& q_star, const QTable& q0,
                            std::vector<double> pbar_v_star, double discount)
      : v_star_(greedy_value(q_star)),
        pbar_v_star_(std::move(pbar_v_star)),
        delta0_(q_star.size()),
        heterogeneity_(q_star.size(), 0.0),
        local_(q_star.size(), 0.0),
        discount_(discount) {
    for (std::size_t i = 0; i < delta0_.size(); ++i) delta0_[i] = q_star[i] - q0[i];
    scale_ = std::max(1.0, linf(delta0_));
  }

  /// Folds iteration t (draws and pre-update values V_t^k) into the sums.
  void add(double lambda, std::span<const SampleDraw> draws,
           std::span<const std::vector<double>> values) {
    const double k_inv = 1.0 / static_cast<double>(draws.size());
    const double w = discount_ * lambda;
    for (std::size_t i = 0; i < heterogeneity_.size(); ++i) {
      double second = 0.0;
      double third = 0.0;
      for (std::size_t k = 0; k < draws.size(); ++k) {
        const std::uint32_t next = draws[k].successors[i];
        second += pbar_v_star_[i] - v_star_[next];
        third += v_star_[next] - values[k][next];
      }
      heterogeneity_[i] = (1.0 - lambda) * heterogeneity_[i] + w * second * k_inv;
      local_[i] = (1.0 - lambda) * local_[i] + w * third * k_inv;
    }
    decay_ *= 1.0 - lambda;
  }

  /// Relative residual against the simulated Delta = Q* - mean.
  double residual(const QTable& q_star, const QTable& mean) const {
    double worst = 0.0;
    for (std::size_t i = 0; i < delta0_.size(); ++i) {
      const double lhs = q_star[i] - mean[i];
      const double rhs = decay_ * delta0_[i] + heterogeneity_[i] + local_[i];
      worst = std::max(worst, std::abs(lhs - rhs));
    }
    return worst / scale_;
  }

 private:
  std::vector<double> v_star_;
  std::vector<double> pbar_v_star_;
  std::vector<double> delta0_;
  std::vector<double> heterogeneity_;
  std::vector<double> local_;
  double discount_;
  double decay_ = 1.0;
  double scale_ = 1.0;
};

// Returns the first violated coarse bound for agent k at iteration t, if any.
std::optional<BoundViolation> check_coarse(const QTable& q, const QTable& q_star,
                                           std::span<const double> v_star, double discount,
                                           std::uint64_t t, std::size_t k) {
  const double ceiling = 1.0 / (1.0 - discount);
  const double slack = kBoundSlack * ceiling;
  const Shape& shape = q.shape();
  for (std::size_t s = 0; s < shape.num_states; ++s) {
    double v = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < shape.num_actions; ++a) {
      const double x = q(s, a);
      v = std::max(v, x);
      if (x < -slack || x > ceiling + slack) {
        return BoundViolation{t, k, s, a, "0 <= Q_t^k <= 1/(1-gamma)", x};
      }
      if (std::abs(q_star(s, a) - x) > ceiling + slack) {
        return BoundViolation{t, k, s, a, "|Q* - Q_t^k| <= 1/(1-gamma)", q_star(s, a) - x};
      }
    }
    if (std::abs(v_star[s] - v) > ceiling + slack) {
      return BoundViolation{t, k, s, 0, "|V* - V_t^k| <= 1/(1-gamma)", v_star[s] - v};
    }
  }
  return std::nullopt;
}

std::string describe(const BoundViolation& v) {
  return fmt::format("coarse bound '{}' violated at t={} agent={} state={} action={} (value {:.17g})",
                     v.what, v.t, v.agent, v.state, v.action, v.value);
}

}  // namespace

QTable local_step(const QTable& q_k, const SampleDraw& draw, double lambda,
                  std::span<const double> reward, double discount) {
  check_lambda(lambda);
  if (!(draw.shape == q_k.shape()) || reward.size() != q_k.size()) {
    throw ConfigError("local_step: shape mismatch");
  }
  QTable out(q_k.shape());
  local_step_into(q_k, greedy_value(q_k), draw, lambda, reward, discount, out);
  return out;
}

QTable sync_average(std::span<const QTable> tables) {
  if (tables.empty()) throw ConfigError("sync_average of no tables");
  for (const QTable& t : tables) {
    if (!(t.shape() == tables.front().shape())) throw ConfigError("sync_average: shape mismatch");
  }
  QTable out(tables.front().shape());
  mean_into(tables, out);
  return out;
}

FederatedQLearning::FederatedQLearning(const Ensemble& ensemble, double q_star_tolerance)
    : ensemble_(ensemble),
      q_star_(optimal_q(ensemble.global(), q_star_tolerance)),
      model_(ensemble) {}

RunTrace FederatedQLearning::run(const RunConfig& config) const {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t num_agents = ensemble_.size();
  const Shape shape = ensemble_.shape();
  const double discount = ensemble_.discount();
  const double ceiling = 1.0 / (1.0 - discount);
  const std::uint64_t horizon = config.horizon;

  std::vector<double> lambdas(horizon);
  for (std::uint64_t t = 0; t < horizon; ++t) {
    lambdas[t] = config.schedule.at(t, horizon, num_agents, discount);
  }

  const QTable init = config.q_init.value_or(QTable(shape));
  if (!(init.shape() == shape)) throw ConfigError("q_init shape does not match the ensemble");
  for (double x : init.values()) {
    if (!(x >= 0.0 && x <= ceiling)) {
      throw ConfigError(fmt::format("q_init entry {} outside [0, 1/(1-gamma)] = [0, {}]", x,
                                    ceiling));
    }
  }

  RunTrace trace;
  trace.q_star = q_star_;
  trace.discount = discount;
  trace.constant_lambda = config.schedule.is_constant(horizon);
  trace.run_id = config.run_id;
  trace.seed = config.seed;
  trace.config_hash = config_hash(run_config_to_json(config));
  trace.linf_error.reserve(horizon + 1);
  trace.lambda.reserve(horizon + 1);
  trace.synced.reserve(horizon + 1);

  std::vector<QTable> locals(num_agents, init);
  std::vector<QTable> halves(num_agents, init);
  std::vector<std::vector<double>> values(num_agents, std::vector<double>(shape.num_states));
  std::vector<SampleDraw> draws(num_agents);
  QTable mean(shape);
  const std::vector<double> v_star = greedy_value(q_star_);
  const RngStream rng(config.seed);

  const bool check_identity = config.verify_identities && trace.constant_lambda;
  std::optional<ErrorIterationAccumulator> identity;
  if (check_identity) {
    identity.emplace(q_star_, init, expected_next_value(ensemble_, v_star), discount);
  }
  trace.max_identity_residual =
      check_identity ? 0.0 : std::numeric_limits<double>::quiet_NaN();
  if (config.record_locals) trace.record.emplace();

  auto observe = [&](std::uint64_t t, double lambda, bool synced) {
    mean_into(locals, mean);
    trace.linf_error.push_back(linf_error(mean, q_star_));
    trace.lambda.push_back(lambda);
    trace.synced.push_back(synced ? 1 : 0);
    if (config.record_locals) {
      trace.record->locals.push_back(locals);
      std::vector<double> errs(num_agents);
      for (std::size_t k = 0; k < num_agents; ++k) errs[k] = linf_error(locals[k], q_star_);
      trace.local_errors.push_back(std::move(errs));
    }
    if (config.verify_identities) {
      for (std::size_t k = 0; k < num_agents; ++k) {
        if (auto bad = check_coarse(locals[k], q_star_, v_star, discount, t, k)) {
          throw VerificationError(describe(*bad));
        }
      }
    }
    if (check_identity) {
      const double r = identity->residual(q_star_, mean);
      trace.max_identity_residual = std::max(trace.max_identity_residual, r);
      if (r > kIdentityTolerance) {
        throw VerificationError(
            fmt::format("error-iteration identity residual {:.3g} at t={}", r, t));
      }
    }
  };

  auto agent_step = [&](std::size_t k, std::uint64_t t) {
    model_.draw(k, t, rng, draws[k]);
    greedy_value(locals[k], values[k]);
    local_step_into(locals[k], values[k], draws[k], lambdas[t], ensemble_.reward(), discount,
                    halves[k]);
  };

  auto finish = [&](std::uint64_t t) {
    if (check_identity) identity->add(lambdas[t], draws, values);
    if (config.record_locals) trace.record->draws.push_back(draws);
    const bool sync = config.period.syncs_after(t);
    if (sync) {
      mean_into(halves, mean);
      for (QTable& q : locals) q = mean;
    } else {
      std::swap(locals, halves);
    }
    observe(t + 1, lambdas[t], sync);
  };

  observe(0, 0.0, false);

  const unsigned workers = std::min<std::size_t>(std::max(config.threads, 1u), num_agents);
  if (workers <= 1 || horizon == 0) {
    for (std::uint64_t t = 0; t < horizon; ++t) {
      for (std::size_t k = 0; k < num_agents; ++k) agent_step(k, t);
      finish(t);
    }
  } else {
    // Workers own agents k = w, w + n, ...; the barrier completion runs the
    // serial part (averaging, tracing, checks) once per iteration.
    std::uint64_t t = 0;
    bool stop = false;
    std::exception_ptr failure;
    auto completion = [&]() noexcept {
      try {
        finish(t);
      } catch (...) {
        failure = std::current_exception();
        stop = true;
      }
      if (++t >= horizon) stop = true;
    };
    std::barrier gate(static_cast<std::ptrdiff_t>(workers), completion);
    {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          while (!stop) {
            for (std::size_t k = w; k < num_agents; k += workers) agent_step(k, t);
            gate.arrive_and_wait();
          }
        });
      }
    }
    if (failure) std::rethrow_exception(failure);
  }

  trace.final_average = mean;
  trace.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return trace;
}

double verify_error_iteration(const RunTrace& trace, const Ensemble& ensemble,
                              std::uint64_t t) {
  if (!trace.record) {
    throw UnsupportedIdentityError("error-iteration check needs a run with record_locals");
  }
  if (!trace.constant_lambda) {
    throw UnsupportedIdentityError(
        "error-iteration identity is stated for a time-invariant stepsize");
  }
  if (t > trace.horizon()) throw ConfigError("iteration beyond the recorded horizon");
  const RunRecord& rec = *trace.record;
  const QTable& q_star = trace.q_star;
  const std::size_t num_agents = rec.locals.front().size();
  const double k_inv = 1.0 / static_cast<double>(num_agents);
  const double lambda = trace.horizon() > 0 ? trace.lambda[1] : 0.0;
  const double gamma = trace.discount;
  const std::vector<double> v_star = greedy_value(q_star);
  const std::vector<double> pbar_v = expected_next_value(ensemble, v_star);

  const QTable q0 = sync_average(rec.locals.front());
  std::vector<double> rhs(q_star.size());
  const double decay = std::pow(1.0 - lambda, static_cast<double>(t));
  for (std::size_t j = 0; j < rhs.size(); ++j) rhs[j] = decay * (q_star[j] - q0[j]);

  for (std::uint64_t i = 0; i < t; ++i) {
    const double w = gamma * lambda * std::pow(1.0 - lambda, static_cast<double>(t - 1 - i));
    for (std::size_t k = 0; k < num_agents; ++k) {
      const std::vector<double> v_ik = greedy_value(rec.locals[i][k]);
      const std::vector<double> pv_star = apply_empirical(rec.draws[i][k], v_star);
      const std::vector<double> pv_local = apply_empirical(rec.draws[i][k], v_ik);
      for (std::size_t j = 0; j < rhs.size(); ++j) {
        rhs[j] += w * k_inv * (pbar_v[j] - pv_star[j]);
        rhs[j] += w * k_inv * (pv_star[j] - pv_local[j]);
      }
    }
  }

  const QTable mean = sync_average(rec.locals[t]);
  double worst = 0.0;
  double scale = 1.0;
  for (std::size_t j = 0; j < rhs.size(); ++j) {
    worst = std::max(worst, std::abs((q_star[j] - mean[j]) - rhs[j]));
    scale = std::max(scale, std::abs(q_star[j] - q0[j]));
  }
  return worst / scale;
}

std::vector<double> error_iteration_residuals(const RunTrace& trace, const Ensemble& ensemble) {
  if (!trace.record) {
    throw UnsupportedIdentityError("error-iteration check needs a run with record_locals");
  }
  if (!trace.constant_lambda) {
    throw UnsupportedIdentityError(
        "error-iteration identity is stated for a time-invariant stepsize");
  }
  const RunRecord& rec = *trace.record;
  const QTable& q_star = trace.q_star;
  const QTable q0 = sync_average(rec.locals.front());
  const std::vector<double> v_star = greedy_value(q_star);
  ErrorIterationAccumulator acc(q_star, q0, expected_next_value(ensemble, v_star),
                                trace.discount);
  std::vector<double> residuals{acc.residual(q_star, q0)};
  const std::size_t num_agents = rec.locals.front().size();
  std::vector<std::vector<double>> values(num_agents);
  for (std::uint64_t t = 0; t < trace.horizon(); ++t) {
    for (std::size_t k = 0; k < num_agents; ++k) values[k] = greedy_value(rec.locals[t][k]);
    acc.add(trace.lambda[t + 1], rec.draws[t], values);
    residuals.push_back(acc.residual(q_star, sync_average(rec.locals[t + 1])));
  }
  return residuals;
}

CoarseBoundReport verify_coarse_bounds(const RunTrace& trace) {
  if (!trace.record) throw UnsupportedIdentityError("coarse-bound check needs record_locals");
  CoarseBoundReport report;
  const std::vector<double> v_star = greedy_value(trace.q_star);
  const auto& locals = trace.record->locals;
  for (std::uint64_t t = 0; t < locals.size(); ++t) {
    for (std::size_t k = 0; k < locals[t].size(); ++k) {
      if (auto bad = check_coarse(locals[t][k], trace.q_star, v_star, trace.discount, t, k)) {
        report.violations.push_back(*bad);
      }
    }
  }
  report.ok = report.violations.empty();
  return report;
}

std::uint64_t detect_phase_transition(std::span<const double> errors, std::size_t window) {
  if (errors.empty()) return 0;
  const std::size_t n = errors.size();
  bool non_increasing = true;
  for (std::size_t i = 1; i < n && non_increasing; ++i) {
    non_increasing = errors[i] <= errors[i - 1];
  }
  if (non_increasing) return n - 1;

  const std::size_t w = std::clamp<std::size_t>(window, 1, n);
  double sum = 0.0;
  for (std::size_t i = 0; i < w; ++i) sum += errors[i];
  double best = sum;
  std::size_t best_t = w - 1;
  for (std::size_t t = w; t < n; ++t) {
    sum += errors[t] - errors[t - w];
    if (sum < best) {
      best = sum;
      best_t = t;
    }
  }
  return best_t;
}

void write_trace_csv(std::ostream& out, const RunTrace& trace) {
  out << "t,linf_error,lambda,synced,run_id,seed\n";
  for (std::size_t t = 0; t < trace.linf_error.size(); ++t) {
    out << fmt::format("{},{:.17g},{:.17g},{},{},{}\n", t, trace.linf_error[t], trace.lambda[t],
                       static_cast<int>(trace.synced[t]), trace.run_id, trace.seed);
  }
}

nlohmann::json run_config_to_json(const RunConfig& config) {
  nlohmann::json doc = {
      {"E", config.period.every},
      {"T", config.horizon},
      {"schedule", schedule_to_json(config.schedule)},
      {"seed", config.seed},
      {"record_locals", config.record_locals},
      {"verify_identities", config.verify_identities},
  };
  if (config.q_init) {
    doc["q_init"] = std::vector<double>(config.q_init->values().begin(),
                                        config.q_init->values().end());
  }
  return doc;
}

std::uint64_t config_hash(const nlohmann::json& doc) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : doc.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace fedq
