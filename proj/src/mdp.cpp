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

#include "fedq/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include <fmt/core.h>

#include "fedq/errors.hpp"

namespace fedq {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ConfigError(fmt::format("matrix data has {} entries, expected {}x{}",
                                  data_.size(), rows, cols));
  }
}

QTable::QTable(Shape shape, double fill)
    : shape_(shape), values_(shape.pairs(), fill) {}

QTable::QTable(Shape shape, std::vector<double> values)
    : shape_(shape), values_(std::move(values)) {
  if (values_.size() != shape_.pairs()) {
    throw ConfigError(fmt::format("Q-table has {} entries, shape needs {}",
                                  values_.size(), shape_.pairs()));
  }
}

TabularMdp::TabularMdp(Shape shape, Matrix kernel, std::vector<double> reward,
                       double discount)
    : shape_(shape),
      kernel_(std::move(kernel)),
      reward_(std::move(reward)),
      discount_(discount) {
  if (shape_.num_states == 0 || shape_.num_actions == 0) {
    throw ConfigError("MDP needs at least one state and one action");
  }
  if (kernel_.rows() != shape_.pairs() || kernel_.cols() != shape_.num_states) {
    throw ConfigError(fmt::format("kernel is {}x{}, expected {}x{}", kernel_.rows(),
                                  kernel_.cols(), shape_.pairs(), shape_.num_states));
  }
  if (reward_.size() != shape_.pairs()) {
    throw ConfigError(fmt::format("reward has {} entries, expected {}", reward_.size(),
                                  shape_.pairs()));
  }
  // gamma = 0 is accepted for testing; gamma = 1 has no bounded fixed point.
  if (!(discount_ >= 0.0 && discount_ < 1.0)) {
    throw ConfigError(fmt::format("discount {} outside [0, 1)", discount_));
  }
  for (std::size_t i = 0; i < shape_.pairs(); ++i) {
    double sum = 0.0;
    for (double p : kernel_.row(i)) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw ConfigError(fmt::format("kernel row {} has entry {} outside [0,1]", i, p));
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kStochasticTolerance) {
      throw ConfigError(fmt::format("kernel row {} sums to {:.17g}", i, sum));
    }
    if (!(reward_[i] >= 0.0 && reward_[i] <= 1.0)) {
      throw ConfigError(fmt::format("reward {} at pair {} outside [0,1]", reward_[i], i));
    }
  }
}

namespace {

const std::vector<TabularMdp>& check_compatible(const std::vector<TabularMdp>& agents) {
  if (agents.empty()) throw ConfigError("ensemble needs at least one agent");
  const TabularMdp& first = agents.front();
  for (std::size_t k = 1; k < agents.size(); ++k) {
    const TabularMdp& other = agents[k];
    if (!(other.shape() == first.shape())) {
      throw ConfigError(fmt::format("agent {} shape differs from agent 0", k));
    }
    if (other.discount() != first.discount()) {
      throw ConfigError(fmt::format("agent {} discount differs from agent 0", k));
    }
    if (!std::equal(other.reward().begin(), other.reward().end(),
                    first.reward().begin())) {
      throw ConfigError(fmt::format("agent {} reward differs from agent 0", k));
    }
  }
  return agents;
}

TabularMdp make_global(const std::vector<TabularMdp>& agents) {
  const TabularMdp& first = check_compatible(agents).front();
  return TabularMdp(first.shape(), global_kernel(agents),
                    std::vector<double>(first.reward().begin(), first.reward().end()),
                    first.discount());
}

}  // namespace

Ensemble::Ensemble(std::vector<TabularMdp> agents)
    : agents_(std::move(agents)),
      global_(make_global(agents_)),
      kappa_inf_(heterogeneity(agents_, global_.kernel(), HeterogeneityNorm::kMaxEntry)),
      kappa_l1_(heterogeneity(agents_, global_.kernel(), HeterogeneityNorm::kL1)) {}

Matrix global_kernel(std::span<const TabularMdp> agents) {
  if (agents.empty()) throw ConfigError("global kernel of an empty ensemble");
  const Matrix& first = agents.front().kernel();
  // Mean taken as first + mean of offsets, which is exact when all agents agree.
  Matrix offset(first.rows(), first.cols());
  for (const TabularMdp& agent : agents) {
    const Matrix& p = agent.kernel();
    if (p.rows() != first.rows() || p.cols() != first.cols()) {
      throw ConfigError("agent kernels differ in shape");
    }
    for (std::size_t i = 0; i < p.rows(); ++i) {
      for (std::size_t j = 0; j < p.cols(); ++j) offset(i, j) += p(i, j) - first(i, j);
    }
  }
  const double k = static_cast<double>(agents.size());
  Matrix mean(first.rows(), first.cols());
  for (std::size_t i = 0; i < mean.rows(); ++i) {
    for (std::size_t j = 0; j < mean.cols(); ++j) mean(i, j) = first(i, j) + offset(i, j) / k;
  }
  return mean;
}

double heterogeneity(std::span<const TabularMdp> agents, const Matrix& global,
                     HeterogeneityNorm norm) {
  double worst = 0.0;
  for (const TabularMdp& agent : agents) {
    const Matrix& p = agent.kernel();
    if (p.rows() != global.rows() || p.cols() != global.cols()) {
      throw ConfigError("agent kernel shape differs from global kernel");
    }
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < p.cols(); ++j) {
        const double gap = std::abs(global(i, j) - p(i, j));
        row = norm == HeterogeneityNorm::kMaxEntry ? std::max(row, gap) : row + gap;
      }
      worst = std::max(worst, row);
    }
  }
  return worst;
}

double heterogeneity(const Ensemble& ensemble, HeterogeneityNorm norm) {
  return norm == HeterogeneityNorm::kMaxEntry ? ensemble.kappa_inf()
                                              : ensemble.kappa_l1();
}

void greedy_value(const QTable& q, std::span<double> out) {
  const Shape& shape = q.shape();
  for (std::size_t s = 0; s < shape.num_states; ++s) {
    double best = q(s, 0);
    for (std::size_t a = 1; a < shape.num_actions; ++a) best = std::max(best, q(s, a));
    out[s] = best;
  }
}

std::vector<double> greedy_value(const QTable& q) {
  std::vector<double> v(q.shape().num_states);
  greedy_value(q, v);
  return v;
}

namespace {

void bellman_into(const TabularMdp& mdp, std::span<const double> v, QTable& out) {
  const Matrix& p = mdp.kernel();
  const double gamma = mdp.discount();
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double expect = 0.0;
    std::span<const double> row = p.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) expect += row[j] * v[j];
    out[i] = mdp.reward()[i] + gamma * expect;
  }
}

}  // namespace

QTable bellman_apply(const TabularMdp& mdp, const QTable& q) {
  if (!(q.shape() == mdp.shape())) throw ConfigError("Q-table shape mismatch");
  QTable out(mdp.shape());
  bellman_into(mdp, greedy_value(q), out);
  return out;
}

QTable optimal_q(const TabularMdp& mdp, double tolerance, std::size_t max_iters) {
  if (!(tolerance > 0.0)) throw ConfigError("value-iteration tolerance must be > 0");
  const double gamma = mdp.discount();
  QTable q(mdp.shape(), std::vector<double>(mdp.reward().begin(), mdp.reward().end()));
  if (gamma == 0.0) return q;

  const double stop = tolerance * (1.0 - gamma) / gamma;
  QTable next(mdp.shape());
  std::vector<double> v(mdp.shape().num_states);
  double change = 0.0;
  for (std::size_t it = 0; it < max_iters; ++it) {
    greedy_value(q, v);
    bellman_into(mdp, v, next);
    change = linf_error(next, q);
    std::swap(q, next);
    if (change <= stop) return q;
  }
  throw NumericalError(
      fmt::format("value iteration did not converge in {} sweeps (last change {:.3g})",
                  max_iters, change),
      change);
}

double linf_error(const QTable& q, const QTable& q_star) {
  if (q.size() != q_star.size()) throw ConfigError("Q-table shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    worst = std::max(worst, std::abs(q_star[i] - q[i]));
  }
  return worst;
}

}  // namespace fedq
