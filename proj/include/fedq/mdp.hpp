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

// Tabular MDPs, agent ensembles and the Bellman machinery of the global MDP.
//
// State-action pairs are laid out (s,a)-major: pair index = s * |A| + a.
// Kernels are dense (|S||A|) x |S| row-stochastic matrices in that order.

#ifndef FEDQ_MDP_HPP_
#define FEDQ_MDP_HPP_

#include <cstddef>
#include <span>
#include <vector>

namespace fedq {

/// Tolerance on kernel row sums and on derived-kernel consistency.
inline constexpr double kStochasticTolerance = 1e-12;

struct Shape {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;

  std::size_t pairs() const { return num_states * num_actions; }
  std::size_t pair(std::size_t s, std::size_t a) const {
    return s * num_actions + a;
  }
  bool operator==(const Shape&) const = default;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }
  std::span<const double> data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Real-valued table over state-action pairs. Also holds error tables.
class QTable {
 public:
  QTable() = default;
  explicit QTable(Shape shape, double fill = 0.0);
  QTable(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }

  double& operator()(std::size_t s, std::size_t a) { return values_[shape_.pair(s, a)]; }
  double operator()(std::size_t s, std::size_t a) const {
    return values_[shape_.pair(s, a)];
  }
  double& operator[](std::size_t pair) { return values_[pair]; }
  double operator[](std::size_t pair) const { return values_[pair]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool operator==(const QTable&) const = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

/// One agent's environment <S, A, P, gamma, R>. Validated on construction.
class TabularMdp {
 public:
  /// Throws ConfigError when the kernel is not row-stochastic, rewards fall
  /// outside [0,1], or the discount is outside [0,1).
  TabularMdp(Shape shape, Matrix kernel, std::vector<double> reward, double discount);

  const Shape& shape() const { return shape_; }
  const Matrix& kernel() const { return kernel_; }
  std::span<const double> reward() const { return reward_; }
  double discount() const { return discount_; }

 private:
  Shape shape_;
  Matrix kernel_;
  std::vector<double> reward_;
  double discount_;
};

enum class HeterogeneityNorm {
  kMaxEntry,  // sup over (k,s,a) of the largest entrywise gap
  kL1,        // sup over (k,s,a) of the row l1 distance
};

/// K agents sharing (S, A, R, gamma), plus the derived global MDP.
class Ensemble {
 public:
  /// Throws ConfigError on an empty list or any mismatch in shape, reward or
  /// discount across agents.
  explicit Ensemble(std::vector<TabularMdp> agents);

  std::size_t size() const { return agents_.size(); }
  const std::vector<TabularMdp>& agents() const { return agents_; }
  const TabularMdp& agent(std::size_t k) const { return agents_.at(k); }
  const TabularMdp& global() const { return global_; }

  const Shape& shape() const { return global_.shape(); }
  std::span<const double> reward() const { return global_.reward(); }
  double discount() const { return global_.discount(); }

  double kappa_inf() const { return kappa_inf_; }
  double kappa_l1() const { return kappa_l1_; }

 private:
  std::vector<TabularMdp> agents_;
  TabularMdp global_;
  double kappa_inf_;
  double kappa_l1_;
};

/// Entrywise mean of the agents' kernels.
Matrix global_kernel(std::span<const TabularMdp> agents);

double heterogeneity(const Ensemble& ensemble, HeterogeneityNorm norm);
double heterogeneity(std::span<const TabularMdp> agents, const Matrix& global,
                     HeterogeneityNorm norm);

/// (s,a) -> R(s,a) + gamma * sum_s' P(s'|s,a) max_a' q(s',a').
QTable bellman_apply(const TabularMdp& mdp, const QTable& q);

/// Optimal Q-function by value iteration. Stops once a sweep changes the
/// table by at most tolerance*(1-gamma)/gamma, so the returned table is within
/// `tolerance` of the fixed point in sup norm. Throws NumericalError carrying
/// the last sweep change when `max_iters` sweeps are not enough.
QTable optimal_q(const TabularMdp& mdp, double tolerance = 1e-10,
                 std::size_t max_iters = 10'000'000);

/// Per-state maximum over actions.
std::vector<double> greedy_value(const QTable& q);
void greedy_value(const QTable& q, std::span<double> out);

double linf_error(const QTable& q, const QTable& q_star);

}  // namespace fedq

#endif  // FEDQ_MDP_HPP_
