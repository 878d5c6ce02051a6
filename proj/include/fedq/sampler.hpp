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

// Synchronous generative-model sampling. Every draw is a pure function of
// (master seed, agent, iteration, pair), so agents can be simulated in any
// order or on any number of threads and still see the same samples.

#ifndef FEDQ_SAMPLER_HPP_
#define FEDQ_SAMPLER_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "fedq/mdp.hpp"

namespace fedq {

class RngStream {
 public:
  explicit RngStream(std::uint64_t master_seed) : master_seed_(master_seed) {}

  std::uint64_t master_seed() const { return master_seed_; }

  /// Uniform in [0,1) for one (agent, iteration, pair) coordinate.
  double uniform(std::uint64_t agent, std::uint64_t iteration, std::uint64_t pair) const;

 private:
  std::uint64_t master_seed_;
};

/// One successor state per (s,a) for agent k at iteration t.
struct SampleDraw {
  std::uint64_t iteration = 0;
  std::size_t agent = 0;
  Shape shape;
  std::vector<std::uint32_t> successors;
};

/// Inverse-CDF lookup over a kernel row, cumulating in ascending state order.
/// Rounding slack past the last cumulative value goes to the last state with
/// positive mass.
std::uint32_t sample_row(std::span<const double> row, double u);

/// Per-agent cumulative rows restricted to their support, built once per run.
class GenerativeModel {
 public:
  explicit GenerativeModel(const Ensemble& ensemble);

  const Shape& shape() const { return shape_; }
  std::size_t num_agents() const { return agents_.size(); }

  /// Fills `out` (resized as needed) with agent k's draw at iteration t.
  void draw(std::size_t agent, std::uint64_t iteration, const RngStream& rng,
            SampleDraw& out) const;

 private:
  struct Row {
    std::vector<std::uint32_t> states;
    std::vector<double> cumulative;
  };
  Shape shape_;
  std::vector<std::vector<Row>> agents_;
};

SampleDraw sample_draw(const Ensemble& ensemble, std::size_t agent, std::uint64_t iteration,
                       const RngStream& rng);

/// One-hot (|S||A|) x |S| matrix of the draw.
Matrix empirical_matrix(const SampleDraw& draw);

/// (s,a) -> v(successor(s,a)).
std::vector<double> apply_empirical(const SampleDraw& draw, std::span<const double> v);

}  // namespace fedq

#endif  // FEDQ_SAMPLER_HPP_
