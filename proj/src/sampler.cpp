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

#include "fedq/sampler.hpp"

#include <algorithm>

#include "fedq/errors.hpp"
#include "fedq/seeding.hpp"

namespace fedq {

double RngStream::uniform(std::uint64_t agent, std::uint64_t iteration,
                          std::uint64_t pair) const {
  std::uint64_t h = mix64(master_seed_ ^ kSampleStream);
  h = mix64(h ^ agent);
  h = mix64(h ^ iteration);
  h = mix64(h ^ pair);
  return to_unit(h);
}

std::uint32_t sample_row(std::span<const double> row, double u) {
  double cumulative = 0.0;
  std::uint32_t last_positive = 0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (row[j] <= 0.0) continue;
    cumulative += row[j];
    last_positive = static_cast<std::uint32_t>(j);
    if (u < cumulative) return last_positive;
  }
  return last_positive;
}

GenerativeModel::GenerativeModel(const Ensemble& ensemble) : shape_(ensemble.shape()) {
  agents_.reserve(ensemble.size());
  for (const TabularMdp& mdp : ensemble.agents()) {
    std::vector<Row> rows(shape_.pairs());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::span<const double> p = mdp.kernel().row(i);
      double cumulative = 0.0;
      for (std::size_t j = 0; j < p.size(); ++j) {
        if (p[j] <= 0.0) continue;
        cumulative += p[j];
        rows[i].states.push_back(static_cast<std::uint32_t>(j));
        rows[i].cumulative.push_back(cumulative);
      }
    }
    agents_.push_back(std::move(rows));
  }
}

void GenerativeModel::draw(std::size_t agent, std::uint64_t iteration, const RngStream& rng,
                           SampleDraw& out) const {
  if (agent >= agents_.size()) throw ConfigError("agent index out of range");
  out.iteration = iteration;
  out.agent = agent;
  out.shape = shape_;
  out.successors.resize(shape_.pairs());
  const std::vector<Row>& rows = agents_[agent];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Row& row = rows[i];
    if (row.states.size() == 1) {
      out.successors[i] = row.states.front();
      continue;
    }
    const double u = rng.uniform(agent, iteration, i);
    // Same ascending-order cumulative sums as sample_row.
    auto it = std::upper_bound(row.cumulative.begin(), row.cumulative.end(), u);
    const std::size_t pos = it == row.cumulative.end()
                                ? row.cumulative.size() - 1
                                : static_cast<std::size_t>(it - row.cumulative.begin());
    out.successors[i] = row.states[pos];
  }
}

SampleDraw sample_draw(const Ensemble& ensemble, std::size_t agent, std::uint64_t iteration,
                       const RngStream& rng) {
  if (agent >= ensemble.size()) throw ConfigError("agent index out of range");
  const TabularMdp& mdp = ensemble.agent(agent);
  SampleDraw draw{iteration, agent, mdp.shape(), {}};
  draw.successors.resize(mdp.shape().pairs());
  for (std::size_t i = 0; i < draw.successors.size(); ++i) {
    draw.successors[i] = sample_row(mdp.kernel().row(i), rng.uniform(agent, iteration, i));
  }
  return draw;
}

Matrix empirical_matrix(const SampleDraw& draw) {
  Matrix m(draw.shape.pairs(), draw.shape.num_states);
  for (std::size_t i = 0; i < draw.successors.size(); ++i) m(i, draw.successors[i]) = 1.0;
  return m;
}

std::vector<double> apply_empirical(const SampleDraw& draw, std::span<const double> v) {
  if (v.size() != draw.shape.num_states) throw ConfigError("value table size mismatch");
  std::vector<double> out(draw.successors.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[draw.successors[i]];
  return out;
}

}  // namespace fedq
