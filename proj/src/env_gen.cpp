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

#include "fedq/env_gen.hpp"

#include <cmath>
#include <random>
#include <string>
#include <utility>

#include <fmt/core.h>

#include "fedq/errors.hpp"
#include "fedq/seeding.hpp"

namespace fedq {
namespace {

constexpr std::array<std::array<int, 2>, kMazeActions> kMoves = {{
    {0, -1},  // left
    {-1, 0},  // up
    {0, 1},   // right
    {1, 0},   // down
}};

void check_maze_spec(const MazeSpec& spec) {
  if (spec.grid_side < 2) throw ConfigError("maze grid_side must be >= 2");
  if (!(spec.drift >= 0.0 && 3.0 * spec.drift <= 1.0)) {
    throw ConfigError(
        fmt::format("drift {} cannot be normalized: 3*drift must lie in [0,1]", spec.drift));
  }
  if (!(spec.wall_density >= 0.0 && spec.wall_density <= 1.0)) {
    throw ConfigError(fmt::format("wall_density {} outside [0,1]", spec.wall_density));
  }
  if (!(spec.reward_probability >= 0.0 && spec.reward_probability <= 1.0)) {
    throw ConfigError(
        fmt::format("reward_probability {} outside [0,1]", spec.reward_probability));
  }
}

std::vector<double> maze_reward(const MazeSpec& spec) {
  const std::size_t cells = spec.grid_side * spec.grid_side;
  return make_bernoulli_reward(derive_seed(spec.seed, {kRewardStream}),
                               spec.reward_probability, cells * kMazeActions);
}

}  // namespace

Matrix maze_kernel(std::size_t grid_side, double drift, const std::vector<bool>& walls) {
  const std::size_t cells = grid_side * grid_side;
  if (walls.size() != cells) throw ConfigError("wall layout size does not match grid");
  const auto side = static_cast<int>(grid_side);
  auto successor = [&](std::size_t cell, std::size_t move) {
    const int r = static_cast<int>(cell) / side + kMoves[move][0];
    const int c = static_cast<int>(cell) % side + kMoves[move][1];
    if (r < 0 || r >= side || c < 0 || c >= side) return cell;
    const auto next = static_cast<std::size_t>(r * side + c);
    return walls[next] ? cell : next;
  };

  const double intended = 1.0 - 3.0 * drift;
  Matrix kernel(cells * kMazeActions, cells);
  for (std::size_t s = 0; s < cells; ++s) {
    for (std::size_t a = 0; a < kMazeActions; ++a) {
      std::span<double> row = kernel.row(s * kMazeActions + a);
      for (std::size_t move = 0; move < kMazeActions; ++move) {
        row[successor(s, move)] += move == a ? intended : drift;
      }
    }
  }
  return kernel;
}

std::vector<bool> maze_walls(const MazeSpec& spec, std::size_t agent) {
  check_maze_spec(spec);
  std::mt19937_64 gen(derive_seed(spec.seed, {kMazeStream, agent}));
  std::vector<bool> walls(spec.grid_side * spec.grid_side);
  for (std::size_t i = 0; i < walls.size(); ++i) walls[i] = to_unit(gen()) < spec.wall_density;
  return walls;
}

std::vector<double> make_bernoulli_reward(std::uint64_t seed, double p, std::size_t size) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(fmt::format("Bernoulli p={} outside [0,1]", p));
  std::mt19937_64 gen(seed);
  std::vector<double> reward(size);
  for (double& r : reward) r = to_unit(gen()) < p ? 1.0 : 0.0;
  return reward;
}

Ensemble make_maze_ensemble(const MazeSpec& spec, std::size_t num_agents) {
  check_maze_spec(spec);
  if (num_agents == 0) throw ConfigError("maze ensemble needs K >= 1");
  const Shape shape{spec.grid_side * spec.grid_side, kMazeActions};
  const std::vector<double> reward = maze_reward(spec);
  std::vector<TabularMdp> agents;
  agents.reserve(num_agents);
  for (std::size_t k = 0; k < num_agents; ++k) {
    agents.emplace_back(shape, maze_kernel(spec.grid_side, spec.drift, maze_walls(spec, k)),
                        reward, spec.discount);
  }
  return Ensemble(std::move(agents));
}

Ensemble make_homogeneous_ensemble(const MazeSpec& spec, std::size_t num_agents) {
  check_maze_spec(spec);
  if (num_agents == 0) throw ConfigError("maze ensemble needs K >= 1");
  const Shape shape{spec.grid_side * spec.grid_side, kMazeActions};
  const TabularMdp mdp(shape, maze_kernel(spec.grid_side, spec.drift, maze_walls(spec, 0)),
                       maze_reward(spec), spec.discount);
  return Ensemble(std::vector<TabularMdp>(num_agents, mdp));
}

Ensemble make_lower_bound_ensemble(const LowerBoundSpec& spec) {
  if (spec.num_agents < 2 || spec.num_agents % 2 != 0) {
    throw ConfigError(
        fmt::format("lower-bound construction needs an even K >= 2, got {}", spec.num_agents));
  }
  const auto& r = spec.reward;
  // (I - Pbar)R = (r0 - r1)/2 * (1, -1) and Pbar R = (r0 + r1)/2 * (1, 1).
  if (r[0] == r[1] || r[0] + r[1] == 0.0) {
    throw ConfigError("lower-bound reward must have r0 != r1 and r0 + r1 != 0");
  }
  const Shape shape{2, 1};
  const std::vector<double> reward(r.begin(), r.end());
  const Matrix identity(2, 2, {1.0, 0.0, 0.0, 1.0});
  const Matrix swap(2, 2, {0.0, 1.0, 1.0, 0.0});
  std::vector<TabularMdp> agents;
  for (std::size_t k = 0; k < spec.num_agents; ++k) {
    agents.emplace_back(shape, k % 2 == 0 ? identity : swap, reward, spec.discount);
  }
  return Ensemble(std::move(agents));
}

MazeSpec maze_spec_from_json(const nlohmann::json& doc) {
  MazeSpec spec;
  try {
    spec.grid_side = doc.value("grid_side", spec.grid_side);
    spec.drift = doc.value("drift", spec.drift);
    spec.wall_density = doc.value("wall_density", spec.wall_density);
    spec.seed = doc.value("seed", spec.seed);
    spec.discount = doc.value("discount", spec.discount);
    spec.reward_probability = doc.value("reward_probability", spec.reward_probability);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed maze spec: ") + e.what());
  }
  check_maze_spec(spec);
  return spec;
}

nlohmann::json maze_spec_to_json(const MazeSpec& spec) {
  return {{"grid_side", spec.grid_side}, {"drift", spec.drift},
          {"wall_density", spec.wall_density}, {"seed", spec.seed},
          {"discount", spec.discount}, {"reward_probability", spec.reward_probability}};
}

LowerBoundSpec lower_bound_spec_from_json(const nlohmann::json& doc) {
  LowerBoundSpec spec;
  try {
    spec.num_agents = doc.value("num_agents", spec.num_agents);
    spec.reward = doc.value("reward", spec.reward);
    spec.discount = doc.value("discount", spec.discount);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed lower-bound spec: ") + e.what());
  }
  return spec;
}

nlohmann::json lower_bound_spec_to_json(const LowerBoundSpec& spec) {
  return {{"num_agents", spec.num_agents}, {"reward", spec.reward}, {"discount", spec.discount}};
}

}  // namespace fedq
