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

// Environment generators: random grid mazes with drift, Bernoulli rewards,
// and the two-state identity/swap instance.

#ifndef FEDQ_ENV_GEN_HPP_
#define FEDQ_ENV_GEN_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "fedq/mdp.hpp"

namespace fedq {

/// Maze actions, in kernel column order.
enum class MazeAction : std::size_t { kLeft = 0, kUp = 1, kRight = 2, kDown = 3 };
inline constexpr std::size_t kMazeActions = 4;

/// A grid_side x grid_side maze. Each agent draws its own wall cells
/// independently with probability `wall_density`; a move into a wall or off
/// the grid leaves the agent in place. The intended move carries
/// 1 - 3*drift of the mass and each of the other three moves carries `drift`.
struct MazeSpec {
  std::size_t grid_side = 5;
  double drift = 0.1;
  double wall_density = 0.2;
  std::uint64_t seed = 0;
  // Shared by every agent of the ensemble.
  double discount = 0.99;
  double reward_probability = 0.05;
};

/// Two states, one action, even K: odd-numbered agents (1-based) keep the
/// identity kernel, even-numbered agents get the swap kernel.
struct LowerBoundSpec {
  std::size_t num_agents = 2;
  std::array<double, 2> reward = {1.0, 0.0};
  double discount = 0.5;
};

/// Kernel of one maze with the given wall cells (row-major cell index).
Matrix maze_kernel(std::size_t grid_side, double drift, const std::vector<bool>& walls);

/// Wall layout of agent k under `spec`.
std::vector<bool> maze_walls(const MazeSpec& spec, std::size_t agent);

/// Each entry independently 1 with probability p, else 0.
std::vector<double> make_bernoulli_reward(std::uint64_t seed, double p, std::size_t size);

Ensemble make_maze_ensemble(const MazeSpec& spec, std::size_t num_agents);

/// One maze (agent 0's layout) replicated K times.
Ensemble make_homogeneous_ensemble(const MazeSpec& spec, std::size_t num_agents);

/// Throws ConfigError for odd K or a reward with (I - Pbar)R = 0 or Pbar R = 0.
Ensemble make_lower_bound_ensemble(const LowerBoundSpec& spec);

MazeSpec maze_spec_from_json(const nlohmann::json& doc);
nlohmann::json maze_spec_to_json(const MazeSpec& spec);
LowerBoundSpec lower_bound_spec_from_json(const nlohmann::json& doc);
nlohmann::json lower_bound_spec_to_json(const LowerBoundSpec& spec);

}  // namespace fedq

#endif  // FEDQ_ENV_GEN_HPP_
