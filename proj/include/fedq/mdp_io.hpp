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

// JSON form of an ensemble:
//   {"num_states": S, "num_actions": A, "gamma": g,
//    "reward": [S*A values, (s,a)-major],
//    "kernels": [[S*A*S values, row-major], ...one per agent]}

#ifndef FEDQ_MDP_IO_HPP_
#define FEDQ_MDP_IO_HPP_

#include <json.hpp>

#include "fedq/mdp.hpp"

namespace fedq {

nlohmann::json ensemble_to_json(const Ensemble& ensemble);

/// Throws ConfigError on missing fields or inconsistent sizes.
Ensemble ensemble_from_json(const nlohmann::json& doc);

}  // namespace fedq

#endif  // FEDQ_MDP_IO_HPP_
