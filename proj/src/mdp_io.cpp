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

#include "fedq/mdp_io.hpp"

#include <string>
#include <utility>
#include <vector>

#include "fedq/errors.hpp"

namespace fedq {

nlohmann::json ensemble_to_json(const Ensemble& ensemble) {
  nlohmann::json kernels = nlohmann::json::array();
  for (const TabularMdp& agent : ensemble.agents()) {
    std::span<const double> data = agent.kernel().data();
    kernels.push_back(std::vector<double>(data.begin(), data.end()));
  }
  return {
      {"num_states", ensemble.shape().num_states},
      {"num_actions", ensemble.shape().num_actions},
      {"gamma", ensemble.discount()},
      {"reward", std::vector<double>(ensemble.reward().begin(), ensemble.reward().end())},
      {"kernels", std::move(kernels)},
  };
}

Ensemble ensemble_from_json(const nlohmann::json& doc) {
  try {
    const Shape shape{doc.at("num_states").get<std::size_t>(),
                      doc.at("num_actions").get<std::size_t>()};
    const double gamma = doc.at("gamma").get<double>();
    const auto reward = doc.at("reward").get<std::vector<double>>();
    std::vector<TabularMdp> agents;
    for (const auto& kernel : doc.at("kernels")) {
      agents.emplace_back(shape,
                          Matrix(shape.pairs(), shape.num_states,
                                 kernel.get<std::vector<double>>()),
                          reward, gamma);
    }
    return Ensemble(std::move(agents));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed ensemble document: ") + e.what());
  }
}

}  // namespace fedq
