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


// Command-line front end: fedq <subcommand> [--config file] [--out dir]
// [--seed n] [--fast] [--threads n].

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedq/errors.hpp"
#include "fedq/harness.hpp"

namespace {

using fedq::ExperimentKind;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool fast = false;
};

void report_error(const std::string& type, const std::string& message) {
  const nlohmann::json doc = {{"error", type}, {"message", message}};
  std::cerr << doc.dump() << '\n';
}

int execute(ExperimentKind kind, const Options& opt) {
  fedq::ExperimentConfig config = fedq::default_config(kind, opt.fast);
  if (!opt.config.empty()) {
    std::ifstream in(opt.config);
    if (!in) throw fedq::ConfigError("cannot open config file " + opt.config);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw fedq::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    config = fedq::experiment_config_from_json(doc, config);
    config.kind = kind;
  }
  if (!opt.out.empty()) config.out_dir = opt.out;
  if (opt.seed) config.seed = *opt.seed;
  if (opt.threads) config.threads = *opt.threads;

  const nlohmann::json summary = fedq::run_experiment(config);
  std::cout << (config.out_dir / "summary.json").string() << '\n';
  if (kind == ExperimentKind::kVerifyAll && !summary["verification"]["ok"].get<bool>()) {
    report_error("verification_failed", "one or more checks failed; see verification.json");
    return 3;
  }
  if (kind == ExperimentKind::kLowerBoundCheck && !summary["lower_bound"]["pass"].get<bool>()) {
    report_error("verification_failed", "closed form and simulation disagree beyond 1e-10");
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated Q-learning simulator and verification harness"};
  app.set_version_flag("--version", fedq::kVersion);
  app.require_subcommand(1);

  Options opt;
  const std::pair<const char*, ExperimentKind> commands[] = {
      {"run", ExperimentKind::kSingleRun},
      {"sweep-e", ExperimentKind::kESweep},
      {"sweep-stepsize", ExperimentKind::kStepsizeSweep},
      {"two-phase", ExperimentKind::kTwoPhase},
      {"lower-bound", ExperimentKind::kLowerBoundCheck},
      {"verify", ExperimentKind::kVerifyAll},
  };
  std::optional<ExperimentKind> chosen;
  for (const auto& [name, kind] : commands) {
    CLI::App* sub = app.add_subcommand(name, "experiment kind " + fedq::to_string(kind));
    sub->add_option("--config", opt.config, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--seed", opt.seed, "master seed");
    sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--fast", opt.fast, "T=2000, 3 repeats, gamma=0.9");
    sub->callback([&chosen, kind = kind] { chosen = kind; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage", e.what());
    return 2;
  }

  try {
    return execute(*chosen, opt);
  } catch (const fedq::ConfigError& e) {
    report_error("config", e.what());
    return 2;
  } catch (const fedq::DomainError& e) {
    report_error("domain", e.what());
    return 2;
  } catch (const fedq::VerificationError& e) {
    report_error("verification", e.what());
    return 3;
  } catch (const std::exception& e) {
    report_error("runtime", e.what());
    return 1;
  }
}
