// Copyright 2026 The xregion Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xregion/config.hpp"
#include "xregion/log.hpp"
#include "xregion/pipeline.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-region POI recommendation: graph building, training and evaluation."};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "JSON run configuration")->required();
    sub->add_option("--set", overrides, "Override a config key, e.g. --set train.max_epochs=5");
  };

  auto* build = app.add_subcommand("build-graph", "Ingest, filter, split and build both region graphs");
  add_common(build);

  std::string resume;
  auto* train = app.add_subcommand("train", "Train on the configured source and target regions");
  add_common(train);
  train->add_option("--resume", resume, "Checkpoint to resume from");

  std::string checkpoint;
  std::string split = "test";
  auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint on the target region");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--split", split, "test or validation");

  std::string user;
  int k = 10;
  auto* rec = app.add_subcommand("recommend", "Print top-k POIs for one target-region user");
  add_common(rec);
  rec->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  rec->add_option("--user", user, "User id")->required();
  rec->add_option("-k", k, "List length");

  auto* gen = app.add_subcommand("gen-synth", "Write a synthetic source/target dataset pair");
  add_common(gen);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    xregion::RunConfig config = xregion::load_config(config_path, overrides);
    xregion::apply_environment(&config);
    if (build->parsed()) {
      xregion::cmd_build_graph(config);
    } else if (train->parsed()) {
      xregion::cmd_train(config, resume.empty() ? std::nullopt : std::optional<std::filesystem::path>(resume));
    } else if (eval->parsed()) {
      xregion::cmd_evaluate(config, checkpoint, split);
    } else if (rec->parsed()) {
      xregion::cmd_recommend(config, checkpoint, user, k, std::cout);
    } else if (gen->parsed()) {
      xregion::cmd_gen_synth(config);
    }
  } catch (const xregion::ConfigError& e) {
    xregion::logger().error("{}", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    xregion::logger().error("{}", e.what());
    return kExitRuntime;
  }
  return 0;
}
