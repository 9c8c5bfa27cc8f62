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

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xregion/data_ingest.hpp"
#include "xregion/evaluation.hpp"
#include "xregion/mobility_graph.hpp"
#include "xregion/ssml_trainer.hpp"
#include "xregion/synthetic_gen.hpp"

namespace xregion {

struct PathConfig {
  std::filesystem::path source_checkins;
  std::filesystem::path source_social;
  std::filesystem::path target_checkins;
  std::filesystem::path target_social;
  std::filesystem::path output_dir = "out";
};

struct RunConfig {
  PathConfig paths;
  FilterThresholds source_filter = FilterThresholds::source_defaults();
  FilterThresholds target_filter = FilterThresholds::target_defaults();
  SplitFractions split;
  KernelConfig kernel;
  TrainConfig train;  // includes model and transfer settings and the seed
  EvalOptions eval;
  SynthSpec synth;

  void validate() const;
};

// Parses a JSON document. Every key must be known; missing keys keep their
// defaults. Throws ConfigError naming the offending key.
RunConfig parse_config(const std::string& json_text,
                       const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::filesystem::path& path,
                      const std::vector<std::string>& overrides = {});
std::string config_json(const RunConfig& config);

// Applies XREGION_OUTPUT_DIR when set.
void apply_environment(RunConfig* config);

}  // namespace xregion
