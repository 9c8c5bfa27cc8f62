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
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

#include "xregion/config.hpp"

namespace xregion {

// One region after ingestion, filtering, splitting and graph construction.
struct PreparedRegion {
  RegionDataset filtered;
  SplitDataset split;
  MobilityGraph graph;
};

PreparedRegion prepare_region(const RegionDataset& raw, const FilterThresholds& thresholds,
                              const SplitFractions& fractions, const KernelConfig& kernel);

// Reads, filters and splits both regions named in the config.
struct PreparedPair {
  PreparedRegion source;
  PreparedRegion target;
};
PreparedPair prepare_from_files(const RunConfig& config);

// Summary of a prepared region (entity and edge counts).
std::string region_summary_json(const PreparedRegion& region);

// Subcommands. Each returns normally on success and throws Error /
// ConfigError on failure.
void cmd_build_graph(const RunConfig& config);
void cmd_train(const RunConfig& config, const std::optional<std::filesystem::path>& resume);
void cmd_evaluate(const RunConfig& config, const std::filesystem::path& checkpoint,
                  const std::string& which);
void cmd_recommend(const RunConfig& config, const std::filesystem::path& checkpoint,
                   const std::string& user_id, int k, std::ostream& out);
void cmd_gen_synth(const RunConfig& config);

}  // namespace xregion
