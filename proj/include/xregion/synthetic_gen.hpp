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

#include "xregion/common.hpp"
#include "xregion/data_ingest.hpp"

namespace xregion {

struct SynthRegionSpec {
  int users = 300;
  int pois = 200;
  int checkins = 1500;          // budget
  double p_within = 0.02;       // friendship probability inside a group
  double p_between = 0.001;     // across groups
  GeoPoint center{40.0, -74.0};
};

struct SynthSpec {
  SynthRegionSpec source{2000, 500, 20000, 0.02, 0.0005, {40.7, -74.0}};
  SynthRegionSpec target{300, 200, 1500, 0.1, 0.001, {34.0, -118.2}};
  int categories = 10;
  int groups = 5;
  double sharpness = 4.0;        // scale of the preference logits
  double rho = 0.9;              // shared-structure strength
  double cluster_radius_km = 5.0;
  double center_spacing_km = 60.0;
  double popularity_sigma = 0.5; // lognormal POI popularity
  std::int64_t time_start = 1'600'000'000;
  std::int64_t time_span = 180LL * 24 * 3600;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthTruth {
  std::vector<std::string> categories;
  std::vector<std::vector<double>> source_pref;  // groups x categories
  std::vector<std::vector<double>> target_pref;
  std::vector<int> source_groups;                // by generated user order
  std::vector<int> target_groups;
  std::vector<std::string> source_users;
  std::vector<std::string> target_users;
  std::vector<std::vector<int>> source_preferred;  // top categories per user
  std::vector<std::vector<int>> target_preferred;
};

struct SynthOutput {
  RegionDataset source;
  RegionDataset target;
  SynthTruth truth;
};

// Two regions with planted category-level group preferences; the target
// preference matrix is rho * source + (1 - rho) * fresh.
SynthOutput generate(const SynthSpec& spec);

struct SynthFiles {
  std::filesystem::path source_checkins;
  std::filesystem::path source_social;
  std::filesystem::path target_checkins;
  std::filesystem::path target_social;
  std::filesystem::path truth;
};

// Writes the two regions in the ingestion formats plus a JSON truth sidecar.
SynthFiles write_synthetic(const SynthOutput& out, const SynthSpec& spec,
                           const std::filesystem::path& dir);

// Pearson correlation of two equally-shaped matrices, flattened.
double matrix_correlation(const std::vector<std::vector<double>>& a,
                          const std::vector<std::vector<double>>& b);

}  // namespace xregion
