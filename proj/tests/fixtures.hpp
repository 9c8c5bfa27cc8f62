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

#include <random>
#include <string>

#include "xregion/data_ingest.hpp"
#include "xregion/mobility_graph.hpp"
#include "xregion/pipeline.hpp"
#include "xregion/synthetic_gen.hpp"

namespace xregion::testing {

inline std::string id(const char* prefix, int i) { return prefix + std::to_string(i); }

// A small region: `users` users and `pois` POIs a few km apart, each user with
// 2-3 check-ins and a ring of friendships plus one chord.
inline RegionDataset tiny_region(int users, int pois, std::uint64_t seed,
                                 RegionTag tag = RegionTag::kTarget) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  RegionDataset ds;
  ds.region_tag = tag;
  for (int i = 0; i < users; ++i) ds.users.push_back(id("u", i));
  for (int l = 0; l < pois; ++l) {
    ds.pois.push_back({id("p", l), {45.0 + 0.03 * l + jitter(rng), 7.0 + jitter(rng)},
                       l % 2 == 0 ? "cafe" : "park"});
  }
  std::int64_t t = 1000;
  for (int i = 0; i < users; ++i) {
    const int visits = 2 + (i % 2);
    for (int v = 0; v < visits; ++v) {
      const int l = static_cast<int>((i + v * 2 + rng() % 2) % pois);
      ds.checkins.push_back({id("u", i), id("p", l), t++});
    }
  }
  for (int i = 0; i < users; ++i) {
    std::string a = id("u", i), b = id("u", (i + 1) % users);
    if (a > b) std::swap(a, b);
    ds.social_edges.emplace_back(a, b);
  }
  if (users > 3) ds.social_edges.emplace_back(id("u", 0), id("u", 2));
  std::sort(ds.social_edges.begin(), ds.social_edges.end());
  ds.social_edges.erase(std::unique(ds.social_edges.begin(), ds.social_edges.end()),
                        ds.social_edges.end());
  std::sort(ds.checkins.begin(), ds.checkins.end(),
            [](const Checkin& a, const Checkin& b) { return a.timestamp < b.timestamp; });
  ds.validate();
  return ds;
}

inline MobilityGraph tiny_graph(int users, int pois, std::uint64_t seed,
                                RegionTag tag = RegionTag::kTarget) {
  return MobilityGraph::build(tiny_region(users, pois, seed, tag), KernelConfig{});
}

// A small generated source/target pair, prepared with permissive filters.
inline SynthSpec small_spec(std::uint64_t seed) {
  SynthSpec spec;
  spec.source = {120, 60, 1200, 0.08, 0.005, {40.7, -74.0}};
  spec.target = {50, 40, 400, 0.15, 0.01, {34.0, -118.2}};
  spec.categories = 6;
  spec.groups = 3;
  spec.seed = seed;
  return spec;
}

struct SmallPair {
  PreparedRegion source;
  PreparedRegion target;
};

inline SmallPair small_pair(std::uint64_t seed) {
  const auto data = generate(small_spec(seed));
  const FilterThresholds loose{1, 1, 1};
  return {prepare_region(data.source, loose, {}, {}), prepare_region(data.target, loose, {}, {})};
}

}  // namespace xregion::testing
