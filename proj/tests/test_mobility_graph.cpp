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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "xregion/mobility_graph.hpp"

using namespace xregion;

namespace {

// Latitude offset (degrees) of a point `km` north of the equator.
double north_deg(double km) { return km / kEarthRadiusKm * 180.0 / std::numbers::pi; }

RegionDataset region(std::vector<Poi> pois, std::vector<Checkin> checkins,
                     std::vector<SocialEdge> social = {}) {
  ParsedCheckins parsed;
  std::sort(pois.begin(), pois.end(), [](const Poi& a, const Poi& b) { return a.poi_id < b.poi_id; });
  parsed.pois = std::move(pois);
  parsed.checkins = std::move(checkins);
  return make_region(std::move(parsed), std::move(social), RegionTag::kTarget);
}

}  // namespace

TEST_CASE("haversine distances") {
  CHECK(haversine_km({0, 0}, {0, 0}) == 0.0);
  CHECK(haversine_km({0, 0}, {0, 1}) == doctest::Approx(111.195).epsilon(0.01 / 111.195));
  CHECK(haversine_km({0, 0}, {0, 180}) == doctest::Approx(20015.1).epsilon(0.1 / 20015.1));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> lat(-89.0, 89.0), lon(-179.0, 179.0);
  for (int i = 0; i < 500; ++i) {
    const GeoPoint a{lat(rng), lon(rng)}, b{lat(rng), lon(rng)}, c{lat(rng), lon(rng)};
    CHECK(haversine_km(a, b) == haversine_km(b, a));
    CHECK(haversine_km(a, c) <= (haversine_km(a, b) + haversine_km(b, c)) * (1 + 1e-9));
  }
}

TEST_CASE("edge weight kernel") {
  const KernelConfig k{10.0, 50.0};
  CHECK(edge_weight(0.0, k) == 1.0);
  CHECK(edge_weight(60.0, k) == 0.0);
  CHECK(edge_weight(10.0, k) == doctest::Approx(0.36788).epsilon(1e-5));
  CHECK(edge_weight(50.0, k) == doctest::Approx(std::exp(-5.0)));
  double prev = 1.0;
  for (double d = 0.0; d <= 70.0; d += 0.5) {
    CHECK(edge_weight(d, k) <= prev);
    prev = edge_weight(d, k);
  }
}

TEST_CASE("build_graph edges and affinity") {
  const std::vector<Poi> pois{{"l1", {0.0, 0.0}, "Cafe"},
                              {"l2", {north_deg(10.0), 0.0}, "Bar"},
                              {"l3", {north_deg(80.0), 0.0}, "Park"}};
  SUBCASE("10 km apart gives e^-1, beyond the cutoff no edge") {
    const auto g = MobilityGraph::build(region(pois, {{"u1", "l1", 1}, {"u1", "l2", 2}, {"u2", "l1", 3}, {"u2", "l3", 4}}),
                                        KernelConfig{});
    REQUIRE(g.location_edges().size() == 1);
    CHECK(g.location_edges()[0].a == *g.find_poi("l1"));
    CHECK(g.location_edges()[0].b == *g.find_poi("l2"));
    CHECK(g.location_edges()[0].weight == doctest::Approx(std::exp(-1.0)).epsilon(1e-9));
  }
  SUBCASE("row-normalized counts, repeated pairs collapse, self-pairs dropped") {
    const auto g = MobilityGraph::build(
        region(pois, {{"u1", "l1", 1}, {"u1", "l1", 2}, {"u1", "l2", 3}, {"u1", "l1", 4}, {"u1", "l2", 5}}), KernelConfig{});
    const auto u = *g.find_user("u1");
    CHECK(g.affinity(u, *g.find_poi("l1")) == doctest::Approx(0.6));
    CHECK(g.affinity(u, *g.find_poi("l2")) == doctest::Approx(0.4));
    CHECK(g.location_edges().size() == 1);
    CHECK(g.visits().size() == 2);

    const auto g2 = MobilityGraph::build(region(pois, {{"u1", "l1", 1}, {"u1", "l1", 2}, {"u1", "l1", 3}, {"u1", "l2", 4}}),
                                         KernelConfig{});
    CHECK(g2.affinity(0, *g2.find_poi("l1")) == 0.75);
    CHECK(g2.affinity(0, *g2.find_poi("l2")) == 0.25);
  }
  SUBCASE("a single check-in contributes no location edge") {
    const auto g = MobilityGraph::build(region(pois, {{"u1", "l1", 1}}), KernelConfig{});
    CHECK(g.location_edges().empty());
  }
}

TEST_CASE("category distributions") {
  const std::vector<Poi> pois{{"c1", {1, 1}, "Cafe"}, {"c2", {1, 1.01}, "Cafe"}, {"b1", {1, 1.02}, "Bar"},
                              {"k1", {1, 1.03}, "Park"}};
  const auto g = MobilityGraph::build(region(pois, {{"u1", "c1", 1}, {"u1", "b1", 2}, {"u1", "k1", 3}, {"u1", "k1", 4},
                                                    {"u2", "c1", 5}, {"u2", "c2", 6}, {"u3", "c1", 7}, {"u3", "c2", 8},
                                                    {"u3", "c1", 9}, {"u3", "c2", 10}}),
                                      KernelConfig{});
  const auto& cats = g.categories();
  const auto at = [&](const std::vector<double>& d, const std::string& c) {
    return d[static_cast<std::size_t>(std::find(cats.begin(), cats.end(), c) - cats.begin())];
  };
  const auto d1 = g.user_category_dist("u1");
  CHECK(at(d1, "Cafe") == 0.25);
  CHECK(at(d1, "Bar") == 0.25);
  CHECK(at(d1, "Park") == 0.5);
  CHECK(at(g.user_category_dist("u2"), "Cafe") == 1.0);
  CHECK_THROWS_WITH_AS(g.user_category_dist("nobody"), "unknown user nobody", Error);

  // c1 visitors: u1 (1 cafe check-in), u2 (2), u3 (4).
  const auto aff = g.poi_user_affinity(*g.find_poi("c1"));
  REQUIRE(aff.size() == 3);
  double total = 0.0;
  for (const auto& w : aff) total += w.weight;
  CHECK(total == doctest::Approx(1.0));
  CHECK(aff[0].weight == doctest::Approx(1.0 / 7.0));

  const auto single = g.poi_user_affinity(*g.find_poi("k1"));
  REQUIRE(single.size() == 1);
  CHECK(single[0].weight == 1.0);

  const auto g2 = MobilityGraph::build(region(pois, {{"u1", "c1", 1}, {"u1", "c2", 2}, {"u2", "c1", 3}, {"u2", "c2", 4},
                                                     {"u3", "c1", 5}, {"u3", "c1", 6}, {"u3", "c1", 7}, {"u4", "c1", 8}}),
                                       KernelConfig{});
  const auto even = g2.poi_user_affinity(*g2.find_poi("c2"));
  REQUIRE(even.size() == 2);
  CHECK(even[0].weight == 0.5);
  CHECK(even[1].weight == 0.5);
}

TEST_CASE("graph invariants on a generated region") {
  const auto pair = testing::small_pair(2);
  const auto& g = pair.target.graph;
  for (UserIndex u = 0; u < static_cast<UserIndex>(g.num_users()); ++u) {
    if (g.checkin_count(u) == 0) continue;
    CHECK(g.affinity().row_sum(u) == doctest::Approx(1.0).epsilon(1e-12));
    double p = 0.0;
    for (double v : g.user_category_dist(u)) p += v;
    CHECK(p == doctest::Approx(1.0));
  }
  std::size_t active = 0;
  for (UserIndex u = 0; u < static_cast<UserIndex>(g.num_users()); ++u) active += g.checkin_count(u) > 0;
  CHECK(g.location_edges().size() <= pair.target.split.train.checkins.size() - active);
  for (const auto& e : g.location_edges()) {
    CHECK(e.weight > 0.0);
    CHECK(e.weight <= 1.0);
    CHECK(e.a < e.b);
  }
  for (const auto& [a, b] : g.social_edges()) {
    const auto& n = g.social_neighbors(a);
    CHECK(std::find(n.begin(), n.end(), b) != n.end());
  }
}

TEST_CASE("graph files round-trip bit-exactly") {
  const auto g = testing::tiny_graph(6, 5, 4);
  const auto path = std::filesystem::temp_directory_path() / "xregion_graph_roundtrip.bin";
  g.save(path);
  const auto back = MobilityGraph::load(path);
  CHECK(back == g);
  CHECK(MobilityGraph::build(testing::tiny_region(6, 5, 4), KernelConfig{}) == g);

  std::ofstream(path, std::ios::binary) << "not a graph";
  CHECK_THROWS_AS(MobilityGraph::load(path), DataError);
}
