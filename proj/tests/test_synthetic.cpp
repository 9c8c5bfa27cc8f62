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

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "xregion/mobility_graph.hpp"
#include "xregion/synthetic_gen.hpp"

using namespace xregion;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, double> category_histogram(const RegionDataset& ds) {
  std::map<std::string, double> h;
  for (const auto& c : ds.checkins) h[ds.find_poi(c.poi_id)->category] += 1.0;
  return h;
}

// Pearson chi-squared test of homogeneity for two histograms; returns p.
double homogeneity_p(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
  std::set<std::string> keys;
  double na = 0.0, nb = 0.0;
  for (const auto& [k, v] : a) keys.insert(k), na += v;
  for (const auto& [k, v] : b) keys.insert(k), nb += v;
  double stat = 0.0;
  for (const auto& k : keys) {
    const double oa = a.count(k) ? a.at(k) : 0.0;
    const double ob = b.count(k) ? b.at(k) : 0.0;
    const double col = oa + ob;
    const double ea = col * na / (na + nb);
    const double eb = col * nb / (na + nb);
    stat += (oa - ea) * (oa - ea) / ea + (ob - eb) * (ob - eb) / eb;
  }
  const boost::math::chi_squared dist(static_cast<double>(keys.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

SynthSpec symmetric_spec(std::uint64_t seed, double rho) {
  SynthSpec spec;
  spec.source = {300, 200, 3000, 0.05, 0.001, {40.7, -74.0}};
  spec.target = {300, 200, 3000, 0.05, 0.001, {34.0, -118.2}};
  spec.categories = 10;
  spec.groups = 5;
  spec.rho = rho;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_CASE("rho = 1 with identical budgets gives matching category histograms") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto out = generate(symmetric_spec(seed, 1.0));
    CHECK(out.truth.source_pref == out.truth.target_pref);
    CHECK(homogeneity_p(category_histogram(out.source), category_histogram(out.target)) > 0.01);
  }
}

TEST_CASE("rho = 0 gives uncorrelated preference matrices") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthSpec spec = symmetric_spec(seed, 0.0);
    spec.groups = 40;
    spec.categories = 50;
    spec.source.pois = spec.target.pois = 200;
    const auto out = generate(spec);
    CHECK(std::abs(matrix_correlation(out.truth.source_pref, out.truth.target_pref)) < 0.1);
  }
  const auto shared = generate(symmetric_spec(3, 0.9));
  CHECK(matrix_correlation(shared.truth.source_pref, shared.truth.target_pref) > 0.8);
}

TEST_CASE("generated regions respect budgets, ids and layout") {
  SynthSpec spec;
  spec.seed = 4;
  const auto out = generate(spec);
  CHECK(out.source.checkins.size() == 20000);
  CHECK(out.target.checkins.size() == 1500);
  CHECK_NOTHROW(check_disjoint(out.source, out.target));
  CHECK_NOTHROW(out.source.validate());
  CHECK_NOTHROW(out.target.validate());
  CHECK(out.truth.target_groups.size() == 300);

  // Same-category POIs lie within two cluster radii of each other; POIs of
  // different categories are at least the centre spacing minus two radii apart.
  for (const auto* ds : {&out.source, &out.target}) {
    for (std::size_t i = 0; i < ds->pois.size(); i += 7) {
      for (std::size_t j = i + 1; j < ds->pois.size(); j += 5) {
        const double d = haversine_km(ds->pois[i].location, ds->pois[j].location);
        if (ds->pois[i].category == ds->pois[j].category) {
          CHECK(d <= 2.0 * spec.cluster_radius_km);
        } else {
          CHECK(d >= spec.center_spacing_km - 2.0 * spec.cluster_radius_km - 1e-6);
        }
      }
    }
  }
  for (const auto& c : out.target.checkins) CHECK(c.timestamp >= spec.time_start);
}

TEST_CASE("fixed seed writes byte-identical files") {
  SynthSpec spec;
  spec.seed = 12;
  spec.source = {200, 80, 1000, 0.05, 0.001, {40.7, -74.0}};
  const auto base = std::filesystem::temp_directory_path() / "xregion_synth";
  std::filesystem::remove_all(base);
  const auto a = write_synthetic(generate(spec), spec, base / "a");
  const auto b = write_synthetic(generate(spec), spec, base / "b");
  for (auto [x, y] : {std::pair{a.source_checkins, b.source_checkins}, std::pair{a.target_social, b.target_social},
                      std::pair{a.truth, b.truth}}) {
    CHECK(slurp(x) == slurp(y));
    CHECK(!slurp(x).empty());
  }
  spec.seed = 13;
  const auto c = write_synthetic(generate(spec), spec, base / "c");
  CHECK(slurp(c.source_checkins) != slurp(a.source_checkins));
}

TEST_CASE("infeasible specs are rejected") {
  SynthSpec spec;
  spec.groups = 400;
  CHECK_THROWS_AS(generate(spec), ConfigError);
  spec = SynthSpec{};
  spec.rho = 1.5;
  CHECK_THROWS_AS(generate(spec), ConfigError);
  spec = SynthSpec{};
  spec.target.checkins = 0;
  CHECK_THROWS_AS(generate(spec), ConfigError);
}
