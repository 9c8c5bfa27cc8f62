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

#include "xregion/synthetic_gen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "xregion/mobility_graph.hpp"
#include "xregion/rng.hpp"

namespace xregion {
namespace {

std::string padded(const std::string& prefix, int i, int count) {
  const int width = static_cast<int>(std::to_string(std::max(count - 1, 0)).size());
  std::ostringstream s;
  s << prefix << std::setw(width) << std::setfill('0') << i;
  return s.str();
}

std::vector<double> softmax(const std::vector<double>& z) {
  const double top = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) total += p[i] = std::exp(z[i] - top);
  for (double& v : p) v /= total;
  return p;
}

std::vector<std::vector<double>> preference_matrix(const SynthSpec& spec, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<std::vector<double>> m;
  for (int g = 0; g < spec.groups; ++g) {
    std::vector<double> z(static_cast<std::size_t>(spec.categories));
    for (double& v : z) v = spec.sharpness * n(rng);
    m.push_back(softmax(z));
  }
  return m;
}

// Great-circle destination from `from` after distance_km along bearing.
GeoPoint destination(const GeoPoint& from, double bearing, double distance_km) {
  const double rad = std::numbers::pi / 180.0;
  const double d = distance_km / kEarthRadiusKm;
  const double lat1 = from.lat * rad;
  const double lon1 = from.lon * rad;
  const double lat2 = std::asin(std::sin(lat1) * std::cos(d) + std::cos(lat1) * std::sin(d) * std::cos(bearing));
  const double lon2 = lon1 + std::atan2(std::sin(bearing) * std::sin(d) * std::cos(lat1),
                                        std::cos(d) - std::sin(lat1) * std::sin(lat2));
  return {lat2 / rad, lon2 / rad};
}

std::vector<int> top_categories(const std::vector<double>& pref, int n) {
  std::vector<int> idx(pref.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return pref[static_cast<std::size_t>(a)] > pref[static_cast<std::size_t>(b)]; });
  idx.resize(static_cast<std::size_t>(std::min<int>(n, static_cast<int>(idx.size()))));
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct RegionDraw {
  RegionDataset dataset;
  std::vector<std::string> users;
  std::vector<int> groups;
};

RegionDraw draw_region(const SynthSpec& spec, const SynthRegionSpec& rs, const std::string& prefix,
                       const std::vector<std::vector<double>>& pref, const std::vector<std::string>& categories,
                       RegionTag tag, const SeedStream& stream, std::uint64_t region) {
  RegionDraw out;
  // Category centres on a grid around the region centre.
  const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(spec.categories))));
  std::vector<GeoPoint> centers;
  for (int c = 0; c < spec.categories; ++c) {
    const double east = (c % side - (side - 1) / 2.0) * spec.center_spacing_km;
    const double north = (c / side - (side - 1) / 2.0) * spec.center_spacing_km;
    const GeoPoint mid = destination(rs.center, 0.0, north);
    centers.push_back(destination(mid, std::numbers::pi / 2.0, east));
  }

  auto layout_rng = stream.engine({region, 0});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::lognormal_distribution<double> pop(0.0, spec.popularity_sigma);
  std::vector<Poi> pois;
  std::vector<std::vector<int>> by_category(static_cast<std::size_t>(spec.categories));
  std::vector<double> popularity;
  for (int l = 0; l < rs.pois; ++l) {
    const int c = l % spec.categories;
    const double r = spec.cluster_radius_km * std::sqrt(unit(layout_rng)) * 0.999;
    const double bearing = 2.0 * std::numbers::pi * unit(layout_rng);
    pois.push_back({padded(prefix + "p", l, rs.pois), destination(centers[static_cast<std::size_t>(c)], bearing, r),
                    categories[static_cast<std::size_t>(c)]});
    by_category[static_cast<std::size_t>(c)].push_back(l);
    popularity.push_back(pop(layout_rng));
  }

  for (int u = 0; u < rs.users; ++u) {
    out.users.push_back(padded(prefix + "u", u, rs.users));
    out.groups.push_back(u % spec.groups);
  }

  ParsedCheckins parsed;
  const int base = rs.checkins / rs.users;
  const int extra = rs.checkins % rs.users;
  for (int u = 0; u < rs.users; ++u) {
    auto rng = stream.engine({region, 1, static_cast<std::uint64_t>(u)});
    const auto& p = pref[static_cast<std::size_t>(out.groups[static_cast<std::size_t>(u)])];
    std::discrete_distribution<int> cat(p.begin(), p.end());
    std::uniform_int_distribution<std::int64_t> when(spec.time_start, spec.time_start + spec.time_span - 1);
    const int n = base + (u < extra ? 1 : 0);
    std::vector<std::int64_t> times;
    for (int i = 0; i < n; ++i) times.push_back(when(rng));
    std::sort(times.begin(), times.end());
    for (int i = 0; i < n; ++i) {
      const auto& members = by_category[static_cast<std::size_t>(cat(rng))];
      std::vector<double> w;
      for (int l : members) w.push_back(popularity[static_cast<std::size_t>(l)]);
      std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
      const int l = members[pick(rng)];
      parsed.checkins.push_back({out.users[static_cast<std::size_t>(u)], pois[static_cast<std::size_t>(l)].poi_id,
                                 times[static_cast<std::size_t>(i)]});
    }
  }
  std::set<std::string> used;
  for (const auto& c : parsed.checkins) used.insert(c.poi_id);
  for (const auto& p : pois) {
    if (used.count(p.poi_id)) parsed.pois.push_back(p);
  }
  parsed.rows_read = parsed.checkins.size();

  auto social_rng = stream.engine({region, 2});
  std::vector<SocialEdge> social;
  std::vector<int> degree(static_cast<std::size_t>(rs.users), 0);
  for (int i = 0; i < rs.users; ++i) {
    for (int j = i + 1; j < rs.users; ++j) {
      const bool same = out.groups[static_cast<std::size_t>(i)] == out.groups[static_cast<std::size_t>(j)];
      if (unit(social_rng) < (same ? rs.p_within : rs.p_between)) {
        social.emplace_back(out.users[static_cast<std::size_t>(i)], out.users[static_cast<std::size_t>(j)]);
        ++degree[static_cast<std::size_t>(i)];
        ++degree[static_cast<std::size_t>(j)];
      }
    }
  }
  for (int i = 0; i < rs.users; ++i) {
    if (degree[static_cast<std::size_t>(i)] > 0) continue;
    std::vector<int> mates;
    for (int j = 0; j < rs.users; ++j) {
      if (j != i && out.groups[static_cast<std::size_t>(j)] == out.groups[static_cast<std::size_t>(i)]) mates.push_back(j);
    }
    if (mates.empty()) continue;
    const int j = mates[std::uniform_int_distribution<std::size_t>(0, mates.size() - 1)(social_rng)];
    social.emplace_back(out.users[static_cast<std::size_t>(std::min(i, j))],
                        out.users[static_cast<std::size_t>(std::max(i, j))]);
    ++degree[static_cast<std::size_t>(i)];
    ++degree[static_cast<std::size_t>(j)];
  }
  out.dataset = make_region(std::move(parsed), std::move(social), tag);
  return out;
}

}  // namespace

void SynthSpec::validate() const {
  for (const auto* r : {&source, &target}) {
    if (r->users < 1 || r->pois < 1 || r->checkins < 1) throw ConfigError("synthetic sizes and budgets must be positive");
    if (r->checkins < r->users) throw ConfigError("synthetic budget must give every user a check-in");
    if (!(r->p_within >= 0.0 && r->p_within <= 1.0 && r->p_between >= 0.0 && r->p_between <= 1.0)) {
      throw ConfigError("friendship probabilities must lie in [0, 1]");
    }
    if (!r->center.valid()) throw ConfigError("synthetic region centre is not a valid coordinate");
    if (groups > r->users) throw ConfigError("more latent groups than users");
    if (r->pois < categories) throw ConfigError("every category needs at least one POI");
  }
  if (categories < 1 || groups < 1) throw ConfigError("categories and groups must be >= 1");
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in [0, 1]");
  if (!(cluster_radius_km > 0.0) || !(center_spacing_km > 2.0 * cluster_radius_km)) {
    throw ConfigError("cluster radius must be positive and centres farther apart than two radii");
  }
  if (time_span < 1) throw ConfigError("time span must be positive");
}

SynthOutput generate(const SynthSpec& spec) {
  spec.validate();
  const SeedStream stream(spec.seed, "generator");
  SynthOutput out;
  for (int c = 0; c < spec.categories; ++c) out.truth.categories.push_back(padded("cat", c, spec.categories));

  auto pref_rng = stream.engine({0});
  out.truth.source_pref = preference_matrix(spec, pref_rng);
  const auto fresh = preference_matrix(spec, pref_rng);
  out.truth.target_pref = out.truth.source_pref;
  for (std::size_t g = 0; g < fresh.size(); ++g) {
    for (std::size_t c = 0; c < fresh[g].size(); ++c) {
      out.truth.target_pref[g][c] = spec.rho * out.truth.source_pref[g][c] + (1.0 - spec.rho) * fresh[g][c];
    }
  }

  RegionDraw src = draw_region(spec, spec.source, "s_", out.truth.source_pref, out.truth.categories,
                               RegionTag::kSource, stream, 1);
  RegionDraw tgt = draw_region(spec, spec.target, "t_", out.truth.target_pref, out.truth.categories,
                               RegionTag::kTarget, stream, 2);
  out.truth.source_users = src.users;
  out.truth.target_users = tgt.users;
  out.truth.source_groups = src.groups;
  out.truth.target_groups = tgt.groups;
  for (int g : src.groups) out.truth.source_preferred.push_back(top_categories(out.truth.source_pref[static_cast<std::size_t>(g)], 3));
  for (int g : tgt.groups) out.truth.target_preferred.push_back(top_categories(out.truth.target_pref[static_cast<std::size_t>(g)], 3));
  out.source = std::move(src.dataset);
  out.target = std::move(tgt.dataset);
  return out;
}

SynthFiles write_synthetic(const SynthOutput& out, const SynthSpec& spec,
                           const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  SynthFiles files{dir / "source_checkins.csv", dir / "source_social.csv", dir / "target_checkins.csv",
                   dir / "target_social.csv", dir / "ground_truth.json"};
  auto write_region = [](const RegionDataset& ds, const std::filesystem::path& checkins,
                         const std::filesystem::path& social) {
    std::ofstream c(checkins);
    if (!c) throw Error("cannot write " + checkins.string());
    c << "user_id,poi_id,timestamp,lat,lon,category\n";
    c << std::setprecision(17);
    for (const Checkin& k : ds.checkins) {
      const Poi* p = ds.find_poi(k.poi_id);
      c << k.user_id << ',' << k.poi_id << ',' << k.timestamp << ',' << p->location.lat << ','
        << p->location.lon << ',' << p->category << '\n';
    }
    std::ofstream s(social);
    if (!s) throw Error("cannot write " + social.string());
    s << "user_a,user_b\n";
    for (const auto& [a, b] : ds.social_edges) s << a << ',' << b << '\n';
  };
  write_region(out.source, files.source_checkins, files.source_social);
  write_region(out.target, files.target_checkins, files.target_social);

  nlohmann::ordered_json j;
  j["seed"] = spec.seed;
  j["rho"] = spec.rho;
  j["categories"] = out.truth.categories;
  j["source_preferences"] = out.truth.source_pref;
  j["target_preferences"] = out.truth.target_pref;
  auto region = [&](const RegionDataset& ds, const std::vector<std::string>& users,
                    const std::vector<int>& groups, const std::vector<std::vector<int>>& preferred) {
    nlohmann::ordered_json r;
    r["users"] = ds.users.size();
    r["pois"] = ds.pois.size();
    r["checkins"] = ds.checkins.size();
    r["social_edges"] = ds.social_edges.size();
    nlohmann::ordered_json members = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < users.size(); ++i) {
      members[users[i]] = {{"group", groups[i]}, {"preferred_categories", preferred[i]}};
    }
    r["user_truth"] = members;
    return r;
  };
  j["source"] = region(out.source, out.truth.source_users, out.truth.source_groups, out.truth.source_preferred);
  j["target"] = region(out.target, out.truth.target_users, out.truth.target_groups, out.truth.target_preferred);
  std::ofstream t(files.truth);
  if (!t) throw Error("cannot write " + files.truth.string());
  t << j.dump(1) << '\n';
  return files;
}

double matrix_correlation(const std::vector<std::vector<double>>& a,
                          const std::vector<std::vector<double>>& b) {
  std::vector<double> x;
  std::vector<double> y;
  for (const auto& r : a) x.insert(x.end(), r.begin(), r.end());
  for (const auto& r : b) y.insert(y.end(), r.begin(), r.end());
  if (x.size() != y.size() || x.size() < 2) throw Error("correlation needs two equally-shaped matrices");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace xregion
