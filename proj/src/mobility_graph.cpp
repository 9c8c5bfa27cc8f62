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

#include "xregion/mobility_graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <unordered_map>

#include "xregion/binary_io.hpp"

namespace xregion {
namespace {

constexpr char kGraphMagic[8] = {'X', 'R', 'G', 'R', 'A', 'P', 'H', '\0'};
constexpr std::uint32_t kGraphVersion = 1;

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace

void KernelConfig::validate() const {
  if (!(bandwidth_km > 0.0) || !(cutoff_km > 0.0)) {
    throw ConfigError("kernel bandwidth and cutoff must be positive");
  }
}

double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  const double dlat = radians(b.lat - a.lat);
  const double dlon = radians(b.lon - a.lon);
  const double s = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(radians(a.lat)) * std::cos(radians(b.lat)) * std::sin(dlon / 2) *
                       std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(s)));
}

double edge_weight(double distance_km, const KernelConfig& kernel) {
  if (distance_km > kernel.cutoff_km) return 0.0;
  return std::exp(-distance_km / kernel.bandwidth_km);
}

double SparseRows::row_sum(UserIndex row) const {
  double s = 0.0;
  for (auto i = row_ptr[row]; i < row_ptr[row + 1]; ++i) s += values[static_cast<std::size_t>(i)];
  return s;
}

MobilityGraph MobilityGraph::build(const RegionDataset& train, const KernelConfig& kernel) {
  kernel.validate();
  if (train.users.empty() || train.pois.empty()) throw DataError("cannot build graph from empty dataset");

  MobilityGraph g;
  g.region_tag_ = train.region_tag;
  g.kernel_ = kernel;
  g.user_ids_ = train.users;
  g.pois_ = train.pois;
  std::set<std::string> cats;
  for (const Poi& p : g.pois_) cats.insert(p.category);
  g.categories_.assign(cats.begin(), cats.end());
  for (const Poi& p : g.pois_) {
    g.poi_category_.push_back(static_cast<int>(
        std::lower_bound(g.categories_.begin(), g.categories_.end(), p.category) -
        g.categories_.begin()));
  }

  for (const auto& [a, b] : train.social_edges) {
    auto ia = g.find_user(a);
    auto ib = g.find_user(b);
    if (ia && ib) g.social_edges_.emplace_back(std::min(*ia, *ib), std::max(*ia, *ib));
  }
  std::sort(g.social_edges_.begin(), g.social_edges_.end());
  g.social_edges_.erase(std::unique(g.social_edges_.begin(), g.social_edges_.end()),
                        g.social_edges_.end());

  // Per-user time-ordered trajectories.
  struct Visit {
    std::int64_t t;
    PoiIndex poi;
  };
  std::vector<std::vector<Visit>> traj(g.user_ids_.size());
  std::map<std::pair<UserIndex, PoiIndex>, std::int32_t> counts;
  for (const Checkin& c : train.checkins) {
    auto u = g.find_user(c.user_id);
    auto l = g.find_poi(c.poi_id);
    if (!u || !l) throw DataError("training check-in references unknown entity");
    traj[*u].push_back({c.timestamp, *l});
    ++counts[{*u, *l}];
  }
  for (const auto& [key, n] : counts) g.visits_.push_back({key.first, key.second, n});

  std::map<std::pair<PoiIndex, PoiIndex>, double> ledges;
  for (auto& t : traj) {
    std::stable_sort(t.begin(), t.end(), [](const Visit& x, const Visit& y) {
      return std::tie(x.t, x.poi) < std::tie(y.t, y.poi);
    });
    for (std::size_t i = 1; i < t.size(); ++i) {
      const PoiIndex a = std::min(t[i - 1].poi, t[i].poi);
      const PoiIndex b = std::max(t[i - 1].poi, t[i].poi);
      if (a == b || ledges.count({a, b})) continue;
      const double w = edge_weight(haversine_km(g.pois_[a].location, g.pois_[b].location), kernel);
      if (w > 0.0) ledges.emplace(std::make_pair(a, b), w);
    }
  }
  for (const auto& [key, w] : ledges) g.location_edges_.push_back({key.first, key.second, w});

  g.rebuild_indexes();
  return g;
}

void MobilityGraph::rebuild_indexes() {
  const std::size_t m = user_ids_.size();
  const std::size_t n = pois_.size();
  const std::size_t c = categories_.size();

  social_nbrs_.assign(m, {});
  for (const auto& [a, b] : social_edges_) {
    social_nbrs_[a].push_back(b);
    social_nbrs_[b].push_back(a);
  }
  for (auto& v : social_nbrs_) std::sort(v.begin(), v.end());

  spatial_nbrs_.assign(n, {});
  for (const LocationEdge& e : location_edges_) {
    spatial_nbrs_[e.a].push_back({e.b, e.weight});
    spatial_nbrs_[e.b].push_back({e.a, e.weight});
  }
  for (auto& v : spatial_nbrs_) {
    std::sort(v.begin(), v.end(), [](const WeightedPoi& x, const WeightedPoi& y) { return x.poi < y.poi; });
  }

  visitors_.assign(n, {});
  visited_.assign(m, {});
  user_totals_.assign(m, 0);
  poi_totals_.assign(n, 0);
  user_cat_counts_.assign(m, std::vector<std::int64_t>(c, 0));
  for (const VisitCount& v : visits_) {
    visited_[v.user].push_back(v.poi);
    visitors_[v.poi].push_back(v.user);
    user_totals_[v.user] += v.count;
    poi_totals_[v.poi] += v.count;
    user_cat_counts_[v.user][poi_category_[v.poi]] += v.count;
  }
  for (auto& v : visitors_) std::sort(v.begin(), v.end());

  affinity_ = {};
  affinity_.row_ptr.assign(m + 1, 0);
  for (const VisitCount& v : visits_) {
    affinity_.cols.push_back(v.poi);
    affinity_.values.push_back(static_cast<double>(v.count) / static_cast<double>(user_totals_[v.user]));
    ++affinity_.row_ptr[v.user + 1];
  }
  for (std::size_t u = 0; u < m; ++u) affinity_.row_ptr[u + 1] += affinity_.row_ptr[u];

  visited_w_.assign(m, {});
  for (std::size_t u = 0; u < m; ++u) {
    for (PoiIndex l : visited_[u]) {
      visited_w_[u].push_back(static_cast<double>(user_cat_counts_[u][poi_category_[l]]) /
                              static_cast<double>(user_totals_[u]));
    }
  }
  visitor_w_.assign(n, {});
  for (std::size_t l = 0; l < n; ++l) {
    const int cat = poi_category_[l];
    std::int64_t denom = 0;
    for (UserIndex u : visitors_[l]) denom += user_cat_counts_[u][cat];
    for (UserIndex u : visitors_[l]) {
      visitor_w_[l].push_back(static_cast<double>(user_cat_counts_[u][cat]) / static_cast<double>(denom));
    }
  }
}

std::optional<UserIndex> MobilityGraph::find_user(const std::string& id) const {
  auto it = std::lower_bound(user_ids_.begin(), user_ids_.end(), id);
  if (it == user_ids_.end() || *it != id) return std::nullopt;
  return static_cast<UserIndex>(it - user_ids_.begin());
}

std::optional<PoiIndex> MobilityGraph::find_poi(const std::string& id) const {
  auto it = std::lower_bound(pois_.begin(), pois_.end(), id,
                             [](const Poi& p, const std::string& v) { return p.poi_id < v; });
  if (it == pois_.end() || it->poi_id != id) return std::nullopt;
  return static_cast<PoiIndex>(it - pois_.begin());
}

double MobilityGraph::affinity(UserIndex u, PoiIndex l) const {
  const auto begin = affinity_.cols.begin() + affinity_.row_ptr[u];
  const auto end = affinity_.cols.begin() + affinity_.row_ptr[u + 1];
  auto it = std::lower_bound(begin, end, l);
  if (it == end || *it != l) return 0.0;
  return affinity_.values[static_cast<std::size_t>(it - affinity_.cols.begin())];
}

std::vector<double> MobilityGraph::user_category_dist(UserIndex u) const {
  if (u < 0 || static_cast<std::size_t>(u) >= user_ids_.size()) throw Error("unknown user index");
  if (user_totals_[u] == 0) throw Error("user " + user_ids_[u] + " has no training check-ins");
  std::vector<double> p(categories_.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = static_cast<double>(user_cat_counts_[u][k]) / static_cast<double>(user_totals_[u]);
  }
  return p;
}

std::vector<double> MobilityGraph::user_category_dist(const std::string& user_id) const {
  auto u = find_user(user_id);
  if (!u) throw Error("unknown user " + user_id);
  return user_category_dist(*u);
}

std::vector<WeightedUser> MobilityGraph::poi_user_affinity(PoiIndex l) const {
  std::vector<WeightedUser> out;
  for (std::size_t i = 0; i < visitors_[l].size(); ++i) out.push_back({visitors_[l][i], visitor_w_[l][i]});
  return out;
}

bool operator==(const MobilityGraph& a, const MobilityGraph& b) {
  if (a.region_tag_ != b.region_tag_ || a.kernel_.bandwidth_km != b.kernel_.bandwidth_km ||
      a.kernel_.cutoff_km != b.kernel_.cutoff_km || a.user_ids_ != b.user_ids_ ||
      a.categories_ != b.categories_ || a.poi_category_ != b.poi_category_ ||
      a.social_edges_ != b.social_edges_ || a.location_edges_ != b.location_edges_ ||
      a.visits_ != b.visits_ || a.pois_.size() != b.pois_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.pois_.size(); ++i) {
    const Poi& p = a.pois_[i];
    const Poi& q = b.pois_[i];
    if (p.poi_id != q.poi_id || p.category != q.category || p.location.lat != q.location.lat ||
        p.location.lon != q.location.lon) {
      return false;
    }
  }
  return a.affinity_.values == b.affinity_.values && a.affinity_.cols == b.affinity_.cols;
}

void MobilityGraph::write(std::ostream& out) const {
  BinaryWriter w(out);
  w.put_bytes(kGraphMagic, sizeof(kGraphMagic));
  w.put<std::uint32_t>(kGraphVersion);
  w.put<std::uint8_t>(region_tag_ == RegionTag::kSource ? 0 : 1);
  w.put<double>(kernel_.bandwidth_km);
  w.put<double>(kernel_.cutoff_km);

  w.put<std::uint64_t>(user_ids_.size());
  for (const auto& u : user_ids_) w.put_string(u);
  w.put<std::uint64_t>(categories_.size());
  for (const auto& c : categories_) w.put_string(c);
  w.put<std::uint64_t>(pois_.size());
  for (std::size_t i = 0; i < pois_.size(); ++i) {
    w.put_string(pois_[i].poi_id);
    w.put<double>(pois_[i].location.lat);
    w.put<double>(pois_[i].location.lon);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(poi_category_[i]));
  }
  w.put<std::uint64_t>(social_edges_.size());
  for (const auto& [a, b] : social_edges_) {
    w.put<std::int32_t>(a);
    w.put<std::int32_t>(b);
  }
  w.put<std::uint64_t>(location_edges_.size());
  for (const auto& e : location_edges_) {
    w.put<std::int32_t>(e.a);
    w.put<std::int32_t>(e.b);
    w.put<double>(e.weight);
  }
  w.put<std::uint64_t>(visits_.size());
  for (const auto& v : visits_) {
    w.put<std::int32_t>(v.user);
    w.put<std::int32_t>(v.poi);
    w.put<std::int32_t>(v.count);
  }
  // R in CSR form.
  w.put<std::uint64_t>(affinity_.row_ptr.size());
  for (auto p : affinity_.row_ptr) w.put<std::int64_t>(p);
  w.put<std::uint64_t>(affinity_.cols.size());
  for (std::size_t i = 0; i < affinity_.cols.size(); ++i) {
    w.put<std::int32_t>(affinity_.cols[i]);
    w.put<double>(affinity_.values[i]);
  }
  if (!w.ok()) throw Error("failed writing graph");
}

MobilityGraph MobilityGraph::read(std::istream& in) {
  BinaryReader r(in);
  char magic[sizeof(kGraphMagic)];
  r.read(magic, sizeof(magic));
  if (std::memcmp(magic, kGraphMagic, sizeof(magic)) != 0) throw DataError("not a graph file");
  const auto version = r.get<std::uint32_t>();
  if (version != kGraphVersion) throw DataError("unsupported graph format version " + std::to_string(version));

  MobilityGraph g;
  g.region_tag_ = r.get<std::uint8_t>() == 0 ? RegionTag::kSource : RegionTag::kTarget;
  g.kernel_.bandwidth_km = r.get<double>();
  g.kernel_.cutoff_km = r.get<double>();
  g.user_ids_.resize(r.get<std::uint64_t>());
  for (auto& u : g.user_ids_) u = r.get_string();
  g.categories_.resize(r.get<std::uint64_t>());
  for (auto& c : g.categories_) c = r.get_string();
  g.pois_.resize(r.get<std::uint64_t>());
  g.poi_category_.resize(g.pois_.size());
  for (std::size_t i = 0; i < g.pois_.size(); ++i) {
    g.pois_[i].poi_id = r.get_string();
    g.pois_[i].location.lat = r.get<double>();
    g.pois_[i].location.lon = r.get<double>();
    const auto cat = r.get<std::uint32_t>();
    if (cat >= g.categories_.size()) throw DataError("corrupt category index in graph file");
    g.poi_category_[i] = static_cast<int>(cat);
    g.pois_[i].category = g.categories_[cat];
  }
  const auto m = static_cast<std::int32_t>(g.user_ids_.size());
  const auto n = static_cast<std::int32_t>(g.pois_.size());
  g.social_edges_.resize(r.get<std::uint64_t>());
  for (auto& [a, b] : g.social_edges_) {
    a = r.get<std::int32_t>();
    b = r.get<std::int32_t>();
    if (a < 0 || b < 0 || a >= m || b >= m) throw DataError("corrupt social edge in graph file");
  }
  g.location_edges_.resize(r.get<std::uint64_t>());
  for (auto& e : g.location_edges_) {
    e.a = r.get<std::int32_t>();
    e.b = r.get<std::int32_t>();
    e.weight = r.get<double>();
    if (e.a < 0 || e.b < 0 || e.a >= n || e.b >= n) throw DataError("corrupt location edge in graph file");
  }
  g.visits_.resize(r.get<std::uint64_t>());
  for (auto& v : g.visits_) {
    v.user = r.get<std::int32_t>();
    v.poi = r.get<std::int32_t>();
    v.count = r.get<std::int32_t>();
    if (v.user < 0 || v.poi < 0 || v.user >= m || v.poi >= n || v.count <= 0) {
      throw DataError("corrupt visit record in graph file");
    }
  }
  g.rebuild_indexes();

  // The stored R must agree with the one derived from the visit counts.
  SparseRows stored;
  stored.row_ptr.resize(r.get<std::uint64_t>());
  for (auto& p : stored.row_ptr) p = r.get<std::int64_t>();
  const auto nnz = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < nnz; ++i) {
    stored.cols.push_back(r.get<std::int32_t>());
    stored.values.push_back(r.get<double>());
  }
  if (stored.row_ptr != g.affinity_.row_ptr || stored.cols != g.affinity_.cols ||
      stored.values != g.affinity_.values) {
    throw DataError("affinity matrix in graph file is inconsistent with its visit counts");
  }
  return g;
}

void MobilityGraph::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write(out);
}

MobilityGraph MobilityGraph::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read graph file " + path.string());
  return read(in);
}

}  // namespace xregion
