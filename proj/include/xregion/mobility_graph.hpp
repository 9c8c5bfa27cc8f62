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
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xregion/common.hpp"
#include "xregion/data_ingest.hpp"

namespace xregion {

inline constexpr double kEarthRadiusKm = 6371.0;

struct KernelConfig {
  double bandwidth_km = 10.0;  // denominator of the exponent
  double cutoff_km = 50.0;     // kappa

  void validate() const;
};

// Great-circle distance in km.
double haversine_km(const GeoPoint& a, const GeoPoint& b);

// exp(-d / bandwidth) for d <= cutoff, 0 beyond.
double edge_weight(double distance_km, const KernelConfig& kernel);

struct LocationEdge {
  PoiIndex a = 0;  // a < b
  PoiIndex b = 0;
  double weight = 0.0;

  friend bool operator==(const LocationEdge&, const LocationEdge&) = default;
};

struct VisitCount {
  UserIndex user = 0;
  PoiIndex poi = 0;
  std::int32_t count = 0;

  friend bool operator==(const VisitCount&, const VisitCount&) = default;
};

struct WeightedPoi {
  PoiIndex poi = 0;
  double weight = 0.0;
};

struct WeightedUser {
  UserIndex user = 0;
  double weight = 0.0;
};

// Row-compressed user x POI matrix.
struct SparseRows {
  std::vector<std::int64_t> row_ptr;  // size rows + 1
  std::vector<PoiIndex> cols;
  std::vector<double> values;

  double row_sum(UserIndex row) const;
};

// Heterogeneous user/POI graph of one region, built from training check-ins.
//
// Primary data: entity tables, the three edge sets and visit counts. The
// neighborhood indexes, R and the category statistics are derived from them
// and rebuilt on load.
class MobilityGraph {
 public:
  static MobilityGraph build(const RegionDataset& train, const KernelConfig& kernel);

  static MobilityGraph load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  void write(std::ostream& out) const;
  static MobilityGraph read(std::istream& in);

  RegionTag region_tag() const { return region_tag_; }
  const KernelConfig& kernel() const { return kernel_; }
  std::size_t num_users() const { return user_ids_.size(); }
  std::size_t num_pois() const { return pois_.size(); }
  std::size_t num_categories() const { return categories_.size(); }

  const std::vector<std::string>& user_ids() const { return user_ids_; }
  const std::vector<Poi>& pois() const { return pois_; }
  const std::vector<std::string>& categories() const { return categories_; }
  int poi_category(PoiIndex l) const { return poi_category_[static_cast<std::size_t>(l)]; }

  std::optional<UserIndex> find_user(const std::string& id) const;
  std::optional<PoiIndex> find_poi(const std::string& id) const;

  // E_u (i < j), E_l, and E_r with multiplicities.
  const std::vector<std::pair<UserIndex, UserIndex>>& social_edges() const { return social_edges_; }
  const std::vector<LocationEdge>& location_edges() const { return location_edges_; }
  const std::vector<VisitCount>& visits() const { return visits_; }

  // Row-normalized affinity matrix R.
  const SparseRows& affinity() const { return affinity_; }
  double affinity(UserIndex u, PoiIndex l) const;

  // N_u: social neighbours of a user.
  const std::vector<UserIndex>& social_neighbors(UserIndex u) const { return social_nbrs_[u]; }
  // N_l: users who checked in at a POI.
  const std::vector<UserIndex>& visitors(PoiIndex l) const { return visitors_[l]; }
  // S_u: POIs a user checked in at.
  const std::vector<PoiIndex>& visited(UserIndex u) const { return visited_[u]; }
  // S_l: spatial neighbours with edge weights.
  const std::vector<WeightedPoi>& spatial_neighbors(PoiIndex l) const { return spatial_nbrs_[l]; }

  std::int64_t checkin_count(UserIndex u) const { return user_totals_[u]; }
  std::int64_t poi_checkin_count(PoiIndex l) const { return poi_totals_[l]; }

  // p^u over categories (indexed like categories()). Throws on unknown user
  // or a user without training check-ins.
  std::vector<double> user_category_dist(UserIndex u) const;
  std::vector<double> user_category_dist(const std::string& user_id) const;

  // p^{u}_{(l)} for each l in visited(u), aligned with visited(u).
  const std::vector<double>& visited_weights(UserIndex u) const { return visited_w_[u]; }
  // p^{l}_{(u)} for each u in visitors(l), aligned with visitors(l).
  const std::vector<double>& visitor_weights(PoiIndex l) const { return visitor_w_[l]; }
  std::vector<WeightedUser> poi_user_affinity(PoiIndex l) const;

  friend bool operator==(const MobilityGraph& a, const MobilityGraph& b);

 private:
  void rebuild_indexes();

  RegionTag region_tag_ = RegionTag::kSource;
  KernelConfig kernel_;
  std::vector<std::string> user_ids_;
  std::vector<Poi> pois_;
  std::vector<std::string> categories_;
  std::vector<int> poi_category_;
  std::vector<std::pair<UserIndex, UserIndex>> social_edges_;
  std::vector<LocationEdge> location_edges_;
  std::vector<VisitCount> visits_;  // sorted by (user, poi)

  SparseRows affinity_;
  std::vector<std::vector<UserIndex>> social_nbrs_;
  std::vector<std::vector<UserIndex>> visitors_;
  std::vector<std::vector<PoiIndex>> visited_;
  std::vector<std::vector<WeightedPoi>> spatial_nbrs_;
  std::vector<std::int64_t> user_totals_;
  std::vector<std::int64_t> poi_totals_;
  std::vector<std::vector<std::int64_t>> user_cat_counts_;
  std::vector<std::vector<double>> visited_w_;
  std::vector<std::vector<double>> visitor_w_;
};

}  // namespace xregion
