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

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "xregion/common.hpp"

namespace xregion {

struct GeoPoint {
  double lat = 0.0;  // degrees, [-90, 90]
  double lon = 0.0;  // degrees, [-180, 180]

  bool valid() const;
};

struct Checkin {
  std::string user_id;
  std::string poi_id;
  std::int64_t timestamp = 0;  // seconds since epoch

  friend bool operator==(const Checkin&, const Checkin&) = default;
};

struct Poi {
  std::string poi_id;
  GeoPoint location;
  std::string category;  // primary (first-listed) category
};

using SocialEdge = std::pair<std::string, std::string>;  // first < second

// One region's entities and events. Users and POIs are kept sorted by id,
// social edges are canonical (first < second), sorted and unique.
struct RegionDataset {
  RegionTag region_tag = RegionTag::kSource;
  std::vector<std::string> users;
  std::vector<Poi> pois;
  std::vector<Checkin> checkins;
  std::vector<SocialEdge> social_edges;

  bool has_user(const std::string& id) const;
  const Poi* find_poi(const std::string& id) const;
  // Throws DataError on dangling references or unsorted entity tables.
  void validate() const;
};

// Column names located through the header row.
struct CheckinFormat {
  char delimiter = ',';
  std::string user_column = "user_id";
  std::string poi_column = "poi_id";
  std::string timestamp_column = "timestamp";
  std::string lat_column = "lat";
  std::string lon_column = "lon";
  std::string category_column = "category";
  // Multi-category fields are split on this and the first label kept.
  char category_separator = '|';
};

struct ParsedCheckins {
  std::vector<Checkin> checkins;  // file order
  std::vector<Poi> pois;          // sorted by poi_id
  std::size_t rows_read = 0;
  std::size_t malformed_rows = 0;
};

// Parses a check-in table. Malformed rows are skipped and counted; an
// unreadable file or more than half the rows malformed is a DataError.
ParsedCheckins parse_checkins(const std::filesystem::path& path,
                              const CheckinFormat& format = {});

// Two-column undirected friendship list with a header row. Self-loops are
// dropped and duplicates collapsed.
std::vector<SocialEdge> parse_social(const std::filesystem::path& path,
                                     char delimiter = ',');

// Accepts integer epoch seconds or ISO-8601 "YYYY-MM-DD[T ]hh:mm:ss[Z|+hh:mm]".
// Returns false on malformed input.
bool parse_timestamp(const std::string& text, std::int64_t* out);

RegionDataset make_region(ParsedCheckins parsed, std::vector<SocialEdge> social,
                          RegionTag tag);

struct FilterThresholds {
  int min_poi_checkins = 10;
  int min_user_checkins = 10;
  int min_user_connections = 5;

  static FilterThresholds source_defaults() { return {10, 10, 5}; }
  static FilterThresholds target_defaults() { return {5, 5, 2}; }
};

// Drops POIs, then users, below the thresholds and removes dangling
// references. The POI->user pass repeats until nothing changes, so the result
// is a fixpoint. Throws DataError("region too sparse") when nothing survives.
RegionDataset filter_region(const RegionDataset& raw, const FilterThresholds& thresholds);

struct SplitFractions {
  double train = 0.7;
  double validation = 0.1;
  double test = 0.2;
};

// Views over one region that share the entity tables.
struct SplitDataset {
  RegionDataset train;
  RegionDataset validation;
  RegionDataset test;
};

// Sorts check-ins by (timestamp, user_id, poi_id) and cuts once globally at
// floor(train*n) and floor((train+validation)*n).
SplitDataset temporal_split(const RegionDataset& ds, const SplitFractions& fractions = {});

// Throws DataError if the two regions share any user or POI id.
void check_disjoint(const RegionDataset& a, const RegionDataset& b);

}  // namespace xregion
