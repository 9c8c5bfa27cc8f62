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

#include "xregion/data_ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "xregion/log.hpp"

namespace xregion {
namespace {

std::vector<std::string> split_line(const std::string& line, char delimiter) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, delimiter)) fields.push_back(field);
  if (!line.empty() && line.back() == delimiter) fields.emplace_back();
  return fields;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

bool parse_double(const std::string& text, double* out) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, *out);
  return ec == std::errc() && ptr == end && std::isfinite(*out);
}

int column_index(const std::vector<std::string>& header, const std::string& name) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) return -1;
  return static_cast<int>(it - header.begin());
}

}  // namespace

bool GeoPoint::valid() const {
  return std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 && lat <= 90.0 &&
         lon >= -180.0 && lon <= 180.0;
}

bool RegionDataset::has_user(const std::string& id) const {
  return std::binary_search(users.begin(), users.end(), id);
}

const Poi* RegionDataset::find_poi(const std::string& id) const {
  auto it = std::lower_bound(pois.begin(), pois.end(), id,
                             [](const Poi& p, const std::string& v) { return p.poi_id < v; });
  if (it == pois.end() || it->poi_id != id) return nullptr;
  return &*it;
}

void RegionDataset::validate() const {
  if (!std::is_sorted(users.begin(), users.end()) ||
      std::adjacent_find(users.begin(), users.end()) != users.end()) {
    throw DataError("user table must be sorted and unique");
  }
  for (std::size_t i = 1; i < pois.size(); ++i) {
    if (!(pois[i - 1].poi_id < pois[i].poi_id)) {
      throw DataError("POI table must be sorted and unique");
    }
  }
  for (const Checkin& c : checkins) {
    if (c.timestamp < 0) throw DataError("negative timestamp for user " + c.user_id);
    if (!has_user(c.user_id)) throw DataError("check-in references unknown user " + c.user_id);
    if (!find_poi(c.poi_id)) throw DataError("check-in references unknown POI " + c.poi_id);
  }
  for (const auto& [a, b] : social_edges) {
    if (!(a < b)) throw DataError("social edge not canonical: " + a + "," + b);
    if (!has_user(a) || !has_user(b)) throw DataError("social edge references unknown user");
  }
}

bool parse_timestamp(const std::string& raw, std::int64_t* out) {
  const std::string text = trim(raw);
  if (text.empty()) return false;
  if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isdigit(c); })) {
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), *out);
    return ec == std::errc() && ptr == text.data() + text.size();
  }
  std::tm tm{};
  int consumed = 0;
  char sep = 0;
  if (std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d%n", &tm.tm_year, &tm.tm_mon,
                  &tm.tm_mday, &sep, &tm.tm_hour, &tm.tm_min, &tm.tm_sec, &consumed) != 7) {
    return false;
  }
  if (sep != 'T' && sep != ' ') return false;
  if (tm.tm_mon < 1 || tm.tm_mon > 12 || tm.tm_mday < 1 || tm.tm_mday > 31 ||
      tm.tm_hour > 23 || tm.tm_min > 59 || tm.tm_sec > 60) {
    return false;
  }
  std::int64_t offset = 0;
  std::string rest = text.substr(static_cast<std::size_t>(consumed));
  if (!rest.empty() && rest != "Z") {
    int hh = 0, mm = 0;
    char sign = rest[0];
    if ((sign != '+' && sign != '-') ||
        std::sscanf(rest.c_str() + 1, "%2d:%2d", &hh, &mm) != 2) {
      return false;
    }
    offset = (sign == '+' ? 1 : -1) * (hh * 3600 + mm * 60);
  }
  tm.tm_year -= 1900;
  tm.tm_mon -= 1;
  const std::int64_t t = static_cast<std::int64_t>(timegm(&tm)) - offset;
  if (t < 0) return false;
  *out = t;
  return true;
}

ParsedCheckins parse_checkins(const std::filesystem::path& path, const CheckinFormat& format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read check-in file " + path.string());

  ParsedCheckins result;
  std::string line;
  if (!std::getline(in, line)) return result;  // empty file
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = split_line(line, format.delimiter);
  for (auto& h : header) h = trim(h);
  const int c_user = column_index(header, format.user_column);
  const int c_poi = column_index(header, format.poi_column);
  const int c_time = column_index(header, format.timestamp_column);
  const int c_lat = column_index(header, format.lat_column);
  const int c_lon = column_index(header, format.lon_column);
  const int c_cat = column_index(header, format.category_column);
  if (std::min({c_user, c_poi, c_time, c_lat, c_lon, c_cat}) < 0) {
    throw DataError("check-in header missing a required column in " + path.string());
  }
  const int width = std::max({c_user, c_poi, c_time, c_lat, c_lon, c_cat}) + 1;

  std::map<std::string, Poi> pois;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++result.rows_read;
    const std::vector<std::string> f = split_line(line, format.delimiter);
    Checkin c;
    Poi poi;
    bool ok = static_cast<int>(f.size()) >= width;
    if (ok) {
      c.user_id = trim(f[c_user]);
      c.poi_id = trim(f[c_poi]);
      std::string category = trim(f[c_cat]);
      if (auto pos = category.find(format.category_separator); pos != std::string::npos) {
        category = trim(category.substr(0, pos));
      }
      ok = !c.user_id.empty() && !c.poi_id.empty() && !category.empty() &&
           parse_timestamp(f[c_time], &c.timestamp) &&
           parse_double(trim(f[c_lat]), &poi.location.lat) &&
           parse_double(trim(f[c_lon]), &poi.location.lon) && poi.location.valid();
      poi.poi_id = c.poi_id;
      poi.category = std::move(category);
    }
    if (!ok) {
      ++result.malformed_rows;
      logger().warn("{}:{}: skipping malformed check-in row", path.string(), line_no);
      continue;
    }
    // First occurrence of a POI defines its location and category.
    pois.emplace(poi.poi_id, std::move(poi));
    result.checkins.push_back(std::move(c));
  }
  if (result.rows_read > 0 && 2 * result.malformed_rows > result.rows_read) {
    throw DataError("more than half of the rows in " + path.string() + " are malformed (" +
                    std::to_string(result.malformed_rows) + "/" +
                    std::to_string(result.rows_read) + ")");
  }
  result.pois.reserve(pois.size());
  for (auto& [id, poi] : pois) result.pois.push_back(std::move(poi));
  return result;
}

std::vector<SocialEdge> parse_social(const std::filesystem::path& path, char delimiter) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read social file " + path.string());
  std::set<SocialEdge> edges;
  std::string line;
  std::getline(in, line);  // header
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto f = split_line(line, delimiter);
    if (f.size() < 2 || trim(f[0]).empty() || trim(f[1]).empty()) {
      logger().warn("{}:{}: skipping malformed social row", path.string(), line_no);
      continue;
    }
    std::string a = trim(f[0]);
    std::string b = trim(f[1]);
    if (a == b) continue;
    if (b < a) std::swap(a, b);
    edges.emplace(std::move(a), std::move(b));
  }
  return {edges.begin(), edges.end()};
}

RegionDataset make_region(ParsedCheckins parsed, std::vector<SocialEdge> social,
                          RegionTag tag) {
  RegionDataset ds;
  ds.region_tag = tag;
  ds.pois = std::move(parsed.pois);
  std::sort(ds.pois.begin(), ds.pois.end(),
            [](const Poi& a, const Poi& b) { return a.poi_id < b.poi_id; });
  std::set<std::string> users;
  for (const Checkin& c : parsed.checkins) users.insert(c.user_id);
  ds.users.assign(users.begin(), users.end());
  ds.checkins = std::move(parsed.checkins);

  for (auto& [a, b] : social) {
    if (b < a) std::swap(a, b);
    if (a != b && users.count(a) && users.count(b)) ds.social_edges.emplace_back(a, b);
  }
  std::sort(ds.social_edges.begin(), ds.social_edges.end());
  ds.social_edges.erase(std::unique(ds.social_edges.begin(), ds.social_edges.end()),
                        ds.social_edges.end());
  ds.validate();
  return ds;
}

RegionDataset filter_region(const RegionDataset& raw, const FilterThresholds& t) {
  if (t.min_poi_checkins < 1 || t.min_user_checkins < 1 || t.min_user_connections < 1) {
    throw ConfigError("filter thresholds must be positive integers");
  }
  RegionDataset ds = raw;
  for (;;) {
    const std::size_t before_users = ds.users.size();
    const std::size_t before_pois = ds.pois.size();

    std::unordered_map<std::string, int> poi_count;
    for (const Checkin& c : ds.checkins) ++poi_count[c.poi_id];
    std::erase_if(ds.pois, [&](const Poi& p) { return poi_count[p.poi_id] < t.min_poi_checkins; });
    std::unordered_set<std::string> kept_pois;
    for (const Poi& p : ds.pois) kept_pois.insert(p.poi_id);
    std::erase_if(ds.checkins, [&](const Checkin& c) { return !kept_pois.count(c.poi_id); });

    std::unordered_map<std::string, int> user_count;
    std::unordered_map<std::string, int> degree;
    for (const Checkin& c : ds.checkins) ++user_count[c.user_id];
    for (const auto& [a, b] : ds.social_edges) {
      ++degree[a];
      ++degree[b];
    }
    std::erase_if(ds.users, [&](const std::string& u) {
      return user_count[u] < t.min_user_checkins || degree[u] < t.min_user_connections;
    });
    std::unordered_set<std::string> kept_users(ds.users.begin(), ds.users.end());
    std::erase_if(ds.checkins, [&](const Checkin& c) { return !kept_users.count(c.user_id); });
    std::erase_if(ds.social_edges, [&](const SocialEdge& e) {
      return !kept_users.count(e.first) || !kept_users.count(e.second);
    });

    if (ds.users.empty() || ds.pois.empty()) throw DataError("region too sparse");
    if (ds.users.size() == before_users && ds.pois.size() == before_pois) break;
  }
  return ds;
}

SplitDataset temporal_split(const RegionDataset& ds, const SplitFractions& fr) {
  if (fr.train < 0 || fr.validation < 0 || fr.test < 0 ||
      std::abs(fr.train + fr.validation + fr.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
  if (ds.checkins.size() < 3) throw DataError("temporal split needs at least 3 check-ins");

  std::vector<Checkin> sorted = ds.checkins;
  std::stable_sort(sorted.begin(), sorted.end(), [](const Checkin& a, const Checkin& b) {
    return std::tie(a.timestamp, a.user_id, a.poi_id) < std::tie(b.timestamp, b.user_id, b.poi_id);
  });
  const double n = static_cast<double>(sorted.size());
  // The epsilon absorbs representation error in e.g. 0.7 * 10.
  const auto n_train = static_cast<std::size_t>(std::floor(fr.train * n + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor((fr.train + fr.validation) * n + 1e-9)) - n_train;

  SplitDataset out;
  for (RegionDataset* part : {&out.train, &out.validation, &out.test}) {
    part->region_tag = ds.region_tag;
    part->users = ds.users;
    part->pois = ds.pois;
    part->social_edges = ds.social_edges;
  }
  auto it = sorted.begin();
  out.train.checkins.assign(it, it + n_train);
  out.validation.checkins.assign(it + n_train, it + n_train + n_val);
  out.test.checkins.assign(it + n_train + n_val, sorted.end());
  return out;
}

void check_disjoint(const RegionDataset& a, const RegionDataset& b) {
  for (const auto& u : a.users) {
    if (b.has_user(u)) throw DataError("regions share user id " + u);
  }
  for (const auto& p : a.pois) {
    if (b.find_poi(p.poi_id)) throw DataError("regions share POI id " + p.poi_id);
  }
}

}  // namespace xregion
