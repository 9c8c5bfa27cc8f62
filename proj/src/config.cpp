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

#include "xregion/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace xregion {
namespace {

using json = nlohmann::ordered_json;

std::string activation_name(Activation a) { return to_string(a); }

std::string groups_name(AlignGroups g) {
  switch (g) {
    case AlignGroups::kBoth: return "both";
    case AlignGroups::kUsers: return "users";
    case AlignGroups::kPois: return "pois";
  }
  return "?";
}

AlignGroups parse_groups(const std::string& s) {
  if (s == "both") return AlignGroups::kBoth;
  if (s == "users") return AlignGroups::kUsers;
  if (s == "pois") return AlignGroups::kPois;
  throw ConfigError("unknown transfer.groups '" + s + "'");
}

json filter_json(const FilterThresholds& f) {
  return {{"min_poi_checkins", f.min_poi_checkins},
          {"min_user_checkins", f.min_user_checkins},
          {"min_user_connections", f.min_user_connections}};
}

json region_json(const SynthRegionSpec& r) {
  return {{"users", r.users},         {"pois", r.pois},           {"checkins", r.checkins},
          {"p_within", r.p_within},   {"p_between", r.p_between}, {"center_lat", r.center.lat},
          {"center_lon", r.center.lon}};
}

json to_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  json j;
  j["seed"] = t.seed;
  j["paths"] = {{"source_checkins", c.paths.source_checkins.string()},
                {"source_social", c.paths.source_social.string()},
                {"target_checkins", c.paths.target_checkins.string()},
                {"target_social", c.paths.target_social.string()},
                {"output_dir", c.paths.output_dir.string()}};
  j["filter"] = {{"source", filter_json(c.source_filter)}, {"target", filter_json(c.target_filter)}};
  j["split"] = {{"train", c.split.train}, {"validation", c.split.validation}, {"test", c.split.test}};
  j["kernel"] = {{"bandwidth_km", c.kernel.bandwidth_km}, {"cutoff_km", c.kernel.cutoff_km}};
  j["model"] = {{"dim", t.model.dim},
                {"hidden", t.model.hidden},
                {"gat_depth", t.model.gat_depth},
                {"sample_size", t.model.sample_size},
                {"leaky_slope", t.model.leaky_slope},
                {"activation", activation_name(t.model.activation)},
                {"variant", to_string(t.model.variant)}};
  j["train"] = {{"mode", to_string(t.mode)},
                {"omega1", t.omega1},
                {"omega2", t.omega2},
                {"omega3", t.omega3},
                {"inner_steps", t.inner_steps},
                {"transfer_every", t.transfer_every},
                {"lambda_p", t.lambda_p},
                {"batch_size", t.batch_size},
                {"max_epochs", t.max_epochs},
                {"fine_tune_epochs", t.fine_tune_epochs},
                {"fine_tune_lr", t.fine_tune_lr},
                {"patience", t.patience},
                {"eval_k", t.eval_k},
                {"divergence", t.divergence}};
  j["transfer"] = {{"clusters", t.transfer.clusters},
                   {"steps", t.transfer.steps},
                   {"lr", t.transfer.lr},
                   {"symmetric", t.transfer.symmetric},
                   {"groups", groups_name(t.transfer.groups)}};
  j["eval"] = {{"ks", c.eval.ks}, {"transductive", c.eval.transductive}, {"per_user", c.eval.per_user}};
  const SynthSpec& s = c.synth;
  j["synth"] = {{"source", region_json(s.source)},
                {"target", region_json(s.target)},
                {"categories", s.categories},
                {"groups", s.groups},
                {"sharpness", s.sharpness},
                {"rho", s.rho},
                {"cluster_radius_km", s.cluster_radius_km},
                {"center_spacing_km", s.center_spacing_km},
                {"popularity_sigma", s.popularity_sigma},
                {"time_start", s.time_start},
                {"time_span", s.time_span}};
  return j;
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) {
    // Integer settings reject fractional values.
    return !(a.is_number_integer() && b.is_number_float());
  }
  return a.type() == b.type();
}

// Overlays `user` onto the default-valued `base`, rejecting unknown keys and
// type changes.
void merge(json* base, const json& user, const std::string& where) {
  if (!user.is_object()) throw ConfigError(where.empty() ? "config must be a JSON object" : where + " must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!base->contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    json& slot = (*base)[it.key()];
    if (slot.is_object()) {
      merge(&slot, it.value(), key);
    } else if (slot.is_array()) {
      if (!it.value().is_array()) throw ConfigError("config key '" + key + "' must be an array");
      for (const auto& v : it.value()) {
        if (!v.is_number_integer()) throw ConfigError("config key '" + key + "' must hold integers");
      }
      slot = it.value();
    } else {
      if (!same_kind(slot, it.value())) throw ConfigError("config key '" + key + "' has the wrong type");
      slot = it.value();
    }
  }
}

void apply_override(json* base, const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + text + "' is not key=value");
  const std::string path = text.substr(0, eq);
  const std::string value = text.substr(eq + 1);
  json parsed = json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value;

  json patch = parsed;
  std::vector<std::string> parts;
  std::stringstream ss(path);
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  merge(base, patch, "");
}

template <typename T>
T get(const json& j, const char* key) {
  return j.at(key).get<T>();
}

FilterThresholds filter_from(const json& j) {
  return {get<int>(j, "min_poi_checkins"), get<int>(j, "min_user_checkins"), get<int>(j, "min_user_connections")};
}

SynthRegionSpec region_from(const json& j) {
  SynthRegionSpec r;
  r.users = get<int>(j, "users");
  r.pois = get<int>(j, "pois");
  r.checkins = get<int>(j, "checkins");
  r.p_within = get<double>(j, "p_within");
  r.p_between = get<double>(j, "p_between");
  r.center = {get<double>(j, "center_lat"), get<double>(j, "center_lon")};
  return r;
}

RunConfig from_json(const json& j) {
  RunConfig c;
  TrainConfig& t = c.train;
  t.seed = get<std::uint64_t>(j, "seed");
  const json& p = j.at("paths");
  c.paths = {get<std::string>(p, "source_checkins"), get<std::string>(p, "source_social"),
             get<std::string>(p, "target_checkins"), get<std::string>(p, "target_social"),
             get<std::string>(p, "output_dir")};
  c.source_filter = filter_from(j.at("filter").at("source"));
  c.target_filter = filter_from(j.at("filter").at("target"));
  const json& s = j.at("split");
  c.split = {get<double>(s, "train"), get<double>(s, "validation"), get<double>(s, "test")};
  c.kernel = {get<double>(j.at("kernel"), "bandwidth_km"), get<double>(j.at("kernel"), "cutoff_km")};
  const json& m = j.at("model");
  t.model.dim = get<int>(m, "dim");
  t.model.hidden = get<int>(m, "hidden");
  t.model.gat_depth = get<int>(m, "gat_depth");
  t.model.sample_size = get<int>(m, "sample_size");
  t.model.leaky_slope = get<double>(m, "leaky_slope");
  t.model.activation = parse_activation(get<std::string>(m, "activation"));
  t.model.variant = parse_variant(get<std::string>(m, "variant"));
  const json& tr = j.at("train");
  t.mode = parse_mode(get<std::string>(tr, "mode"));
  t.omega1 = get<double>(tr, "omega1");
  t.omega2 = get<double>(tr, "omega2");
  t.omega3 = get<double>(tr, "omega3");
  t.inner_steps = get<int>(tr, "inner_steps");
  t.transfer_every = get<int>(tr, "transfer_every");
  t.lambda_p = get<double>(tr, "lambda_p");
  t.batch_size = get<int>(tr, "batch_size");
  t.max_epochs = get<int>(tr, "max_epochs");
  t.fine_tune_epochs = get<int>(tr, "fine_tune_epochs");
  t.fine_tune_lr = get<double>(tr, "fine_tune_lr");
  t.patience = get<int>(tr, "patience");
  t.eval_k = get<int>(tr, "eval_k");
  t.divergence = get<double>(tr, "divergence");
  const json& x = j.at("transfer");
  t.transfer.clusters = get<int>(x, "clusters");
  t.transfer.steps = get<int>(x, "steps");
  t.transfer.lr = get<double>(x, "lr");
  t.transfer.symmetric = get<bool>(x, "symmetric");
  t.transfer.groups = parse_groups(get<std::string>(x, "groups"));
  t.transfer.leaky_slope = t.model.leaky_slope;
  const json& e = j.at("eval");
  c.eval.ks = e.at("ks").get<std::vector<int>>();
  c.eval.transductive = get<bool>(e, "transductive");
  c.eval.per_user = get<bool>(e, "per_user");
  const json& y = j.at("synth");
  c.synth.source = region_from(y.at("source"));
  c.synth.target = region_from(y.at("target"));
  c.synth.categories = get<int>(y, "categories");
  c.synth.groups = get<int>(y, "groups");
  c.synth.sharpness = get<double>(y, "sharpness");
  c.synth.rho = get<double>(y, "rho");
  c.synth.cluster_radius_km = get<double>(y, "cluster_radius_km");
  c.synth.center_spacing_km = get<double>(y, "center_spacing_km");
  c.synth.popularity_sigma = get<double>(y, "popularity_sigma");
  c.synth.time_start = get<std::int64_t>(y, "time_start");
  c.synth.time_span = get<std::int64_t>(y, "time_span");
  c.synth.seed = t.seed;
  return c;
}

}  // namespace

void RunConfig::validate() const {
  for (const auto* f : {&source_filter, &target_filter}) {
    if (f->min_poi_checkins < 1 || f->min_user_checkins < 1 || f->min_user_connections < 1) {
      throw ConfigError("filter thresholds must be >= 1");
    }
  }
  if (split.train <= 0.0 || split.validation < 0.0 || split.test <= 0.0 ||
      std::abs(split.train + split.validation + split.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
  kernel.validate();
  train.validate();
  for (int k : eval.ks) {
    if (k < 1) throw ConfigError("eval.ks must be >= 1");
  }
  if (eval.ks.empty()) throw ConfigError("eval.ks must not be empty");
  synth.validate();
}

RunConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides) {
  json user = json::parse(json_text, nullptr, false);
  if (user.is_discarded()) throw ConfigError("config is not valid JSON");
  json merged = to_json(RunConfig{});
  merge(&merged, user, "");
  for (const auto& o : overrides) apply_override(&merged, o);
  RunConfig c;
  try {
    c = from_json(merged);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), overrides);
}

std::string config_json(const RunConfig& config) { return to_json(config).dump(2); }

void apply_environment(RunConfig* config) {
  if (const char* dir = std::getenv("XREGION_OUTPUT_DIR"); dir && *dir) config->paths.output_dir = dir;
}

}  // namespace xregion
