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

#include <cstdlib>

#include "doctest.h"
#include "xregion/config.hpp"

using namespace xregion;

TEST_CASE("defaults parse from an empty object") {
  const auto c = parse_config("{}");
  CHECK(c.train.max_epochs == 50);
  CHECK(c.train.fine_tune_epochs == 10);
  CHECK(c.kernel.cutoff_km == 50.0);
  CHECK(c.train.model.dim == 16);
  CHECK(c.source_filter.min_poi_checkins == 10);
  CHECK(c.target_filter.min_user_connections == 2);
}

TEST_CASE("unknown keys and wrong types are rejected") {
  CHECK_THROWS_WITH_AS(parse_config(R"({"train": {"omega4": 0.1}})"), "unknown config key 'train.omega4'", ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"bogus": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"train": {"max_epochs": "many"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"train": {"mode": "meta"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"split": {"train": 0.9}})"), ConfigError);
}

TEST_CASE("overrides address nested keys") {
  const auto c = parse_config(R"({"train": {"omega1": 0.5}})", {"train.omega1=0.02", "train.mode=axo-m", "model.dim=8"});
  CHECK(c.train.omega1 == 0.02);
  CHECK(c.train.mode == TrainMode::kAxoM);
  CHECK(c.train.model.dim == 8);
  CHECK_THROWS_AS(parse_config("{}", {"train.nope=1"}), ConfigError);
  CHECK_THROWS_AS(parse_config("{}", {"=3"}), ConfigError);
}

TEST_CASE("config_json round-trips") {
  const auto c = parse_config("{}", {"seed=7", "synth.rho=0.5", "eval.ks=[1,3]"});
  const std::string text = config_json(c);
  CHECK(config_json(parse_config(text)) == text);
  CHECK(parse_config(text).synth.rho == 0.5);
  CHECK(parse_config(text).train.seed == 7);
}

TEST_CASE("output directory comes from the environment when set") {
  auto c = parse_config("{}");
  ::setenv("XREGION_OUTPUT_DIR", "/tmp/xregion_env_out", 1);
  apply_environment(&c);
  ::unsetenv("XREGION_OUTPUT_DIR");
  CHECK(c.paths.output_dir == "/tmp/xregion_env_out");
}
