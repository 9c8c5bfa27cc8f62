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

#include <filesystem>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "xregion/ssml_trainer.hpp"

using namespace xregion;

namespace {

TrainConfig small_config(TrainMode mode) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.seed = 5;
  cfg.max_epochs = 4;
  cfg.fine_tune_epochs = 1;
  cfg.transfer_every = 2;
  cfg.inner_steps = 2;
  cfg.patience = 100;
  cfg.omega1 = 0.01;
  cfg.omega2 = 0.005;
  cfg.transfer.clusters = 4;
  cfg.model.dim = 8;
  cfg.model.hidden = 8;
  return cfg;
}

ModelParams filled(const ModelParams& like, double v) {
  ModelParams p = like;
  p.for_each([&](const std::string&, Matrix& m) { m.setConstant(v); });
  return p;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("xregion_test_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("global_update sums the four gradients") {
  ModelConfig mc;
  mc.dim = 4;
  mc.hidden = 4;
  std::mt19937_64 rng(1);
  const ModelParams theta = ModelParams::init(mc, rng);
  const ModelParams one = filled(theta, 1.0);
  const ModelParams next = global_update(theta, one, one, one, one, 0.001, 0.001);
  ModelParams expect = theta;
  expect.for_each([](const std::string&, Matrix& m) { m.array() -= 0.004; });
  std::vector<const Matrix*> a, b;
  next.for_each([&](const std::string&, const Matrix& m) { a.push_back(&m); });
  expect.for_each([&](const std::string&, const Matrix& m) { b.push_back(&m); });
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->isApprox(*b[i], 1e-15));

  const ModelParams zero = filled(theta, 0.0);
  ModelParams g = zero;
  g.score.layers[0].bias.setConstant(2.0);
  const ModelParams only_src = global_update(theta, g, zero, zero, zero, 0.1, 0.3);
  CHECK(only_src.score.layers[0].bias.isApprox((theta.score.layers[0].bias.array() - 0.2).matrix()));
  CHECK(only_src.fuse_user.layers[0].weight == theta.fuse_user.layers[0].weight);
}

TEST_CASE("slice_links clamps to the available links") {
  LinkSamples all;
  for (int i = 0; i < 23; ++i) {
    all.positives.push_back({i, i + 1});
    all.negatives.push_back({i, i + 2});
  }
  std::size_t total = 0;
  for (std::size_t begin = 0; begin < 30; begin += 5) {
    const auto part = slice_links(all, begin, 5);
    CHECK(part.positives.size() == part.negatives.size());
    for (std::size_t j = 0; j < part.positives.size(); ++j) CHECK(part.positives[j] == all.positives[total + j]);
    total += part.positives.size();
  }
  CHECK(total == 23);
}

TEST_CASE("social link batches walk whole passes across epochs") {
  const auto pair = testing::small_pair(4);
  auto cfg = small_config(TrainMode::kFull);
  RegionContext src(pair.source.graph, cfg.model);
  RegionContext tgt(pair.target.graph, cfg.model, &pair.target.split.validation);
  const DrawPlan plan(cfg, src, tgt);
  for (auto kind : {LinkKind::kUsers, LinkKind::kPois}) {
    const auto pass1 = kind == LinkKind::kUsers ? plan.user_links(RegionTag::kSource, 1)
                                                : plan.poi_links(RegionTag::kSource, 1);
    const std::size_t n = pass1.positives.size();
    REQUIRE(n > static_cast<std::size_t>(cfg.batch_size));
    std::vector<NodePair> seen;
    for (int epoch = 1; seen.size() < n; ++epoch) {
      for (int step = 0; step < plan.steps_per_epoch() && seen.size() < n; ++step) {
        const auto b = plan.link_batch(RegionTag::kSource, kind, epoch, step);
        CHECK(b.positives.size() <= static_cast<std::size_t>(cfg.batch_size));
        seen.insert(seen.end(), b.positives.begin(), b.positives.end());
      }
    }
    CHECK(seen == pass1.positives);
  }
}

TEST_CASE("warm, inner and source steps are plain gradient steps") {
  const auto pair = testing::small_pair(3);
  const auto cfg = small_config(TrainMode::kAxoM);
  RegionContext src(pair.source.graph, cfg.model);
  RegionContext tgt(pair.target.graph, cfg.model, &pair.target.split.validation);
  const DrawPlan plan(cfg, src, tgt);
  const auto state = ParameterState::init(cfg, pair.source.graph, pair.target.graph);

  const auto ul = plan.link_batch(RegionTag::kTarget, LinkKind::kUsers, 1, 0);
  const auto pl = plan.link_batch(RegionTag::kTarget, LinkKind::kPois, 1, 0);
  const auto samples = plan.samples(RegionTag::kTarget, 1, 0, kSlotSocial);
  const auto warm = social_warm_update(tgt, state.shared, state.target_emb, samples, ul, pl, 0.1);
  const auto g = social_gradient(tgt.model(), state.shared, state.target_emb, samples, ul, pl);
  ModelParams expect = state.shared;
  expect.axpy(-0.1, g.params);
  CHECK(warm.adapted == expect);

  std::vector<std::vector<RatedPair>> batches{plan.target_inner_batch(1, 0, 0), plan.target_inner_batch(1, 0, 1)};
  std::vector<SpatialSamples> draws{plan.samples(RegionTag::kTarget, 1, 0, kSlotInner),
                                    plan.samples(RegionTag::kTarget, 1, 0, kSlotInner + 1)};
  const auto inner = target_inner_loop(tgt, state.shared, state.target_emb, batches, draws, 0.01, 0.01);
  ModelParams theta = state.shared;
  Embeddings emb = state.target_emb;
  for (int k = 0; k < 2; ++k) {
    const auto gk = prediction_gradient(tgt.model(), theta, emb, draws[k], batches[k], 0.01);
    theta.axpy(-0.01, gk.params);
    emb.axpy(-0.01, gk.emb);
  }
  CHECK(inner.theta == theta);
  CHECK(inner.emb == emb);
  CHECK(inner.losses.size() == 2);

  const auto sb = plan.source_batch(1, 0);
  const auto ss = plan.samples(RegionTag::kSource, 1, 0, kSlotSource);
  const auto su = source_update(src, state.shared, state.source_emb, sb, ss, 0.01, 0.01);
  ModelParams s_expect = state.shared;
  s_expect.axpy(-0.01, prediction_gradient(src.model(), state.shared, state.source_emb, ss, sb, 0.01).params);
  CHECK(su.theta == s_expect);
}

TEST_CASE("source batches cycle through every source positive") {
  const auto pair = testing::small_pair(4);
  const auto cfg = small_config(TrainMode::kAxoM);
  RegionContext src(pair.source.graph, cfg.model);
  RegionContext tgt(pair.target.graph, cfg.model);
  const DrawPlan plan(cfg, src, tgt);
  std::multiset<std::pair<int, int>> seen;
  const int steps = plan.steps_per_epoch();
  for (int g = 0; g < plan.source_steps(); ++g) {
    for (const auto& p : plan.source_batch(1 + g / steps, g % steps)) {
      if (p.rating > 0.0) seen.insert({p.user, p.poi});
    }
  }
  CHECK(seen.size() == src.positives().size());
  std::set<std::pair<int, int>> unique(seen.begin(), seen.end());
  CHECK(unique.size() == src.positives().size());
}

TEST_CASE("zero global rates leave theta_st unchanged through the meta loop") {
  const auto pair = testing::small_pair(6);
  auto cfg = small_config(TrainMode::kAxoM);
  cfg.omega2 = 0.0;
  cfg.omega3 = 0.0;
  cfg.max_epochs = 2;
  RegionContext src(pair.source.graph, cfg.model);
  RegionContext tgt(pair.target.graph, cfg.model, &pair.target.split.validation);
  const auto init = ParameterState::init(cfg, pair.source.graph, pair.target.graph);
  TrainHooks hooks;
  int calls = 0;
  hooks.on_epoch = [&](int, const ParameterState& s) {
    ++calls;
    CHECK(s.shared == init.shared);
  };
  train(src, tgt, cfg, hooks);
  CHECK(calls == 2);
}

TEST_CASE("train is deterministic and resume reproduces an uninterrupted run") {
  const auto pair = testing::small_pair(7);
  const auto cfg = small_config(TrainMode::kFull);
  RegionContext src(pair.source.graph, cfg.model);
  RegionContext tgt(pair.target.graph, cfg.model, &pair.target.split.validation);

  const auto dir = temp_dir("resume");
  std::ostringstream log_a, log_b;
  TrainHooks ha;
  ha.checkpoint_dir = dir / "a";
  ha.log = &log_a;
  const auto a = train(src, tgt, cfg, ha);
  TrainHooks hb;
  hb.log = &log_b;
  const auto b = train(src, tgt, cfg, hb);
  CHECK(a.state == b.state);
  CHECK(log_a.str() == log_b.str());

  const Checkpoint mid = Checkpoint::load(dir / "a" / "epoch_2.ckpt");
  CHECK(mid.epoch == 2);
  CHECK(mid.phase == "meta");
  TrainHooks hr;
  hr.resume = &mid;
  const auto resumed = train(src, tgt, cfg, hr);
  CHECK(resumed.state == a.state);

  const Checkpoint fin = Checkpoint::load(dir / "a" / "final.ckpt");
  CHECK(fin.phase == "done");
  CHECK(fin.state == a.state);
  std::filesystem::remove_all(dir);
}

TEST_CASE("full without a transfer boundary matches axo-m") {
  const auto pair = testing::small_pair(9);
  auto full = small_config(TrainMode::kFull);
  full.transfer_every = full.max_epochs + 1;
  auto meta_only = full;
  meta_only.mode = TrainMode::kAxoM;
  RegionContext src(pair.source.graph, full.model);
  RegionContext tgt(pair.target.graph, full.model, &pair.target.split.validation);
  std::ostringstream log_f, log_m;
  TrainHooks hf, hm;
  hf.log = &log_f;
  hm.log = &log_m;
  const auto a = train(src, tgt, full, hf);
  const auto b = train(src, tgt, meta_only, hm);
  CHECK(a.state == b.state);
  // Only the header names the mode.
  auto body = [](const std::string& log) { return log.substr(log.find('\n') + 1); };
  CHECK(body(log_f.str()) == body(log_m.str()));
  CHECK(log_f.str() != log_m.str());
}

TEST_CASE("checkpoint round trip preserves every tensor") {
  const auto pair = testing::small_pair(8);
  const auto cfg = small_config(TrainMode::kFull);
  Checkpoint ck;
  ck.mode = "full";
  ck.phase = "meta";
  ck.epoch = 3;
  ck.best_validation = 0.25;
  ck.best_epoch = 2;
  ck.bad_epochs = 1;
  ck.seed = 99;
  ck.state = ParameterState::init(cfg, pair.source.graph, pair.target.graph);
  ck.best = ck.state;
  ck.best->shared.score.layers[0].bias.setConstant(3.0);
  const auto dir = temp_dir("ckpt");
  ck.save(dir / "x.ckpt");
  const Checkpoint back = Checkpoint::load(dir / "x.ckpt");
  CHECK(back.mode == "full");
  CHECK(back.epoch == 3);
  CHECK(back.best_validation == 0.25);
  CHECK(back.best_epoch == 2);
  CHECK(back.bad_epochs == 1);
  CHECK(back.seed == 99);
  CHECK(back.state == ck.state);
  REQUIRE(back.best.has_value());
  CHECK(*back.best == *ck.best);
  std::filesystem::remove_all(dir);
}

TEST_CASE("resume rejects a checkpoint from another mode") {
  const auto pair = testing::small_pair(9);
  const auto cfg = small_config(TrainMode::kFull);
  RegionContext src(pair.source.graph, cfg.model);
  RegionContext tgt(pair.target.graph, cfg.model, &pair.target.split.validation);
  Checkpoint ck;
  ck.mode = "axo-m";
  ck.phase = "meta";
  ck.seed = cfg.seed;
  ck.state = ParameterState::init(cfg, pair.source.graph, pair.target.graph);
  TrainHooks h;
  h.resume = &ck;
  CHECK_THROWS_AS(train(src, tgt, cfg, h), ConfigError);
}

TEST_CASE("every mode trains to finite parameters") {
  const auto pair = testing::small_pair(10);
  for (auto mode : {TrainMode::kFull, TrainMode::kAxoM, TrainMode::kAxoF, TrainMode::kTargetOnly}) {
    CAPTURE(to_string(mode));
    const auto cfg = small_config(mode);
    RegionContext src(pair.source.graph, cfg.model);
    RegionContext tgt(pair.target.graph, cfg.model, &pair.target.split.validation);
    const auto r = train(src, tgt, cfg);
    CHECK(r.state.target.all_finite());
    CHECK(r.state.target_emb.all_finite());
    CHECK_FALSE(r.records.empty());
    CHECK(parse_mode(to_string(mode)) == mode);
  }
  CHECK_THROWS_AS(parse_mode("meta"), ConfigError);
}
