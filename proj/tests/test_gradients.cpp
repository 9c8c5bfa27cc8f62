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

#include <limits>
#include <random>
#include <span>

#include "doctest.h"
#include "gradient_fixture.hpp"
#include "xregion/cluster_transfer.hpp"
#include "xregion/losses.hpp"

using namespace xregion;
using namespace xregion::testing;

namespace {

void require_close(const std::vector<GradientCheck>& checks) {
  for (const auto& c : checks) {
    INFO(c.tensor << " analytic " << c.worst_analytic << " numeric " << c.worst_numeric);
    CHECK(c.max_rel_error < 1e-4);
  }
}

}  // namespace

TEST_CASE("prediction loss gradient matches central differences") {
  for (std::uint64_t base : {1u, 2u, 3u}) {
    const std::uint64_t seed = smooth_seed(base);
    CAPTURE(seed);
    Setup s(seed);
    std::mt19937_64 rng(seed + 10);
    const auto batch = with_sampled_negatives(s.graph, affinity_pairs(s.graph), rng);
    const double lambda = 0.0;  // |x| has a kink at 0; the L1 term is checked separately
    const auto g = prediction_gradient(s.model, s.params, s.emb, s.samples, batch, lambda);
    auto loss = [&] {
      const auto out = s.model.forward(s.params, s.emb, s.samples);
      std::vector<UserPoiPair> pairs;
      for (const auto& p : batch) pairs.push_back({p.user, p.poi});
      const auto pred = s.model.predict(s.params, out, pairs);
      return prediction_loss(batch, pred, s.params, lambda);
    };
    require_close(check_gradients(loss, s.tensors(), analytic_of(g)));
  }
}

TEST_CASE("prediction loss gradient matches central differences for GAT variants") {
  for (GatVariant variant : {GatVariant::kUserOnly, GatVariant::kLocationOnly}) {
    const std::uint64_t seed = smooth_seed(1, variant);
    CAPTURE(to_string(variant));
    Setup s(seed, variant);
    std::mt19937_64 rng(seed + 10);
    const auto batch = with_sampled_negatives(s.graph, affinity_pairs(s.graph), rng);
    const auto g = prediction_gradient(s.model, s.params, s.emb, s.samples, batch, 0.0);
    auto loss = [&] {
      const auto out = s.model.forward(s.params, s.emb, s.samples);
      std::vector<UserPoiPair> pairs;
      for (const auto& p : batch) pairs.push_back({p.user, p.poi});
      return prediction_loss(batch, s.model.predict(s.params, out, pairs), s.params, 0.0);
    };
    require_close(check_gradients(loss, s.tensors(), analytic_of(g)));
  }
}

TEST_CASE("L1 term contributes lambda * sign") {
  Setup s(4);
  const std::vector<RatedPair> batch{{0, 0, 0.5}};
  const auto g0 = prediction_gradient(s.model, s.params, s.emb, s.samples, batch, 0.0);
  const auto g1 = prediction_gradient(s.model, s.params, s.emb, s.samples, batch, 0.25);
  const Matrix& w = s.params.score.layers[0].weight;
  const Matrix diff = g1.params.score.layers[0].weight - g0.params.score.layers[0].weight;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    CHECK(diff.data()[i] == doctest::Approx(w.data()[i] > 0 ? 0.25 : -0.25));
  }
  CHECK(g1.loss.prediction - g0.loss.prediction == doctest::Approx(0.25 * s.params.l1_norm()));
}

TEST_CASE("social loss gradients match central differences") {
  for (std::uint64_t base : {1u, 2u, 3u}) {
    const std::uint64_t seed = smooth_seed(base);
    CAPTURE(seed);
    Setup s(seed);
    std::mt19937_64 rng(seed + 20);
    const auto user_links = sample_link_negatives(social_adjacency(s.graph), rng);
    const auto poi_links = sample_link_negatives(spatial_adjacency(s.graph), rng);
    REQUIRE_FALSE(user_links.positives.empty());
    REQUIRE_FALSE(poi_links.positives.empty());
    const LinkSamples none;
    for (int which = 0; which < 2; ++which) {
      const LinkSamples& ul = which == 0 ? user_links : none;
      const LinkSamples& pl = which == 1 ? poi_links : none;
      CAPTURE(which);
      const auto g = social_gradient(s.model, s.params, s.emb, s.samples, ul, pl);
      auto loss = [&] {
        const auto out = s.model.forward(s.params, s.emb, s.samples);
        return social_link_loss(out.user_final, ul.positives, ul.negatives) +
               social_link_loss(out.poi_final, pl.positives, pl.negatives);
      };
      require_close(check_gradients(loss, s.tensors(), analytic_of(g)));
    }
  }
}

TEST_CASE("alignment loss gradient matches central differences") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix tgt(5, 4), src(5, 4);
    RowVector att(8);
    for (Eigen::Index i = 0; i < tgt.size(); ++i) tgt.data()[i] = n(rng);
    for (Eigen::Index i = 0; i < src.size(); ++i) src.data()[i] = n(rng);
    for (Eigen::Index i = 0; i < att.size(); ++i) att[i] = n(rng);
    Matrix gt = Matrix::Zero(5, 4), gs = Matrix::Zero(5, 4);
    RowVector ga = RowVector::Zero(8);
    alignment_term(tgt, src, att, 0.2, &gt, &gs, &ga);
    Matrix att_m = att;
    Matrix ga_m = ga;
    auto loss = [&] {
      return alignment_term(tgt, src, RowVector(att_m), 0.2, nullptr, nullptr, nullptr);
    };
    require_close(check_gradients(loss, {{"target", &tgt}, {"source", &src}, {"attention", &att_m}},
                                  {&gt, &gs, &ga_m}));
  }
}

TEST_CASE("social link loss is 2 ln 2 per pair at zero embeddings") {
  const Matrix zero = Matrix::Zero(3, 4);
  const std::vector<NodePair> pos{{0, 1}}, neg{{0, 2}};
  CHECK(social_link_loss(zero, pos, neg) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}
