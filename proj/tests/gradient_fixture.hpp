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

#include <limits>
#include <random>
#include <span>

#include "fixtures.hpp"
#include "xregion/losses.hpp"

namespace xregion::testing {

inline ModelConfig small_config(GatVariant variant = GatVariant::kFull) {
  ModelConfig c;
  c.variant = variant;
  c.dim = 4;
  c.hidden = 6;
  c.sample_size = 3;
  c.activation = Activation::kTanh;
  return c;
}

// Smallest distance of any piecewise-linear switch point (ReLU in the MLPs,
// LeakyReLU on attention logits, max-pool winner) from its kink. Central
// differences are only meaningful when this exceeds the step.
inline double kink_margin(const TwinGat& model, const ModelParams& params, const Embeddings& emb,
                   const SpatialSamples& samples, std::span<const RatedPair> batch) {
  double m = std::numeric_limits<double>::infinity();
  const auto out = model.forward(params, emb, samples);
  std::vector<UserPoiPair> pairs;
  for (const auto& p : batch) pairs.push_back({p.user, p.poi});
  ScoreCache sc;
  model.predict(params, out, pairs, &sc);
  for (const MlpCache* c : {&out.fuse_user_cache, &out.fuse_poi_cache, static_cast<const MlpCache*>(&sc.mlp)}) {
    for (const Matrix& z : c->preacts) m = std::min(m, z.cwiseAbs().minCoeff());
  }
  for (const auto& g : out.gat_cache) {
    for (const auto& layer : g.layers) {
      for (double v : layer.logits) m = std::min(m, std::abs(v));
    }
  }
  auto pool_gap = [&](const Matrix& x, const PoolLists& lists) {
    for (std::size_t c = 0; c < lists.members.size(); ++c) {
      const auto nb = lists.members[c];
      if (nb.size() < 2) continue;
      const auto begin = static_cast<std::size_t>(lists.members.offsets[c]);
      for (Eigen::Index d = 0; d < x.cols(); ++d) {
        double top = -std::numeric_limits<double>::infinity(), second = top;
        for (std::size_t k = 0; k < nb.size(); ++k) {
          const double v = lists.weights[begin + k] * x(nb[k], d);
          if (v > top) {
            second = top;
            top = v;
          } else if (v > second) {
            second = v;
          }
        }
        m = std::min(m, top - second);
      }
    }
  };
  pool_gap(emb.pois, model.user_pool_lists());
  pool_gap(emb.users, model.poi_pool_lists());
  return m;
}

struct Setup {
  MobilityGraph graph;
  ModelConfig config;
  TwinGat model;
  ModelParams params;
  Embeddings emb;
  SpatialSamples samples;

  explicit Setup(std::uint64_t seed, GatVariant variant = GatVariant::kFull)
      : graph(tiny_graph(5, 5, seed)), config(small_config(variant)), model(config, graph) {
    std::mt19937_64 rng(seed);
    params = ModelParams::init(config, rng);
    emb = Embeddings::init(graph.num_users(), graph.num_pois(), config.dim, rng);
    samples = draw_spatial_samples(graph, config.sample_size, SeedStream(seed, "s"), {0});
  }

  std::vector<std::pair<std::string, Matrix*>> tensors() {
    std::vector<std::pair<std::string, Matrix*>> out;
    params.for_each([&](const std::string& n, Matrix& m) { out.emplace_back(n, &m); });
    out.emplace_back("emb.users", &emb.users);
    out.emplace_back("emb.pois", &emb.pois);
    return out;
  }
};

inline std::vector<const Matrix*> analytic_of(const Gradients& g) {
  std::vector<const Matrix*> out;
  g.params.for_each([&](const std::string&, const Matrix& m) { out.push_back(&m); });
  out.push_back(&g.emb.users);
  out.push_back(&g.emb.pois);
  return out;
}

// First fixture seed at or after `seed` whose kink margin exceeds 10 h.
inline std::uint64_t smooth_seed(std::uint64_t seed, GatVariant variant = GatVariant::kFull) {
  for (;; seed += 1000) {
    Setup s(seed, variant);
    std::mt19937_64 rng(seed + 10);
    const auto batch = with_sampled_negatives(s.graph, affinity_pairs(s.graph), rng);
    if (kink_margin(s.model, s.params, s.emb, s.samples, batch) > 1e-3) return seed;
  }
}

}  // namespace xregion::testing
