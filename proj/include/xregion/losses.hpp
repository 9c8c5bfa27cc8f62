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

#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "xregion/common.hpp"
#include "xregion/mobility_graph.hpp"
#include "xregion/rng.hpp"
#include "xregion/twin_gat.hpp"

namespace xregion {

struct RatedPair {
  UserIndex user = 0;
  PoiIndex poi = 0;
  double rating = 0.0;  // r_ul; 0 for sampled unobserved pairs
};

struct LossValues {
  double prediction = 0.0;  // L_p
  double social_user = 0.0;
  double social_poi = 0.0;
  double lambda_p = 0.0;

  double total_social() const { return social_user + social_poi; }
};

// sum (r_hat - r)^2 + lambda_p * ||params||_1. Throws NumericError naming the
// first pair with a non-finite prediction.
double prediction_loss(std::span<const RatedPair> pairs, std::span<const double> predictions,
                       const ModelParams& params, double lambda_p);

// Directed node pairs (a, b) over one entity table.
struct NodePair {
  std::int32_t a = 0;
  std::int32_t b = 0;

  friend bool operator==(const NodePair&, const NodePair&) = default;
};

// Positive links and one sampled non-link per positive, aligned by index.
struct LinkSamples {
  std::vector<NodePair> positives;
  std::vector<NodePair> negatives;
  std::vector<std::int32_t> skipped;  // nodes connected to everything
};

// -sum [log sigma(x_a . x_b) over positives + log(1 - sigma(x_a . x_b)) over
// negatives]. If grad is non-null, dL/dtable is accumulated into it.
double social_link_loss(const Matrix& table, std::span<const NodePair> positives,
                        std::span<const NodePair> negatives, Matrix* grad = nullptr);

// For every directed edge (i, j) of the adjacency, pairs it with (i, j') where
// j' is uniform over nodes that are neither i nor adjacent to i. Nodes with no
// such j' contribute nothing and are reported in `skipped`.
LinkSamples sample_link_negatives(const std::vector<std::vector<std::int32_t>>& adjacency,
                                  std::mt19937_64& rng);

std::vector<std::vector<std::int32_t>> social_adjacency(const MobilityGraph& graph);
std::vector<std::vector<std::int32_t>> spatial_adjacency(const MobilityGraph& graph);

// Positive training pairs (u, l, R_ul), in (user, poi) order.
std::vector<RatedPair> affinity_pairs(const MobilityGraph& graph);

// Adds one unobserved (u, l') pair per positive, l' uniform over POIs the
// same user never visited (any user if u visited everything).
std::vector<RatedPair> with_sampled_negatives(const MobilityGraph& graph,
                                              std::span<const RatedPair> positives,
                                              std::mt19937_64& rng);

struct Gradients {
  ModelParams params;
  Embeddings emb;
  LossValues loss;
};

// L_p on a batch and its gradient w.r.t. params and the region's embeddings.
Gradients prediction_gradient(const TwinGat& model, const ModelParams& params,
                              const Embeddings& emb, const SpatialSamples& samples,
                              std::span<const RatedPair> batch, double lambda_p);

// L_s^U + L_s^P on the final representations and its gradient.
Gradients social_gradient(const TwinGat& model, const ModelParams& params, const Embeddings& emb,
                          const SpatialSamples& samples, const LinkSamples& user_links,
                          const LinkSamples& poi_links);

// Throws NumericError naming the first non-finite tensor.
void require_finite(const ModelParams& grad, const std::string& what);
void require_finite(const Embeddings& grad, const std::string& what);

struct GradientCheck {
  std::string tensor;
  double max_rel_error = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central differences of `loss` against `analytic` for every entry of every
// named tensor. Relative error is |a - n| / max(|a|, |n|, floor).
std::vector<GradientCheck> check_gradients(
    const std::function<double()>& loss,
    const std::vector<std::pair<std::string, Matrix*>>& tensors,
    const std::vector<const Matrix*>& analytic, double h = 1e-4, double floor = 1e-6);

}  // namespace xregion
