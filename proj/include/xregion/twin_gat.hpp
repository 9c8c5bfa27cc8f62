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

#include <array>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xregion/common.hpp"
#include "xregion/mobility_graph.hpp"
#include "xregion/rng.hpp"

namespace xregion {

enum class Activation { kRelu, kLeakyRelu, kTanh, kIdentity };

// Which attention aggregators see the graph. A disabled aggregator keeps its
// layers but every node attends only to itself.
enum class GatVariant { kFull, kUserOnly, kLocationOnly };

Activation parse_activation(const std::string& name);
GatVariant parse_variant(const std::string& name);
std::string to_string(Activation a);
std::string to_string(GatVariant v);

struct ModelConfig {
  int dim = 16;           // D
  int hidden = 32;        // width of the fusion MLPs
  int gat_depth = 1;      // stacked attention layers per aggregator
  int sample_size = 10;   // spatial neighbours drawn per POI (capped by |S_l|)
  double leaky_slope = 0.2;
  Activation activation = Activation::kRelu;
  GatVariant variant = GatVariant::kFull;

  void validate() const;
};

struct GatLayer {
  Matrix weight;     // D x D
  Matrix bias;       // 1 x D
  Matrix attention;  // 1 x 2D, applied to (center || neighbour)
};

struct DenseLayer {
  Matrix weight;  // out x in
  Matrix bias;    // 1 x out
};

struct Mlp {
  std::vector<DenseLayer> layers;  // ReLU between layers, linear output
};

// Shared, region-independent parameters: the four attention aggregators and
// the three fusion MLPs. Also used as the gradient container for them.
struct ModelParams {
  std::array<std::vector<GatLayer>, 4> gat;
  Mlp fuse_user;      // (U_l || U_s) -> U_f
  Mlp fuse_poi;       // (L_l || L_s) -> L_f
  Mlp score;          // (U_f (.) L_f) -> r

  static ModelParams init(const ModelConfig& config, std::mt19937_64& rng);
  ModelParams zeros_like() const;

  template <typename F>
  void for_each(F&& fn) {
    for (std::size_t i = 0; i < gat.size(); ++i) {
      for (std::size_t d = 0; d < gat[i].size(); ++d) {
        const std::string p = "gat" + std::to_string(i + 1) + "." + std::to_string(d) + ".";
        fn(p + "weight", gat[i][d].weight);
        fn(p + "bias", gat[i][d].bias);
        fn(p + "attention", gat[i][d].attention);
      }
    }
    for (auto [name, mlp] : {std::pair{"fuse_user", &fuse_user}, std::pair{"fuse_poi", &fuse_poi},
                             std::pair{"score", &score}}) {
      for (std::size_t k = 0; k < mlp->layers.size(); ++k) {
        const std::string p = std::string(name) + "." + std::to_string(k) + ".";
        fn(p + "weight", mlp->layers[k].weight);
        fn(p + "bias", mlp->layers[k].bias);
      }
    }
  }
  template <typename F>
  void for_each(F&& fn) const {
    const_cast<ModelParams*>(this)->for_each(
        [&](const std::string& name, Matrix& m) { fn(name, static_cast<const Matrix&>(m)); });
  }

  // this += scale * other
  void axpy(double scale, const ModelParams& other);
  double l1_norm() const;
  bool all_finite() const;
  std::size_t num_scalars() const;

  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

// Region-specific embedding tables U (M x D) and L (N x D).
struct Embeddings {
  Matrix users;
  Matrix pois;

  static Embeddings init(std::size_t num_users, std::size_t num_pois, int dim,
                         std::mt19937_64& rng);
  Embeddings zeros_like() const;
  void axpy(double scale, const Embeddings& other);
  bool all_finite() const;

  friend bool operator==(const Embeddings& a, const Embeddings& b) {
    return a.users == b.users && a.pois == b.pois;
  }
};

// Compressed neighbour lists; list c holds the neighbours aggregated into
// node c (duplicates allowed, for sampled neighbourhoods).
struct NeighborLists {
  std::vector<std::int32_t> offsets;  // size n + 1
  std::vector<std::int32_t> index;

  std::size_t size() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::span<const std::int32_t> operator[](std::size_t c) const {
    return {index.data() + offsets[c], static_cast<std::size_t>(offsets[c + 1] - offsets[c])};
  }
  static NeighborLists from(const std::vector<std::vector<std::int32_t>>& lists);
};

// Neighbour lists plus constant pooling weights (p^u or p^l).
struct PoolLists {
  NeighborLists members;
  std::vector<double> weights;  // aligned with members.index
};

// softmax_j(LeakyReLU(attention . (center || neighbour_j))).
std::vector<double> attention_weights(const RowVector& center, std::span<const RowVector> neighbors,
                                      const RowVector& attention, double leaky_slope = 0.2);

// s draws with replacement, probability proportional to edge weight. An empty
// neighbourhood yields {self}.
std::vector<PoiIndex> neighbor_sample(std::span<const WeightedPoi> neighbors, PoiIndex self,
                                      int draws, std::mt19937_64& rng);

// Sampled spatial neighbourhoods for the two location aggregators.
struct SpatialSamples {
  NeighborLists latent;       // Phi3
  NeighborLists conditioned;  // Phi4
};

// Per POI: the POI itself followed by min(|S_l|, sample_size) weighted draws
// from S_l. Each POI gets its own engine derived from (stream, keys..., poi,
// aggregator).
SpatialSamples draw_spatial_samples(const MobilityGraph& graph, int sample_size,
                                    const SeedStream& stream,
                                    std::initializer_list<std::uint64_t> keys);

struct GatLayerCache {
  Matrix input;      // X
  Matrix messages;   // X W^T + b
  Matrix preact;     // sum_k alpha_ck messages_k
  std::vector<double> logits;  // pre-LeakyReLU, aligned with neighbour index
  std::vector<double> alpha;
};

struct GatCache {
  std::vector<std::int32_t> offsets;  // neighbour list layout used
  std::vector<GatLayerCache> layers;
};

struct PoolCache {
  std::vector<std::int32_t> argmax;  // n x D, member index or -1
};

struct MlpCache {
  std::vector<Matrix> inputs;   // input to each layer
  std::vector<Matrix> preacts;  // pre-activation of each hidden layer
};

// Attention aggregation over neighbour lists: act(sum_k alpha_ck (W x_k + b)),
// repeated over the stacked layers.
Matrix gat_aggregate(const Matrix& x, const NeighborLists& nbrs, std::span<const GatLayer> layers,
                     Activation act, double leaky_slope, GatCache* cache = nullptr);

// Accumulates gradients of a gat_aggregate call into grad_layers / grad_x.
void gat_aggregate_backward(const NeighborLists& nbrs, std::span<const GatLayer> layers,
                            Activation act, double leaky_slope, const GatCache& cache,
                            const Matrix& grad_out, std::span<GatLayer> grad_layers, Matrix* grad_x);

// Elementwise max over {w_ck * x_k}; zero rows for empty lists.
Matrix max_pool(const Matrix& x, const PoolLists& lists, PoolCache* cache = nullptr);
void max_pool_backward(const PoolLists& lists, const PoolCache& cache, const Matrix& grad_out,
                       Matrix* grad_x);

Matrix mlp_forward(const Mlp& mlp, const Matrix& x, MlpCache* cache = nullptr);
void mlp_backward(const Mlp& mlp, const MlpCache& cache, const Matrix& grad_out, Mlp* grad_mlp,
                  Matrix* grad_x);

struct ForwardOutputs {
  Matrix user_latent;        // U_l
  Matrix user_conditioned;   // U_s
  Matrix poi_latent;         // L_l
  Matrix poi_conditioned;    // L_s
  Matrix user_pool;          // Q
  Matrix poi_pool;           // Y
  Matrix user_final;         // U_f
  Matrix poi_final;          // L_f

  std::array<GatCache, 4> gat_cache;
  PoolCache user_pool_cache;
  PoolCache poi_pool_cache;
  MlpCache fuse_user_cache;
  MlpCache fuse_poi_cache;
  std::vector<UserIndex> users_without_checkins;  // Q rows that are zero
  std::vector<PoiIndex> pois_without_visitors;    // Y rows that are zero

  // Attention rows of aggregator phi (0..3) for its first layer.
  std::span<const double> attention(int phi, std::size_t node) const;
};

struct UserPoiPair {
  UserIndex user = 0;
  PoiIndex poi = 0;
};

struct ScoreCache {
  MlpCache mlp;
  Matrix hadamard;
};

// The twin-graph model bound to one region's graph. Holds the static
// neighbourhood structure; parameters and embeddings are passed per call.
class TwinGat {
 public:
  TwinGat(const ModelConfig& config, const MobilityGraph& graph);

  const ModelConfig& config() const { return config_; }
  const MobilityGraph& graph() const { return *graph_; }
  const NeighborLists& social_lists() const { return social_; }
  const PoolLists& user_pool_lists() const { return user_pool_; }
  const PoolLists& poi_pool_lists() const { return poi_pool_; }

  ForwardOutputs forward(const ModelParams& params, const Embeddings& emb,
                         const SpatialSamples& samples) const;

  // Back-propagates dL/dU_f and dL/dL_f (either may be empty = zero) into
  // parameter and embedding gradients (accumulated).
  void backward(const ModelParams& params, const Embeddings& emb, const SpatialSamples& samples,
                const ForwardOutputs& out, const Matrix& grad_user_final,
                const Matrix& grad_poi_final, ModelParams* grad_params, Embeddings* grad_emb) const;

  // r = score(U_f[u] (.) L_f[l]) for each pair.
  std::vector<double> predict(const ModelParams& params, const ForwardOutputs& out,
                              std::span<const UserPoiPair> pairs, ScoreCache* cache = nullptr) const;
  // Given dL/dr per pair, accumulates into the score MLP gradient and
  // dL/dU_f, dL/dL_f (which must be pre-sized).
  void predict_backward(const ModelParams& params, const ForwardOutputs& out,
                        std::span<const UserPoiPair> pairs, const ScoreCache& cache,
                        std::span<const double> grad_scores, ModelParams* grad_params,
                        Matrix* grad_user_final, Matrix* grad_poi_final) const;

  // Scores of one user-final vector against every POI.
  std::vector<double> score_all(const ModelParams& params, const ForwardOutputs& out,
                                const RowVector& user_final) const;

 private:
  ModelConfig config_;
  const MobilityGraph* graph_;
  NeighborLists social_;  // {u} + N_u
  // {v} only; used by the aggregators a variant switches off.
  NeighborLists self_users_;
  NeighborLists self_pois_;
  PoolLists user_pool_;   // S_u with p^u weights
  PoolLists poi_pool_;    // N_l with p^l weights
};

// Named single-aggregator entry points.
Matrix user_latent(const TwinGat& model, const Matrix& users, const ModelParams& params);
Matrix user_checkin_pool(const TwinGat& model, const Matrix& pois);
Matrix location_conditioned_user(const TwinGat& model, const Matrix& user_pool,
                                 const ModelParams& params);
Matrix location_latent(const TwinGat& model, const Matrix& pois, const ModelParams& params,
                       const NeighborLists& sampled);
Matrix location_user_pool(const TwinGat& model, const Matrix& users);
Matrix user_conditioned_location(const TwinGat& model, const Matrix& poi_pool,
                                 const ModelParams& params, const NeighborLists& sampled);

}  // namespace xregion
