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

#include <random>
#include <span>
#include <string>
#include <vector>

#include "xregion/common.hpp"
#include "xregion/mobility_graph.hpp"
#include "xregion/rng.hpp"
#include "xregion/twin_gat.hpp"

namespace xregion {

struct KMeansResult {
  std::vector<std::int32_t> assignments;
  Matrix centroids;                   // K x D
  std::vector<double> inertia_trace;  // after each assignment step
  int iterations = 0;

  double inertia() const { return inertia_trace.empty() ? 0.0 : inertia_trace.back(); }
};

// k-means++ seeding, then Lloyd iterations until the assignment is stable or
// max_iter is reached. Ties go to the lower cluster index.
KMeansResult kmeans(const Matrix& points, int k, std::mt19937_64& rng, int max_iter = 100);

double kmeans_inertia(const Matrix& points, std::span<const std::int32_t> assignments,
                      const Matrix& centroids);

// Row c = mean of the rows assigned to c (zero for an empty cluster).
Matrix cluster_embed(std::span<const std::int32_t> assignments, const Matrix& embeddings, int k);

// beta[t, s] = softmax_s(LeakyReLU(attention . (target_t || source_s))).
Matrix cluster_attention(const Matrix& target_clusters, const Matrix& source_clusters,
                         const RowVector& attention, double leaky_slope = 0.2);

// sum_t || target_t - sum_s beta[t, s] source_s ||^2 with beta computed from the
// same tables. Gradients are accumulated into any non-null output.
double alignment_term(const Matrix& target_clusters, const Matrix& source_clusters,
                      const RowVector& attention, double leaky_slope, Matrix* grad_target,
                      Matrix* grad_source, RowVector* grad_attention);

// Which cluster families contribute to L_c.
enum class AlignGroups { kBoth, kUsers, kPois };

struct TransferConfig {
  int clusters = 20;       // K
  int steps = 5;           // SGD steps per transfer event
  double lr = 0.01;
  bool symmetric = false;  // also move source embeddings
  double leaky_slope = 0.2;
  AlignGroups groups = AlignGroups::kBoth;

  void validate() const;
};

// Learnable attention vectors for beta^u and beta^l, kept across events.
struct TransferParams {
  RowVector user_attention;  // 1 x 2D
  RowVector poi_attention;

  static TransferParams init(int dim, std::mt19937_64& rng);
  friend bool operator==(const TransferParams&, const TransferParams&) = default;
};

struct ClusterGroup {
  std::vector<std::int32_t> assignments;
  Matrix centroids;
  Matrix embedding;  // mean-pooled
  int k = 0;
};

struct ClusterState {
  ClusterGroup source_users;
  ClusterGroup source_pois;
  ClusterGroup target_users;
  ClusterGroup target_pois;
  Matrix beta_user;  // K_t x K_s
  Matrix beta_poi;
};

// Clusters all four groups of the given tables (K clamped to group size) and
// computes cluster embeddings and beta.
ClusterState build_cluster_state(const Embeddings& source, const Embeddings& target,
                                 const TransferParams& params, const TransferConfig& cfg,
                                 const SeedStream& stream, std::uint64_t event);

// L_c over the groups selected by cfg.groups.
double alignment_loss(const ClusterState& state, const TransferParams& params,
                      const TransferConfig& cfg);

// Mean beta in one total-variation distance bucket.
struct BetaBucket {
  double tv_low = 0.0;
  double tv_high = 0.0;
  std::int64_t pairs = 0;
  double mean_beta = 0.0;
};

struct TransferReport {
  double loss_before = 0.0;
  double loss_after = 0.0;
  int user_clusters_source = 0;
  int user_clusters_target = 0;
  int poi_clusters_source = 0;
  int poi_clusters_target = 0;
  std::vector<BetaBucket> user_buckets;
  std::vector<BetaBucket> poi_buckets;
};

// One transfer event: recluster, then cfg.steps SGD steps on L_c over the
// embedding tables (through the mean pool) and the beta attention vectors.
// Source tables move only when cfg.symmetric is set.
TransferReport apply_transfer(Embeddings* source, Embeddings* target, TransferParams* params,
                              const TransferConfig& cfg, const SeedStream& stream,
                              std::uint64_t event, const MobilityGraph& source_graph,
                              const MobilityGraph& target_graph);

// Beta grouped by the total-variation distance between the category
// distributions of each (target, source) cluster pair; 5 equal-width buckets.
std::vector<BetaBucket> beta_buckets(const Matrix& beta, const std::vector<std::vector<double>>& target_dist,
                                     const std::vector<std::vector<double>>& source_dist);

}  // namespace xregion
