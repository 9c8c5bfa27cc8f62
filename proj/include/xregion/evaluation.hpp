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

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xregion/common.hpp"
#include "xregion/data_ingest.hpp"
#include "xregion/mobility_graph.hpp"
#include "xregion/twin_gat.hpp"

namespace xregion {

// Top-k of `scores` (indexed by POI) by descending score, ties to the lower
// index, skipping `excluded` (sorted ascending).
std::vector<PoiIndex> rank_topk(std::span<const double> scores, std::span<const PoiIndex> excluded,
                                std::size_t k);

// |topk[:k] & relevant| / k. `relevant` must be sorted.
double precision_at_k(std::span<const PoiIndex> topk, std::span<const PoiIndex> relevant, int k);
// Binary-gain NDCG with the ideal DCG over min(|relevant|, k) hits.
double ndcg_at_k(std::span<const PoiIndex> topk, std::span<const PoiIndex> relevant, int k);

// Scores every POI of one region for a user.
class Scorer {
 public:
  virtual ~Scorer() = default;
  // Empty optional when the user cannot be scored (cold start without friends).
  virtual std::optional<std::vector<double>> scores(UserIndex u) const = 0;
};

// Mean of the friends' final user embeddings. Throws Error("cold start
// unresolvable: ...") when the user has no friends in the graph.
RowVector cold_start_embed(const MobilityGraph& graph, const Matrix& user_final, UserIndex u);

// Trained-model scorer. Users with training check-ins use their own U_f row,
// the rest go through cold_start_embed.
class ModelScorer : public Scorer {
 public:
  ModelScorer(const TwinGat& model, const ModelParams& params, const Embeddings& emb,
              const SpatialSamples& samples);

  std::optional<std::vector<double>> scores(UserIndex u) const override;
  // Throws on an unresolvable cold-start user.
  RowVector user_vector(UserIndex u) const;
  const ForwardOutputs& outputs() const { return out_; }

 private:
  const TwinGat* model_;
  const ModelParams* params_;
  ForwardOutputs out_;
};

// Scores POIs by training check-in count.
class PopularityScorer : public Scorer {
 public:
  explicit PopularityScorer(const MobilityGraph& graph);
  std::optional<std::vector<double>> scores(UserIndex u) const override;

 private:
  std::vector<double> counts_;
};

struct UserMetrics {
  std::string user_id;
  std::vector<double> precision;  // aligned with MetricsReport::ks
  std::vector<double> ndcg;
};

struct MetricsReport {
  std::vector<int> ks;
  std::vector<double> precision;
  std::vector<double> ndcg;
  std::int64_t n_users = 0;
  std::int64_t n_skipped_empty = 0;  // no relevant POIs
  std::int64_t n_unresolvable = 0;   // cold start without friends
  std::vector<UserMetrics> per_user;

  double ndcg_at(int k) const;
  double precision_at(int k) const;
};

struct EvalOptions {
  std::vector<int> ks{1, 5, 10};
  // Only users with training check-ins, candidates and relevance restricted
  // to POIs seen in training.
  bool transductive = false;
  bool per_user = false;
};

// Ranks candidates (all POIs minus the user's training POIs) and compares with
// the distinct POIs of each user's check-ins in `heldout`. Throws Error when no
// user is evaluable.
MetricsReport evaluate(const Scorer& scorer, const MobilityGraph& graph,
                       const RegionDataset& heldout, const EvalOptions& options = {});

// Report as a JSON object, per-user table as TSV.
std::string report_json(const MetricsReport& report);
void write_report(const MetricsReport& report, const std::filesystem::path& json_path,
                  const std::filesystem::path& per_user_path = {});

}  // namespace xregion
