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
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xregion/cluster_transfer.hpp"
#include "xregion/common.hpp"
#include "xregion/data_ingest.hpp"
#include "xregion/evaluation.hpp"
#include "xregion/losses.hpp"
#include "xregion/mobility_graph.hpp"
#include "xregion/rng.hpp"
#include "xregion/twin_gat.hpp"

namespace xregion {

// full: meta loop + cluster transfer. axo-m: meta loop only. axo-f: source
// pretraining then target fine-tuning. target-only: the meta loop with every
// source term dropped.
enum class TrainMode { kFull, kAxoM, kAxoF, kTargetOnly };

TrainMode parse_mode(const std::string& name);
std::string to_string(TrainMode mode);

struct TrainConfig {
  double omega1 = 0.001;  // inner / source steps
  double omega2 = 0.001;  // global prediction step
  double omega3 = 0.001;  // social steps
  int inner_steps = 4;    // N_u
  int transfer_every = 4; // M_t
  double lambda_p = 0.01;
  int batch_size = 32;    // target positives per step
  int max_epochs = 50;
  int fine_tune_epochs = 10;
  double fine_tune_lr = 0.01;
  int patience = 3;
  int eval_k = 5;
  double divergence = 1e6;
  TrainMode mode = TrainMode::kFull;
  std::uint64_t seed = 0;
  ModelConfig model;
  TransferConfig transfer;

  void validate() const;
};

// Static per-region training data.
class RegionContext {
 public:
  RegionContext(const MobilityGraph& graph, const ModelConfig& config,
                const RegionDataset* validation = nullptr);
  RegionContext(const RegionContext&) = delete;
  RegionContext& operator=(const RegionContext&) = delete;

  const MobilityGraph& graph() const { return *graph_; }
  const TwinGat& model() const { return model_; }
  const std::vector<RatedPair>& positives() const { return positives_; }
  const std::vector<std::vector<std::int32_t>>& social() const { return social_; }
  const std::vector<std::vector<std::int32_t>>& spatial() const { return spatial_; }
  const RegionDataset* validation() const { return validation_; }

 private:
  const MobilityGraph* graph_;
  TwinGat model_;
  std::vector<RatedPair> positives_;
  std::vector<std::vector<std::int32_t>> social_;
  std::vector<std::vector<std::int32_t>> spatial_;
  const RegionDataset* validation_;
};

struct ParameterState {
  ModelParams shared;  // theta_st
  ModelParams target;  // theta_tgt
  ModelParams source;  // theta_src
  Embeddings source_emb;
  Embeddings target_emb;
  TransferParams transfer;

  static ParameterState init(const TrainConfig& cfg, const MobilityGraph& source,
                             const MobilityGraph& target);
  friend bool operator==(const ParameterState& a, const ParameterState& b);
};

enum class LinkKind { kUsers, kPois };

// Every random draw of a run, addressed by (epoch, step, slot).
class DrawPlan {
 public:
  DrawPlan(const TrainConfig& cfg, const RegionContext& source, const RegionContext& target);

  int steps_per_epoch() const { return steps_; }
  // Meta steps needed for one pass over the source positives.
  int source_steps() const { return source_steps_; }

  // All links of one pass, each with a sampled non-link, in a seeded order.
  LinkSamples user_links(RegionTag region, int pass) const;
  LinkSamples poi_links(RegionTag region, int pass) const;
  // batch_size consecutive links of the current pass for meta step
  // (epoch, step); passes continue across epochs.
  LinkSamples link_batch(RegionTag region, LinkKind kind, int epoch, int step) const;
  SpatialSamples samples(RegionTag region, int epoch, int step, int slot) const;
  SpatialSamples eval_samples(RegionTag region) const;

  // Slice `step` of the epoch's shuffled target positives, plus negatives.
  std::vector<RatedPair> target_batch(int epoch, int step) const;
  // A fresh random draw of target positives for inner step k, plus negatives.
  std::vector<RatedPair> target_inner_batch(int epoch, int step, int k) const;
  // Source batches have the target batch size and walk through successive
  // shuffled passes over the source positives, continuing across epochs.
  std::vector<RatedPair> source_batch(int epoch, int step) const;
  // Fine-tuning / pretraining batches over one region's positives.
  std::vector<RatedPair> plain_batch(RegionTag region, int phase, int epoch, int step,
                                     std::size_t batch_size) const;
  int plain_steps(RegionTag region, std::size_t batch_size) const;

 private:
  const RegionContext& region(RegionTag tag) const;
  std::vector<RatedPair> slice(RegionTag region, std::uint64_t phase, int epoch, int step,
                               std::size_t batch_size) const;

  SeedStreams streams_;
  const RegionContext* source_;
  const RegionContext* target_;
  int sample_size_;
  int steps_;
  std::size_t batch_;
  int source_steps_;
  std::int64_t link_steps_[2][2];  // [region][users, pois]
};

// Spatial-sample slots within one meta step.
inline constexpr int kSlotSocial = 0;
inline constexpr int kSlotSource = 1;
inline constexpr int kSlotFinal = 2;
inline constexpr int kSlotInner = 3;  // + k

// Links [begin, begin + count), clamped to the available range.
LinkSamples slice_links(const LinkSamples& links, std::size_t begin, std::size_t count);

struct SocialWarmResult {
  ModelParams adapted;  // theta_st - omega * grad
  Gradients grad;       // at theta_st
};

// One social step from theta_st: theta_0 = theta_st - omega * dL_s/dtheta.
SocialWarmResult social_warm_update(const RegionContext& region, const ModelParams& theta_st,
                                    const Embeddings& emb, const SpatialSamples& samples,
                                    const LinkSamples& user_links, const LinkSamples& poi_links,
                                    double omega);

struct InnerLoopResult {
  ModelParams theta;
  Embeddings emb;
  std::vector<double> losses;
};

// len(batches) plain L_p steps from `start`, moving theta and the target
// embeddings with omega1.
InnerLoopResult target_inner_loop(const RegionContext& region, const ModelParams& start,
                                  const Embeddings& emb,
                                  std::span<const std::vector<RatedPair>> batches,
                                  std::span<const SpatialSamples> samples, double omega1,
                                  double lambda_p);

struct SourceUpdateResult {
  ModelParams theta;  // theta_st - omega1 * grad
  Gradients grad;     // at theta_st
};

SourceUpdateResult source_update(const RegionContext& region, const ModelParams& theta_st,
                                 const Embeddings& emb, std::span<const RatedPair> batch,
                                 const SpatialSamples& samples, double omega1, double lambda_p);

// theta_st - omega2 (g_src_p + g_tgt_p) - omega3 (g_src_s + g_tgt_s).
ModelParams global_update(const ModelParams& theta_st, const ModelParams& g_source_pred,
                          const ModelParams& g_target_pred, const ModelParams& g_source_social,
                          const ModelParams& g_target_social, double omega2, double omega3);

struct StepLosses {
  double target_pred = 0.0;
  double source_pred = 0.0;
  double target_social = 0.0;
  double source_social = 0.0;
};

// One full meta step (social warm-up, inner loop, source step, global step)
// with the plan's draws for (epoch, step).
StepLosses meta_step(ParameterState* state, const RegionContext& source,
                     const RegionContext& target, const TrainConfig& cfg, const DrawPlan& plan,
                     int epoch, int step);

struct EpochRecord {
  std::string phase;  // meta | pretrain | finetune
  int epoch = 0;      // 1-based within the phase
  StepLosses losses;
  std::optional<double> validation;  // NDCG@eval_k on target validation
  std::optional<TransferReport> transfer;
};

struct TrainResult {
  ParameterState state;
  std::vector<EpochRecord> records;
  int meta_epochs_run = 0;
  bool early_stopped = false;
};

struct Checkpoint {
  std::string mode;
  std::string phase;  // meta | done
  int epoch = 0;
  double best_validation = -1.0;
  int best_epoch = 0;
  int bad_epochs = 0;
  std::uint64_t seed = 0;
  ParameterState state;
  std::optional<ParameterState> best;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

struct TrainHooks {
  std::filesystem::path checkpoint_dir;  // empty = no checkpoints
  std::ostream* log = nullptr;           // JSON-lines records
  const Checkpoint* resume = nullptr;
  // Called after every meta epoch (before early-stop restoration).
  std::function<void(int epoch, const ParameterState&)> on_epoch;
};

TrainResult train(const RegionContext& source, const RegionContext& target,
                  const TrainConfig& cfg, const TrainHooks& hooks = {});

// Plain SGD on L_p of one region, moving `theta` and `emb`. Phase "pretrain"
// walks the meta loop's source batches at omega2; other phases use
// fine_tune_lr with early stopping on target validation. Returns the records.
std::vector<EpochRecord> fine_tune(const RegionContext& region, ModelParams* theta,
                                   Embeddings* emb, const TrainConfig& cfg, const DrawPlan& plan,
                                   int epochs, const std::string& phase, std::ostream* log);

// Validation NDCG@k of (theta, emb) on the region's validation split.
std::optional<double> validation_ndcg(const RegionContext& region, const ModelParams& theta,
                                      const Embeddings& emb, const DrawPlan& plan, int k);

std::string record_json(const EpochRecord& record);

}  // namespace xregion
