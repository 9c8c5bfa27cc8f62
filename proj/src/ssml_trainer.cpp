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

#include "xregion/ssml_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "xregion/binary_io.hpp"
#include "xregion/log.hpp"

namespace xregion {
namespace {

constexpr char kCheckpointMagic[8] = {'X', 'R', 'C', 'K', 'P', 'T', '\0', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

constexpr std::uint64_t kPhaseMeta = 0;
constexpr std::uint64_t kPhasePretrain = 1;
constexpr std::uint64_t kPhaseFinetune = 2;
constexpr std::uint64_t kInnerDraw = 3;
constexpr std::uint64_t kEvalDraw = 0xe7a1;

std::uint64_t region_key(RegionTag tag) { return tag == RegionTag::kSource ? 11 : 13; }

std::uint64_t phase_id(const std::string& phase) {
  if (phase == "pretrain") return kPhasePretrain;
  if (phase == "finetune") return kPhaseFinetune;
  return kPhaseMeta;
}

void check_divergence(double loss, double limit, const std::string& what, int epoch, int step) {
  if (!std::isfinite(loss) || loss > limit) {
    throw NumericError("training diverged: " + what + " loss " + std::to_string(loss) + " at epoch " +
                       std::to_string(epoch) + ", step " + std::to_string(step));
  }
}

nlohmann::ordered_json transfer_json(const TransferReport& t) {
  nlohmann::ordered_json j;
  j["loss_before"] = t.loss_before;
  j["loss_after"] = t.loss_after;
  j["clusters"] = {t.user_clusters_source, t.user_clusters_target, t.poi_clusters_source,
                   t.poi_clusters_target};
  auto buckets = [](const std::vector<BetaBucket>& bs) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (const auto& b : bs) {
      a.push_back({{"tv_low", b.tv_low}, {"tv_high", b.tv_high}, {"pairs", b.pairs},
                   {"mean_beta", b.mean_beta}});
    }
    return a;
  };
  j["user_beta_by_tv"] = buckets(t.user_buckets);
  j["poi_beta_by_tv"] = buckets(t.poi_buckets);
  return j;
}

void emit(std::ostream* log, const EpochRecord& r) {
  if (log) *log << record_json(r) << '\n' << std::flush;
}

void put_state(std::vector<std::pair<std::string, const Matrix*>>* out, const std::string& prefix,
               const ParameterState& s) {
  for (auto [name, p] : {std::pair{"shared.", &s.shared}, std::pair{"target.", &s.target},
                         std::pair{"source.", &s.source}}) {
    p->for_each([&, name](const std::string& n, const Matrix& m) { out->push_back({prefix + name + n, &m}); });
  }
  out->push_back({prefix + "source_emb.users", &s.source_emb.users});
  out->push_back({prefix + "source_emb.pois", &s.source_emb.pois});
  out->push_back({prefix + "target_emb.users", &s.target_emb.users});
  out->push_back({prefix + "target_emb.pois", &s.target_emb.pois});
}

ParameterState take_state(std::map<std::string, Matrix>* tensors, const std::string& prefix,
                          const ModelConfig& config) {
  auto take = [&](const std::string& name) {
    auto it = tensors->find(prefix + name);
    if (it == tensors->end()) throw DataError("checkpoint is missing tensor " + prefix + name);
    Matrix m = std::move(it->second);
    tensors->erase(it);
    return m;
  };
  std::mt19937_64 dummy(0);
  ParameterState s;
  for (auto [name, p] : {std::pair{"shared.", &s.shared}, std::pair{"target.", &s.target},
                         std::pair{"source.", &s.source}}) {
    *p = ModelParams::init(config, dummy);
    p->for_each([&, name](const std::string& n, Matrix& m) {
      Matrix loaded = take(std::string(name) + n);
      if (loaded.rows() != m.rows() || loaded.cols() != m.cols()) {
        throw DataError("checkpoint tensor " + prefix + name + n + " has the wrong shape");
      }
      m = std::move(loaded);
    });
  }
  s.source_emb.users = take("source_emb.users");
  s.source_emb.pois = take("source_emb.pois");
  s.target_emb.users = take("target_emb.users");
  s.target_emb.pois = take("target_emb.pois");
  s.transfer.user_attention = take("transfer.user_attention").row(0);
  s.transfer.poi_attention = take("transfer.poi_attention").row(0);
  return s;
}

void shuffle_links(LinkSamples* s, std::mt19937_64& rng) {
  std::vector<std::size_t> order(s->positives.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  LinkSamples out;
  out.skipped = std::move(s->skipped);
  for (std::size_t i : order) {
    out.positives.push_back(s->positives[i]);
    out.negatives.push_back(s->negatives[i]);
  }
  *s = std::move(out);
}

}  // namespace

LinkSamples slice_links(const LinkSamples& links, std::size_t begin, std::size_t count) {
  const std::size_t n = links.positives.size();
  begin = std::min(begin, n);
  const std::size_t end = std::min(n, begin + count);
  LinkSamples out;
  out.positives.assign(links.positives.begin() + static_cast<std::ptrdiff_t>(begin),
                       links.positives.begin() + static_cast<std::ptrdiff_t>(end));
  out.negatives.assign(links.negatives.begin() + static_cast<std::ptrdiff_t>(begin),
                       links.negatives.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

TrainMode parse_mode(const std::string& name) {
  if (name == "full") return TrainMode::kFull;
  if (name == "axo-m") return TrainMode::kAxoM;
  if (name == "axo-f") return TrainMode::kAxoF;
  if (name == "target-only") return TrainMode::kTargetOnly;
  throw ConfigError("unknown training mode '" + name + "'");
}

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kFull: return "full";
    case TrainMode::kAxoM: return "axo-m";
    case TrainMode::kAxoF: return "axo-f";
    case TrainMode::kTargetOnly: return "target-only";
  }
  return "?";
}

void TrainConfig::validate() const {
  // Zero global rates are allowed; they freeze theta_st.
  if (!(omega1 > 0.0) || !(omega2 >= 0.0) || !(omega3 >= 0.0) || !(fine_tune_lr > 0.0)) {
    throw ConfigError("learning rates must be finite, omega1 and fine_tune_lr positive");
  }
  if (inner_steps < 1) throw ConfigError("inner_steps (N_u) must be >= 1");
  if (transfer_every < 1) throw ConfigError("transfer_every (M_t) must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 0 || fine_tune_epochs < 0) throw ConfigError("epoch counts must be >= 0");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (eval_k < 1) throw ConfigError("eval_k must be >= 1");
  if (!(lambda_p >= 0.0)) throw ConfigError("lambda_p must be >= 0");
  model.validate();
  transfer.validate();
}

RegionContext::RegionContext(const MobilityGraph& graph, const ModelConfig& config,
                             const RegionDataset* validation)
    : graph_(&graph),
      model_(config, graph),
      positives_(affinity_pairs(graph)),
      social_(social_adjacency(graph)),
      spatial_(spatial_adjacency(graph)),
      validation_(validation) {
  if (positives_.empty()) throw DataError("region has no training check-ins");
}

ParameterState ParameterState::init(const TrainConfig& cfg, const MobilityGraph& source,
                                    const MobilityGraph& target) {
  const SeedStreams streams(cfg.seed);
  ParameterState s;
  auto theta_rng = streams.init.engine({0});
  s.shared = ModelParams::init(cfg.model, theta_rng);
  s.target = s.shared;
  s.source = s.shared;
  auto src_rng = streams.init.engine({1});
  s.source_emb = Embeddings::init(source.num_users(), source.num_pois(), cfg.model.dim, src_rng);
  auto tgt_rng = streams.init.engine({2});
  s.target_emb = Embeddings::init(target.num_users(), target.num_pois(), cfg.model.dim, tgt_rng);
  auto tr_rng = streams.init.engine({3});
  s.transfer = TransferParams::init(cfg.model.dim, tr_rng);
  return s;
}

bool operator==(const ParameterState& a, const ParameterState& b) {
  return a.shared == b.shared && a.target == b.target && a.source == b.source &&
         a.source_emb == b.source_emb && a.target_emb == b.target_emb && a.transfer == b.transfer;
}

DrawPlan::DrawPlan(const TrainConfig& cfg, const RegionContext& source, const RegionContext& target)
    : streams_(cfg.seed),
      source_(&source),
      target_(&target),
      sample_size_(cfg.model.sample_size),
      batch_(static_cast<std::size_t>(cfg.batch_size)) {
  const std::size_t pt = target.positives().size();
  steps_ = static_cast<int>((pt + batch_ - 1) / batch_);
  const std::size_t ps = source.positives().size();
  source_steps_ = static_cast<int>((ps + batch_ - 1) / batch_);
  for (auto tag : {RegionTag::kSource, RegionTag::kTarget}) {
    const std::size_t n[2] = {user_links(tag, 1).positives.size(), poi_links(tag, 1).positives.size()};
    for (int kind = 0; kind < 2; ++kind) {
      link_steps_[tag == RegionTag::kSource ? 0 : 1][kind] =
          std::max<std::int64_t>(1, static_cast<std::int64_t>((n[kind] + batch_ - 1) / batch_));
    }
  }
}

const RegionContext& DrawPlan::region(RegionTag tag) const {
  return tag == RegionTag::kSource ? *source_ : *target_;
}

LinkSamples DrawPlan::user_links(RegionTag region_tag, int pass) const {
  auto rng = streams_.negatives.engine({region_key(region_tag), 0, static_cast<std::uint64_t>(pass)});
  LinkSamples s = sample_link_negatives(region(region_tag).social(), rng);
  shuffle_links(&s, rng);
  if (!s.skipped.empty()) {
    logger().warn("{} {} users are linked to everyone; their social terms are skipped",
                  s.skipped.size(), to_string(region_tag));
  }
  return s;
}

LinkSamples DrawPlan::poi_links(RegionTag region_tag, int pass) const {
  auto rng = streams_.negatives.engine({region_key(region_tag), 1, static_cast<std::uint64_t>(pass)});
  LinkSamples s = sample_link_negatives(region(region_tag).spatial(), rng);
  shuffle_links(&s, rng);
  if (!s.skipped.empty()) {
    logger().warn("{} {} POIs are linked to everyone; their spatial terms are skipped",
                  s.skipped.size(), to_string(region_tag));
  }
  return s;
}

LinkSamples DrawPlan::link_batch(RegionTag region_tag, LinkKind kind, int epoch, int step) const {
  const int k = kind == LinkKind::kUsers ? 0 : 1;
  const std::int64_t per_pass = link_steps_[region_tag == RegionTag::kSource ? 0 : 1][k];
  const std::int64_t g = static_cast<std::int64_t>(epoch - 1) * steps_ + step;
  const int pass = static_cast<int>(g / per_pass) + 1;
  const LinkSamples all = k == 0 ? user_links(region_tag, pass) : poi_links(region_tag, pass);
  return slice_links(all, static_cast<std::size_t>(g % per_pass) * batch_, batch_);
}

SpatialSamples DrawPlan::samples(RegionTag region_tag, int epoch, int step, int slot) const {
  return draw_spatial_samples(region(region_tag).graph(), sample_size_, streams_.sampler,
                              {region_key(region_tag), static_cast<std::uint64_t>(epoch),
                               static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(slot)});
}

SpatialSamples DrawPlan::eval_samples(RegionTag region_tag) const {
  return draw_spatial_samples(region(region_tag).graph(), sample_size_, streams_.sampler,
                              {region_key(region_tag), kEvalDraw});
}

std::vector<RatedPair> DrawPlan::slice(RegionTag region_tag, std::uint64_t phase, int epoch,
                                       int step, std::size_t batch_size) const {
  const auto& pos = region(region_tag).positives();
  std::vector<std::size_t> order(pos.size());
  std::iota(order.begin(), order.end(), 0);
  auto rng = streams_.batches.engine({region_key(region_tag), phase, static_cast<std::uint64_t>(epoch)});
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t begin = std::min(order.size(), static_cast<std::size_t>(step) * batch_size);
  const std::size_t end = std::min(order.size(), begin + batch_size);
  std::vector<RatedPair> batch;
  for (std::size_t i = begin; i < end; ++i) batch.push_back(pos[order[i]]);
  auto neg_rng = streams_.negatives.engine(
      {region_key(region_tag), phase + 16, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(step)});
  return with_sampled_negatives(region(region_tag).graph(), batch, neg_rng);
}

std::vector<RatedPair> DrawPlan::target_batch(int epoch, int step) const {
  return slice(RegionTag::kTarget, kPhaseMeta, epoch, step, batch_);
}

std::vector<RatedPair> DrawPlan::source_batch(int epoch, int step) const {
  const std::int64_t g = static_cast<std::int64_t>(epoch - 1) * steps_ + step;
  const std::int64_t pass = g / source_steps_;
  const auto at = static_cast<int>(g % source_steps_);
  return slice(RegionTag::kSource, kPhaseMeta, static_cast<int>(pass) + 1, at, batch_);
}

std::vector<RatedPair> DrawPlan::target_inner_batch(int epoch, int step, int k) const {
  const auto& pos = target_->positives();
  auto rng = streams_.batches.engine({region_key(RegionTag::kTarget), kInnerDraw,
                                      static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(step),
                                      static_cast<std::uint64_t>(k)});
  std::vector<std::size_t> order(pos.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t n = std::min(batch_, order.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::vector<RatedPair> batch;
  for (std::size_t i = 0; i < n; ++i) batch.push_back(pos[order[i]]);
  return with_sampled_negatives(target_->graph(), batch, rng);
}

std::vector<RatedPair> DrawPlan::plain_batch(RegionTag region_tag, int phase, int epoch, int step,
                                             std::size_t batch_size) const {
  return slice(region_tag, static_cast<std::uint64_t>(phase), epoch, step, batch_size);
}

int DrawPlan::plain_steps(RegionTag region_tag, std::size_t batch_size) const {
  return static_cast<int>((region(region_tag).positives().size() + batch_size - 1) / batch_size);
}

SocialWarmResult social_warm_update(const RegionContext& region, const ModelParams& theta_st,
                                    const Embeddings& emb, const SpatialSamples& samples,
                                    const LinkSamples& user_links, const LinkSamples& poi_links,
                                    double omega) {
  SocialWarmResult r{theta_st, social_gradient(region.model(), theta_st, emb, samples, user_links, poi_links)};
  r.adapted.axpy(-omega, r.grad.params);
  return r;
}

InnerLoopResult target_inner_loop(const RegionContext& region, const ModelParams& start,
                                  const Embeddings& emb,
                                  std::span<const std::vector<RatedPair>> batches,
                                  std::span<const SpatialSamples> samples, double omega1,
                                  double lambda_p) {
  if (batches.empty()) throw ConfigError("inner loop needs at least one step");
  if (samples.size() != batches.size()) throw Error("inner loop: one sample draw per step required");
  InnerLoopResult r{start, emb, {}};
  for (std::size_t k = 0; k < batches.size(); ++k) {
    const Gradients g = prediction_gradient(region.model(), r.theta, r.emb, samples[k], batches[k], lambda_p);
    r.theta.axpy(-omega1, g.params);
    r.emb.axpy(-omega1, g.emb);
    r.losses.push_back(g.loss.prediction);
  }
  return r;
}

SourceUpdateResult source_update(const RegionContext& region, const ModelParams& theta_st,
                                 const Embeddings& emb, std::span<const RatedPair> batch,
                                 const SpatialSamples& samples, double omega1, double lambda_p) {
  SourceUpdateResult r{theta_st, prediction_gradient(region.model(), theta_st, emb, samples, batch, lambda_p)};
  r.theta.axpy(-omega1, r.grad.params);
  return r;
}

ModelParams global_update(const ModelParams& theta_st, const ModelParams& g_source_pred,
                          const ModelParams& g_target_pred, const ModelParams& g_source_social,
                          const ModelParams& g_target_social, double omega2, double omega3) {
  ModelParams next = theta_st;
  next.axpy(-omega2, g_source_pred);
  next.axpy(-omega2, g_target_pred);
  next.axpy(-omega3, g_source_social);
  next.axpy(-omega3, g_target_social);
  return next;
}

StepLosses meta_step(ParameterState* state, const RegionContext& source,
                     const RegionContext& target, const TrainConfig& cfg, const DrawPlan& plan,
                     int epoch, int step) {
  const auto tgt = RegionTag::kTarget;
  const auto src = RegionTag::kSource;
  StepLosses losses;

  // Social warm-up on both regions from theta_st.
  const SocialWarmResult warm_t = social_warm_update(
      target, state->shared, state->target_emb, plan.samples(tgt, epoch, step, kSlotSocial),
      plan.link_batch(tgt, LinkKind::kUsers, epoch, step), plan.link_batch(tgt, LinkKind::kPois, epoch, step),
      cfg.omega3);
  state->target_emb.axpy(-cfg.omega3, warm_t.grad.emb);
  // Target-only training runs the same schedule with every source term
  // removed.
  const bool with_source = cfg.mode != TrainMode::kTargetOnly;
  std::optional<SocialWarmResult> warm_s;
  if (with_source) {
    warm_s = social_warm_update(source, state->shared, state->source_emb,
                                plan.samples(src, epoch, step, kSlotSocial),
                                plan.link_batch(src, LinkKind::kUsers, epoch, step),
                                plan.link_batch(src, LinkKind::kPois, epoch, step), cfg.omega3);
    state->source_emb.axpy(-cfg.omega3, warm_s->grad.emb);
    losses.source_social = warm_s->grad.loss.total_social();
  }
  losses.target_social = warm_t.grad.loss.total_social();

  // Target inner loop from the warm start.
  std::vector<std::vector<RatedPair>> batches;
  std::vector<SpatialSamples> samples;
  for (int k = 0; k < cfg.inner_steps; ++k) {
    batches.push_back(plan.target_inner_batch(epoch, step, k));
    samples.push_back(plan.samples(tgt, epoch, step, kSlotInner + k));
  }
  InnerLoopResult inner = target_inner_loop(target, warm_t.adapted, state->target_emb, batches,
                                            samples, cfg.omega1, cfg.lambda_p);
  state->target_emb = std::move(inner.emb);

  std::optional<SourceUpdateResult> su;
  if (with_source) {
    su = source_update(source, state->shared, state->source_emb, plan.source_batch(epoch, step),
                       plan.samples(src, epoch, step, kSlotSource), cfg.omega1, cfg.lambda_p);
    state->source_emb.axpy(-cfg.omega1, su->grad.emb);
    state->source = su->theta;
    losses.source_pred = su->grad.loss.prediction;
  }

  const Gradients final_t = prediction_gradient(target.model(), inner.theta, state->target_emb,
                                                plan.samples(tgt, epoch, step, kSlotFinal),
                                                plan.target_batch(epoch, step), cfg.lambda_p);
  state->target_emb.axpy(-cfg.omega2, final_t.emb);
  state->target = std::move(inner.theta);
  losses.target_pred = final_t.loss.prediction;

  if (with_source) {
    state->shared = global_update(state->shared, su->grad.params, final_t.params, warm_s->grad.params,
                                  warm_t.grad.params, cfg.omega2, cfg.omega3);
  } else {
    const ModelParams zero = state->shared.zeros_like();
    state->shared = global_update(state->shared, zero, final_t.params, zero, warm_t.grad.params,
                                  cfg.omega2, cfg.omega3);
  }

  check_divergence(losses.target_pred, cfg.divergence, "target prediction", epoch, step);
  check_divergence(losses.source_pred, cfg.divergence, "source prediction", epoch, step);
  check_divergence(losses.target_social, cfg.divergence, "target social", epoch, step);
  check_divergence(losses.source_social, cfg.divergence, "source social", epoch, step);
  if (!state->shared.all_finite()) {
    throw NumericError("non-finite shared parameters at epoch " + std::to_string(epoch));
  }
  return losses;
}

std::optional<double> validation_ndcg(const RegionContext& region, const ModelParams& theta,
                                      const Embeddings& emb, const DrawPlan& plan, int k) {
  if (!region.validation()) return std::nullopt;
  const ModelScorer scorer(region.model(), theta, emb, plan.eval_samples(region.graph().region_tag()));
  EvalOptions opt;
  opt.ks = {k};
  try {
    return evaluate(scorer, region.graph(), *region.validation(), opt).ndcg_at(k);
  } catch (const NumericError&) {
    throw;
  } catch (const Error& e) {
    logger().warn("validation skipped: {}", e.what());
    return std::nullopt;
  }
}

std::vector<EpochRecord> fine_tune(const RegionContext& region, ModelParams* theta,
                                   Embeddings* emb, const TrainConfig& cfg, const DrawPlan& plan,
                                   int epochs, const std::string& phase, std::ostream* log) {
  const RegionTag tag = region.graph().region_tag();
  const bool pretrain = phase == "pretrain";
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  // Source pretraining follows the meta loop's source schedule and rate, so
  // both see the same source batches.
  const int steps = pretrain ? plan.steps_per_epoch() : plan.plain_steps(tag, batch);
  const double lr = pretrain ? cfg.omega2 : cfg.fine_tune_lr;
  const int pid = static_cast<int>(phase_id(phase));
  const bool use_validation = !pretrain;

  std::vector<EpochRecord> records;
  std::optional<std::pair<ModelParams, Embeddings>> best;
  double best_val = -1.0;
  int bad = 0;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    EpochRecord rec{phase, epoch, {}, std::nullopt, std::nullopt};
    double total = 0.0;
    for (int step = 0; step < steps; ++step) {
      const Gradients g = prediction_gradient(region.model(), *theta, *emb,
                                              plan.samples(tag, epoch, step, 100 + pid),
                                              pretrain ? plan.source_batch(epoch, step)
                                                       : plan.plain_batch(tag, pid, epoch, step, batch),
                                              cfg.lambda_p);
      check_divergence(g.loss.prediction, cfg.divergence, phase, epoch, step);
      theta->axpy(-lr, g.params);
      emb->axpy(-lr, g.emb);
      total += g.loss.prediction;
    }
    (tag == RegionTag::kTarget ? rec.losses.target_pred : rec.losses.source_pred) = total / steps;
    if (use_validation) rec.validation = validation_ndcg(region, *theta, *emb, plan, cfg.eval_k);
    emit(log, rec);
    records.push_back(rec);
    if (!rec.validation) continue;
    if (*rec.validation > best_val) {
      best_val = *rec.validation;
      best.emplace(*theta, *emb);
      bad = 0;
    } else if (++bad >= cfg.patience) {
      break;
    }
  }
  if (best) {
    *theta = std::move(best->first);
    *emb = std::move(best->second);
  }
  return records;
}

std::string record_json(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["record"] = "epoch";
  j["phase"] = r.phase;
  j["epoch"] = r.epoch;
  j["loss_p_tgt"] = r.losses.target_pred;
  j["loss_p_src"] = r.losses.source_pred;
  j["loss_s_tgt"] = r.losses.target_social;
  j["loss_s_src"] = r.losses.source_social;
  j["val_ndcg"] = r.validation ? nlohmann::ordered_json(*r.validation) : nlohmann::ordered_json();
  if (r.transfer) j["transfer"] = transfer_json(*r.transfer);
  return j.dump();
}

void Checkpoint::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json meta;
  meta["mode"] = mode;
  meta["phase"] = phase;
  meta["epoch"] = epoch;
  meta["best_validation"] = best_validation;
  meta["best_epoch"] = best_epoch;
  meta["bad_epochs"] = bad_epochs;
  meta["seed"] = seed;
  meta["dim"] = state.shared.score.layers.front().weight.cols();
  meta["hidden"] = state.shared.score.layers.front().weight.rows();
  meta["gat_depth"] = state.shared.gat[0].size();
  meta["has_best"] = best.has_value();

  std::vector<std::pair<std::string, const Matrix*>> tensors;
  put_state(&tensors, "", state);
  Matrix ua = state.transfer.user_attention;
  Matrix pa = state.transfer.poi_attention;
  tensors.push_back({"transfer.user_attention", &ua});
  tensors.push_back({"transfer.poi_attention", &pa});
  Matrix bua;
  Matrix bpa;
  if (best) {
    put_state(&tensors, "best.", *best);
    bua = best->transfer.user_attention;
    bpa = best->transfer.poi_attention;
    tensors.push_back({"best.transfer.user_attention", &bua});
    tensors.push_back({"best.transfer.poi_attention", &bpa});
  }

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    BinaryWriter w(out);
    w.put_bytes(kCheckpointMagic, sizeof kCheckpointMagic);
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put_string(meta.dump());
    w.put<std::uint64_t>(tensors.size());
    for (const auto& [name, m] : tensors) {
      w.put_string(name);
      w.put_matrix(*m);
    }
    if (!w.ok()) throw Error("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  BinaryReader r(in);
  char magic[8];
  r.read(magic, sizeof magic);
  if (!std::equal(magic, magic + 8, kCheckpointMagic)) throw DataError(path.string() + " is not a checkpoint");
  if (r.get<std::uint32_t>() != kCheckpointVersion) throw DataError("unsupported checkpoint version");
  const auto meta = nlohmann::json::parse(r.get_string());
  std::map<std::string, Matrix> tensors;
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.get_string();
    tensors[name] = r.get_matrix();
  }

  Checkpoint c;
  c.mode = meta.at("mode").get<std::string>();
  c.phase = meta.at("phase").get<std::string>();
  c.epoch = meta.at("epoch").get<int>();
  c.best_validation = meta.at("best_validation").get<double>();
  c.best_epoch = meta.at("best_epoch").get<int>();
  c.bad_epochs = meta.at("bad_epochs").get<int>();
  c.seed = meta.at("seed").get<std::uint64_t>();
  ModelConfig mc;
  mc.dim = meta.at("dim").get<int>();
  mc.hidden = meta.at("hidden").get<int>();
  mc.gat_depth = meta.at("gat_depth").get<int>();
  c.state = take_state(&tensors, "", mc);
  if (meta.at("has_best").get<bool>()) c.best = take_state(&tensors, "best.", mc);
  if (!tensors.empty()) throw DataError("checkpoint has unexpected tensor " + tensors.begin()->first);
  return c;
}

TrainResult train(const RegionContext& source, const RegionContext& target,
                  const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (source.graph().region_tag() != RegionTag::kSource || target.graph().region_tag() != RegionTag::kTarget) {
    throw ConfigError("train expects a source graph and a target graph");
  }
  const DrawPlan plan(cfg, source, target);
  const SeedStreams streams(cfg.seed);

  TrainResult result;
  Checkpoint ck;
  ck.mode = to_string(cfg.mode);
  ck.phase = "meta";
  ck.seed = cfg.seed;
  if (hooks.resume) {
    ck = *hooks.resume;
    if (ck.mode != to_string(cfg.mode)) throw ConfigError("checkpoint mode '" + ck.mode + "' does not match config");
    if (ck.seed != cfg.seed) throw ConfigError("checkpoint seed does not match config");
    if (ck.phase != "meta") throw ConfigError("checkpoint is from a finished run");
  } else {
    ck.state = ParameterState::init(cfg, source.graph(), target.graph());
    if (hooks.log) {
      nlohmann::ordered_json h;
      h["record"] = "header";
      h["mode"] = to_string(cfg.mode);
      h["seed"] = cfg.seed;
      h["steps_per_epoch"] = plan.steps_per_epoch();
      h["source_steps"] = plan.source_steps();
      *hooks.log << h.dump() << '\n';
    }
  }
  ParameterState& state = ck.state;

  auto checkpoint = [&](const std::string& name) {
    if (hooks.checkpoint_dir.empty()) return;
    std::filesystem::create_directories(hooks.checkpoint_dir);
    ck.save(hooks.checkpoint_dir / name);
  };

  if (cfg.mode != TrainMode::kAxoF) {
    for (int epoch = ck.epoch + 1; epoch <= cfg.max_epochs; ++epoch) {
      EpochRecord rec{"meta", epoch, {}, std::nullopt, std::nullopt};
      const int steps = plan.steps_per_epoch();
      for (int step = 0; step < steps; ++step) {
        const StepLosses l = meta_step(&state, source, target, cfg, plan, epoch, step);
        rec.losses.target_pred += l.target_pred / steps;
        rec.losses.source_pred += l.source_pred / steps;
        rec.losses.target_social += l.target_social / steps;
        rec.losses.source_social += l.source_social / steps;
      }
      const bool boundary = epoch % cfg.transfer_every == 0;
      if (boundary && cfg.mode == TrainMode::kFull) {
        rec.transfer = apply_transfer(&state.source_emb, &state.target_emb, &state.transfer, cfg.transfer,
                                      streams.kmeans, static_cast<std::uint64_t>(epoch), source.graph(),
                                      target.graph());
      }
      rec.validation = validation_ndcg(target, state.shared, state.target_emb, plan, cfg.eval_k);
      emit(hooks.log, rec);
      result.records.push_back(rec);
      result.meta_epochs_run = epoch;
      if (hooks.on_epoch) hooks.on_epoch(epoch, state);

      ck.epoch = epoch;
      bool stop = false;
      if (rec.validation) {
        if (*rec.validation > ck.best_validation) {
          ck.best_validation = *rec.validation;
          ck.best_epoch = epoch;
          ck.bad_epochs = 0;
          ck.best = state;
        } else if (++ck.bad_epochs >= cfg.patience) {
          stop = true;
        }
      }
      if (boundary) checkpoint("epoch_" + std::to_string(epoch) + ".ckpt");
      if (stop) {
        result.early_stopped = true;
        logger().info("early stop after epoch {} (best epoch {})", epoch, ck.best_epoch);
        break;
      }
    }
    if (ck.best) state = *ck.best;
    state.target = state.shared;
    auto ft = fine_tune(target, &state.target, &state.target_emb, cfg, plan, cfg.fine_tune_epochs, "finetune",
                        hooks.log);
    result.records.insert(result.records.end(), ft.begin(), ft.end());
  } else {
    ModelParams theta = state.shared;
    auto pre = fine_tune(source, &theta, &state.source_emb, cfg, plan, cfg.max_epochs, "pretrain", hooks.log);
    result.records.insert(result.records.end(), pre.begin(), pre.end());
    state.shared = theta;
    state.source = theta;
    state.target = theta;
    auto ft = fine_tune(target, &state.target, &state.target_emb, cfg, plan, cfg.fine_tune_epochs, "finetune",
                        hooks.log);
    result.records.insert(result.records.end(), ft.begin(), ft.end());
  }

  ck.phase = "done";
  ck.best.reset();
  checkpoint("final.ckpt");
  result.state = std::move(state);
  return result;
}

}  // namespace xregion
