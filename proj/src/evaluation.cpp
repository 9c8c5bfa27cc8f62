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

#include "xregion/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace xregion {

std::vector<PoiIndex> rank_topk(std::span<const double> scores, std::span<const PoiIndex> excluded,
                                std::size_t k) {
  std::vector<PoiIndex> order;
  order.reserve(scores.size());
  for (std::size_t l = 0; l < scores.size(); ++l) {
    const auto p = static_cast<PoiIndex>(l);
    if (!std::binary_search(excluded.begin(), excluded.end(), p)) order.push_back(p);
  }
  const auto better = [&](PoiIndex a, PoiIndex b) {
    const double sa = scores[static_cast<std::size_t>(a)];
    const double sb = scores[static_cast<std::size_t>(b)];
    return sa > sb || (sa == sb && a < b);
  };
  const std::size_t n = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(), better);
  order.resize(n);
  return order;
}

double precision_at_k(std::span<const PoiIndex> topk, std::span<const PoiIndex> relevant, int k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  int hits = 0;
  const std::size_t n = std::min(topk.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) {
    if (std::binary_search(relevant.begin(), relevant.end(), topk[i])) ++hits;
  }
  return static_cast<double>(hits) / k;
}

double ndcg_at_k(std::span<const PoiIndex> topk, std::span<const PoiIndex> relevant, int k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  if (relevant.empty()) return 0.0;
  double dcg = 0.0;
  const std::size_t n = std::min(topk.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) {
    if (std::binary_search(relevant.begin(), relevant.end(), topk[i])) {
      dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
  }
  double idcg = 0.0;
  const std::size_t ideal = std::min(relevant.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / idcg;
}

RowVector cold_start_embed(const MobilityGraph& graph, const Matrix& user_final, UserIndex u) {
  const auto& friends = graph.social_neighbors(u);
  if (friends.empty()) {
    throw Error("cold start unresolvable: user '" + graph.user_ids()[static_cast<std::size_t>(u)] +
                "' has no training check-ins and no friends");
  }
  RowVector sum = RowVector::Zero(user_final.cols());
  for (UserIndex f : friends) sum += user_final.row(f);
  return sum / static_cast<double>(friends.size());
}

ModelScorer::ModelScorer(const TwinGat& model, const ModelParams& params, const Embeddings& emb,
                         const SpatialSamples& samples)
    : model_(&model), params_(&params), out_(model.forward(params, emb, samples)) {
  if (!out_.user_final.allFinite() || !out_.poi_final.allFinite()) {
    throw NumericError("non-finite final embeddings at evaluation");
  }
}

RowVector ModelScorer::user_vector(UserIndex u) const {
  if (model_->graph().checkin_count(u) > 0) return out_.user_final.row(u);
  return cold_start_embed(model_->graph(), out_.user_final, u);
}

std::optional<std::vector<double>> ModelScorer::scores(UserIndex u) const {
  const auto& graph = model_->graph();
  if (graph.checkin_count(u) == 0 && graph.social_neighbors(u).empty()) return std::nullopt;
  return model_->score_all(*params_, out_, user_vector(u));
}

PopularityScorer::PopularityScorer(const MobilityGraph& graph) {
  for (std::size_t l = 0; l < graph.num_pois(); ++l) {
    counts_.push_back(static_cast<double>(graph.poi_checkin_count(static_cast<PoiIndex>(l))));
  }
}

std::optional<std::vector<double>> PopularityScorer::scores(UserIndex) const { return counts_; }

double MetricsReport::ndcg_at(int k) const {
  const auto it = std::find(ks.begin(), ks.end(), k);
  if (it == ks.end()) throw Error("k=" + std::to_string(k) + " not in report");
  return ndcg[static_cast<std::size_t>(it - ks.begin())];
}

double MetricsReport::precision_at(int k) const {
  const auto it = std::find(ks.begin(), ks.end(), k);
  if (it == ks.end()) throw Error("k=" + std::to_string(k) + " not in report");
  return precision[static_cast<std::size_t>(it - ks.begin())];
}

MetricsReport evaluate(const Scorer& scorer, const MobilityGraph& graph,
                       const RegionDataset& heldout, const EvalOptions& options) {
  if (options.ks.empty()) throw ConfigError("no cutoffs given for evaluation");
  for (int k : options.ks) {
    if (k < 1) throw ConfigError("k must be >= 1");
  }
  const std::size_t kmax = static_cast<std::size_t>(*std::max_element(options.ks.begin(), options.ks.end()));

  std::vector<std::vector<PoiIndex>> relevant(graph.num_users());
  for (const Checkin& c : heldout.checkins) {
    const auto u = graph.find_user(c.user_id);
    const auto l = graph.find_poi(c.poi_id);
    if (!u || !l) throw DataError("held-out check-in references an entity missing from the graph");
    if (options.transductive && graph.poi_checkin_count(*l) == 0) continue;
    relevant[static_cast<std::size_t>(*u)].push_back(*l);
  }

  std::vector<PoiIndex> unseen;
  if (options.transductive) {
    for (std::size_t l = 0; l < graph.num_pois(); ++l) {
      if (graph.poi_checkin_count(static_cast<PoiIndex>(l)) == 0) unseen.push_back(static_cast<PoiIndex>(l));
    }
  }

  MetricsReport report;
  report.ks = options.ks;
  report.precision.assign(options.ks.size(), 0.0);
  report.ndcg.assign(options.ks.size(), 0.0);
  std::vector<PoiIndex> excluded;
  for (std::size_t ui = 0; ui < graph.num_users(); ++ui) {
    auto& rel = relevant[ui];
    const auto u = static_cast<UserIndex>(ui);
    std::sort(rel.begin(), rel.end());
    rel.erase(std::unique(rel.begin(), rel.end()), rel.end());
    if (rel.empty()) {
      ++report.n_skipped_empty;
      continue;
    }
    if (options.transductive && graph.checkin_count(u) == 0) continue;
    const auto scores = scorer.scores(u);
    if (!scores) {
      ++report.n_unresolvable;
      continue;
    }
    excluded.assign(graph.visited(u).begin(), graph.visited(u).end());
    if (options.transductive) {
      excluded.insert(excluded.end(), unseen.begin(), unseen.end());
      std::sort(excluded.begin(), excluded.end());
    }
    const auto top = rank_topk(*scores, excluded, kmax);
    UserMetrics um{graph.user_ids()[ui], {}, {}};
    for (std::size_t i = 0; i < options.ks.size(); ++i) {
      const double p = precision_at_k(top, rel, options.ks[i]);
      const double n = ndcg_at_k(top, rel, options.ks[i]);
      report.precision[i] += p;
      report.ndcg[i] += n;
      um.precision.push_back(p);
      um.ndcg.push_back(n);
    }
    ++report.n_users;
    if (options.per_user) report.per_user.push_back(std::move(um));
  }
  if (report.n_users == 0) throw Error("no evaluable users in held-out data");
  for (std::size_t i = 0; i < options.ks.size(); ++i) {
    report.precision[i] /= static_cast<double>(report.n_users);
    report.ndcg[i] /= static_cast<double>(report.n_users);
  }
  return report;
}

std::string report_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["n_users"] = report.n_users;
  j["n_skipped_empty"] = report.n_skipped_empty;
  j["n_unresolvable"] = report.n_unresolvable;
  for (std::size_t i = 0; i < report.ks.size(); ++i) {
    const std::string k = std::to_string(report.ks[i]);
    j["precision@" + k] = report.precision[i];
    j["ndcg@" + k] = report.ndcg[i];
  }
  return j.dump(2);
}

void write_report(const MetricsReport& report, const std::filesystem::path& json_path,
                  const std::filesystem::path& per_user_path) {
  std::ofstream out(json_path);
  if (!out) throw Error("cannot write report " + json_path.string());
  out << report_json(report) << '\n';
  if (per_user_path.empty()) return;
  std::ofstream table(per_user_path);
  if (!table) throw Error("cannot write per-user table " + per_user_path.string());
  table << "user_id";
  for (int k : report.ks) table << "\tprecision@" << k;
  for (int k : report.ks) table << "\tndcg@" << k;
  table << '\n';
  table.precision(17);
  for (const auto& u : report.per_user) {
    table << u.user_id;
    for (double v : u.precision) table << '\t' << v;
    for (double v : u.ndcg) table << '\t' << v;
    table << '\n';
  }
}

}  // namespace xregion
