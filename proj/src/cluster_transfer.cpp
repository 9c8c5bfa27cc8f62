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

#include "xregion/cluster_transfer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "xregion/log.hpp"

namespace xregion {
namespace {

double leaky(double s, double slope) { return s > 0.0 ? s : slope * s; }

std::int32_t nearest(const Matrix& centroids, const auto& point, double* dist) {
  std::int32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - point).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::int32_t>(c);
    }
  }
  if (dist) *dist = best_d;
  return best;
}

// Spreads cluster-embedding gradients back to the member rows.
void pool_backward(std::span<const std::int32_t> assignments, const Matrix& grad_clusters,
                   Matrix* grad_rows) {
  std::vector<double> size(static_cast<std::size_t>(grad_clusters.rows()), 0.0);
  for (auto c : assignments) size[static_cast<std::size_t>(c)] += 1.0;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    const auto c = assignments[i];
    grad_rows->row(static_cast<Eigen::Index>(i)) += grad_clusters.row(c) / size[static_cast<std::size_t>(c)];
  }
}

ClusterGroup cluster_group(const Matrix& table, int k, const SeedStream& stream, std::uint64_t event,
                           std::uint64_t group, const char* label) {
  int kk = k;
  if (table.rows() < k) {
    kk = static_cast<int>(table.rows());
    logger().warn("cluster count {} exceeds {} size {}; clamped", k, label, table.rows());
  }
  auto rng = stream.engine({event, group});
  KMeansResult km = kmeans(table, kk, rng);
  ClusterGroup g;
  g.k = kk;
  g.embedding = cluster_embed(km.assignments, table, kk);
  g.assignments = std::move(km.assignments);
  g.centroids = std::move(km.centroids);
  return g;
}

std::vector<std::vector<double>> cluster_category_dist(
    const ClusterGroup& g, const std::map<std::string, std::size_t>& cat_index,
    const MobilityGraph& graph, bool users) {
  std::vector<std::vector<double>> dist(static_cast<std::size_t>(g.k),
                                        std::vector<double>(cat_index.size(), 0.0));
  std::vector<std::size_t> remap;
  for (const auto& c : graph.categories()) remap.push_back(cat_index.at(c));
  for (std::size_t i = 0; i < g.assignments.size(); ++i) {
    auto& row = dist[static_cast<std::size_t>(g.assignments[i])];
    if (users) {
      const auto u = static_cast<UserIndex>(i);
      if (graph.checkin_count(u) == 0) continue;
      const auto p = graph.user_category_dist(u);
      for (std::size_t c = 0; c < p.size(); ++c) row[remap[c]] += p[c];
    } else {
      row[remap[static_cast<std::size_t>(graph.poi_category(static_cast<PoiIndex>(i)))]] += 1.0;
    }
  }
  for (auto& row : dist) {
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    if (total > 0.0) {
      for (double& v : row) v /= total;
    } else {
      row.clear();  // no evidence; excluded from buckets
    }
  }
  return dist;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, int k, std::mt19937_64& rng, int max_iter) {
  const Eigen::Index n = points.rows();
  if (k < 1) throw ConfigError("k-means needs k >= 1");
  if (n < k) {
    throw ConfigError("k-means with " + std::to_string(k) + " clusters over " + std::to_string(n) +
                      " points");
  }

  // k-means++ seeding.
  KMeansResult r;
  r.centroids.resize(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  r.centroids.row(0) = points.row(first(rng));
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[static_cast<std::size_t>(i)] =
          std::min(d2[static_cast<std::size_t>(i)], (points.row(i) - r.centroids.row(c - 1)).squaredNorm());
    }
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    Eigen::Index pick;
    if (total > 0.0) {
      std::discrete_distribution<Eigen::Index> dist(d2.begin(), d2.end());
      pick = dist(rng);
    } else {
      pick = first(rng);
    }
    r.centroids.row(c) = points.row(pick);
  }

  r.assignments.assign(static_cast<std::size_t>(n), -1);
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (r.iterations = 0; r.iterations < max_iter; ++r.iterations) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto c = nearest(r.centroids, points.row(i), &dist[static_cast<std::size_t>(i)]);
      changed = changed || c != r.assignments[static_cast<std::size_t>(i)];
      r.assignments[static_cast<std::size_t>(i)] = c;
    }

    // Repair empty clusters with the farthest point of the largest cluster.
    std::vector<std::int64_t> size(static_cast<std::size_t>(k), 0);
    for (auto c : r.assignments) ++size[static_cast<std::size_t>(c)];
    for (int c = 0; c < k; ++c) {
      if (size[static_cast<std::size_t>(c)] > 0) continue;
      const auto largest = static_cast<std::int32_t>(
          std::max_element(size.begin(), size.end()) - size.begin());
      Eigen::Index far = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (r.assignments[static_cast<std::size_t>(i)] != largest) continue;
        if (far < 0 || dist[static_cast<std::size_t>(i)] > dist[static_cast<std::size_t>(far)]) far = i;
      }
      r.assignments[static_cast<std::size_t>(far)] = c;
      dist[static_cast<std::size_t>(far)] = 0.0;
      r.centroids.row(c) = points.row(far);
      --size[static_cast<std::size_t>(largest)];
      size[static_cast<std::size_t>(c)] = 1;
      changed = true;
    }
    r.inertia_trace.push_back(std::accumulate(dist.begin(), dist.end(), 0.0));
    if (!changed) break;
    r.centroids = cluster_embed(r.assignments, points, k);
  }
  return r;
}

double kmeans_inertia(const Matrix& points, std::span<const std::int32_t> assignments,
                      const Matrix& centroids) {
  double total = 0.0;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    total += (points.row(static_cast<Eigen::Index>(i)) - centroids.row(assignments[i])).squaredNorm();
  }
  return total;
}

Matrix cluster_embed(std::span<const std::int32_t> assignments, const Matrix& embeddings, int k) {
  if (assignments.size() != static_cast<std::size_t>(embeddings.rows())) {
    throw Error("cluster assignments do not cover the embedding table");
  }
  Matrix sums = Matrix::Zero(k, embeddings.cols());
  std::vector<double> count(static_cast<std::size_t>(k), 0.0);
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    sums.row(assignments[i]) += embeddings.row(static_cast<Eigen::Index>(i));
    count[static_cast<std::size_t>(assignments[i])] += 1.0;
  }
  for (int c = 0; c < k; ++c) {
    if (count[static_cast<std::size_t>(c)] > 0.0) sums.row(c) /= count[static_cast<std::size_t>(c)];
  }
  return sums;
}

Matrix cluster_attention(const Matrix& target_clusters, const Matrix& source_clusters,
                         const RowVector& attention, double leaky_slope) {
  const Eigen::Index d = target_clusters.cols();
  const Vector t_term = target_clusters * attention.head(d).transpose();
  const Vector s_term = source_clusters * attention.tail(d).transpose();
  Matrix beta(target_clusters.rows(), source_clusters.rows());
  for (Eigen::Index t = 0; t < beta.rows(); ++t) {
    for (Eigen::Index s = 0; s < beta.cols(); ++s) beta(t, s) = leaky(t_term[t] + s_term[s], leaky_slope);
    beta.row(t).array() -= beta.row(t).maxCoeff();
    beta.row(t) = beta.row(t).array().exp().matrix();
    beta.row(t) /= beta.row(t).sum();
  }
  return beta;
}

double alignment_term(const Matrix& target_clusters, const Matrix& source_clusters,
                      const RowVector& attention, double leaky_slope, Matrix* grad_target,
                      Matrix* grad_source, RowVector* grad_attention) {
  const Eigen::Index d = target_clusters.cols();
  const Matrix beta = cluster_attention(target_clusters, source_clusters, attention, leaky_slope);
  const Matrix residual = target_clusters - beta * source_clusters;
  const double loss = residual.squaredNorm();
  if (!grad_target && !grad_source && !grad_attention) return loss;

  const Matrix d_mix = -2.0 * residual;  // dL / d(beta S)
  const Matrix d_beta = d_mix * source_clusters.transpose();
  const Vector t_term = target_clusters * attention.head(d).transpose();
  const Vector s_term = source_clusters * attention.tail(d).transpose();
  Matrix d_logit(beta.rows(), beta.cols());
  for (Eigen::Index t = 0; t < beta.rows(); ++t) {
    const double mean = beta.row(t).dot(d_beta.row(t));
    for (Eigen::Index s = 0; s < beta.cols(); ++s) {
      const double slope = t_term[t] + s_term[s] > 0.0 ? 1.0 : leaky_slope;
      d_logit(t, s) = beta(t, s) * (d_beta(t, s) - mean) * slope;
    }
  }
  const Vector d_t = d_logit.rowwise().sum();
  const Vector d_s = d_logit.colwise().sum().transpose();
  if (grad_target) {
    *grad_target += 2.0 * residual;
    *grad_target += d_t * attention.head(d);
  }
  if (grad_source) {
    *grad_source += beta.transpose() * d_mix;
    *grad_source += d_s * attention.tail(d);
  }
  if (grad_attention) {
    grad_attention->head(d) += d_t.transpose() * target_clusters;
    grad_attention->tail(d) += d_s.transpose() * source_clusters;
  }
  return loss;
}

void TransferConfig::validate() const {
  if (clusters < 1) throw ConfigError("cluster count K must be >= 1");
  if (steps < 0) throw ConfigError("transfer steps must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("transfer learning rate must be positive");
}

TransferParams TransferParams::init(int dim, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (2.0 * dim + 1.0));
  std::uniform_real_distribution<double> u(-limit, limit);
  TransferParams p;
  p.user_attention.resize(2 * dim);
  p.poi_attention.resize(2 * dim);
  for (auto& v : p.user_attention) v = u(rng);
  for (auto& v : p.poi_attention) v = u(rng);
  return p;
}

ClusterState build_cluster_state(const Embeddings& source, const Embeddings& target,
                                 const TransferParams& params, const TransferConfig& cfg,
                                 const SeedStream& stream, std::uint64_t event) {
  cfg.validate();
  ClusterState s;
  s.source_users = cluster_group(source.users, cfg.clusters, stream, event, 0, "source users");
  s.source_pois = cluster_group(source.pois, cfg.clusters, stream, event, 1, "source POIs");
  s.target_users = cluster_group(target.users, cfg.clusters, stream, event, 2, "target users");
  s.target_pois = cluster_group(target.pois, cfg.clusters, stream, event, 3, "target POIs");
  s.beta_user = cluster_attention(s.target_users.embedding, s.source_users.embedding,
                                  params.user_attention, cfg.leaky_slope);
  s.beta_poi = cluster_attention(s.target_pois.embedding, s.source_pois.embedding,
                                 params.poi_attention, cfg.leaky_slope);
  return s;
}

double alignment_loss(const ClusterState& state, const TransferParams& params,
                      const TransferConfig& cfg) {
  double total = 0.0;
  if (cfg.groups != AlignGroups::kPois) {
    total += alignment_term(state.target_users.embedding, state.source_users.embedding,
                            params.user_attention, cfg.leaky_slope, nullptr, nullptr, nullptr);
  }
  if (cfg.groups != AlignGroups::kUsers) {
    total += alignment_term(state.target_pois.embedding, state.source_pois.embedding,
                            params.poi_attention, cfg.leaky_slope, nullptr, nullptr, nullptr);
  }
  return total;
}

std::vector<BetaBucket> beta_buckets(const Matrix& beta, const std::vector<std::vector<double>>& target_dist,
                                     const std::vector<std::vector<double>>& source_dist) {
  constexpr int kBuckets = 5;
  std::vector<BetaBucket> out(kBuckets);
  std::vector<double> sums(kBuckets, 0.0);
  for (int b = 0; b < kBuckets; ++b) {
    out[static_cast<std::size_t>(b)].tv_low = static_cast<double>(b) / kBuckets;
    out[static_cast<std::size_t>(b)].tv_high = static_cast<double>(b + 1) / kBuckets;
  }
  for (Eigen::Index t = 0; t < beta.rows(); ++t) {
    const auto& p = target_dist[static_cast<std::size_t>(t)];
    if (p.empty()) continue;
    for (Eigen::Index s = 0; s < beta.cols(); ++s) {
      const auto& q = source_dist[static_cast<std::size_t>(s)];
      if (q.empty()) continue;
      double tv = 0.0;
      for (std::size_t c = 0; c < p.size(); ++c) tv += std::abs(p[c] - q[c]);
      tv *= 0.5;
      const int b = std::min(kBuckets - 1, static_cast<int>(tv * kBuckets));
      ++out[static_cast<std::size_t>(b)].pairs;
      sums[static_cast<std::size_t>(b)] += beta(t, s);
    }
  }
  for (int b = 0; b < kBuckets; ++b) {
    auto& o = out[static_cast<std::size_t>(b)];
    if (o.pairs > 0) o.mean_beta = sums[static_cast<std::size_t>(b)] / static_cast<double>(o.pairs);
  }
  return out;
}

TransferReport apply_transfer(Embeddings* source, Embeddings* target, TransferParams* params,
                              const TransferConfig& cfg, const SeedStream& stream,
                              std::uint64_t event, const MobilityGraph& source_graph,
                              const MobilityGraph& target_graph) {
  ClusterState state = build_cluster_state(*source, *target, *params, cfg, stream, event);
  TransferReport report;
  report.user_clusters_source = state.source_users.k;
  report.user_clusters_target = state.target_users.k;
  report.poi_clusters_source = state.source_pois.k;
  report.poi_clusters_target = state.target_pois.k;
  report.loss_before = alignment_loss(state, *params, cfg);

  const bool users = cfg.groups != AlignGroups::kPois;
  const bool pois = cfg.groups != AlignGroups::kUsers;
  for (int step = 0; step < cfg.steps; ++step) {
    Embeddings g_src = source->zeros_like();
    Embeddings g_tgt = target->zeros_like();
    TransferParams g_att{RowVector::Zero(params->user_attention.size()),
                         RowVector::Zero(params->poi_attention.size())};
    auto family = [&](const ClusterGroup& tg, const ClusterGroup& sg, const Matrix& t_table,
                      const Matrix& s_table, const RowVector& att, Matrix* g_t_rows,
                      Matrix* g_s_rows, RowVector* g_att_vec) {
      const Matrix tc = cluster_embed(tg.assignments, t_table, tg.k);
      const Matrix sc = cluster_embed(sg.assignments, s_table, sg.k);
      Matrix d_tc = Matrix::Zero(tc.rows(), tc.cols());
      Matrix d_sc = Matrix::Zero(sc.rows(), sc.cols());
      alignment_term(tc, sc, att, cfg.leaky_slope, &d_tc, cfg.symmetric ? &d_sc : nullptr, g_att_vec);
      pool_backward(tg.assignments, d_tc, g_t_rows);
      if (cfg.symmetric) pool_backward(sg.assignments, d_sc, g_s_rows);
    };
    if (users) {
      family(state.target_users, state.source_users, target->users, source->users,
             params->user_attention, &g_tgt.users, &g_src.users, &g_att.user_attention);
    }
    if (pois) {
      family(state.target_pois, state.source_pois, target->pois, source->pois, params->poi_attention,
             &g_tgt.pois, &g_src.pois, &g_att.poi_attention);
    }
    target->axpy(-cfg.lr, g_tgt);
    if (cfg.symmetric) source->axpy(-cfg.lr, g_src);
    params->user_attention -= cfg.lr * g_att.user_attention;
    params->poi_attention -= cfg.lr * g_att.poi_attention;
  }
  if (!target->all_finite() || !source->all_finite()) {
    throw NumericError("non-finite embeddings after cluster transfer");
  }

  // Refresh cluster embeddings and beta at the new point.
  for (auto* g : {&state.source_users, &state.target_users}) {
    g->embedding = cluster_embed(g->assignments, g == &state.source_users ? source->users : target->users, g->k);
  }
  for (auto* g : {&state.source_pois, &state.target_pois}) {
    g->embedding = cluster_embed(g->assignments, g == &state.source_pois ? source->pois : target->pois, g->k);
  }
  state.beta_user = cluster_attention(state.target_users.embedding, state.source_users.embedding,
                                      params->user_attention, cfg.leaky_slope);
  state.beta_poi = cluster_attention(state.target_pois.embedding, state.source_pois.embedding,
                                     params->poi_attention, cfg.leaky_slope);
  report.loss_after = alignment_loss(state, *params, cfg);

  std::map<std::string, std::size_t> cat_index;
  for (const auto* g : {&source_graph, &target_graph}) {
    for (const auto& c : g->categories()) cat_index.emplace(c, 0);
  }
  std::size_t next = 0;
  for (auto& [name, idx] : cat_index) idx = next++;
  report.user_buckets = beta_buckets(state.beta_user,
                                     cluster_category_dist(state.target_users, cat_index, target_graph, true),
                                     cluster_category_dist(state.source_users, cat_index, source_graph, true));
  report.poi_buckets = beta_buckets(state.beta_poi,
                                    cluster_category_dist(state.target_pois, cat_index, target_graph, false),
                                    cluster_category_dist(state.source_pois, cat_index, source_graph, false));
  return report;
}

}  // namespace xregion
