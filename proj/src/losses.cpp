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

#include "xregion/losses.hpp"

#include <algorithm>
#include <cmath>

#include "xregion/log.hpp"

namespace xregion {
namespace {

double sigmoid(double v) {
  return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

// log(1 + e^v) without overflow.
double softplus(double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

double prediction_loss(std::span<const RatedPair> pairs, std::span<const double> predictions,
                       const ModelParams& params, double lambda_p) {
  if (pairs.empty()) throw Error("prediction loss over an empty batch");
  if (pairs.size() != predictions.size()) throw Error("prediction count does not match batch");
  double total = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!std::isfinite(predictions[i])) {
      throw NumericError("non-finite prediction for pair (user " + std::to_string(pairs[i].user) +
                         ", poi " + std::to_string(pairs[i].poi) + ")");
    }
    const double e = predictions[i] - pairs[i].rating;
    total += e * e;
  }
  return total + lambda_p * params.l1_norm();
}

double social_link_loss(const Matrix& table, std::span<const NodePair> positives,
                        std::span<const NodePair> negatives, Matrix* grad) {
  double total = 0.0;
  auto term = [&](const NodePair& p, bool positive) {
    const double v = table.row(p.a).dot(table.row(p.b));
    total += positive ? softplus(-v) : softplus(v);
    if (grad) {
      const double dv = positive ? sigmoid(v) - 1.0 : sigmoid(v);
      grad->row(p.a) += dv * table.row(p.b);
      grad->row(p.b) += dv * table.row(p.a);
    }
  };
  for (const auto& p : positives) term(p, true);
  for (const auto& p : negatives) term(p, false);
  return total;
}

LinkSamples sample_link_negatives(const std::vector<std::vector<std::int32_t>>& adjacency,
                                  std::mt19937_64& rng) {
  const auto n = static_cast<std::int32_t>(adjacency.size());
  LinkSamples out;
  std::vector<std::int32_t> candidates;
  for (std::int32_t i = 0; i < n; ++i) {
    const auto& nbrs = adjacency[static_cast<std::size_t>(i)];
    if (nbrs.empty()) continue;
    const auto is_excluded = [&](std::int32_t j) {
      return j == i || std::binary_search(nbrs.begin(), nbrs.end(), j);
    };
    const std::int64_t free = n - 1 - static_cast<std::int64_t>(nbrs.size());
    if (free <= 0) {
      out.skipped.push_back(i);
      continue;
    }
    // Rejection sampling while non-neighbours are plentiful, enumeration otherwise.
    const bool enumerate = free * 4 < n;
    if (enumerate) {
      candidates.clear();
      for (std::int32_t j = 0; j < n; ++j) {
        if (!is_excluded(j)) candidates.push_back(j);
      }
    }
    std::uniform_int_distribution<std::int32_t> any(0, n - 1);
    for (std::int32_t j : nbrs) {
      out.positives.push_back({i, j});
      std::int32_t neg;
      if (enumerate) {
        neg = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
      } else {
        do {
          neg = any(rng);
        } while (is_excluded(neg));
      }
      out.negatives.push_back({i, neg});
    }
  }
  return out;
}

std::vector<std::vector<std::int32_t>> social_adjacency(const MobilityGraph& graph) {
  std::vector<std::vector<std::int32_t>> adj(graph.num_users());
  for (std::size_t u = 0; u < adj.size(); ++u) {
    const auto& nb = graph.social_neighbors(static_cast<UserIndex>(u));
    adj[u].assign(nb.begin(), nb.end());
  }
  return adj;
}

std::vector<std::vector<std::int32_t>> spatial_adjacency(const MobilityGraph& graph) {
  std::vector<std::vector<std::int32_t>> adj(graph.num_pois());
  for (std::size_t l = 0; l < adj.size(); ++l) {
    for (const auto& w : graph.spatial_neighbors(static_cast<PoiIndex>(l))) adj[l].push_back(w.poi);
    std::sort(adj[l].begin(), adj[l].end());
  }
  return adj;
}

std::vector<RatedPair> affinity_pairs(const MobilityGraph& graph) {
  const SparseRows& r = graph.affinity();
  std::vector<RatedPair> out;
  out.reserve(r.cols.size());
  for (std::size_t u = 0; u + 1 < r.row_ptr.size(); ++u) {
    for (auto i = r.row_ptr[u]; i < r.row_ptr[u + 1]; ++i) {
      const auto k = static_cast<std::size_t>(i);
      out.push_back({static_cast<UserIndex>(u), r.cols[k], r.values[k]});
    }
  }
  return out;
}

std::vector<RatedPair> with_sampled_negatives(const MobilityGraph& graph,
                                              std::span<const RatedPair> positives,
                                              std::mt19937_64& rng) {
  const auto n = static_cast<PoiIndex>(graph.num_pois());
  const auto m = static_cast<UserIndex>(graph.num_users());
  std::uniform_int_distribution<PoiIndex> any_poi(0, n - 1);
  std::uniform_int_distribution<UserIndex> any_user(0, m - 1);
  std::vector<RatedPair> out(positives.begin(), positives.end());
  for (const RatedPair& p : positives) {
    UserIndex u = p.user;
    for (int attempt = 0; static_cast<std::size_t>(n) <= graph.visited(u).size(); ++attempt) {
      if (attempt > 64) throw DataError("every user visited every POI; no unobserved pairs");
      u = any_user(rng);
    }
    const auto& seen = graph.visited(u);
    PoiIndex l;
    do {
      l = any_poi(rng);
    } while (std::binary_search(seen.begin(), seen.end(), l));
    out.push_back({u, l, 0.0});
  }
  return out;
}

Gradients prediction_gradient(const TwinGat& model, const ModelParams& params,
                              const Embeddings& emb, const SpatialSamples& samples,
                              std::span<const RatedPair> batch, double lambda_p) {
  const ForwardOutputs out = model.forward(params, emb, samples);
  std::vector<UserPoiPair> pairs;
  pairs.reserve(batch.size());
  for (const auto& p : batch) pairs.push_back({p.user, p.poi});
  ScoreCache cache;
  const std::vector<double> r_hat = model.predict(params, out, pairs, &cache);

  Gradients g{params.zeros_like(), emb.zeros_like(), {}};
  g.loss.lambda_p = lambda_p;
  g.loss.prediction = prediction_loss(batch, r_hat, params, lambda_p);

  std::vector<double> d_r(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) d_r[i] = 2.0 * (r_hat[i] - batch[i].rating);
  Matrix d_uf = Matrix::Zero(out.user_final.rows(), out.user_final.cols());
  Matrix d_lf = Matrix::Zero(out.poi_final.rows(), out.poi_final.cols());
  model.predict_backward(params, out, pairs, cache, d_r, &g.params, &d_uf, &d_lf);
  model.backward(params, emb, samples, out, d_uf, d_lf, &g.params, &g.emb);

  if (lambda_p != 0.0) {
    std::vector<const Matrix*> theta;
    params.for_each([&](const std::string&, const Matrix& m) { theta.push_back(&m); });
    std::size_t i = 0;
    g.params.for_each([&](const std::string&, Matrix& m) {
      m += lambda_p * theta[i++]->unaryExpr([](double v) { return sign(v); });
    });
  }
  require_finite(g.params, "prediction gradient");
  require_finite(g.emb, "prediction gradient");
  return g;
}

Gradients social_gradient(const TwinGat& model, const ModelParams& params, const Embeddings& emb,
                          const SpatialSamples& samples, const LinkSamples& user_links,
                          const LinkSamples& poi_links) {
  const ForwardOutputs out = model.forward(params, emb, samples);
  Gradients g{params.zeros_like(), emb.zeros_like(), {}};
  Matrix d_uf = Matrix::Zero(out.user_final.rows(), out.user_final.cols());
  Matrix d_lf = Matrix::Zero(out.poi_final.rows(), out.poi_final.cols());
  g.loss.social_user = social_link_loss(out.user_final, user_links.positives, user_links.negatives, &d_uf);
  g.loss.social_poi = social_link_loss(out.poi_final, poi_links.positives, poi_links.negatives, &d_lf);
  model.backward(params, emb, samples, out, d_uf, d_lf, &g.params, &g.emb);
  require_finite(g.params, "social gradient");
  require_finite(g.emb, "social gradient");
  return g;
}

void require_finite(const ModelParams& grad, const std::string& what) {
  grad.for_each([&](const std::string& name, const Matrix& m) {
    if (!m.allFinite()) throw NumericError(what + ": non-finite value in " + name);
  });
}

void require_finite(const Embeddings& grad, const std::string& what) {
  if (!grad.users.allFinite()) throw NumericError(what + ": non-finite value in user embeddings");
  if (!grad.pois.allFinite()) throw NumericError(what + ": non-finite value in poi embeddings");
}

std::vector<GradientCheck> check_gradients(
    const std::function<double()>& loss,
    const std::vector<std::pair<std::string, Matrix*>>& tensors,
    const std::vector<const Matrix*>& analytic, double h, double floor) {
  if (tensors.size() != analytic.size()) throw Error("gradient check: tensor count mismatch");
  std::vector<GradientCheck> out;
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    Matrix& x = *tensors[t].second;
    GradientCheck c{tensors[t].first};
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double orig = x.data()[i];
      x.data()[i] = orig + h;
      const double up = loss();
      x.data()[i] = orig - h;
      const double down = loss();
      x.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[t]->data()[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      if (rel > c.max_rel_error) {
        c.max_rel_error = rel;
        c.worst_analytic = a;
        c.worst_numeric = numeric;
      }
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace xregion
