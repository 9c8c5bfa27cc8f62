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

#include "xregion/twin_gat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace xregion {
namespace {

double leaky(double s, double slope) { return s > 0.0 ? s : slope * s; }
double leaky_grad(double s, double slope) { return s > 0.0 ? 1.0 : slope; }

Matrix activate(const Matrix& z, Activation act, double slope) {
  switch (act) {
    case Activation::kRelu:
      return z.cwiseMax(0.0);
    case Activation::kLeakyRelu:
      return z.unaryExpr([slope](double v) { return leaky(v, slope); });
    case Activation::kTanh:
      return z.array().tanh().matrix();
    case Activation::kIdentity:
      return z;
  }
  return z;
}

Matrix activation_grad(const Matrix& z, Activation act, double slope) {
  switch (act) {
    case Activation::kRelu:
      return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::kLeakyRelu:
      return z.unaryExpr([slope](double v) { return leaky_grad(v, slope); });
    case Activation::kTanh:
      return z.unaryExpr([](double v) {
        const double t = std::tanh(v);
        return 1.0 - t * t;
      });
    case Activation::kIdentity:
      return Matrix::Ones(z.rows(), z.cols());
  }
  return z;
}

Matrix xavier(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix uniform(Eigen::Index rows, Eigen::Index cols, double limit, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

// He-uniform for the ReLU layers, variance 1/fan_in for the linear output, so
// activations keep roughly unit scale through the stack.
Mlp make_mlp(std::initializer_list<int> widths, std::mt19937_64& rng) {
  Mlp mlp;
  const std::vector<int> w(widths);
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    const double gain = i + 2 < w.size() ? 6.0 : 3.0;
    mlp.layers.push_back({uniform(w[i + 1], w[i], std::sqrt(gain / w[i]), rng),
                          Matrix::Zero(1, w[i + 1])});
  }
  return mlp;
}

// Softmax of LeakyReLU logits, written in place into alpha. Shared by the
// standalone helper and the aggregator so both agree to the last bit.
void softmax_logits(std::span<const double> logits, double slope, std::span<double> alpha) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < logits.size(); ++j) top = std::max(top, leaky(logits[j], slope));
  double total = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    alpha[j] = std::exp(leaky(logits[j], slope) - top);
    total += alpha[j];
  }
  for (double& a : alpha) a /= total;
}

}  // namespace

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "leaky_relu") return Activation::kLeakyRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + name + "'");
}

GatVariant parse_variant(const std::string& name) {
  if (name == "full") return GatVariant::kFull;
  if (name == "user") return GatVariant::kUserOnly;
  if (name == "location") return GatVariant::kLocationOnly;
  throw ConfigError("unknown model variant '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kLeakyRelu: return "leaky_relu";
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: return "identity";
  }
  return "?";
}

std::string to_string(GatVariant v) {
  switch (v) {
    case GatVariant::kFull: return "full";
    case GatVariant::kUserOnly: return "user";
    case GatVariant::kLocationOnly: return "location";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (dim < 1 || hidden < 1 || gat_depth < 1 || sample_size < 1) {
    throw ConfigError("model dim, hidden, gat_depth and sample_size must be >= 1");
  }
  if (!(leaky_slope >= 0.0)) throw ConfigError("leaky_slope must be non-negative");
}

ModelParams ModelParams::init(const ModelConfig& config, std::mt19937_64& rng) {
  config.validate();
  const int d = config.dim;
  ModelParams p;
  for (auto& stack : p.gat) {
    for (int k = 0; k < config.gat_depth; ++k) {
      stack.push_back({xavier(d, d, rng), Matrix::Zero(1, d), xavier(1, 2 * d, rng)});
    }
  }
  p.fuse_user = make_mlp({2 * d, config.hidden, config.hidden, d}, rng);
  p.fuse_poi = make_mlp({2 * d, config.hidden, config.hidden, d}, rng);
  p.score = make_mlp({d, config.hidden, config.hidden, 1}, rng);
  return p;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  z.for_each([](const std::string&, Matrix& m) { m.setZero(); });
  return z;
}

void ModelParams::axpy(double scale, const ModelParams& other) {
  std::vector<const Matrix*> src;
  other.for_each([&](const std::string&, const Matrix& m) { src.push_back(&m); });
  std::size_t i = 0;
  for_each([&](const std::string&, Matrix& m) { m += scale * *src[i++]; });
}

double ModelParams::l1_norm() const {
  double total = 0.0;
  for_each([&](const std::string&, const Matrix& m) { total += m.cwiseAbs().sum(); });
  return total;
}

bool ModelParams::all_finite() const {
  bool ok = true;
  for_each([&](const std::string&, const Matrix& m) { ok = ok && m.allFinite(); });
  return ok;
}

std::size_t ModelParams::num_scalars() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  std::vector<const Matrix*> lhs;
  std::vector<const Matrix*> rhs;
  a.for_each([&](const std::string&, const Matrix& m) { lhs.push_back(&m); });
  b.for_each([&](const std::string&, const Matrix& m) { rhs.push_back(&m); });
  if (lhs.size() != rhs.size()) return false;
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    if (lhs[i]->rows() != rhs[i]->rows() || lhs[i]->cols() != rhs[i]->cols() || *lhs[i] != *rhs[i]) {
      return false;
    }
  }
  return true;
}

Embeddings Embeddings::init(std::size_t num_users, std::size_t num_pois, int dim,
                            std::mt19937_64& rng) {
  // Unit-variance entries. Smaller tables leave the Hadamard scorer input
  // near zero, where the bilinear interaction barely trains.
  const double limit = std::sqrt(3.0);
  std::uniform_real_distribution<double> dist(-limit, limit);
  Embeddings e;
  e.users.resize(static_cast<Eigen::Index>(num_users), dim);
  e.pois.resize(static_cast<Eigen::Index>(num_pois), dim);
  for (Eigen::Index i = 0; i < e.users.size(); ++i) e.users.data()[i] = dist(rng);
  for (Eigen::Index i = 0; i < e.pois.size(); ++i) e.pois.data()[i] = dist(rng);
  return e;
}

Embeddings Embeddings::zeros_like() const {
  return {Matrix::Zero(users.rows(), users.cols()), Matrix::Zero(pois.rows(), pois.cols())};
}

void Embeddings::axpy(double scale, const Embeddings& other) {
  users += scale * other.users;
  pois += scale * other.pois;
}

bool Embeddings::all_finite() const { return users.allFinite() && pois.allFinite(); }

NeighborLists NeighborLists::from(const std::vector<std::vector<std::int32_t>>& lists) {
  NeighborLists out;
  out.offsets.reserve(lists.size() + 1);
  out.offsets.push_back(0);
  for (const auto& l : lists) {
    out.index.insert(out.index.end(), l.begin(), l.end());
    out.offsets.push_back(static_cast<std::int32_t>(out.index.size()));
  }
  return out;
}

std::vector<double> attention_weights(const RowVector& center, std::span<const RowVector> neighbors,
                                      const RowVector& attention, double leaky_slope) {
  if (neighbors.empty()) throw Error("attention over an empty neighbourhood");
  const Eigen::Index d = center.size();
  const double self_term = attention.head(d).dot(center);
  std::vector<double> logits;
  for (const RowVector& n : neighbors) logits.push_back(self_term + attention.tail(d).dot(n));
  std::vector<double> alpha(logits.size());
  softmax_logits(logits, leaky_slope, alpha);
  return alpha;
}

std::vector<PoiIndex> neighbor_sample(std::span<const WeightedPoi> neighbors, PoiIndex self,
                                      int draws, std::mt19937_64& rng) {
  if (draws < 1) throw ConfigError("sample size must be >= 1");
  if (neighbors.empty()) return {self};
  std::vector<double> w;
  for (const auto& n : neighbors) w.push_back(n.weight);
  std::discrete_distribution<std::size_t> dist(w.begin(), w.end());
  std::vector<PoiIndex> out;
  out.reserve(static_cast<std::size_t>(draws));
  for (int i = 0; i < draws; ++i) out.push_back(neighbors[dist(rng)].poi);
  return out;
}

SpatialSamples draw_spatial_samples(const MobilityGraph& graph, int sample_size,
                                    const SeedStream& stream,
                                    std::initializer_list<std::uint64_t> keys) {
  std::vector<std::vector<std::int32_t>> latent(graph.num_pois());
  std::vector<std::vector<std::int32_t>> conditioned(graph.num_pois());
  const std::uint64_t base = stream.derive(keys);
  for (std::size_t l = 0; l < graph.num_pois(); ++l) {
    const auto& nbrs = graph.spatial_neighbors(static_cast<PoiIndex>(l));
    const int draws = std::max(1, std::min(sample_size, static_cast<int>(nbrs.size())));
    for (std::uint64_t agg : {2ULL, 3ULL}) {
      auto& list = (agg == 2 ? latent : conditioned)[l];
      list.push_back(static_cast<std::int32_t>(l));
      if (nbrs.empty()) continue;
      std::mt19937_64 rng(mix64(base ^ mix64(l * 4 + agg)));
      const auto drawn = neighbor_sample(nbrs, static_cast<PoiIndex>(l), draws, rng);
      list.insert(list.end(), drawn.begin(), drawn.end());
    }
  }
  return {NeighborLists::from(latent), NeighborLists::from(conditioned)};
}

Matrix gat_aggregate(const Matrix& x, const NeighborLists& nbrs, std::span<const GatLayer> layers,
                     Activation act, double leaky_slope, GatCache* cache) {
  if (cache) {
    cache->offsets = nbrs.offsets;
    cache->layers.assign(layers.size(), {});
  }
  Matrix h = x;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const GatLayer& layer = layers[li];
    const Eigen::Index d = layer.weight.rows();
    Matrix messages = h * layer.weight.transpose();
    messages.rowwise() += layer.bias.row(0);
    const Vector center_term = h * layer.attention.leftCols(d).transpose();
    const Vector nbr_term = h * layer.attention.rightCols(d).transpose();

    std::vector<double> logits(nbrs.index.size());
    std::vector<double> alpha(nbrs.index.size());
    Matrix z = Matrix::Zero(h.rows(), d);
    for (std::size_t c = 0; c < nbrs.size(); ++c) {
      const auto begin = static_cast<std::size_t>(nbrs.offsets[c]);
      const auto list = nbrs[c];
      for (std::size_t j = 0; j < list.size(); ++j) logits[begin + j] = center_term[c] + nbr_term[list[j]];
      softmax_logits({logits.data() + begin, list.size()}, leaky_slope, {alpha.data() + begin, list.size()});
      for (std::size_t j = 0; j < list.size(); ++j) z.row(c) += alpha[begin + j] * messages.row(list[j]);
    }
    Matrix out = activate(z, act, leaky_slope);
    if (cache) {
      GatLayerCache& lc = cache->layers[li];
      lc.input = std::move(h);
      lc.messages = std::move(messages);
      lc.preact = std::move(z);
      lc.logits = std::move(logits);
      lc.alpha = std::move(alpha);
    }
    h = std::move(out);
  }
  return h;
}

void gat_aggregate_backward(const NeighborLists& nbrs, std::span<const GatLayer> layers,
                            Activation act, double leaky_slope, const GatCache& cache,
                            const Matrix& grad_out, std::span<GatLayer> grad_layers, Matrix* grad_x) {
  Matrix g = grad_out;
  for (std::size_t li = layers.size(); li-- > 0;) {
    const GatLayer& layer = layers[li];
    const GatLayerCache& lc = cache.layers[li];
    const Eigen::Index d = layer.weight.rows();
    const Matrix dz = g.cwiseProduct(activation_grad(lc.preact, act, leaky_slope));

    Matrix d_messages = Matrix::Zero(lc.messages.rows(), d);
    Vector d_center = Vector::Zero(lc.input.rows());
    Vector d_nbr = Vector::Zero(lc.input.rows());
    std::vector<double> d_alpha;
    for (std::size_t c = 0; c < nbrs.size(); ++c) {
      const auto begin = static_cast<std::size_t>(nbrs.offsets[c]);
      const auto list = nbrs[c];
      d_alpha.assign(list.size(), 0.0);
      double mean = 0.0;
      for (std::size_t j = 0; j < list.size(); ++j) {
        const double a = lc.alpha[begin + j];
        d_alpha[j] = dz.row(c).dot(lc.messages.row(list[j]));
        d_messages.row(list[j]) += a * dz.row(c);
        mean += a * d_alpha[j];
      }
      for (std::size_t j = 0; j < list.size(); ++j) {
        const double a = lc.alpha[begin + j];
        const double ds = a * (d_alpha[j] - mean) * leaky_grad(lc.logits[begin + j], leaky_slope);
        d_center[c] += ds;
        d_nbr[list[j]] += ds;
      }
    }
    GatLayer& gl = grad_layers[li];
    gl.weight += d_messages.transpose() * lc.input;
    gl.bias += d_messages.colwise().sum();
    gl.attention.leftCols(d) += d_center.transpose() * lc.input;
    gl.attention.rightCols(d) += d_nbr.transpose() * lc.input;

    Matrix dx = d_messages * layer.weight;
    dx += d_center * layer.attention.leftCols(d);
    dx += d_nbr * layer.attention.rightCols(d);
    g = std::move(dx);
  }
  if (grad_x) *grad_x += g;
}

Matrix max_pool(const Matrix& x, const PoolLists& lists, PoolCache* cache) {
  const auto n = static_cast<Eigen::Index>(lists.members.size());
  const Eigen::Index d = x.cols();
  Matrix out = Matrix::Zero(n, d);
  std::vector<std::int32_t> argmax(static_cast<std::size_t>(n * d), -1);
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto begin = lists.members.offsets[c];
    const auto end = lists.members.offsets[c + 1];
    for (auto p = begin; p < end; ++p) {
      const double w = lists.weights[p];
      const auto k = lists.members.index[p];
      for (Eigen::Index j = 0; j < d; ++j) {
        const double v = w * x(k, j);
        auto& arg = argmax[static_cast<std::size_t>(c * d + j)];
        if (arg < 0 || v > out(c, j)) {
          out(c, j) = v;
          arg = p;
        }
      }
    }
  }
  if (cache) cache->argmax = std::move(argmax);
  return out;
}

void max_pool_backward(const PoolLists& lists, const PoolCache& cache, const Matrix& grad_out,
                       Matrix* grad_x) {
  const Eigen::Index d = grad_out.cols();
  for (Eigen::Index c = 0; c < grad_out.rows(); ++c) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const auto p = cache.argmax[static_cast<std::size_t>(c * d + j)];
      if (p < 0) continue;
      (*grad_x)(lists.members.index[p], j) += lists.weights[p] * grad_out(c, j);
    }
  }
}

Matrix mlp_forward(const Mlp& mlp, const Matrix& x, MlpCache* cache) {
  if (cache) {
    cache->inputs.clear();
    cache->preacts.clear();
  }
  Matrix h = x;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    Matrix z = h * mlp.layers[i].weight.transpose();
    z.rowwise() += mlp.layers[i].bias.row(0);
    if (cache) cache->inputs.push_back(std::move(h));
    if (i + 1 < mlp.layers.size()) {
      h = z.cwiseMax(0.0);
      if (cache) cache->preacts.push_back(std::move(z));
    } else {
      h = std::move(z);
    }
  }
  return h;
}

void mlp_backward(const Mlp& mlp, const MlpCache& cache, const Matrix& grad_out, Mlp* grad_mlp,
                  Matrix* grad_x) {
  Matrix g = grad_out;
  for (std::size_t i = mlp.layers.size(); i-- > 0;) {
    grad_mlp->layers[i].weight += g.transpose() * cache.inputs[i];
    grad_mlp->layers[i].bias += g.colwise().sum();
    if (i == 0 && !grad_x) break;
    Matrix gin = g * mlp.layers[i].weight;
    if (i > 0) {
      g = gin.cwiseProduct(cache.preacts[i - 1].unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
    } else {
      *grad_x += gin;
    }
  }
}

std::span<const double> ForwardOutputs::attention(int phi, std::size_t node) const {
  const GatCache& c = gat_cache[static_cast<std::size_t>(phi)];
  if (c.layers.empty()) return {};
  const auto begin = static_cast<std::size_t>(c.offsets[node]);
  const auto end = static_cast<std::size_t>(c.offsets[node + 1]);
  return {c.layers.front().alpha.data() + begin, end - begin};
}

TwinGat::TwinGat(const ModelConfig& config, const MobilityGraph& graph)
    : config_(config), graph_(&graph) {
  config_.validate();
  const std::size_t m = graph.num_users();
  const std::size_t n = graph.num_pois();

  std::vector<std::vector<std::int32_t>> social(m);
  for (std::size_t u = 0; u < m; ++u) {
    const auto& nb = graph.social_neighbors(static_cast<UserIndex>(u));
    social[u].push_back(static_cast<std::int32_t>(u));
    social[u].insert(social[u].end(), nb.begin(), nb.end());
  }
  social_ = NeighborLists::from(social);
  auto self_only = [](std::size_t count) {
    std::vector<std::vector<std::int32_t>> lists(count);
    for (std::size_t v = 0; v < count; ++v) lists[v].push_back(static_cast<std::int32_t>(v));
    return NeighborLists::from(lists);
  };
  self_users_ = self_only(m);
  self_pois_ = self_only(n);

  std::vector<std::vector<std::int32_t>> visited(m);
  for (std::size_t u = 0; u < m; ++u) {
    const auto& v = graph.visited(static_cast<UserIndex>(u));
    visited[u].assign(v.begin(), v.end());
    const auto& w = graph.visited_weights(static_cast<UserIndex>(u));
    user_pool_.weights.insert(user_pool_.weights.end(), w.begin(), w.end());
  }
  user_pool_.members = NeighborLists::from(visited);

  std::vector<std::vector<std::int32_t>> visitors(n);
  for (std::size_t l = 0; l < n; ++l) {
    const auto& v = graph.visitors(static_cast<PoiIndex>(l));
    visitors[l].assign(v.begin(), v.end());
    const auto& w = graph.visitor_weights(static_cast<PoiIndex>(l));
    poi_pool_.weights.insert(poi_pool_.weights.end(), w.begin(), w.end());
  }
  poi_pool_.members = NeighborLists::from(visitors);
}

ForwardOutputs TwinGat::forward(const ModelParams& params, const Embeddings& emb,
                                const SpatialSamples& samples) const {
  const bool user_side = config_.variant != GatVariant::kLocationOnly;
  const bool poi_side = config_.variant != GatVariant::kUserOnly;
  const Activation act = config_.activation;
  const double slope = config_.leaky_slope;

  ForwardOutputs out;
  auto aggregate = [&](int phi, const Matrix& x, const NeighborLists& lists) {
    GatCache& cache = out.gat_cache[static_cast<std::size_t>(phi)];
    return gat_aggregate(x, lists, params.gat[static_cast<std::size_t>(phi)], act, slope, &cache);
  };
  const NeighborLists& user_lists = user_side ? social_ : self_users_;

  out.user_latent = aggregate(0, emb.users, user_lists);
  out.user_pool = max_pool(emb.pois, user_pool_, &out.user_pool_cache);
  out.user_conditioned = aggregate(1, out.user_pool, user_lists);
  out.poi_latent = aggregate(2, emb.pois, poi_side ? samples.latent : self_pois_);
  out.poi_pool = max_pool(emb.users, poi_pool_, &out.poi_pool_cache);
  out.poi_conditioned = aggregate(3, out.poi_pool, poi_side ? samples.conditioned : self_pois_);

  for (std::size_t u = 0; u < user_pool_.members.size(); ++u) {
    if (user_pool_.members[u].empty()) out.users_without_checkins.push_back(static_cast<UserIndex>(u));
  }
  for (std::size_t l = 0; l < poi_pool_.members.size(); ++l) {
    if (poi_pool_.members[l].empty()) out.pois_without_visitors.push_back(static_cast<PoiIndex>(l));
  }

  const Eigen::Index d = config_.dim;
  Matrix user_cat(emb.users.rows(), 2 * d);
  user_cat << out.user_latent, out.user_conditioned;
  out.user_final = mlp_forward(params.fuse_user, user_cat, &out.fuse_user_cache);
  Matrix poi_cat(emb.pois.rows(), 2 * d);
  poi_cat << out.poi_latent, out.poi_conditioned;
  out.poi_final = mlp_forward(params.fuse_poi, poi_cat, &out.fuse_poi_cache);
  return out;
}

void TwinGat::backward(const ModelParams& params, const Embeddings& emb,
                       const SpatialSamples& samples, const ForwardOutputs& out,
                       const Matrix& grad_user_final, const Matrix& grad_poi_final,
                       ModelParams* grad_params, Embeddings* grad_emb) const {
  const Eigen::Index d = config_.dim;
  const Activation act = config_.activation;
  const double slope = config_.leaky_slope;
  const NeighborLists& user_lists = config_.variant != GatVariant::kLocationOnly ? social_ : self_users_;
  const bool poi_side = config_.variant != GatVariant::kUserOnly;
  Matrix d_users = Matrix::Zero(emb.users.rows(), d);
  Matrix d_pois = Matrix::Zero(emb.pois.rows(), d);

  auto through = [&](int phi, const NeighborLists& lists, const Matrix& g, Matrix* dx) {
    const GatCache& cache = out.gat_cache[static_cast<std::size_t>(phi)];
    gat_aggregate_backward(lists, params.gat[static_cast<std::size_t>(phi)], act, slope, cache, g,
                           grad_params->gat[static_cast<std::size_t>(phi)], dx);
  };

  if (grad_user_final.size() > 0) {
    Matrix d_cat = Matrix::Zero(emb.users.rows(), 2 * d);
    mlp_backward(params.fuse_user, out.fuse_user_cache, grad_user_final, &grad_params->fuse_user, &d_cat);
    through(0, user_lists, d_cat.leftCols(d), &d_users);
    Matrix d_pool = Matrix::Zero(emb.users.rows(), d);
    through(1, user_lists, d_cat.rightCols(d), &d_pool);
    max_pool_backward(user_pool_, out.user_pool_cache, d_pool, &d_pois);
  }
  if (grad_poi_final.size() > 0) {
    Matrix d_cat = Matrix::Zero(emb.pois.rows(), 2 * d);
    mlp_backward(params.fuse_poi, out.fuse_poi_cache, grad_poi_final, &grad_params->fuse_poi, &d_cat);
    through(2, poi_side ? samples.latent : self_pois_, d_cat.leftCols(d), &d_pois);
    Matrix d_pool = Matrix::Zero(emb.pois.rows(), d);
    through(3, poi_side ? samples.conditioned : self_pois_, d_cat.rightCols(d), &d_pool);
    max_pool_backward(poi_pool_, out.poi_pool_cache, d_pool, &d_users);
  }
  grad_emb->users += d_users;
  grad_emb->pois += d_pois;
}

std::vector<double> TwinGat::predict(const ModelParams& params, const ForwardOutputs& out,
                                     std::span<const UserPoiPair> pairs, ScoreCache* cache) const {
  Matrix h(static_cast<Eigen::Index>(pairs.size()), config_.dim);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].user < 0 || pairs[i].user >= out.user_final.rows() || pairs[i].poi < 0 ||
        pairs[i].poi >= out.poi_final.rows()) {
      throw Error("prediction pair references unknown entity");
    }
    h.row(static_cast<Eigen::Index>(i)) =
        out.user_final.row(pairs[i].user).cwiseProduct(out.poi_final.row(pairs[i].poi));
  }
  const Matrix r = mlp_forward(params.score, h, cache ? &cache->mlp : nullptr);
  if (cache) cache->hadamard = std::move(h);
  return {r.data(), r.data() + r.size()};
}

void TwinGat::predict_backward(const ModelParams& params, const ForwardOutputs& out,
                               std::span<const UserPoiPair> pairs, const ScoreCache& cache,
                               std::span<const double> grad_scores, ModelParams* grad_params,
                               Matrix* grad_user_final, Matrix* grad_poi_final) const {
  Matrix g(static_cast<Eigen::Index>(grad_scores.size()), 1);
  for (std::size_t i = 0; i < grad_scores.size(); ++i) g(static_cast<Eigen::Index>(i), 0) = grad_scores[i];
  Matrix dh = Matrix::Zero(g.rows(), config_.dim);
  mlp_backward(params.score, cache.mlp, g, &grad_params->score, &dh);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    grad_user_final->row(pairs[i].user) += dh.row(row).cwiseProduct(out.poi_final.row(pairs[i].poi));
    grad_poi_final->row(pairs[i].poi) += dh.row(row).cwiseProduct(out.user_final.row(pairs[i].user));
  }
}

std::vector<double> TwinGat::score_all(const ModelParams& params, const ForwardOutputs& out,
                                       const RowVector& user_final) const {
  Matrix h = out.poi_final.array().rowwise() * user_final.array();
  const Matrix r = mlp_forward(params.score, h);
  return {r.data(), r.data() + r.size()};
}

Matrix user_latent(const TwinGat& model, const Matrix& users, const ModelParams& params) {
  return gat_aggregate(users, model.social_lists(), params.gat[0], model.config().activation,
                       model.config().leaky_slope);
}

Matrix user_checkin_pool(const TwinGat& model, const Matrix& pois) {
  return max_pool(pois, model.user_pool_lists());
}

Matrix location_conditioned_user(const TwinGat& model, const Matrix& user_pool,
                                 const ModelParams& params) {
  return gat_aggregate(user_pool, model.social_lists(), params.gat[1], model.config().activation,
                       model.config().leaky_slope);
}

Matrix location_latent(const TwinGat& model, const Matrix& pois, const ModelParams& params,
                       const NeighborLists& sampled) {
  return gat_aggregate(pois, sampled, params.gat[2], model.config().activation,
                       model.config().leaky_slope);
}

Matrix location_user_pool(const TwinGat& model, const Matrix& users) {
  return max_pool(users, model.poi_pool_lists());
}

Matrix user_conditioned_location(const TwinGat& model, const Matrix& poi_pool,
                                 const ModelParams& params, const NeighborLists& sampled) {
  return gat_aggregate(poi_pool, sampled, params.gat[3], model.config().activation,
                       model.config().leaky_slope);
}

}  // namespace xregion
