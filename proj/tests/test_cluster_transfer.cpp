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

#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "xregion/cluster_transfer.hpp"

using namespace xregion;

namespace {

Matrix rows(std::initializer_list<std::initializer_list<double>> values) {
  Matrix m(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(values.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : values) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

}  // namespace

TEST_CASE("kmeans closed-form cases") {
  std::mt19937_64 rng(1);
  const Matrix pts = rows({{0, 0}, {2, 0}, {4, 3}, {-1, 5}});
  const auto one = kmeans(pts, 1, rng);
  CHECK(one.centroids.row(0).isApprox(pts.colwise().mean()));

  const auto all = kmeans(pts, 4, rng);
  CHECK(all.inertia() == 0.0);
  CHECK(std::set<int>(all.assignments.begin(), all.assignments.end()).size() == 4);

  CHECK_THROWS_AS(kmeans(pts, 5, rng), ConfigError);
}

TEST_CASE("kmeans inertia never increases across Lloyd iterations") {
  for (int instance = 0; instance < 100; ++instance) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(instance));
    std::normal_distribution<double> n(0.0, 1.0);
    const int count = 20 + instance % 30;
    Matrix pts(count, 3);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = n(rng);
    const auto r = kmeans(pts, 2 + instance % 6, rng);
    for (std::size_t i = 1; i < r.inertia_trace.size(); ++i) {
      CHECK(r.inertia_trace[i] <= r.inertia_trace[i - 1] + 1e-12);
    }
    CHECK(r.inertia() == doctest::Approx(kmeans_inertia(pts, r.assignments, r.centroids)));
  }
}

TEST_CASE("kmeans recovers two blobs 10 sigma apart") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    const int per = 40;
    Matrix pts(2 * per, 4);
    std::vector<int> planted;
    for (int i = 0; i < 2 * per; ++i) {
      const int blob = i % 2;
      planted.push_back(blob);
      for (int d = 0; d < 4; ++d) pts(i, d) = n(rng) + (blob == 1 && d == 0 ? 10.0 : 0.0);
    }
    const auto r = kmeans(pts, 2, rng);
    const int flip = r.assignments[0] == planted[0] ? 0 : 1;
    for (int i = 0; i < 2 * per; ++i) CHECK((r.assignments[static_cast<std::size_t>(i)] ^ flip) == planted[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("cluster embeddings are member means") {
  const Matrix e = rows({{1, 0}, {0, 1}, {3, 3}, {3, 3}, {7, -2}});
  const std::vector<std::int32_t> a{0, 0, 1, 1, 2};
  const Matrix c = cluster_embed(a, e, 3);
  CHECK(c.row(0).isApprox(rows({{0.5, 0.5}})));
  CHECK(c.row(1).isApprox(rows({{3, 3}})));
  CHECK(c.row(2).isApprox(e.row(4)));
}

TEST_CASE("cluster attention") {
  const Matrix t = rows({{1, 0}, {0, 1}});
  CHECK(cluster_attention(t.topRows(1), t.topRows(1), RowVector::Ones(4))(0, 0) == 1.0);

  const Matrix twins = rows({{2, 1}, {2, 1}});
  const Matrix b = cluster_attention(t, twins, RowVector::Random(4));
  CHECK(b(0, 0) == doctest::Approx(0.5));
  CHECK(b(1, 1) == doctest::Approx(0.5));

  // Source logits ln 3 and 0 through the tail of the attention vector.
  RowVector att = RowVector::Zero(4);
  att[2] = std::log(3.0);
  const Matrix beta = cluster_attention(rows({{0, 0}}), rows({{1, 0}, {0, 0}}), att);
  CHECK(beta(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(beta(0, 1) == doctest::Approx(0.25).epsilon(1e-12));

  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int i = 0; i < 50; ++i) {
    Matrix tc(4, 3), sc(6, 3);
    RowVector a(6);
    for (Eigen::Index k = 0; k < tc.size(); ++k) tc.data()[k] = n(rng);
    for (Eigen::Index k = 0; k < sc.size(); ++k) sc.data()[k] = n(rng);
    for (auto& v : a) v = n(rng);
    const Matrix p = cluster_attention(tc, sc, a);
    CHECK((p.array() >= 0.0).all());
    for (Eigen::Index r = 0; r < p.rows(); ++r) CHECK(std::abs(p.row(r).sum() - 1.0) < 1e-9);
  }
}

TEST_CASE("alignment term values") {
  const RowVector att = RowVector::Zero(4);
  CHECK(alignment_term(rows({{1, 2}}), rows({{1, 2}}), att, 0.2, nullptr, nullptr, nullptr) == 0.0);
  CHECK(alignment_term(rows({{1, 0}}), rows({{0, 0}}), att, 0.2, nullptr, nullptr, nullptr) == 1.0);
  // Zero attention gives beta rows (0.5, 0.5): targets (1,1) and (0,0)
  // against the source mean (1, 0.5).
  const double two = alignment_term(rows({{1, 1}, {0, 0}}), rows({{2, 0}, {0, 1}}), att, 0.2, nullptr, nullptr, nullptr);
  CHECK(two == doctest::Approx(0.25 + 1.25));
}

TEST_CASE("apply_transfer moves target members toward the source cluster") {
  const auto sg = testing::tiny_graph(2, 2, 1, RegionTag::kSource);
  const auto tg = testing::tiny_graph(2, 2, 2);
  Embeddings src{rows({{0, 0}, {0, 0}}), rows({{1, 1}, {1, 1}})};
  Embeddings tgt{rows({{1, 0}, {3, 0}}), rows({{1, 1}, {1, 1}})};
  std::mt19937_64 rng(3);
  TransferParams params = TransferParams::init(2, rng);
  TransferConfig cfg;
  cfg.clusters = 1;
  cfg.steps = 1;
  cfg.lr = 0.1;
  const SeedStream stream(9, "kmeans");

  SUBCASE("one step follows the hand gradient") {
    // L = |c_t - c_s|^2, c_t = (2, 0): each of the two rows gets 2 (2, 0) / 2.
    const auto before = params;
    const auto report = apply_transfer(&src, &tgt, &params, cfg, stream, 1, sg, tg);
    CHECK(report.loss_before == doctest::Approx(4.0));
    CHECK(tgt.users.isApprox(rows({{0.8, 0}, {2.8, 0}})));
    CHECK(tgt.pois == rows({{1, 1}, {1, 1}}));
    CHECK(src.users == Matrix::Zero(2, 2));
    CHECK(params == before);
    CHECK(report.loss_after == doctest::Approx(1.8 * 1.8));
  }
  SUBCASE("zero steps leave tables alone") {
    cfg.steps = 0;
    const auto copy = tgt;
    apply_transfer(&src, &tgt, &params, cfg, stream, 1, sg, tg);
    CHECK(tgt == copy);
  }
  SUBCASE("identical tables are a fixed point") {
    tgt = src;
    const auto report = apply_transfer(&src, &tgt, &params, cfg, stream, 1, sg, tg);
    CHECK(report.loss_before == 0.0);
    CHECK(tgt == src);
  }
  SUBCASE("K is clamped to the group size") {
    cfg.clusters = 5;
    src.users(1, 1) = 1.0;
    src.pois(1, 0) = 2.0;
    tgt.pois(0, 1) = -1.0;
    const auto report = apply_transfer(&src, &tgt, &params, cfg, stream, 1, sg, tg);
    CHECK(report.user_clusters_target == 2);
    CHECK(report.poi_clusters_source == 2);
  }
}
