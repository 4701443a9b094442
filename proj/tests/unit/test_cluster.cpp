#include <doctest.h>

#include <numeric>

#include "synthetic.hpp"
#include "tacitree/cluster/cluster.hpp"
#include "tacitree/error.hpp"

using namespace tacitree;
using namespace tacitree::testing;

namespace {

MatrixX<double> blobs(int per, int dim, double sep, std::uint64_t seed, std::vector<int>* truth = nullptr) {
  Rng rng(seed);
  MatrixX<double> x(3 * per, dim);
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < per; ++i) {
      for (int d = 0; d < dim; ++d) x(c * per + i, d) = (d == c ? sep : 0.0) + rng.normal();
      if (truth) truth->push_back(c);
    }
  }
  return x;
}

std::vector<Fact> random_facts(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Fact> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    Embedding e(16);
    for (auto& v : e) v = rng.normal();
    normalize(e);
    out[i].fact_id = "f" + std::to_string(i);
    out[i].embedding = e;
  }
  return out;
}

}  // namespace

TEST_CASE("initial cluster count is max(1, floor(n/k))") {
  CHECK(initial_cluster_count(100, 6) == 16);
  CHECK(initial_cluster_count(16, 6) == 2);
  CHECK(initial_cluster_count(5, 6) == 1);
  CHECK(initial_cluster_count(1, 6) == 1);
}

TEST_CASE("canonical numbering follows the smallest member") {
  auto a = canonicalize({7, 3, 7, 1, 3});
  CHECK(a.labels == std::vector<int>{0, 1, 0, 2, 1});
  REQUIRE(a.clusters.size() == 3);
  CHECK(a.clusters[0] == std::vector<std::size_t>{0, 2});
  CHECK(a.clusters[2] == std::vector<std::size_t>{3});
  CHECK(a.max_cluster_size() == 2);
}

TEST_CASE("reduced dimensionality is capped by n-1 and the input width") {
  CHECK(reduced_dims(10, 100, 64) == 10);
  CHECK(reduced_dims(10, 5, 64) == 4);
  CHECK(reduced_dims(10, 100, 3) == 3);
}

TEST_CASE("reduction is deterministic and flags identical inputs") {
  auto x = blobs(10, 6, 8.0, 1);
  ReduceOptions o;
  o.seed = 3;
  auto a = reduce(x, o), b = reduce(x, o);
  CHECK(a.data == b.data);
  CHECK(a.data.cols() == 6);
  o.kind = ReducerKind::pca;
  auto p = reduce(x, o);
  CHECK(p.kind == ReducerKind::pca);
  MatrixX<double> same = MatrixX<double>::Ones(5, 4);
  auto d = reduce(same, o);
  CHECK(d.degenerate);
  CHECK(d.data.isZero());
  CHECK_THROWS_AS(reduce(MatrixX<double>(MatrixX<double>::Ones(1, 4)), o), Error);
}

TEST_CASE("pca scores have a fixed sign convention") {
  auto x = blobs(8, 4, 5.0, 2);
  auto s1 = reduce(x, ReduceOptions{.dims = 2, .kind = ReducerKind::pca}).data;
  MatrixX<double> flipped = -x;
  auto s2 = reduce(flipped, ReduceOptions{.dims = 2, .kind = ReducerKind::pca}).data;
  CHECK((s1.cwiseAbs() - s2.cwiseAbs()).norm() < 1e-9);
}

TEST_CASE("gmm recovers separated components and its weights sum to one") {
  std::vector<int> truth;
  auto x = blobs(30, 3, 10.0, 4, &truth);
  auto m = fit_gmm(x, 3, 11);
  CHECK(m.weights.sum() == doctest::Approx(1.0));
  CHECK((m.variances.array() > 0).all());
  auto lr = log_responsibilities(m, x);
  std::vector<int> labels;
  for (Eigen::Index i = 0; i < lr.rows(); ++i) {
    Eigen::Index j;
    lr.row(i).maxCoeff(&j);
    labels.push_back(static_cast<int>(j));
  }
  CHECK(adjusted_rand_index(labels, truth) == doctest::Approx(1.0));
  for (std::size_t i = 1; i < m.log_likelihood_trace.size(); ++i)
    CHECK(m.log_likelihood_trace[i] >= m.log_likelihood_trace[i - 1] - 1e-8);
}

TEST_CASE("gmm on duplicated points survives without non-finite values") {
  MatrixX<double> x(12, 2);
  for (int i = 0; i < 12; ++i) x.row(i) << (i < 6 ? 0.0 : 1.0), 0.0;
  auto m = fit_gmm(x, 3, 5);
  CHECK(m.means.allFinite());
  CHECK(m.variances.minCoeff() > 0.0);
}

TEST_CASE("hard cap splits large clusters down to k") {
  for (std::size_t n : {1, 2, 6, 7, 13, 50, 137}) {
    auto facts = random_facts(n, n);
    BuildConfig cfg;
    auto a = cluster_facts(facts, cfg);
    CHECK(a.labels.size() == n);
    CHECK(a.max_cluster_size() <= 6);
    std::size_t total = 0;
    for (const auto& c : a.clusters) total += c.size();
    CHECK(total == n);
    auto ids = cluster_fact_ids(a, facts);
    CHECK(ids.size() == a.clusters.size());
  }
}

TEST_CASE("exact-count sizing gives exactly the requested number of clusters") {
  auto x = blobs(20, 5, 6.0, 9);
  ClusterParams p;
  p.n_components = 7;
  p.sizing = LevelSizing::exact_count;
  auto a = cluster_vectors(x, p);
  CHECK(a.clusters.size() == 7);
  CHECK(a.max_cluster_size() <= 9);
  for (const auto& c : a.clusters) CHECK_FALSE(c.empty());
}

TEST_CASE("clustering is a function of the seed") {
  auto facts = random_facts(60, 1);
  BuildConfig cfg;
  cfg.seed = 4;
  auto a = cluster_facts(facts, cfg), b = cluster_facts(facts, cfg);
  CHECK(a.labels == b.labels);
}

TEST_CASE("missing embeddings are reported") {
  auto facts = random_facts(4, 2);
  facts[2].embedding.reset();
  try {
    embedding_matrix(facts);
    FAIL("expected missing_embedding");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::missing_embedding);
  }
}
