#include "tacitree/cluster/cluster.hpp"

#include <algorithm>
#include <deque>
#include <map>

#include "tacitree/error.hpp"

namespace tacitree {

namespace {

std::vector<int> argmax_labels(const GmmModel<double>& model, const MatrixX<double>& m) {
  const MatrixX<double> lj = log_joint(model, m);
  std::vector<int> labels(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < lj.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < lj.cols(); ++k) {
      if (lj(i, k) > lj(i, best)) best = k;
    }
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return labels;
}

std::vector<std::vector<std::size_t>> group(const std::vector<int>& labels, const std::vector<std::size_t>& members) {
  std::map<int, std::vector<std::size_t>> by;
  for (std::size_t j = 0; j < members.size(); ++j) by[labels[j]].push_back(members[j]);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [_, g] : by) out.push_back(std::move(g));
  return out;
}

MatrixX<double> rows_of(const MatrixX<double>& m, const std::vector<std::size_t>& idx) {
  MatrixX<double> out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t j = 0; j < idx.size(); ++j) out.row(static_cast<Eigen::Index>(j)) = m.row(static_cast<Eigen::Index>(idx[j]));
  return out;
}

}  // namespace

std::size_t ClusterAssignment::max_cluster_size() const {
  std::size_t mx = 0;
  for (const auto& c : clusters) mx = std::max(mx, c.size());
  return mx;
}

int initial_cluster_count(std::size_t n, int k) {
  if (k < 1) throw Error(Errc::invalid_config, "k", "must be positive");
  return std::max(1, static_cast<int>(n / static_cast<std::size_t>(k)));
}

ClusterAssignment canonicalize(std::vector<int> labels) {
  std::map<int, int> renumber;
  for (int l : labels) renumber.try_emplace(l, static_cast<int>(renumber.size()));
  ClusterAssignment out;
  out.clusters.resize(renumber.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = renumber[labels[i]];
    out.clusters[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  out.labels = std::move(labels);
  return out;
}

ClusterAssignment assign_with_cap(const GmmModel<double>& model, const MatrixX<double>& m, int k, std::uint64_t seed) {
  if (k < 1) throw Error(Errc::invalid_config, "k", "must be positive");
  const auto n = static_cast<std::size_t>(m.rows());
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;

  std::deque<std::vector<std::size_t>> pending;
  for (auto& g : group(argmax_labels(model, m), all)) pending.push_back(std::move(g));

  const auto cap = static_cast<std::size_t>(k);
  std::vector<std::vector<std::size_t>> done;
  std::uint64_t split_no = 0;
  while (!pending.empty()) {
    auto g = std::move(pending.front());
    pending.pop_front();
    if (g.size() <= cap) {
      done.push_back(std::move(g));
      continue;
    }
    const auto parts = static_cast<int>((g.size() + cap - 1) / cap);
    const MatrixX<double> sub = rows_of(m, g);
    bool split = false;
    if (!detail::all_rows_identical(sub)) {
      for (std::uint64_t attempt = 0; attempt < 5 && !split; ++attempt) {
        auto gm = fit_gmm(sub, parts, derive_seed(seed, {split_no, attempt}));
        auto pieces = group(argmax_labels(gm, sub), g);
        std::size_t largest = 0;
        for (const auto& p : pieces) largest = std::max(largest, p.size());
        if (pieces.size() >= 2 && largest < g.size()) {
          for (auto& p : pieces) pending.push_back(std::move(p));
          split = true;
        }
      }
    }
    if (!split) {
      std::vector<std::vector<std::size_t>> rr(static_cast<std::size_t>(parts));
      for (std::size_t j = 0; j < g.size(); ++j) rr[j % rr.size()].push_back(g[j]);
      for (auto& p : rr) done.push_back(std::move(p));
    }
    ++split_no;
  }

  std::vector<int> labels(n, -1);
  for (std::size_t c = 0; c < done.size(); ++c) {
    for (auto i : done[c]) labels[i] = static_cast<int>(c);
  }
  return canonicalize(std::move(labels));
}

ClusterAssignment assign_exact_count(const GmmModel<double>& model, const MatrixX<double>& m) {
  const auto n = static_cast<std::size_t>(m.rows());
  const auto h = static_cast<std::size_t>(model.n_components());
  if (h < 1 || h > n) throw Error(Errc::too_few_points, std::to_string(n), "need 1 <= components <= points");
  const std::size_t cap = (n + h - 1) / h;
  const MatrixX<double> lr = log_responsibilities(model, m);

  std::vector<int> labels(n, -1);
  std::vector<std::size_t> size(h, 0);
  for (std::size_t j = 0; j < h; ++j) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] != -1) continue;
      if (best == n || lr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) >
                           lr(static_cast<Eigen::Index>(best), static_cast<Eigen::Index>(j)))
        best = i;
    }
    labels[best] = static_cast<int>(j);
    ++size[j];
  }

  struct Pair {
    double score;
    std::size_t i, j;
  };
  std::vector<Pair> pairs;
  pairs.reserve(n * h);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != -1) continue;
    for (std::size_t j = 0; j < h; ++j)
      pairs.push_back({lr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), i, j});
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });
  for (const auto& p : pairs) {
    if (labels[p.i] != -1 || size[p.j] >= cap) continue;
    labels[p.i] = static_cast<int>(p.j);
    ++size[p.j];
  }
  return canonicalize(std::move(labels));
}

ReduceOptions reduce_options(const BuildConfig& cfg, std::uint64_t seed) {
  ReduceOptions r;
  r.dims = cfg.reducer_dims;
  r.kind = cfg.reducer;
  r.seed = seed;
  return r;
}

ClusterAssignment cluster_vectors(const MatrixX<double>& vectors, const ClusterParams& p) {
  const auto n = static_cast<std::size_t>(vectors.rows());
  if (n == 0) throw Error(Errc::empty_input, "cluster");
  if (n == 1) return canonicalize({0});
  const int comps = std::clamp(p.n_components, 1, static_cast<int>(n));

  auto reduced = reduce(vectors, p.reduce);
  auto model = fit_gmm(reduced.data, comps, derive_seed(p.seed, {2}));
  auto out = p.sizing == LevelSizing::exact_count ? assign_exact_count(model, reduced.data)
                                                  : assign_with_cap(model, reduced.data, p.k, derive_seed(p.seed, {3}));
  out.degenerate_input = reduced.degenerate;
  return out;
}

MatrixX<double> embedding_matrix(std::span<const Fact> facts) {
  if (facts.empty()) throw Error(Errc::empty_input, "facts");
  Eigen::Index dim = -1;
  for (const auto& f : facts) {
    if (!f.embedding) throw Error(Errc::missing_embedding, f.fact_id);
    if (dim == -1) dim = f.embedding->size();
    if (f.embedding->size() != dim) throw Error(Errc::missing_embedding, f.fact_id, "embedding dimension differs");
  }
  MatrixX<double> x(static_cast<Eigen::Index>(facts.size()), dim);
  for (std::size_t i = 0; i < facts.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = facts[i].embedding->transpose();
  return x;
}

ClusterAssignment cluster_facts(std::span<const Fact> facts, const BuildConfig& cfg) {
  cfg.validate();
  const MatrixX<double> x = embedding_matrix(facts);
  ClusterParams p;
  p.k = cfg.k;
  p.n_components = initial_cluster_count(facts.size(), cfg.k);
  p.sizing = LevelSizing::hard_cap;
  p.seed = derive_seed(cfg.seed, {0});
  p.reduce = reduce_options(cfg, derive_seed(cfg.seed, {0, 1}));
  return cluster_vectors(x, p);
}

std::vector<std::vector<std::string>> cluster_fact_ids(const ClusterAssignment& a, std::span<const Fact> facts) {
  std::vector<std::vector<std::string>> out;
  for (const auto& c : a.clusters) {
    auto& ids = out.emplace_back();
    for (auto i : c) ids.push_back(facts[i].fact_id);
  }
  return out;
}

}  // namespace tacitree
