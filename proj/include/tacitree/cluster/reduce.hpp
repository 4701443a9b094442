#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "tacitree/error.hpp"
#include "tacitree/memory_model.hpp"
#include "tacitree/rng.hpp"

namespace tacitree {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct ReduceOptions {
  int dims = 10;
  ReducerKind kind = ReducerKind::umap_like;
  std::uint64_t seed = 0;
  int n_neighbors = 15;
  int n_epochs = 200;
  int negative_samples = 5;
  double learning_rate = 1.0;
  // Curve parameters for min_dist = 0.1, spread = 1.
  double a = 1.577;
  double b = 0.8951;
};

// Rows are points.
template <typename Scalar>
struct ReducedMatrix {
  MatrixX<Scalar> data;
  ReducerKind kind = ReducerKind::umap_like;
  bool degenerate = false;
};

inline int reduced_dims(int requested, Eigen::Index n, Eigen::Index input_dim) {
  return static_cast<int>(std::min<Eigen::Index>({static_cast<Eigen::Index>(requested), n - 1, input_dim}));
}

namespace detail {

template <typename Scalar>
bool all_rows_identical(const MatrixX<Scalar>& x) {
  for (Eigen::Index i = 1; i < x.rows(); ++i) {
    if (x.row(i) != x.row(0)) return false;
  }
  return true;
}

// Principal axes as columns, sign fixed so the largest-|loading| entry of
// each axis is positive (ties go to the lowest coordinate).
template <typename Scalar>
MatrixX<Scalar> principal_axes(const MatrixX<Scalar>& centered, int dims) {
  Eigen::BDCSVD<MatrixX<Scalar>> svd(centered, Eigen::ComputeThinV);
  MatrixX<Scalar> v = svd.matrixV().leftCols(dims);
  for (int j = 0; j < dims; ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < v.rows(); ++r) {
      if (std::abs(v(r, j)) > std::abs(v(best, j))) best = r;
    }
    if (v(best, j) < Scalar(0)) v.col(j) = -v.col(j);
  }
  return v;
}

template <typename Scalar>
MatrixX<Scalar> pca_scores(const MatrixX<Scalar>& x, int dims) {
  MatrixX<Scalar> centered = x.rowwise() - x.colwise().mean();
  return centered * principal_axes(centered, dims);
}

template <typename Scalar>
Scalar clip(Scalar v, Scalar lim) {
  return std::clamp(v, -lim, lim);
}

struct Edge {
  int head;
  int tail;
  double weight;
};

// k-NN fuzzy simplicial set, symmetrized with the probabilistic union
// P = W + W^T - W o W^T.
template <typename Scalar>
std::vector<Edge> fuzzy_graph(const MatrixX<Scalar>& x, int k) {
  const auto n = static_cast<int>(x.rows());
  MatrixX<double> dist(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      double d = (x.row(i) - x.row(j)).template cast<double>().norm();
      dist(i, j) = d;
      dist(j, i) = d;
    }
  }

  MatrixX<double> w = MatrixX<double>::Zero(n, n);
  const double target = std::log2(static_cast<double>(k));
  std::vector<int> order;
  for (int i = 0; i < n; ++i) {
    order.resize(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::erase(order, i);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
      if (dist(i, a) != dist(i, b)) return dist(i, a) < dist(i, b);
      return a < b;
    });
    double rho = 0.0;
    double mean_d = 0.0;
    for (int t = 0; t < k; ++t) {
      double d = dist(i, order[static_cast<std::size_t>(t)]);
      mean_d += d;
      if (rho == 0.0 && d > 0.0) rho = d;
    }
    mean_d /= k;

    double lo = 0.0, hi = std::numeric_limits<double>::infinity(), sigma = 1.0;
    for (int it = 0; it < 64; ++it) {
      double s = 0.0;
      for (int t = 0; t < k; ++t) {
        double d = dist(i, order[static_cast<std::size_t>(t)]) - rho;
        s += d > 0.0 ? std::exp(-d / sigma) : 1.0;
      }
      if (std::abs(s - target) < 1e-5) break;
      if (s > target) {
        hi = sigma;
        sigma = (lo + hi) / 2.0;
      } else {
        lo = sigma;
        sigma = std::isinf(hi) ? sigma * 2.0 : (lo + hi) / 2.0;
      }
    }
    sigma = std::max(sigma, 1e-3 * mean_d);
    if (sigma <= 0.0) sigma = 1e-3;
    for (int t = 0; t < k; ++t) {
      int j = order[static_cast<std::size_t>(t)];
      double d = dist(i, j) - rho;
      w(i, j) = d > 0.0 ? std::exp(-d / sigma) : 1.0;
    }
  }

  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      double p = w(i, j) + w(j, i) - w(i, j) * w(j, i);
      if (p > 0.0) edges.push_back({i, j, p});
    }
  }
  return edges;
}

template <typename Scalar>
MatrixX<Scalar> umap_layout(const MatrixX<Scalar>& x, int dims, const ReduceOptions& opt) {
  const auto n = static_cast<int>(x.rows());
  const int k = std::min(opt.n_neighbors, n - 1);
  Rng rng(derive_seed(opt.seed, {0x756d6170}));

  MatrixX<Scalar> y = pca_scores(x, dims);
  const Scalar extent = y.cwiseAbs().maxCoeff();
  if (extent > Scalar(0)) {
    y *= Scalar(10) / extent;
  } else {
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = static_cast<Scalar>(rng.uniform01() * 20.0 - 10.0);
  }
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] += static_cast<Scalar>(rng.normal() * 1e-4);

  auto edges = fuzzy_graph(x, k);
  if (edges.empty()) return y;
  double max_w = 0.0;
  for (const auto& e : edges) max_w = std::max(max_w, e.weight);
  std::erase_if(edges, [&](const Edge& e) { return e.weight < max_w / opt.n_epochs; });

  std::vector<double> eps(edges.size()), next_sample(edges.size()), eps_neg(edges.size()), next_neg(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    eps[e] = max_w / edges[e].weight;
    next_sample[e] = eps[e];
    eps_neg[e] = eps[e] / opt.negative_samples;
    next_neg[e] = eps_neg[e];
  }

  const Scalar a = static_cast<Scalar>(opt.a), b = static_cast<Scalar>(opt.b), lim = Scalar(4);
  VectorX<Scalar> diff(dims);
  for (int epoch = 0; epoch < opt.n_epochs; ++epoch) {
    const Scalar alpha = static_cast<Scalar>(opt.learning_rate * (1.0 - static_cast<double>(epoch) / opt.n_epochs));
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (next_sample[e] > epoch + 1) continue;
      const int i = edges[e].head, j = edges[e].tail;
      {
        for (int c = 0; c < dims; ++c) diff[c] = y(i, c) - y(j, c);
        const Scalar d2 = diff.squaredNorm();
        if (d2 > Scalar(0)) {
          const Scalar pb = std::pow(d2, b);
          const Scalar coef = Scalar(-2) * a * b * (pb / d2) / (Scalar(1) + a * pb);
          for (int c = 0; c < dims; ++c) {
            const Scalar g = clip(coef * diff[c], lim) * alpha;
            y(i, c) += g;
            y(j, c) -= g;
          }
        }
      }
      next_sample[e] += eps[e];

      const int n_neg = static_cast<int>((epoch + 1 - next_neg[e]) / eps_neg[e]);
      for (int s = 0; s < n_neg; ++s) {
        const auto other = static_cast<int>(rng.index(static_cast<std::size_t>(n)));
        if (other == i) continue;
        for (int c = 0; c < dims; ++c) diff[c] = y(i, c) - y(other, c);
        const Scalar d2 = diff.squaredNorm();
        const Scalar coef =
            d2 > Scalar(0) ? Scalar(2) * b / ((Scalar(0.001) + d2) * (Scalar(1) + a * std::pow(d2, b))) : Scalar(0);
        for (int c = 0; c < dims; ++c) y(i, c) += (d2 > Scalar(0) ? clip(coef * diff[c], lim) : lim) * alpha;
      }
      next_neg[e] += n_neg * eps_neg[e];
    }
  }
  return y;
}

}  // namespace detail

// Projects n points (rows) to d' = min(dims, n-1, input_dim) columns. All
// identical inputs give a zero matrix with `degenerate` set.
template <typename Scalar>
ReducedMatrix<Scalar> reduce(const MatrixX<Scalar>& x, const ReduceOptions& opt) {
  if (x.rows() < 2) throw Error(Errc::too_few_points, std::to_string(x.rows()), "reduce needs at least 2 points");
  if (!x.allFinite()) throw Error(Errc::invalid_history, "reduce", "non-finite input");
  const int dims = reduced_dims(opt.dims, x.rows(), x.cols());
  if (dims < 1) throw Error(Errc::invalid_config, "reducer_dims", "must be positive");

  ReducedMatrix<Scalar> out;
  out.kind = opt.kind;
  if (detail::all_rows_identical(x)) {
    out.data = MatrixX<Scalar>::Zero(x.rows(), dims);
    out.degenerate = true;
    return out;
  }
  out.data = opt.kind == ReducerKind::pca ? detail::pca_scores(x, dims) : detail::umap_layout(x, dims, opt);
  if (!out.data.allFinite()) throw Error(Errc::invalid_history, "reduce", "layout diverged");
  return out;
}

}  // namespace tacitree
