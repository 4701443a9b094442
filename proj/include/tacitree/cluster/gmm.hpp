#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "tacitree/cluster/reduce.hpp"
#include "tacitree/error.hpp"
#include "tacitree/rng.hpp"

namespace tacitree {

struct GmmOptions {
  int max_iter = 200;
  double tol = 1e-4;
  double var_floor = 1e-6;
  int max_repairs = 3;
  // A component whose soft count falls below this has collapsed.
  double collapse_mass = 1e-3;
};

// Diagonal-covariance mixture. means/variances are n_components x d.
template <typename Scalar>
struct GmmModel {
  VectorX<Scalar> weights;
  MatrixX<Scalar> means;
  MatrixX<Scalar> variances;
  // One entry per E-step since the last collapse repair.
  std::vector<Scalar> log_likelihood_trace;
  int iterations = 0;
  int repairs = 0;
  bool converged = false;

  int n_components() const { return static_cast<int>(weights.size()); }
};

// log(w_k) + log N(x_i | mu_k, diag(var_k)), n x K.
template <typename Scalar>
MatrixX<Scalar> log_joint(const GmmModel<Scalar>& m, const MatrixX<Scalar>& x) {
  const Eigen::Index n = x.rows(), kc = m.weights.size(), d = x.cols();
  const Scalar log2pi = static_cast<Scalar>(std::log(2.0 * std::numbers::pi));
  MatrixX<Scalar> out(n, kc);
  for (Eigen::Index k = 0; k < kc; ++k) {
    const auto var = m.variances.row(k).array();
    const Scalar norm = Scalar(-0.5) * (Scalar(d) * log2pi + var.log().sum()) + std::log(m.weights[k]);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Scalar maha = ((x.row(i) - m.means.row(k)).array().square() / var).sum();
      out(i, k) = norm - Scalar(0.5) * maha;
    }
  }
  return out;
}

// Row-wise log-sum-exp.
template <typename Scalar>
VectorX<Scalar> log_sum_exp_rows(const MatrixX<Scalar>& a) {
  VectorX<Scalar> out(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const Scalar mx = a.row(i).maxCoeff();
    if (!std::isfinite(mx)) {
      out[i] = mx;
      continue;
    }
    out[i] = mx + std::log((a.row(i).array() - mx).exp().sum());
  }
  return out;
}

// Log posterior responsibilities, n x K.
template <typename Scalar>
MatrixX<Scalar> log_responsibilities(const GmmModel<Scalar>& m, const MatrixX<Scalar>& x) {
  MatrixX<Scalar> lj = log_joint(m, x);
  return lj.colwise() - log_sum_exp_rows(lj);
}

template <typename Scalar>
Scalar log_likelihood(const GmmModel<Scalar>& m, const MatrixX<Scalar>& x) {
  return log_sum_exp_rows(log_joint(m, x)).sum();
}

namespace detail {

template <typename Scalar>
VectorX<Scalar> floored_variance(const MatrixX<Scalar>& x, Scalar floor) {
  const auto mean = x.colwise().mean();
  VectorX<Scalar> v = ((x.rowwise() - mean).array().square().colwise().sum() / Scalar(x.rows())).transpose();
  return v.cwiseMax(floor);
}

// k-means++ seeding on squared Euclidean distance.
template <typename Scalar>
std::vector<Eigen::Index> kmeanspp(const MatrixX<Scalar>& x, int kc, Rng& rng) {
  const Eigen::Index n = x.rows();
  std::vector<Eigen::Index> centers{static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)))};
  VectorX<double> d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2[i] = (x.row(i) - x.row(centers[0])).template cast<double>().squaredNorm();
  while (static_cast<int>(centers.size()) < kc) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total <= 0.0) {
      pick = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
    } else {
      double r = rng.uniform01() * total, acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (d2[i] > 0.0 && acc >= r) {
          pick = i;
          break;
        }
      }
    }
    centers.push_back(pick);
    for (Eigen::Index i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], (x.row(i) - x.row(pick)).template cast<double>().squaredNorm());
  }
  return centers;
}

// Point farthest from its nearest current mean (lowest index on ties).
template <typename Scalar>
Eigen::Index farthest_point(const MatrixX<Scalar>& x, const MatrixX<Scalar>& means) {
  Eigen::Index best = 0;
  Scalar best_d = Scalar(-1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Scalar nearest = std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index k = 0; k < means.rows(); ++k) nearest = std::min(nearest, (x.row(i) - means.row(k)).squaredNorm());
    if (nearest > best_d) {
      best_d = nearest;
      best = i;
    }
  }
  return best;
}

}  // namespace detail

// EM for a diagonal Gaussian mixture with k-means++ initialization.
// Stops when |delta log-likelihood| < tol or after max_iter E-steps.
template <typename Scalar>
GmmModel<Scalar> fit_gmm(const MatrixX<Scalar>& x, int n_components, std::uint64_t seed, const GmmOptions& opt = {}) {
  const Eigen::Index n = x.rows(), d = x.cols();
  if (n < 1 || n_components < 1 || n_components > n)
    throw Error(Errc::too_few_points, std::to_string(n), "need 1 <= n_components <= rows");
  const Scalar floor = static_cast<Scalar>(opt.var_floor);
  Rng rng(seed);

  GmmModel<Scalar> m;
  const VectorX<Scalar> global_var = detail::floored_variance(x, floor);
  const auto centers = detail::kmeanspp(x, n_components, rng);
  m.weights = VectorX<Scalar>::Constant(n_components, Scalar(1) / Scalar(n_components));
  m.means.resize(n_components, d);
  m.variances.resize(n_components, d);
  for (int k = 0; k < n_components; ++k) {
    m.means.row(k) = x.row(centers[static_cast<std::size_t>(k)]);
    m.variances.row(k) = global_var.transpose();
  }

  Scalar prev = -std::numeric_limits<Scalar>::infinity();
  for (int it = 0; it < opt.max_iter; ++it) {
    // E-step
    MatrixX<Scalar> lj = log_joint(m, x);
    VectorX<Scalar> lse = log_sum_exp_rows(lj);
    const Scalar ll = lse.sum();
    m.log_likelihood_trace.push_back(ll);
    m.iterations = it + 1;
    if (std::abs(ll - prev) < opt.tol) {
      m.converged = true;
      break;
    }
    prev = ll;
    MatrixX<Scalar> resp = (lj.colwise() - lse).array().exp();

    // M-step
    VectorX<Scalar> nk = resp.colwise().sum().transpose();
    bool repaired = false;
    for (int k = 0; k < n_components; ++k) {
      if (nk[k] < static_cast<Scalar>(opt.collapse_mass) && m.repairs < opt.max_repairs) {
        m.means.row(k) = x.row(detail::farthest_point(x, m.means));
        m.variances.row(k) = global_var.transpose();
        m.weights[k] = Scalar(1) / Scalar(n);
        ++m.repairs;
        repaired = true;
        continue;
      }
      if (!(nk[k] > Scalar(0))) {
        m.weights[k] = Scalar(0);
        continue;
      }
      VectorX<Scalar> mu = (resp.col(k).transpose() * x).transpose() / nk[k];
      VectorX<Scalar> var =
          (resp.col(k).transpose() * (x.rowwise() - mu.transpose()).array().square().matrix()).transpose() / nk[k];
      m.means.row(k) = mu.transpose();
      m.variances.row(k) = var.cwiseMax(floor).transpose();
      m.weights[k] = nk[k] / Scalar(n);
    }
    for (int k = 0; k < n_components; ++k) m.weights[k] = std::max(m.weights[k], std::numeric_limits<Scalar>::min());
    m.weights /= m.weights.sum();
    if (repaired) {
      m.log_likelihood_trace.clear();
      prev = -std::numeric_limits<Scalar>::infinity();
    }
  }
  return m;
}

}  // namespace tacitree
