#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "pmseg/error.hpp"
#include "pmseg/trajectory.hpp"

namespace pmseg::clustering {

/// Full-covariance Gaussian mixture.
struct GmmModel {
  int k = 0;
  Vector weights;                   // k
  Matrix means;                     // k x D
  std::vector<Matrix> covariances;  // k of D x D
  double log_likelihood = 0.0;
  double bic = 0.0;
  double regularization = 0.0;      // added to every covariance diagonal
  bool degenerate = false;          // all samples identical; single floor component
  bool underpopulated = false;      // some component holds fewer than D+1 effective samples
  int iterations = 0;
  std::vector<double> log_likelihood_trace;  // one entry per accepted EM iteration

  Index dims() const noexcept { return means.cols(); }

  /// log(w_j) + log N(x_i | mu_j, Sigma_j), N x k.
  Matrix log_joint(const Matrix& data) const {
    const Index n = data.rows();
    const Index d = data.cols();
    if (d != dims()) throw Error("data dimension does not match the mixture");
    Matrix out(n, k);
    const double log2pi = std::log(2.0 * std::numbers::pi);
    for (int j = 0; j < k; ++j) {
      Eigen::LLT<Matrix> llt(covariances[static_cast<std::size_t>(j)]);
      if (llt.info() != Eigen::Success) throw Error("covariance is not positive definite");
      const Matrix& l = llt.matrixL();
      const double logdet = 2.0 * l.diagonal().array().log().sum();
      Matrix centered = (data.rowwise() - means.row(j)).transpose();
      llt.matrixL().solveInPlace(centered);
      const Vector maha = centered.colwise().squaredNorm().transpose();
      const double lw = std::log(std::max(weights[j], std::numeric_limits<double>::min()));
      out.col(j) = (lw - 0.5 * (static_cast<double>(d) * log2pi + logdet)) -
                   0.5 * maha.array();
    }
    return out;
  }

  /// Posterior component probabilities, N x k.
  Matrix responsibilities(const Matrix& data) const {
    Matrix lj = log_joint(data);
    for (Index i = 0; i < lj.rows(); ++i) {
      const double m = lj.row(i).maxCoeff();
      const double lse = m + std::log((lj.row(i).array() - m).exp().sum());
      lj.row(i) = (lj.row(i).array() - lse).exp();
    }
    return lj;
  }

  /// Most probable component per row; ties resolve to the lowest index.
  std::vector<Label> predict(const Matrix& data) const {
    const Matrix lj = log_joint(data);
    std::vector<Label> out(static_cast<std::size_t>(lj.rows()));
    for (Index i = 0; i < lj.rows(); ++i) {
      Index best = 0;
      for (Index j = 1; j < lj.cols(); ++j)
        if (lj(i, j) > lj(i, best)) best = j;
      out[static_cast<std::size_t>(i)] = static_cast<Label>(best);
    }
    return out;
  }
};

struct EmOptions {
  std::uint64_t seed = 0;
  int restarts = 5;
  double tol = 1e-6;  // relative log-likelihood improvement
  int max_iter = 300;
};

/// Inclusive component-count range.
struct KRange {
  int min = 3;
  int max = 10;
};

inline int free_parameters(int k, Index d) {
  const auto dd = static_cast<int>(d);
  return (k - 1) + k * dd + k * dd * (dd + 1) / 2;
}

inline double bic_score(double log_likelihood, int k, Index d, Index n) {
  return -2.0 * log_likelihood + free_parameters(k, d) * std::log(static_cast<double>(n));
}

namespace detail {

struct EmState {
  Vector weights;
  Matrix means;
  std::vector<Matrix> covariances;
};

inline GmmModel as_model(const EmState& s, double reg) {
  GmmModel m;
  m.k = static_cast<int>(s.weights.size());
  m.weights = s.weights;
  m.means = s.means;
  m.covariances = s.covariances;
  m.regularization = reg;
  return m;
}

// Returns total log-likelihood; fills normalized responsibilities.
inline double e_step(const EmState& s, double reg, const Matrix& data, Matrix& resp) {
  resp = as_model(s, reg).log_joint(data);
  double total = 0.0;
  for (Index i = 0; i < resp.rows(); ++i) {
    const double m = resp.row(i).maxCoeff();
    const double lse = m + std::log((resp.row(i).array() - m).exp().sum());
    total += lse;
    resp.row(i) = (resp.row(i).array() - lse).exp();
  }
  return total;
}

inline EmState m_step(const Matrix& data, const Matrix& resp, double reg,
                      const EmState& previous) {
  const Index n = data.rows();
  const Index d = data.cols();
  const auto k = resp.cols();
  EmState s;
  s.weights.resize(k);
  s.means.resize(k, d);
  s.covariances.resize(static_cast<std::size_t>(k));
  const Matrix ident = Matrix::Identity(d, d);
  for (Index j = 0; j < k; ++j) {
    const double nk = resp.col(j).sum();
    s.weights[j] = nk / static_cast<double>(n);
    if (nk < 1e-10) {
      // Starved component keeps its shape; its weight drives it out of the fit.
      s.means.row(j) = previous.means.row(j);
      s.covariances[static_cast<std::size_t>(j)] = previous.covariances[static_cast<std::size_t>(j)];
      continue;
    }
    const Vector mu = (resp.col(j).transpose() * data).transpose() / nk;
    s.means.row(j) = mu.transpose();
    const Matrix centered = data.rowwise() - mu.transpose();
    const Matrix weighted = centered.array().colwise() * resp.col(j).array();
    Matrix cov = (weighted.transpose() * centered) / nk;
    cov = (0.5 * (cov + cov.transpose())).eval();
    s.covariances[static_cast<std::size_t>(j)] = cov + reg * ident;
  }
  s.weights /= s.weights.sum();
  return s;
}

inline Matrix kmeanspp_centers(const Matrix& data, int k, std::mt19937_64& rng) {
  const Index n = data.rows();
  Matrix centers(k, data.cols());
  std::uniform_int_distribution<Index> pick(0, n - 1);
  centers.row(0) = data.row(pick(rng));
  Vector dist2 = (data.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    Index chosen = 0;
    if (dist2.sum() > 0.0) {
      std::discrete_distribution<Index> weighted(dist2.data(), dist2.data() + n);
      chosen = weighted(rng);
    } else {
      chosen = pick(rng);
    }
    centers.row(c) = data.row(chosen);
    dist2 = dist2.cwiseMin((data.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

inline EmState initial_state(const Matrix& data, int k, double reg, std::mt19937_64& rng) {
  const Index n = data.rows();
  const Matrix centers = kmeanspp_centers(data, k, rng);
  Matrix resp = Matrix::Zero(n, k);
  for (Index i = 0; i < n; ++i) {
    Index best = 0;
    double best_d = (data.row(i) - centers.row(0)).squaredNorm();
    for (Index c = 1; c < k; ++c) {
      const double dc = (data.row(i) - centers.row(c)).squaredNorm();
      if (dc < best_d) {
        best_d = dc;
        best = c;
      }
    }
    resp(i, best) = 1.0;
  }
  // Fallback shape for clusters with too few points: pooled diagonal variance.
  const Vector mean = data.colwise().mean().transpose();
  const Vector var = (data.rowwise() - mean.transpose()).array().square().colwise().mean();
  EmState fallback;
  fallback.weights = Vector::Constant(k, 1.0 / k);
  fallback.means = centers;
  Matrix diag = var.asDiagonal();
  diag.diagonal().array() += reg;
  fallback.covariances.assign(static_cast<std::size_t>(k), diag);

  EmState s = m_step(data, resp, reg, fallback);
  for (Index j = 0; j < k; ++j) {
    if (resp.col(j).sum() < 2.0) {
      s.means.row(j) = centers.row(j);
      s.covariances[static_cast<std::size_t>(j)] = diag;
      s.weights[j] = std::max(s.weights[j], 1.0 / static_cast<double>(n));
    }
  }
  s.weights /= s.weights.sum();
  return s;
}

}  // namespace detail

/// EM fit of a k-component full-covariance mixture, best of `restarts`
/// k-means++ initializations. Covariances carry an eps*I floor with
/// eps = 1e-6 * mean per-column variance.
inline GmmModel fit_gmm(const Matrix& data, int k, const EmOptions& opts = {}) {
  const Index n = data.rows();
  const Index d = data.cols();
  if (k < 1) throw Error("mixture needs at least one component");
  if (d < 1) throw Error("mixture data needs at least one column");
  if (n <= k)
    throw Error("mixture with " + std::to_string(k) + " components needs more than " +
                std::to_string(k) + " samples, got " + std::to_string(n));
  if (!data.allFinite()) throw Error("mixture data contains non-finite values");

  const Vector mean = data.colwise().mean().transpose();
  const double mean_var = (data.rowwise() - mean.transpose()).array().square().mean();
  if (!(mean_var > 0.0)) {
    constexpr double kFloor = 1e-6;
    GmmModel m;
    m.k = 1;
    m.degenerate = true;
    m.weights = Vector::Ones(1);
    m.means = mean.transpose();
    m.covariances = {kFloor * Matrix::Identity(d, d)};
    m.regularization = kFloor;
    m.log_likelihood = m.log_joint(data).sum();
    m.log_likelihood_trace = {m.log_likelihood};
    m.bic = bic_score(m.log_likelihood, 1, d, n);
    warn("all " + std::to_string(n) + " samples are identical; returning a single-point mixture");
    return m;
  }
  const double reg = 1e-6 * mean_var;

  GmmModel best;
  bool have_best = false;
  const int restarts = std::max(1, opts.restarts);
  for (int r = 0; r < restarts; ++r) {
    std::seed_seq seq{static_cast<std::uint32_t>(opts.seed),
                      static_cast<std::uint32_t>(opts.seed >> 32),
                      static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(r)};
    std::mt19937_64 rng(seq);
    detail::EmState state = detail::initial_state(data, k, reg, rng);
    Matrix resp;
    double ll = detail::e_step(state, reg, data, resp);
    std::vector<double> trace{ll};
    int it = 0;
    while (it < opts.max_iter) {
      detail::EmState next = detail::m_step(data, resp, reg, state);
      Matrix next_resp;
      const double next_ll = detail::e_step(next, reg, data, next_resp);
      // The eps floor makes the update a hair off exact EM; never accept a drop.
      if (!(next_ll >= ll)) break;
      ++it;
      const double gain = next_ll - ll;
      state = std::move(next);
      resp = std::move(next_resp);
      ll = next_ll;
      trace.push_back(ll);
      if (gain <= opts.tol * std::abs(ll)) break;
    }
    if (!have_best || ll > best.log_likelihood) {
      best = detail::as_model(state, reg);
      best.log_likelihood = ll;
      best.iterations = it;
      best.log_likelihood_trace = std::move(trace);
      have_best = true;
    }
  }
  best.bic = bic_score(best.log_likelihood, k, d, n);
  best.underpopulated =
      (best.weights.array() * static_cast<double>(n)).minCoeff() < static_cast<double>(d + 1);
  return best;
}

/// Fits every k in `range` and keeps the lowest BIC; ties go to the smaller k.
/// Fits with an underpopulated component only win when every fit has one:
/// a full covariance on fewer than D+1 points is singular up to the floor.
inline GmmModel select_gmm(const Matrix& data, KRange range, const EmOptions& opts = {}) {
  if (range.min < 1 || range.max < range.min) throw Error("empty component range");
  GmmModel best;
  bool have_best = false;
  for (int k = range.min; k <= range.max; ++k) {
    GmmModel m = fit_gmm(data, k, opts);
    const bool better = best.underpopulated != m.underpopulated ? best.underpopulated
                                                                : m.bic < best.bic;
    if (!have_best || better) {
      best = std::move(m);
      have_best = true;
    }
    if (best.degenerate) break;
  }
  return best;
}

}  // namespace pmseg::clustering
