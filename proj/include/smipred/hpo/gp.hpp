//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
// Gaussian-process surrogate: Matern-5/2 kernel with per-dimension length
// scales, a signal variance and an observation-noise term, fit by gradient
// ascent on the log marginal likelihood. Targets are standardized
// internally; inputs are expected in the unit cube.
#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "smipred/common.hpp"
#include "smipred/rng.hpp"

namespace smipred {

inline constexpr double kPi = 3.14159265358979323846;

class GaussianProcess {
 public:
  struct Config {
    int opt_iters = 160;
    double learning_rate = 0.08;
    double jitter = 1e-10;
  };

  void fit(const std::vector<std::vector<double>>& xs,
           const std::vector<double>& ys) {
    fit(xs, ys, Config());
  }

  void fit(const std::vector<std::vector<double>>& xs,
           const std::vector<double>& ys, const Config& cfg) {
    const std::size_t n = xs.size();
    if (n < 2) raise("gp: need at least two observations");
    dim_ = xs[0].size();
    for (const auto& x : xs)
      if (x.size() != dim_) raise<ShapeError>("gp: inconsistent input dims");

    x_ = Eigen::MatrixXd(static_cast<Eigen::Index>(n),
                         static_cast<Eigen::Index>(dim_));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t d = 0; d < dim_; ++d)
        x_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) =
            xs[i][d];

    y_mean_ = 0.0;
    for (double v : ys) y_mean_ += v;
    y_mean_ /= static_cast<double>(n);
    double var = 0.0;
    for (double v : ys) var += (v - y_mean_) * (v - y_mean_);
    y_std_ = std::sqrt(var / static_cast<double>(n));
    if (y_std_ < 1e-12) y_std_ = 1.0;  // constant targets
    y_ = Eigen::VectorXd(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      y_(static_cast<Eigen::Index>(i)) = (ys[i] - y_mean_) / y_std_;

    // two deterministic starts, keep the better marginal likelihood
    const double best_of[2] = {0.3, 1.0};
    double best_ml = -std::numeric_limits<double>::infinity();
    std::vector<double> best_theta;
    for (double ls0 : best_of) {
      std::vector<double> theta(dim_ + 2);
      for (std::size_t d = 0; d < dim_; ++d) theta[d] = std::log(ls0);
      theta[dim_] = 0.0;                 // log sf
      theta[dim_ + 1] = std::log(0.05);  // log sn
      const double ml = ascend(theta, cfg);
      if (ml > best_ml) {
        best_ml = ml;
        best_theta = theta;
      }
    }
    apply_theta(best_theta);
    factorize(cfg.jitter);
    log_ml_ = best_ml;
  }

  // Posterior of the latent function at candidate points.
  void posterior(const double* cand, std::size_t count,
                 std::vector<double>& mean, std::vector<double>& var) const {
    const auto n = x_.rows();
    const auto m = static_cast<Eigen::Index>(count);
    Eigen::MatrixXd kstar(n, m);
    for (Eigen::Index j = 0; j < m; ++j) {
      const double* xc = cand + static_cast<std::size_t>(j) * dim_;
      for (Eigen::Index i = 0; i < n; ++i)
        kstar(i, j) = kernel_row(i, xc);
    }
    Eigen::MatrixXd v = chol_.matrixL().solve(kstar);
    mean.resize(count);
    var.resize(count);
    for (Eigen::Index j = 0; j < m; ++j) {
      mean[static_cast<std::size_t>(j)] =
          kstar.col(j).dot(alpha_) * y_std_ + y_mean_;
      const double raw = sf2_ - v.col(j).squaredNorm();
      var[static_cast<std::size_t>(j)] =
          std::max(raw, 1e-12) * y_std_ * y_std_;
    }
  }

  void posterior_point(const std::vector<double>& x, double& mean,
                       double& var) const {
    std::vector<double> m, v;
    posterior(x.data(), 1, m, v);
    mean = m[0];
    var = v[0];
  }

  double log_marginal_likelihood() const { return log_ml_; }
  const std::vector<double>& length_scales() const { return ls_; }
  double noise_std() const { return std::sqrt(sn2_) * y_std_; }

 private:
  static constexpr double kSqrt5 = 2.2360679774997896964091736687747;

  double kernel_row(Eigen::Index i, const double* xc) const {
    double q = 0.0;
    for (std::size_t d = 0; d < dim_; ++d) {
      const double delta =
          (x_(i, static_cast<Eigen::Index>(d)) - xc[d]) / ls_[d];
      q += delta * delta;
    }
    const double u = kSqrt5 * std::sqrt(q);
    return sf2_ * (1.0 + u + u * u / 3.0) * std::exp(-u);
  }

  void apply_theta(const std::vector<double>& theta) {
    ls_.resize(dim_);
    for (std::size_t d = 0; d < dim_; ++d) ls_[d] = std::exp(theta[d]);
    sf2_ = std::exp(2.0 * theta[dim_]);
    sn2_ = std::exp(2.0 * theta[dim_ + 1]);
  }

  void factorize(double jitter) {
    const auto n = x_.rows();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) {
        double q = 0.0;
        for (std::size_t d = 0; d < dim_; ++d) {
          const double delta = (x_(i, static_cast<Eigen::Index>(d)) -
                                x_(j, static_cast<Eigen::Index>(d))) /
                               ls_[d];
          q += delta * delta;
        }
        const double u = kSqrt5 * std::sqrt(q);
        const double kf = sf2_ * (1.0 + u + u * u / 3.0) * std::exp(-u);
        k(i, j) = kf;
        k(j, i) = kf;
      }
      k(i, i) += sn2_ + jitter * (1.0 + sf2_);
    }
    chol_.compute(k);
    if (chol_.info() != Eigen::Success)
      raise("gp: kernel matrix not positive definite after jitter");
    alpha_ = chol_.solve(y_);
  }

  // One gradient-ascent run over the log hyperparameters; returns the final
  // log marginal likelihood and leaves theta at the optimum found.
  double ascend(std::vector<double>& theta, const Config& cfg) {
    const auto n = x_.rows();
    const std::size_t p = theta.size();
    std::vector<double> m(p, 0.0), v(p, 0.0);
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double ml = -std::numeric_limits<double>::infinity();

    for (int it = 1; it <= cfg.opt_iters; ++it) {
      apply_theta(theta);
      // assemble K and pairwise u for gradients
      Eigen::MatrixXd k(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
          double q = 0.0;
          for (std::size_t d = 0; d < dim_; ++d) {
            const double delta = (x_(i, static_cast<Eigen::Index>(d)) -
                                  x_(j, static_cast<Eigen::Index>(d))) /
                                 ls_[d];
            q += delta * delta;
          }
          const double u = kSqrt5 * std::sqrt(q);
          const double kf = sf2_ * (1.0 + u + u * u / 3.0) * std::exp(-u);
          k(i, j) = kf;
          k(j, i) = kf;
        }
        k(i, i) += sn2_ + cfg.jitter * (1.0 + sf2_);
      }
      Eigen::LLT<Eigen::MatrixXd> llt(k);
      if (llt.info() != Eigen::Success) {
        // step walked into a badly conditioned region; shrink and retry
        for (auto& t : theta) t *= 0.9;
        continue;
      }
      const Eigen::VectorXd alpha = llt.solve(y_);
      double logdet = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        logdet += std::log(llt.matrixL()(i, i));
      ml = -0.5 * y_.dot(alpha) - logdet -
           0.5 * static_cast<double>(n) * std::log(2.0 * kPi);

      // G = alpha alpha^T - K^-1
      Eigen::MatrixXd kinv = llt.solve(
          Eigen::MatrixXd::Identity(n, n));
      Eigen::MatrixXd g_mat = alpha * alpha.transpose() - kinv;

      // gradient entries accumulated pairwise over the symmetric kernel
      std::vector<double> grad(p, 0.0);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
          const double w = (i == j) ? 0.5 : 1.0;  // symmetric double count
          double q = 0.0;
          for (std::size_t d = 0; d < dim_; ++d) {
            const double delta = (x_(i, static_cast<Eigen::Index>(d)) -
                                  x_(j, static_cast<Eigen::Index>(d))) /
                                 ls_[d];
            q += delta * delta;
          }
          const double u = kSqrt5 * std::sqrt(q);
          const double eu = std::exp(-u);
          const double kf = sf2_ * (1.0 + u + u * u / 3.0) * eu;
          const double gij = g_mat(i, j);
          // length scales
          for (std::size_t d = 0; d < dim_; ++d) {
            const double delta = x_(i, static_cast<Eigen::Index>(d)) -
                                 x_(j, static_cast<Eigen::Index>(d));
            const double dk = (5.0 / 3.0) * sf2_ * eu * (1.0 + u) *
                              (delta * delta) / (ls_[d] * ls_[d]);
            grad[d] += 2.0 * w * gij * dk;
          }
          grad[dim_] += 2.0 * w * gij * (2.0 * kf);
          if (i == j) grad[dim_ + 1] += gij * (2.0 * sn2_);
        }
      }
      for (auto& gv : grad) gv *= 0.5;  // d logML = 1/2 tr(G dK)

      for (std::size_t d = 0; d < p; ++d) {
        m[d] = b1 * m[d] + (1 - b1) * grad[d];
        v[d] = b2 * v[d] + (1 - b2) * grad[d] * grad[d];
        const double mh = m[d] / (1 - std::pow(b1, it));
        const double vh = v[d] / (1 - std::pow(b2, it));
        theta[d] += cfg.learning_rate * mh / (std::sqrt(vh) + eps);
      }
      // keep hyperparameters in a sane box
      for (std::size_t d = 0; d < dim_; ++d)
        theta[d] = std::clamp(theta[d], std::log(0.01), std::log(10.0));
      theta[dim_] = std::clamp(theta[dim_], std::log(1e-3), std::log(30.0));
      theta[dim_ + 1] =
          std::clamp(theta[dim_ + 1], std::log(1e-4), std::log(10.0));
    }
    apply_theta(theta);
    return ml;
  }

  std::size_t dim_ = 0;
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd alpha_;
  std::vector<double> ls_;
  double sf2_ = 1.0;
  double sn2_ = 0.01;
  double y_mean_ = 0.0;
  double y_std_ = 1.0;
  double log_ml_ = 0.0;
};

// Expected improvement for minimization, under a Gaussian posterior.
inline double expected_improvement(double mean, double var, double best) {
  const double sigma = std::sqrt(std::max(var, 0.0));
  const double delta = best - mean;
  if (sigma < 1e-14) return std::max(delta, 0.0);
  const double z = delta / sigma;
  const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
  const double pdf =
      std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi);
  return delta * cdf + sigma * pdf;
}

}  // namespace smipred
