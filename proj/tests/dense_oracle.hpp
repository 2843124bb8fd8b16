#pragma once

// Dense reference implementations used only by tests. They follow the plain
// textbook formulas (dense inverses, direct quadrature) and never call into
// the sparse/block solving paths they are checking.

#include <Eigen/Dense>
#include <cmath>

#include "graphfield/inference.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// log N(y; 0, A P0^-1 A^T + D) by dense factorization of the n x n
// marginal covariance.
inline double dense_gaussian_marginal(const graphfield::JointSystem& js) {
  const MatrixXd P0 = MatrixXd(js.prior_precision);
  const MatrixXd A = MatrixXd(js.design);
  MatrixXd S = A * P0.inverse() * A.transpose();
  S.diagonal() += js.noise_var;
  const Eigen::LLT<MatrixXd> llt(S);
  const VectorXd alpha = llt.solve(js.y);
  const int n = static_cast<int>(js.y.size());
  double logdet = 0.0;
  for (int i = 0; i < n; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * n * std::log(2.0 * M_PI) - 0.5 * logdet - 0.5 * js.y.dot(alpha);
}

// Same hyperparameter prior as the fitted model, written out directly.
inline double hyper_log_prior(const graphfield::PriorSpec& prior,
                              const Eigen::Vector4d& h) {
  const Eigen::Vector2d d = h.head<2>() - prior.mu_theta;
  const double det = prior.sigma_theta(0, 0) * prior.sigma_theta(1, 1) -
                     prior.sigma_theta(0, 1) * prior.sigma_theta(1, 0);
  Eigen::Matrix2d inv;
  inv << prior.sigma_theta(1, 1), -prior.sigma_theta(0, 1),
      -prior.sigma_theta(1, 0), prior.sigma_theta(0, 0);
  inv /= det;
  double lp = -std::log(2.0 * M_PI) - 0.5 * std::log(det) - 0.5 * d.dot(inv * d);
  for (int j = 2; j < 4; ++j) {
    lp += prior.alpha_sigma * std::log(prior.beta_sigma) -
          std::lgamma(prior.alpha_sigma) + prior.alpha_sigma * h[j] -
          prior.beta_sigma * std::exp(h[j]);
  }
  return lp;
}

struct DenseConditional {
  VectorXd mean;
  MatrixXd cov;
};

// Latent conditional (w_1..w_R, beta) given y at fixed hyperparameters.
inline DenseConditional dense_conditional(const graphfield::JointSystem& js) {
  const MatrixXd P0 = MatrixXd(js.prior_precision);
  const MatrixXd A = MatrixXd(js.design);
  const MatrixXd Dinv = js.noise_var.cwiseInverse().asDiagonal();
  const MatrixXd P = P0 + A.transpose() * Dinv * A;
  DenseConditional out;
  out.cov = P.inverse();
  out.mean = out.cov * (A.transpose() * (Dinv * js.y));
  return out;
}

// CRPS of N(mean, sd^2) at truth by direct quadrature of
// integral (F(x) - 1{x >= truth})^2 dx on a wide symmetric range.
inline double crps_by_quadrature(double mean, double sd, double truth) {
  const double lo = std::min(mean - 12.0 * sd, truth - 12.0 * sd);
  const double hi = std::max(mean + 12.0 * sd, truth + 12.0 * sd);
  const int n = 400000;
  const double step = (hi - lo) / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * step;
    const double F = 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0)));
    const double H = x >= truth ? 1.0 : 0.0;
    const double g = (F - H) * (F - H);
    acc += (i == 0 || i == n) ? 0.5 * g : g;
  }
  return acc * step;
}

// <phi_i, phi_j> and <phi_i', phi_j'> on one mesh interval of width h by
// midpoint-rule quadrature of the explicit hat functions.
inline double hat_product_integral(double h, bool same_node, bool derivative) {
  const int n = 200000;
  const double step = h / n;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = (i + 0.5) * step;
    double a, b;
    if (derivative) {
      a = -1.0 / h;
      b = same_node ? -1.0 / h : 1.0 / h;
    } else {
      a = 1.0 - t / h;
      b = same_node ? (1.0 - t / h) : t / h;
    }
    acc += a * b * step;
  }
  return acc;
}

}  // namespace oracle
