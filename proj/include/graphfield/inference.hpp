#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "graphfield/fem.hpp"
#include "graphfield/observe.hpp"

namespace graphfield {

// IM keeps the line-integral design rows; SM assigns each line observation
// to the path midpoint with the length-averaged covariate.
enum class Support { IM, SM };

struct PriorSpec {
  double fixed_effect_variance = 1e3;  // V
  double alpha_sigma = 1.0;            // Gamma shape on noise precisions
  double beta_sigma = 5e-5;            // Gamma rate
  Eigen::Vector2d mu_theta{0.0, std::log(0.700)};  // prior mean of (log s2, log rho)
  Eigen::Matrix2d sigma_theta = Eigen::Matrix2d{{10.0, 0.0}, {0.0, 10.0}};
};

struct OptimizerOptions {
  int max_outer = 200;
  double grad_tol = 1e-5;   // sup norm of the gradient
  double step_tol = 1e-7;   // sup norm of the step
  double fd_step = 1e-4;    // central-difference step per coordinate
  bool multistart = true;   // prior mean plus +-1 log-unit starts
  int max_taylor = 20;      // log link linearization sweeps
  double taylor_tol = 1e-4; // relative latent-mode change, sd-scaled sup norm
  int max_halvings = 5;     // step damping on oscillation
  // Reported eta marginals mix the Gaussian conditionals over an unscented
  // set of the hyperparameter Laplace posterior; predict() is always the
  // plain conditional at the mode.
  bool hyper_mixture = true;
  std::vector<double> hyper_init;  // optional fixed start (4 log-scale values)
};

struct ModelSpec {
  const Mesh* mesh = nullptr;
  CovariateField covariate;  // length K
  Link link = Link::Identity;
  Support support = Support::IM;
  LineScale scale = LineScale::InverseSq;
  // -1 derives from the link (identity: raw integrals, log: length-averaged).
  int averaged_lines = -1;
  PriorSpec prior;
  OptimizerOptions opt;

  bool averaged() const {
    return averaged_lines < 0 ? (link == Link::Log) : averaged_lines != 0;
  }
};

struct Dataset {
  std::vector<PointObs> points;
  std::vector<LineObs> lines;
  int num_replicates() const;
};

// Gaussian conditional of (w_1..w_R, beta0, beta1) at fixed hyperparameters.
// Solved by block elimination: one sparse Cholesky per replicate block plus a
// 2x2 Schur complement for the fixed effects.
class LatentPosterior {
 public:
  int K() const { return K_; }
  int R() const { return R_; }
  int dim() const { return K_ * R_ + 2; }
  const Eigen::VectorXd& mean() const { return mean_; }  // blocks w_1..w_R, beta
  Eigen::Vector2d mean_beta() const { return mean_.segment<2>(K_ * R_); }
  const Mesh& mesh() const;
  const CovariateField& covariate() const;

  // Mean and variance of sum_i val_i w_r[idx_i] + c0 beta0 + c1 beta1.
  double row_mean(int r, const std::vector<int>& idx,
                  const std::vector<double>& val, double c0, double c1) const;
  double row_variance(int r, const std::vector<int>& idx,
                      const std::vector<double>& val, double c0, double c1) const;

  // Conditional moments of eta_r = beta0 + x beta1 + w_r at all mesh
  // vertices; exploits identical blocks when replicates share a design.
  void eta_conditional(const CovariateField& x,
                       std::vector<Eigen::VectorXd>& means,
                       std::vector<Eigen::VectorXd>& vars) const;

  Eigen::VectorXd marginal_sd() const;       // all K*R+2 coordinates
  Eigen::VectorXd sample_z(Rng& rng) const;  // one joint draw

  // Materialized posterior precision (for verification against the
  // independently assembled prior precision + A^T D^-1 A).
  Eigen::SparseMatrix<double> precision_matrix() const;

  struct Impl;
  explicit LatentPosterior(std::shared_ptr<const Impl> impl);

 private:
  std::shared_ptr<const Impl> impl_;
  int K_ = 0;
  int R_ = 0;
  Eigen::VectorXd mean_;
};

struct FitResult {
  // Mode of (log sigma2, log rho, log 1/sigma2_P, log 1/sigma2_L).
  Eigen::Vector4d hyper_mode = Eigen::Vector4d::Zero();
  Eigen::Matrix4d hyper_cov = Eigen::Matrix4d::Zero();
  std::vector<Eigen::VectorXd> eta_mean;  // per replicate, at mesh vertices
  std::vector<Eigen::VectorXd> eta_sd;
  Eigen::Vector2d fixed_mean = Eigen::Vector2d::Zero();
  Eigen::Vector2d fixed_sd = Eigen::Vector2d::Zero();
  int iterations = 0;
  int taylor_iterations = 0;
  double final_step_norm = 0.0;
  bool converged = false;
  std::shared_ptr<const LatentPosterior> posterior;
  // Linearization point of the final working model (log link only).
  Eigen::VectorXd linearization_point;

  double sigma2_hat() const { return std::exp(hyper_mode[0]); }
  double rho_hat() const { return std::exp(hyper_mode[1]); }
  double sigma2_point_hat() const { return std::exp(-hyper_mode[2]); }
  double sigma2_line_hat() const { return std::exp(-hyper_mode[3]); }
};

// log p(y | hyper) + log prior(hyper) for the linear-Gaussian model, by
// Gaussian marginalization over (w_1..w_R, beta0, beta1).
double log_marginal(const ModelSpec& spec, const Dataset& data,
                    const Eigen::Vector4d& hyper);

// Maximizes log_marginal over the four log-hyperparameters (BFGS with
// central-difference gradients) and conditions the latent field at the mode.
FitResult fit_linear(const ModelSpec& spec, const Dataset& data);

// Iterated first-order linearization of g = exp around the latent mode; each
// sweep refits the working linear model.
FitResult fit_nonlinear(const ModelSpec& spec, const Dataset& data);

// Rebuilds the latent conditional (and reported marginals) at a fixed
// hyperparameter value, without optimizing. For the log link a linearization
// point must be supplied (e.g. from a stored fit).
FitResult condition_at(const ModelSpec& spec, const Dataset& data,
                       const Eigen::Vector4d& hyper,
                       const Eigen::VectorXd& linearization_point = {});

struct Prediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
};

// Marginal posterior of eta_r, with the fixed-effect contribution propagated
// through the full joint conditional. Empty locs means all mesh vertices.
std::vector<Prediction> predict(const FitResult& fit,
                                const std::vector<GraphLocation>& locs = {});

// B joint draws of eta at the mesh vertices; each matrix is K x R.
std::vector<Eigen::MatrixXd> posterior_sample(const FitResult& fit, int B,
                                              std::uint64_t seed);

struct EstimandSummary {
  Eigen::VectorXd median;
  Eigen::VectorXd lo95;
  Eigen::VectorXd hi95;
};

// Per-vertex lognormal summary of v = (1/R) sum_r exp(-eta_r) across samples.
EstimandSummary average_speed_estimand(const std::vector<Eigen::MatrixXd>& eta_samples);

// Full joint system for a given hyperparameter value, assembled directly
// (used to verify the block-eliminated path and by the dense tests).
struct JointSystem {
  Eigen::SparseMatrix<double> prior_precision;  // blockdiag(Q x R, V^-1 I2)
  Eigen::SparseMatrix<double> design;           // stacked A, n x (K R + 2)
  Eigen::VectorXd noise_var;                    // diag of D
  Eigen::VectorXd y;
};
JointSystem assemble_joint(const ModelSpec& spec, const Dataset& data,
                           const Eigen::Vector4d& hyper);

}  // namespace graphfield
