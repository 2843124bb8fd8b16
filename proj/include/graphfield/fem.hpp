#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <cstdint>
#include <memory>

#include "graphfield/mesh.hpp"
#include "graphfield/rng.hpp"

namespace graphfield {

// Whittle-Matern hyperparameters in the interpretable (range, variance)
// form; kappa and tau2 follow rho = 2/kappa, sigma2 = 1/(2 kappa tau2).
struct HyperParams {
  double rho = 1.0;
  double sigma2 = 1.0;
  double kappa() const { return 2.0 / rho; }
  double tau2() const { return 1.0 / (2.0 * kappa() * sigma2); }
};

// Symmetric sparse matrix; only the lower triangle is stored.
class SparseSym {
 public:
  SparseSym() = default;
  explicit SparseSym(Eigen::SparseMatrix<double> lower) : lower_(std::move(lower)) {}
  int dim() const { return static_cast<int>(lower_.rows()); }
  const Eigen::SparseMatrix<double>& lower() const { return lower_; }
  Eigen::SparseMatrix<double> full() const;
  double coeff(int i, int j) const;

 private:
  Eigen::SparseMatrix<double> lower_;
};

// C_ij = <phi_i, phi_j>: each interval of width h adds h/3 to both endpoint
// diagonals and h/6 to the off-diagonal pair.
SparseSym assemble_mass(const Mesh& mesh);

// G_ij = <phi_i', phi_j'>: each interval of width h adds 1/h and -1/h.
SparseSym assemble_stiffness(const Mesh& mesh);

// Q = tau2 (kappa^2 C + G) for the alpha = 1 field.
SparseSym precision(const Mesh& mesh, const HyperParams& theta);

// Sparse Cholesky P Q P^T = L L^T with AMD fill-reducing ordering.
class CholeskyFactor {
 public:
  explicit CholeskyFactor(const SparseSym& Q);  // throws NotPositiveDefinite
  int dim() const { return dim_; }
  double log_det() const;
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  // One w ~ N(0, Q^-1) per column, reproducible from rng state.
  Eigen::MatrixXd sample(int n_samples, Rng& rng) const;
  Eigen::VectorXd marginal_variances() const;  // diag(Q^-1) via columnwise solves

 private:
  int dim_ = 0;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower> llt_;
};

CholeskyFactor factorize(const SparseSym& Q);

Eigen::MatrixXd sample_field(const CholeskyFactor& factor, int n_samples,
                             std::uint64_t seed);

Eigen::VectorXd marginal_variances(const CholeskyFactor& factor);

}  // namespace graphfield
