#include "graphfield/fem.hpp"

#include <cmath>
#include <vector>

#include "graphfield/errors.hpp"

namespace graphfield {

Eigen::SparseMatrix<double> SparseSym::full() const {
  Eigen::SparseMatrix<double> up = lower_.transpose();
  Eigen::SparseMatrix<double> diag(lower_.rows(), lower_.cols());
  std::vector<Eigen::Triplet<double>> trips;
  for (int k = 0; k < lower_.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(lower_, k); it; ++it) {
      if (it.row() == it.col()) trips.emplace_back(it.row(), it.col(), it.value());
    }
  }
  diag.setFromTriplets(trips.begin(), trips.end());
  return Eigen::SparseMatrix<double>(lower_ + up - diag);
}

double SparseSym::coeff(int i, int j) const {
  return i >= j ? lower_.coeff(i, j) : lower_.coeff(j, i);
}

namespace {

SparseSym assemble(const Mesh& mesh, bool stiffness) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(3 * mesh.num_intervals());
  for (const MeshInterval& mi : mesh.intervals()) {
    const double diag = stiffness ? 1.0 / mi.width : mi.width / 3.0;
    const double off = stiffness ? -1.0 / mi.width : mi.width / 6.0;
    const int lo = std::min(mi.left, mi.right);
    const int hi = std::max(mi.left, mi.right);
    trips.emplace_back(mi.left, mi.left, diag);
    trips.emplace_back(mi.right, mi.right, diag);
    trips.emplace_back(hi, lo, off);
  }
  Eigen::SparseMatrix<double> lower(mesh.num_vertices(), mesh.num_vertices());
  lower.setFromTriplets(trips.begin(), trips.end());
  return SparseSym(std::move(lower));
}

}  // namespace

SparseSym assemble_mass(const Mesh& mesh) { return assemble(mesh, false); }

SparseSym assemble_stiffness(const Mesh& mesh) { return assemble(mesh, true); }

SparseSym precision(const Mesh& mesh, const HyperParams& theta) {
  if (!(theta.rho > 0.0) || !(theta.sigma2 > 0.0))
    throw Error("precision: rho and sigma2 must be > 0");
  const double k2 = theta.kappa() * theta.kappa();
  const double t2 = theta.tau2();
  Eigen::SparseMatrix<double> lower =
      t2 * (k2 * assemble_mass(mesh).lower() + assemble_stiffness(mesh).lower());
  return SparseSym(std::move(lower));
}

CholeskyFactor::CholeskyFactor(const SparseSym& Q) : dim_(Q.dim()) {
  llt_.compute(Q.lower());
  if (llt_.info() != Eigen::Success)
    throw NotPositiveDefinite("sparse Cholesky factorization failed");
}

double CholeskyFactor::log_det() const {
  const Eigen::SparseMatrix<double> L = llt_.matrixL();
  double s = 0.0;
  for (int k = 0; k < L.rows(); ++k) s += std::log(L.coeff(k, k));
  return 2.0 * s;
}

Eigen::VectorXd CholeskyFactor::solve(const Eigen::VectorXd& b) const {
  if (b.size() != dim_) throw DimensionMismatch("solve: rhs size mismatch");
  return llt_.solve(b);
}

Eigen::MatrixXd CholeskyFactor::sample(int n_samples, Rng& rng) const {
  Eigen::MatrixXd out(dim_, n_samples);
  const Eigen::SparseMatrix<double> L = llt_.matrixL();
  Eigen::VectorXd z(dim_);
  for (int j = 0; j < n_samples; ++j) {
    for (int i = 0; i < dim_; ++i) z[i] = rng.normal();
    // w = P^-1 L^-T z has covariance Q^-1 since P Q P^T = L L^T
    Eigen::VectorXd y = L.transpose().triangularView<Eigen::Upper>().solve(z);
    out.col(j) = llt_.permutationPinv() * y;
  }
  return out;
}

Eigen::VectorXd CholeskyFactor::marginal_variances() const {
  const Eigen::SparseMatrix<double> L = llt_.matrixL();
  const auto& perm = llt_.permutationP();
  Eigen::VectorXd out(dim_);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(dim_);
  for (int k = 0; k < dim_; ++k) {
    e.setZero();
    e[k] = 1.0;
    Eigen::VectorXd pe = perm * e;
    Eigen::VectorXd v = L.triangularView<Eigen::Lower>().solve(pe);
    out[k] = v.squaredNorm();
  }
  return out;
}

CholeskyFactor factorize(const SparseSym& Q) { return CholeskyFactor(Q); }

Eigen::MatrixXd sample_field(const CholeskyFactor& factor, int n_samples,
                             std::uint64_t seed) {
  Rng rng(seed);
  return factor.sample(n_samples, rng);
}

Eigen::VectorXd marginal_variances(const CholeskyFactor& factor) {
  return factor.marginal_variances();
}

}  // namespace graphfield
