#include "graphfield/inference.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "graphfield/errors.hpp"

namespace graphfield {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Solver = Eigen::SimplicialLDLT<SpMat, Eigen::Lower>;
using Eigen::Matrix2d;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::Vector4d;
using Eigen::VectorXd;

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kReject = -1e100;

// Cross-replicate reductions are summed in ascending value order so that the
// result is invariant under relabeling of replicates.
double sorted_sum(std::vector<double> parts) {
  std::sort(parts.begin(), parts.end());
  return std::accumulate(parts.begin(), parts.end(), 0.0);
}

Vector2d sorted_sum2(const std::vector<Vector2d>& parts) {
  Vector2d out;
  for (int i = 0; i < 2; ++i) {
    std::vector<double> v(parts.size());
    for (std::size_t r = 0; r < parts.size(); ++r) v[r] = parts[r][i];
    out[i] = sorted_sum(std::move(v));
  }
  return out;
}

Matrix2d sorted_sum22(const std::vector<Matrix2d>& parts) {
  Matrix2d out;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      std::vector<double> v(parts.size());
      for (std::size_t r = 0; r < parts.size(); ++r) v[r] = parts[r](i, j);
      out(i, j) = sorted_sum(std::move(v));
    }
  }
  return out;
}

// One quadrature node of an observation functional.
struct QuadPoint {
  BasisEvaluation basis;
  double weight = 1.0;  // length-averaged already when the spec says so
  double x = 0.0;       // covariate value at the node
};

// Observation as a functional of the latent field: points and SM rows carry
// a single node, IM line rows carry the Simpson scheme of their path.
struct ObsTerm {
  std::vector<QuadPoint> quads;
  double y = 0.0;
  double h = 1.0;  // noise factor: Var = h * (sigma_P^2 or sigma_L^2)
  bool line = false;
};

// Linear(ized) observation row over (w_r, beta0, beta1).
struct LinearRow {
  std::vector<int> idx;
  std::vector<double> val;
  double c0 = 0.0, c1 = 0.0;
  double y = 0.0;
  double h = 1.0;
  bool line = false;
};

double covariate_at(const CovariateField& x, const BasisEvaluation& b) {
  double v = 0.0;
  for (int i = 0; i < b.count; ++i) v += b.weight[i] * x[b.index[i]];
  return v;
}

// Terms grouped by replicate; within a replicate points precede lines, both
// in input order.
std::vector<std::vector<ObsTerm>> build_terms(const ModelSpec& spec,
                                              const Dataset& data) {
  const Mesh& mesh = *spec.mesh;
  if (spec.covariate.size() != mesh.num_vertices())
    throw DimensionMismatch("ModelSpec covariate length != K");
  const int R = data.num_replicates();
  std::vector<std::vector<ObsTerm>> terms(R);
  const bool averaged = spec.averaged();
  NoiseModel scale_only;
  scale_only.scale = spec.scale;

  for (const PointObs& p : data.points) {
    ObsTerm t;
    QuadPoint q;
    q.basis = mesh.basis(p.location);
    q.weight = 1.0;
    q.x = covariate_at(spec.covariate, q.basis);
    t.quads.push_back(q);
    t.y = p.value;
    t.h = 1.0;
    t.line = false;
    terms[p.replicate].push_back(std::move(t));
  }
  for (const LineObs& l : data.lines) {
    ObsTerm t;
    t.line = true;
    t.h = scale_only.line_factor(l.path.length());
    if (spec.support == Support::IM) {
      const IntegrationScheme s = simpson_scheme(mesh, l.path);
      const double wscale = averaged ? 1.0 / l.path.length() : 1.0;
      for (std::size_t q = 0; q < s.points.size(); ++q) {
        QuadPoint qp;
        qp.basis = mesh.basis(s.points[q]);
        qp.weight = wscale * s.weights[q];
        qp.x = covariate_at(spec.covariate, qp.basis);
        t.quads.push_back(qp);
      }
      t.y = l.value;
    } else {
      // SM: length-averaged value observed at the path midpoint with the
      // averaged covariate; raw pipelines divide the value by |L| first.
      QuadPoint q;
      q.basis = mesh.basis(midpoint(mesh.graph(), l.path));
      q.weight = 1.0;
      q.x = average_covariate(mesh, spec.covariate, l.path);
      t.quads.push_back(q);
      t.y = averaged ? l.value : l.value / l.path.length();
    }
    terms[l.replicate].push_back(std::move(t));
  }
  return terms;
}

void accumulate_row(std::vector<std::pair<int, double>>& buf, LinearRow& row) {
  std::sort(buf.begin(), buf.end());
  row.idx.clear();
  row.val.clear();
  for (const auto& [i, v] : buf) {
    if (!row.idx.empty() && row.idx.back() == i) {
      row.val.back() += v;
    } else {
      row.idx.push_back(i);
      row.val.push_back(v);
    }
  }
}

LinearRow linearize_identity(const ObsTerm& t) {
  LinearRow row;
  row.y = t.y;
  row.h = t.h;
  row.line = t.line;
  std::vector<std::pair<int, double>> buf;
  for (const QuadPoint& q : t.quads) {
    for (int i = 0; i < q.basis.count; ++i)
      buf.emplace_back(q.basis.index[i], q.weight * q.basis.weight[i]);
    row.c0 += q.weight;
    row.c1 += q.weight * q.x;
  }
  accumulate_row(buf, row);
  return row;
}

// First-order expansion of F(z) = sum_q w_q exp(eta_q) around z0: working
// design J = sum_q w_q exp(eta_q) a_q and response y - F(z0) + J z0.
LinearRow linearize_log(const ObsTerm& t, int r, int K, const VectorXd& z0) {
  const int N = static_cast<int>(z0.size());
  const double beta0 = z0[N - 2];
  const double beta1 = z0[N - 1];
  LinearRow row;
  row.h = t.h;
  row.line = t.line;
  double F = 0.0, Jz0 = 0.0;
  std::vector<std::pair<int, double>> buf;
  for (const QuadPoint& q : t.quads) {
    double eta = beta0 + beta1 * q.x;
    for (int i = 0; i < q.basis.count; ++i)
      eta += q.basis.weight[i] * z0[r * K + q.basis.index[i]];
    const double m = q.weight * std::exp(eta);
    F += m;
    Jz0 += m * eta;
    for (int i = 0; i < q.basis.count; ++i)
      buf.emplace_back(q.basis.index[i], m * q.basis.weight[i]);
    row.c0 += m;
    row.c1 += m * q.x;
  }
  row.y = t.y - F + Jz0;
  accumulate_row(buf, row);
  return row;
}

bool same_design(const std::vector<LinearRow>& a, const std::vector<LinearRow>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].idx != b[i].idx || a[i].val != b[i].val || a[i].c0 != b[i].c0 ||
        a[i].c1 != b[i].c1 || a[i].h != b[i].h || a[i].line != b[i].line)
      return false;
  }
  return true;
}

// y-independent pieces of one replicate block, split by noise stream so the
// per-evaluation combination is linear in the two noise precisions.
struct DesignPieces {
  SpMat Mp, Ml;              // K x K lower: sum a a^T (points), sum a a^T / h (lines)
  MatrixXd BP, BL;           // K x 2
  Matrix2d PbbP = Matrix2d::Zero(), PbbL = Matrix2d::Zero();
  int nP = 0, nL = 0;
  double sum_log_h = 0.0;
};

struct YPieces {
  VectorXd bwP, bwL;
  Vector2d bbP = Vector2d::Zero(), bbL = Vector2d::Zero();
  double yyP = 0.0, yyL = 0.0;
};

DesignPieces make_design_pieces(const std::vector<LinearRow>& rows, int K) {
  DesignPieces d;
  d.BP = MatrixXd::Zero(K, 2);
  d.BL = MatrixXd::Zero(K, 2);
  std::vector<Eigen::Triplet<double>> tp, tl;
  for (const LinearRow& row : rows) {
    const double inv_h = row.line ? 1.0 / row.h : 1.0;
    auto& trips = row.line ? tl : tp;
    auto& B = row.line ? d.BL : d.BP;
    auto& Pbb = row.line ? d.PbbL : d.PbbP;
    for (std::size_t a = 0; a < row.idx.size(); ++a) {
      for (std::size_t b = 0; b <= a; ++b) {
        trips.emplace_back(row.idx[a], row.idx[b],
                           inv_h * row.val[a] * row.val[b]);
      }
      B(row.idx[a], 0) += inv_h * row.val[a] * row.c0;
      B(row.idx[a], 1) += inv_h * row.val[a] * row.c1;
    }
    Pbb(0, 0) += inv_h * row.c0 * row.c0;
    Pbb(0, 1) += inv_h * row.c0 * row.c1;
    Pbb(1, 0) += inv_h * row.c1 * row.c0;
    Pbb(1, 1) += inv_h * row.c1 * row.c1;
    if (row.line) {
      ++d.nL;
      d.sum_log_h += std::log(row.h);
    } else {
      ++d.nP;
    }
  }
  d.Mp.resize(K, K);
  d.Ml.resize(K, K);
  d.Mp.setFromTriplets(tp.begin(), tp.end());
  d.Ml.setFromTriplets(tl.begin(), tl.end());
  return d;
}

YPieces make_y_pieces(const std::vector<LinearRow>& rows, int K) {
  YPieces y;
  y.bwP = VectorXd::Zero(K);
  y.bwL = VectorXd::Zero(K);
  for (const LinearRow& row : rows) {
    const double inv_h = row.line ? 1.0 / row.h : 1.0;
    auto& bw = row.line ? y.bwL : y.bwP;
    auto& bb = row.line ? y.bbL : y.bbP;
    auto& yy = row.line ? y.yyL : y.yyP;
    for (std::size_t a = 0; a < row.idx.size(); ++a)
      bw[row.idx[a]] += inv_h * row.val[a] * row.y;
    bb[0] += inv_h * row.c0 * row.y;
    bb[1] += inv_h * row.c1 * row.y;
    yy += inv_h * row.y * row.y;
  }
  return y;
}

struct HyperValues {
  double sigma2, rho, lamP, lamL, kappa, tau2;
};

HyperValues decode(const Vector4d& h) {
  HyperValues v;
  v.sigma2 = std::exp(h[0]);
  v.rho = std::exp(h[1]);
  v.lamP = std::exp(h[2]);
  v.lamL = std::exp(h[3]);
  v.kappa = 2.0 / v.rho;
  v.tau2 = 1.0 / (2.0 * v.kappa * v.sigma2);
  return v;
}

}  // namespace

struct LatentPosterior::Impl {
  int K = 0, R = 0;
  bool shared = false;
  const Mesh* mesh = nullptr;
  CovariateField covariate;
  // per block (one entry when shared)
  std::vector<std::shared_ptr<Solver>> solver;
  std::vector<SpMat> Pw;       // lower
  std::vector<MatrixXd> B;     // K x 2
  std::vector<MatrixXd> U;     // K x 2 = Pw^-1 B
  std::vector<SpMat> Lt;       // transposed unit-lower LDLT factor
  std::vector<VectorXd> Dfac;  // LDLT diagonal
  std::vector<Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int>> Pinv;
  Matrix2d Pbb = Matrix2d::Zero();  // fixed-effect block incl. prior
  Matrix2d S = Matrix2d::Zero();    // Schur complement
  Matrix2d Sinv = Matrix2d::Zero();
  Matrix2d Sinv_chol = Matrix2d::Zero();  // lower, Sinv = LL^T
  VectorXd mean;

  int block_of(int r) const { return shared ? 0 : r; }
};

LatentPosterior::LatentPosterior(std::shared_ptr<const Impl> impl)
    : impl_(std::move(impl)), K_(impl_->K), R_(impl_->R), mean_(impl_->mean) {}

const Mesh& LatentPosterior::mesh() const { return *impl_->mesh; }

const CovariateField& LatentPosterior::covariate() const {
  return impl_->covariate;
}

double LatentPosterior::row_mean(int r, const std::vector<int>& idx,
                                 const std::vector<double>& val, double c0,
                                 double c1) const {
  double m = c0 * mean_[K_ * R_] + c1 * mean_[K_ * R_ + 1];
  for (std::size_t i = 0; i < idx.size(); ++i)
    m += val[i] * mean_[r * K_ + idx[i]];
  return m;
}

double LatentPosterior::row_variance(int r, const std::vector<int>& idx,
                                     const std::vector<double>& val, double c0,
                                     double c1) const {
  const Impl& im = *impl_;
  const int b = im.block_of(r);
  VectorXd a = VectorXd::Zero(K_);
  for (std::size_t i = 0; i < idx.size(); ++i) a[idx[i]] = val[i];
  double var = 0.0;
  Vector2d g(-c0, -c1);
  if (!idx.empty()) {
    const VectorXd u = im.solver[b]->solve(a);
    var += a.dot(u);
    g += im.B[b].transpose() * u;
  }
  var += g.dot(im.Sinv * g);
  return var;
}

void LatentPosterior::eta_conditional(const CovariateField& x,
                                      std::vector<Eigen::VectorXd>& means,
                                      std::vector<Eigen::VectorXd>& vars) const {
  const Impl& im = *impl_;
  means.assign(R_, VectorXd(K_));
  vars.assign(R_, VectorXd(K_));
  const Vector2d mb = mean_beta();
  for (int r = 0; r < R_; ++r) {
    for (int k = 0; k < K_; ++k)
      means[r][k] = mean_[r * K_ + k] + mb[0] + x[k] * mb[1];
  }
  const int nblocks = im.shared ? 1 : R_;
  VectorXd e = VectorXd::Zero(K_);
  for (int b = 0; b < nblocks; ++b) {
    for (int k = 0; k < K_; ++k) {
      e.setZero();
      e[k] = 1.0;
      const VectorXd u = im.solver[b]->solve(e);
      const Vector2d g = im.B[b].transpose() * u - Vector2d(1.0, x[k]);
      const double v = u[k] + g.dot(im.Sinv * g);
      if (im.shared) {
        for (int r = 0; r < R_; ++r) vars[r][k] = v;
      } else {
        vars[b][k] = v;
      }
    }
  }
}

Eigen::VectorXd LatentPosterior::marginal_sd() const {
  const Impl& im = *impl_;
  VectorXd sd(dim());
  VectorXd e = VectorXd::Zero(K_);
  for (int r = 0; r < R_; ++r) {
    const int b = im.block_of(r);
    for (int k = 0; k < K_; ++k) {
      e.setZero();
      e[k] = 1.0;
      const VectorXd u = im.solver[b]->solve(e);
      const Vector2d g = im.B[b].transpose() * u;
      sd[r * K_ + k] = std::sqrt(u[k] + g.dot(im.Sinv * g));
    }
  }
  sd[K_ * R_] = std::sqrt(im.Sinv(0, 0));
  sd[K_ * R_ + 1] = std::sqrt(im.Sinv(1, 1));
  return sd;
}

Eigen::VectorXd LatentPosterior::sample_z(Rng& rng) const {
  const Impl& im = *impl_;
  VectorXd z(dim());
  const Vector2d zb(rng.normal(), rng.normal());
  const Vector2d beta = mean_.segment<2>(K_ * R_) + im.Sinv_chol * zb;
  const Vector2d dbeta = beta - mean_.segment<2>(K_ * R_);
  VectorXd noise(K_);
  for (int r = 0; r < R_; ++r) {
    const int b = im.block_of(r);
    for (int k = 0; k < K_; ++k) noise[k] = rng.normal();
    // N(0, Pw^-1) draw through the LDLT factor
    VectorXd y = noise.cwiseQuotient(im.Dfac[b].cwiseSqrt());
    y = im.Lt[b].triangularView<Eigen::UnitUpper>().solve(y);
    const VectorXd w = im.Pinv[b] * y;
    z.segment(r * K_, K_) =
        mean_.segment(r * K_, K_) - im.U[b] * dbeta + w;
  }
  z.segment<2>(K_ * R_) = beta;
  return z;
}

Eigen::SparseMatrix<double> LatentPosterior::precision_matrix() const {
  const Impl& im = *impl_;
  const int N = dim();
  std::vector<Eigen::Triplet<double>> trips;
  for (int r = 0; r < R_; ++r) {
    const int b = im.block_of(r);
    for (int k = 0; k < im.Pw[b].outerSize(); ++k) {
      for (SpMat::InnerIterator it(im.Pw[b], k); it; ++it) {
        trips.emplace_back(r * K_ + it.row(), r * K_ + it.col(), it.value());
        if (it.row() != it.col())
          trips.emplace_back(r * K_ + it.col(), r * K_ + it.row(), it.value());
      }
    }
    for (int k = 0; k < K_; ++k) {
      for (int j = 0; j < 2; ++j) {
        const double v = im.B[b](k, j);
        if (v != 0.0) {
          trips.emplace_back(r * K_ + k, K_ * R_ + j, v);
          trips.emplace_back(K_ * R_ + j, r * K_ + k, v);
        }
      }
    }
  }
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      trips.emplace_back(K_ * R_ + i, K_ * R_ + j, im.Pbb(i, j));
  SpMat P(N, N);
  P.setFromTriplets(trips.begin(), trips.end());
  return P;
}

int Dataset::num_replicates() const {
  int r = -1;
  for (const PointObs& p : points) r = std::max(r, p.replicate);
  for (const LineObs& l : lines) r = std::max(r, l.replicate);
  return r + 1;
}

namespace {

// Marginal-likelihood engine for one fixed linear(ized) model. Evaluations
// reuse the symbolic factorization; not thread-safe across calls.
class Engine {
 public:
  Engine(const Mesh& mesh, const PriorSpec& prior,
         std::vector<std::vector<LinearRow>> rows)
      : mesh_(&mesh), prior_(prior), rows_(std::move(rows)) {
    K_ = mesh.num_vertices();
    R_ = static_cast<int>(rows_.size());
    Clow_ = assemble_mass(mesh).lower();
    Glow_ = assemble_stiffness(mesh).lower();
    shared_ = R_ > 1;
    for (int r = 1; r < R_ && shared_; ++r)
      shared_ = same_design(rows_[0], rows_[r]);
    const int nblocks = (R_ == 0) ? 0 : (shared_ ? 1 : R_);
    for (int b = 0; b < nblocks; ++b)
      designs_.push_back(make_design_pieces(rows_[b], K_));
    for (int r = 0; r < R_; ++r) {
      ydata_.push_back(make_y_pieces(rows_[r], K_));
      n_ += static_cast<int>(rows_[r].size());
    }
    pw_solver_.resize(nblocks);
  }

  int K() const { return K_; }
  int R() const { return R_; }

  double log_posterior(const Vector4d& hyper) {
    for (int i = 0; i < 4; ++i) {
      if (!std::isfinite(hyper[i]) || std::abs(hyper[i]) > 46.0) return kReject;
    }
    const double lp = log_prior(hyper);
    if (R_ == 0) return lp;
    Parts p;
    if (!compute_parts(hyper, p, nullptr)) return kReject;
    return p.lml + lp;
  }

  LatentPosterior posterior(const Vector4d& hyper, const CovariateField& x) {
    Parts p;
    auto impl = std::make_shared<LatentPosterior::Impl>();
    if (!compute_parts(hyper, p, impl.get()))
      throw NotPositiveDefinite("posterior precision is not positive definite");
    impl->mesh = mesh_;
    impl->covariate = x;
    return LatentPosterior(std::shared_ptr<const LatentPosterior::Impl>(impl));
  }

  double log_prior(const Vector4d& h) const {
    const Vector2d d = h.head<2>() - prior_.mu_theta;
    const Matrix2d& St = prior_.sigma_theta;
    const double det = St(0, 0) * St(1, 1) - St(0, 1) * St(1, 0);
    const Matrix2d Sinv =
        (Matrix2d() << St(1, 1), -St(0, 1), -St(1, 0), St(0, 0)).finished() / det;
    double lp = -kLog2Pi - 0.5 * std::log(det) - 0.5 * d.dot(Sinv * d);
    // Gamma(alpha, beta) on the noise precisions, with the log-scale Jacobian
    const double a = prior_.alpha_sigma, b = prior_.beta_sigma;
    for (int j = 2; j < 4; ++j)
      lp += a * std::log(b) - std::lgamma(a) + a * h[j] - b * std::exp(h[j]);
    return lp;
  }

 private:
  struct Parts {
    double lml = 0.0;
  };

  bool compute_parts(const Vector4d& hyper, Parts& out,
                     LatentPosterior::Impl* impl) {
    const HyperValues v = decode(hyper);
    const double invV = 1.0 / prior_.fixed_effect_variance;
    SpMat Qlow = v.tau2 * (v.kappa * v.kappa * Clow_ + Glow_).eval();
    if (!q_solver_) {
      q_solver_ = std::make_unique<Solver>();
      q_solver_->analyzePattern(Qlow);
    }
    q_solver_->factorize(Qlow);
    if (q_solver_->info() != Eigen::Success ||
        q_solver_->vectorD().minCoeff() <= 0.0)
      return false;
    const double logdetQ = q_solver_->vectorD().array().log().sum();

    const int nblocks = shared_ ? 1 : R_;
    std::vector<double> ld_parts, t1_parts, yy_parts, logd_parts;
    std::vector<Vector2d> bb_parts, gb_parts;
    std::vector<Matrix2d> pbb_parts, schur_parts;
    std::vector<std::shared_ptr<Solver>> solvers(nblocks);
    std::vector<SpMat> Pws(nblocks);
    std::vector<MatrixXd> Bs(nblocks), Us(nblocks);
    std::vector<double> ld_block(nblocks);

    for (int b = 0; b < nblocks; ++b) {
      const DesignPieces& d = designs_[b];
      SpMat Pw = (Qlow + v.lamP * d.Mp + v.lamL * d.Ml).eval();
      if (!pw_solver_[b]) {
        pw_solver_[b] = std::make_shared<Solver>();
        pw_solver_[b]->analyzePattern(Pw);
      }
      pw_solver_[b]->factorize(Pw);
      if (pw_solver_[b]->info() != Eigen::Success ||
          pw_solver_[b]->vectorD().minCoeff() <= 0.0)
        return false;
      ld_block[b] = pw_solver_[b]->vectorD().array().log().sum();
      Bs[b] = v.lamP * d.BP + v.lamL * d.BL;
      Us[b] = pw_solver_[b]->solve(Bs[b]);
      solvers[b] = pw_solver_[b];
      if (impl) Pws[b] = Pw;
    }

    std::vector<VectorXd> mw(R_);
    for (int r = 0; r < R_; ++r) {
      const int b = shared_ ? 0 : r;
      const DesignPieces& d = designs_[b];
      const YPieces& yp = ydata_[r];
      const VectorXd bw = v.lamP * yp.bwP + v.lamL * yp.bwL;
      mw[r] = pw_solver_[b]->solve(bw);
      ld_parts.push_back(ld_block[b]);
      t1_parts.push_back(bw.dot(mw[r]));
      gb_parts.push_back(Bs[b].transpose() * mw[r]);
      bb_parts.push_back(v.lamP * yp.bbP + v.lamL * yp.bbL);
      yy_parts.push_back(v.lamP * yp.yyP + v.lamL * yp.yyL);
      logd_parts.push_back(d.nP * std::log(1.0 / v.lamP) +
                           d.nL * std::log(1.0 / v.lamL) + d.sum_log_h);
      pbb_parts.push_back(v.lamP * d.PbbP + v.lamL * d.PbbL);
      schur_parts.push_back(Bs[b].transpose() * Us[b]);
    }

    const Matrix2d Pbb =
        invV * Matrix2d::Identity() + sorted_sum22(pbb_parts);
    const Matrix2d S = Pbb - sorted_sum22(schur_parts);
    const double detS = S(0, 0) * S(1, 1) - S(0, 1) * S(1, 0);
    if (!(detS > 0.0) || !(S(0, 0) > 0.0)) return false;
    const double logdetS = std::log(detS);
    const Matrix2d Sinv =
        (Matrix2d() << S(1, 1), -S(0, 1), -S(1, 0), S(0, 0)).finished() / detS;

    const Vector2d bb = sorted_sum2(bb_parts);
    const Vector2d rhs_beta = bb - sorted_sum2(gb_parts);
    const Vector2d mu_beta = Sinv * rhs_beta;

    const double yDy = sorted_sum(yy_parts);
    const double btmu = sorted_sum(t1_parts) + rhs_beta.dot(mu_beta);
    const double sum_logd = sorted_sum(logd_parts);
    const double logdetP = sorted_sum(ld_parts) + logdetS;

    out.lml = -0.5 * n_ * kLog2Pi +
              0.5 * (R_ * logdetQ + 2.0 * std::log(invV)) - 0.5 * sum_logd -
              0.5 * logdetP - 0.5 * (yDy - btmu);

    if (impl) {
      impl->K = K_;
      impl->R = R_;
      impl->shared = shared_;
      impl->solver = solvers;
      impl->Pw = Pws;
      impl->B = Bs;
      impl->U = Us;
      impl->Pbb = Pbb;
      impl->S = S;
      impl->Sinv = Sinv;
      // lower Cholesky of Sinv for beta draws
      Matrix2d L = Matrix2d::Zero();
      L(0, 0) = std::sqrt(Sinv(0, 0));
      L(1, 0) = Sinv(1, 0) / L(0, 0);
      L(1, 1) = std::sqrt(std::max(Sinv(1, 1) - L(1, 0) * L(1, 0), 0.0));
      impl->Sinv_chol = L;
      impl->mean.resize(K_ * R_ + 2);
      for (int r = 0; r < R_; ++r) {
        const int b = shared_ ? 0 : r;
        impl->mean.segment(r * K_, K_) = mw[r] - Us[b] * mu_beta;
      }
      impl->mean.segment<2>(K_ * R_) = mu_beta;
      for (int b = 0; b < nblocks; ++b) {
        const SpMat L(pw_solver_[b]->matrixL());
        impl->Lt.push_back(SpMat(L.transpose()));
        impl->Dfac.push_back(VectorXd(pw_solver_[b]->vectorD()));
        impl->Pinv.push_back(pw_solver_[b]->permutationPinv());
      }
      // detach cached solvers so later evaluations do not mutate them
      for (int b = 0; b < nblocks; ++b) pw_solver_[b] = nullptr;
    }
    return true;
  }

  const Mesh* mesh_;
  PriorSpec prior_;
  std::vector<std::vector<LinearRow>> rows_;
  int K_ = 0, R_ = 0, n_ = 0;
  bool shared_ = false;
  SpMat Clow_, Glow_;
  std::vector<DesignPieces> designs_;
  std::vector<YPieces> ydata_;
  std::vector<std::shared_ptr<Solver>> pw_solver_;
  std::unique_ptr<Solver> q_solver_;
};

struct BfgsOut {
  Vector4d x = Vector4d::Zero();
  double f = kReject;
  int iters = 0;
  double grad_inf = std::numeric_limits<double>::infinity();
  double last_step_inf = 0.0;
  bool converged = false;
};

BfgsOut bfgs_maximize(const std::function<double(const Vector4d&)>& f,
                      const Vector4d& x0, const OptimizerOptions& opt) {
  // BFGS on m(x) = -f(x) with Armijo backtracking.
  const auto m = [&f](const Vector4d& x) { return -f(x); };
  auto grad_at = [&](const Vector4d& p) {
    Vector4d g;
    for (int i = 0; i < 4; ++i) {
      Vector4d hi = p, lo = p;
      hi[i] += opt.fd_step;
      lo[i] -= opt.fd_step;
      g[i] = (m(hi) - m(lo)) / (2.0 * opt.fd_step);
    }
    return g;
  };

  BfgsOut out;
  Vector4d x = x0;
  double mx = m(x);
  Vector4d g = grad_at(x);
  Eigen::Matrix4d H = Eigen::Matrix4d::Identity();
  bool h_scaled = false;
  double last_step = 0.0;
  for (int it = 0; it < opt.max_outer; ++it) {
    out.iters = it + 1;
    out.grad_inf = g.cwiseAbs().maxCoeff();
    out.last_step_inf = last_step;
    if (!std::isfinite(out.grad_inf)) break;
    if (out.grad_inf < opt.grad_tol && last_step < opt.step_tol) {
      out.converged = true;
      break;
    }
    Vector4d p = -(H * g);
    double slope = p.dot(g);
    if (slope >= 0.0) {  // not a descent direction: reset
      H.setIdentity();
      h_scaled = false;
      p = -g;
      slope = p.dot(g);
    }
    if (!h_scaled) {
      const double scale = std::max(1.0, p.cwiseAbs().maxCoeff());
      p /= scale;
      slope /= scale;
    }
    double t = 1.0;
    double mnew = -kReject;
    Vector4d xnew = x;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      xnew = x + t * p;
      mnew = m(xnew);
      if (std::isfinite(mnew) && mnew <= mx + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      out.converged = out.grad_inf < opt.grad_tol;
      break;
    }
    const Vector4d s = xnew - x;
    const Vector4d gnew = grad_at(xnew);
    const Vector4d yv = gnew - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (!h_scaled) {
        H = (sy / yv.squaredNorm()) * Eigen::Matrix4d::Identity();
        h_scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::Matrix4d I = Eigen::Matrix4d::Identity();
      H = (I - rho * s * yv.transpose()) * H * (I - rho * yv * s.transpose()) +
          rho * s * s.transpose();
    }
    last_step = s.cwiseAbs().maxCoeff();
    x = xnew;
    mx = mnew;
    g = gnew;
  }
  out.x = x;
  out.f = -mx;
  return out;
}

std::vector<std::vector<LinearRow>> identity_rows(
    const std::vector<std::vector<ObsTerm>>& terms) {
  std::vector<std::vector<LinearRow>> rows(terms.size());
  for (std::size_t r = 0; r < terms.size(); ++r) {
    rows[r].reserve(terms[r].size());
    for (const ObsTerm& t : terms[r]) rows[r].push_back(linearize_identity(t));
  }
  return rows;
}

std::vector<std::vector<LinearRow>> log_rows(
    const std::vector<std::vector<ObsTerm>>& terms, int K, const VectorXd& z0) {
  std::vector<std::vector<LinearRow>> rows(terms.size());
  for (std::size_t r = 0; r < terms.size(); ++r) {
    rows[r].reserve(terms[r].size());
    for (const ObsTerm& t : terms[r])
      rows[r].push_back(linearize_log(t, static_cast<int>(r), K, z0));
  }
  return rows;
}

Eigen::Matrix4d hessian_at(const std::function<double(const Vector4d&)>& f,
                           const Vector4d& x, double h) {
  Eigen::Matrix4d H;
  const double f0 = f(x);
  for (int i = 0; i < 4; ++i) {
    Vector4d hi = x, lo = x;
    hi[i] += h;
    lo[i] -= h;
    H(i, i) = (f(hi) - 2.0 * f0 + f(lo)) / (h * h);
  }
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      Vector4d pp = x, pm = x, mp = x, mm = x;
      pp[i] += h; pp[j] += h;
      pm[i] += h; pm[j] -= h;
      mp[i] -= h; mp[j] += h;
      mm[i] -= h; mm[j] -= h;
      H(i, j) = H(j, i) = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h * h);
    }
  }
  return H;
}

Eigen::Matrix4d laplace_covariance(
    const std::function<double(const Vector4d&)>& f, const Vector4d& mode,
    double h) {
  Eigen::Matrix4d negH = -hessian_at(f, mode, h);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(negH);
  Eigen::Vector4d ev = es.eigenvalues();
  const double floor_ev = std::max(1e-8, 1e-10 * ev.cwiseAbs().maxCoeff());
  for (int i = 0; i < 4; ++i) ev[i] = std::max(ev[i], floor_ev);
  return es.eigenvectors() * ev.cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

FitResult finalize_fit(Engine& engine, const ModelSpec& spec,
                       const BfgsOut& best,
                       const std::function<double(const Vector4d&)>& obj) {
  FitResult fit;
  fit.hyper_mode = best.x;
  fit.iterations = best.iters;
  fit.final_step_norm = best.last_step_inf;
  fit.converged = best.converged;
  fit.hyper_cov = laplace_covariance(obj, best.x, 1e-3);

  auto post = std::make_shared<LatentPosterior>(
      engine.posterior(best.x, spec.covariate));
  fit.posterior = post;
  const int R = post->R();

  std::vector<Vector4d> points{best.x};
  std::vector<double> weights{1.0};
  if (spec.opt.hyper_mixture && R > 0) {
    // unscented set of N(mode, hyper_cov): mode plus 2d points at
    // sqrt(d + 1) sd along the principal axes (d = 4)
    const Eigen::LLT<Eigen::Matrix4d> llt(fit.hyper_cov);
    if (llt.info() == Eigen::Success) {
      const Eigen::Matrix4d L = llt.matrixL();
      const double scale = std::sqrt(5.0);
      weights.assign(1, 1.0 / 5.0);
      for (int i = 0; i < 4; ++i) {
        points.push_back(best.x + scale * L.col(i));
        points.push_back(best.x - scale * L.col(i));
        weights.push_back(1.0 / 10.0);
        weights.push_back(1.0 / 10.0);
      }
    }
  }

  std::vector<std::vector<VectorXd>> mean_s, var_s;
  std::vector<Vector2d> beta_mean_s;
  std::vector<Vector2d> beta_var_s;
  for (const Vector4d& h : points) {
    const LatentPosterior p =
        (h == best.x) ? *post : engine.posterior(h, spec.covariate);
    std::vector<VectorXd> m, v;
    p.eta_conditional(spec.covariate, m, v);
    mean_s.push_back(std::move(m));
    var_s.push_back(std::move(v));
    beta_mean_s.push_back(p.mean_beta());
    beta_var_s.push_back(
        Vector2d(p.row_variance(0, {}, {}, 1.0, 0.0),
                 p.row_variance(0, {}, {}, 0.0, 1.0)));
  }

  const int K = spec.mesh->num_vertices();
  fit.eta_mean.assign(R, VectorXd::Zero(K));
  fit.eta_sd.assign(R, VectorXd::Zero(K));
  for (int r = 0; r < R; ++r) {
    for (int k = 0; k < K; ++k) {
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t s = 0; s < points.size(); ++s) {
        const double mu = mean_s[s][r][k];
        m1 += weights[s] * mu;
        m2 += weights[s] * (var_s[s][r][k] + mu * mu);
      }
      fit.eta_mean[r][k] = m1;
      fit.eta_sd[r][k] = std::sqrt(std::max(m2 - m1 * m1, 0.0));
    }
  }
  for (int j = 0; j < 2; ++j) {
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t s = 0; s < points.size(); ++s) {
      m1 += weights[s] * beta_mean_s[s][j];
      m2 += weights[s] * (beta_var_s[s][j] +
                          beta_mean_s[s][j] * beta_mean_s[s][j]);
    }
    fit.fixed_mean[j] = m1;
    fit.fixed_sd[j] = std::sqrt(std::max(m2 - m1 * m1, 0.0));
  }
  return fit;
}

BfgsOut optimize_hyper(Engine& engine, const ModelSpec& spec,
                       const std::vector<Vector4d>& starts) {
  auto obj = [&engine](const Vector4d& h) { return engine.log_posterior(h); };
  BfgsOut best;
  for (const Vector4d& s : starts) {
    BfgsOut run = bfgs_maximize(obj, s, spec.opt);
    if (run.f > best.f) best = run;
  }
  return best;
}

std::vector<Vector4d> hyper_starts(const ModelSpec& spec) {
  // theta starts at its prior mean; the noise log-precisions start at 4
  // (starting at the Gamma prior mean, precision 2e4, lands the optimizer in
  // a degenerate interpolating mode).
  Vector4d m;
  if (spec.opt.hyper_init.size() == 4) {
    for (int i = 0; i < 4; ++i) m[i] = spec.opt.hyper_init[i];
    return {m};
  }
  m[0] = spec.prior.mu_theta[0];
  m[1] = spec.prior.mu_theta[1];
  m[2] = 4.0;
  m[3] = 4.0;
  if (!spec.opt.multistart) return {m};
  return {m, m + Vector4d::Ones(), m - Vector4d::Ones()};
}

}  // namespace

double log_marginal(const ModelSpec& spec, const Dataset& data,
                    const Eigen::Vector4d& hyper) {
  if (spec.link != Link::Identity)
    throw Error("log_marginal requires the identity link; linearize first");
  Engine engine(*spec.mesh, spec.prior, identity_rows(build_terms(spec, data)));
  const double v = engine.log_posterior(hyper);
  if (v == kReject) throw NotPositiveDefinite("log_marginal: system not PD");
  return v;
}

FitResult fit_linear(const ModelSpec& spec, const Dataset& data) {
  if (spec.link != Link::Identity)
    throw Error("fit_linear requires the identity link");
  Engine engine(*spec.mesh, spec.prior, identity_rows(build_terms(spec, data)));
  const BfgsOut best = optimize_hyper(engine, spec, hyper_starts(spec));
  auto obj = [&engine](const Vector4d& h) { return engine.log_posterior(h); };
  return finalize_fit(engine, spec, best, obj);
}

FitResult condition_at(const ModelSpec& spec, const Dataset& data,
                       const Eigen::Vector4d& hyper,
                       const Eigen::VectorXd& linearization_point) {
  const auto terms = build_terms(spec, data);
  const int K = spec.mesh->num_vertices();
  std::vector<std::vector<LinearRow>> rows;
  if (spec.link == Link::Identity) {
    rows = identity_rows(terms);
  } else {
    const int N = K * static_cast<int>(terms.size()) + 2;
    if (linearization_point.size() != N)
      throw DimensionMismatch(
          "condition_at: log link needs a linearization point of length K*R+2");
    rows = log_rows(terms, K, linearization_point);
  }
  Engine engine(*spec.mesh, spec.prior, std::move(rows));
  BfgsOut fixed;
  fixed.x = hyper;
  fixed.f = engine.log_posterior(hyper);
  fixed.converged = true;
  auto obj = [&engine](const Vector4d& h) { return engine.log_posterior(h); };
  FitResult fit = finalize_fit(engine, spec, fixed, obj);
  fit.iterations = 0;
  if (spec.link == Link::Log) fit.linearization_point = linearization_point;
  return fit;
}

FitResult fit_nonlinear(const ModelSpec& spec, const Dataset& data) {
  if (spec.link != Link::Log)
    throw Error("fit_nonlinear requires the log link");
  const auto terms = build_terms(spec, data);
  const Mesh& mesh = *spec.mesh;
  const int K = mesh.num_vertices();
  const int R = static_cast<int>(terms.size());
  const int N = K * R + 2;

  VectorXd z0 = VectorXd::Zero(N);
  {
    double sum = 0.0;
    int n = 0;
    for (const auto& rterms : terms) {
      for (const ObsTerm& t : rterms) {
        if (t.y > 0.0) {
          sum += t.y;
          ++n;
        }
      }
    }
    if (n > 0) z0[N - 2] = std::log(sum / n);
  }

  FitResult fit;
  double damping = 1.0;
  int halvings = 0;
  double prev_rel = std::numeric_limits<double>::infinity();
  Vector4d warm = hyper_starts(spec).front();
  bool have_warm = false;
  int total_outer = 0;

  for (int sweep = 0; sweep < spec.opt.max_taylor; ++sweep) {
    Engine engine(mesh, spec.prior, log_rows(terms, K, z0));
    const std::vector<Vector4d> starts =
        have_warm ? std::vector<Vector4d>{warm} : hyper_starts(spec);
    const BfgsOut best = optimize_hyper(engine, spec, starts);
    warm = best.x;
    have_warm = true;
    total_outer += best.iters;
    auto obj = [&engine](const Vector4d& h) { return engine.log_posterior(h); };
    fit = finalize_fit(engine, spec, best, obj);
    fit.taylor_iterations = sweep + 1;

    // assemble the new latent mode
    VectorXd z1(N);
    z1 = VectorXd::Zero(N);
    const LatentPosterior& post = *fit.posterior;
    z1.head(K * R) = post.mean().head(K * R);
    z1.tail(2) = post.mean().tail(2);

    const VectorXd sd = post.marginal_sd();
    double rel = 0.0;
    for (int i = 0; i < N; ++i)
      rel = std::max(rel, std::abs(z1[i] - z0[i]) / std::max(sd[i], 1e-12));
    fit.final_step_norm = rel;

    if (rel < spec.opt.taylor_tol) {
      z0 = z1;
      fit.converged = best.converged;
      break;
    }
    if (rel > prev_rel) {  // oscillation: damp the update
      ++halvings;
      damping *= 0.5;
      if (halvings > spec.opt.max_halvings) {
        fit.converged = false;
        break;
      }
    }
    prev_rel = rel;
    z0 = z0 + damping * (z1 - z0);
    if (sweep + 1 == spec.opt.max_taylor) fit.converged = false;
  }
  fit.iterations = total_outer;
  fit.linearization_point = z0;
  return fit;
}

std::vector<Prediction> predict(const FitResult& fit,
                                const std::vector<GraphLocation>& locs) {
  if (!fit.posterior) throw Error("predict: fit has no posterior state");
  const LatentPosterior& post = *fit.posterior;
  const Mesh& mesh = post.mesh();
  const CovariateField& x = post.covariate();
  const int R = post.R();
  std::vector<Prediction> out(R);
  const bool at_vertices = locs.empty();
  const int n = at_vertices ? post.K() : static_cast<int>(locs.size());
  for (int r = 0; r < R; ++r) {
    out[r].mean.resize(n);
    out[r].sd.resize(n);
    for (int j = 0; j < n; ++j) {
      std::vector<int> idx;
      std::vector<double> val;
      double c1 = 0.0;
      if (at_vertices) {
        idx = {j};
        val = {1.0};
        c1 = x[j];
      } else {
        const BasisEvaluation b = mesh.basis(locs[j]);
        for (int i = 0; i < b.count; ++i) {
          idx.push_back(b.index[i]);
          val.push_back(b.weight[i]);
          c1 += b.weight[i] * x[b.index[i]];
        }
      }
      out[r].mean[j] = post.row_mean(r, idx, val, 1.0, c1);
      out[r].sd[j] = std::sqrt(post.row_variance(r, idx, val, 1.0, c1));
    }
  }
  return out;
}

std::vector<Eigen::MatrixXd> posterior_sample(const FitResult& fit, int B,
                                              std::uint64_t seed) {
  if (!fit.posterior) throw Error("posterior_sample: fit has no posterior state");
  const LatentPosterior& post = *fit.posterior;
  const CovariateField& x = post.covariate();
  const int K = post.K();
  const int R = post.R();
  Rng rng(seed);
  std::vector<Eigen::MatrixXd> out;
  out.reserve(B);
  for (int b = 0; b < B; ++b) {
    const VectorXd z = post.sample_z(rng);
    Eigen::MatrixXd eta(K, R);
    const double beta0 = z[K * R];
    const double beta1 = z[K * R + 1];
    for (int r = 0; r < R; ++r)
      eta.col(r) = z.segment(r * K, K).array() + beta0 + beta1 * x.array();
    out.push_back(std::move(eta));
  }
  return out;
}

EstimandSummary average_speed_estimand(
    const std::vector<Eigen::MatrixXd>& eta_samples) {
  EstimandSummary out;
  if (eta_samples.empty()) return out;
  const int K = static_cast<int>(eta_samples.front().rows());
  const int B = static_cast<int>(eta_samples.size());
  out.median.resize(K);
  out.lo95.resize(K);
  out.hi95.resize(K);
  for (int k = 0; k < K; ++k) {
    double mean = 0.0;
    std::vector<double> logv(B);
    for (int b = 0; b < B; ++b) {
      const auto& eta = eta_samples[b];
      double vbar = 0.0;
      for (int r = 0; r < eta.cols(); ++r) vbar += std::exp(-eta(k, r));
      vbar /= static_cast<double>(eta.cols());
      logv[b] = std::log(vbar);
      mean += logv[b];
    }
    mean /= B;
    double ss = 0.0;
    for (int b = 0; b < B; ++b) ss += (logv[b] - mean) * (logv[b] - mean);
    const double sd = B > 1 ? std::sqrt(ss / (B - 1)) : 0.0;
    out.median[k] = std::exp(mean);
    out.lo95[k] = std::exp(mean - 1.959963984540054 * sd);
    out.hi95[k] = std::exp(mean + 1.959963984540054 * sd);
  }
  return out;
}

JointSystem assemble_joint(const ModelSpec& spec, const Dataset& data,
                           const Eigen::Vector4d& hyper) {
  if (spec.link != Link::Identity)
    throw Error("assemble_joint requires the identity link");
  const Mesh& mesh = *spec.mesh;
  const int K = mesh.num_vertices();
  const auto rows = identity_rows(build_terms(spec, data));
  const int R = static_cast<int>(rows.size());
  const int N = K * R + 2;
  const HyperValues v = decode(hyper);

  JointSystem js;
  const SpMat Qfull = precision(mesh, {v.rho, v.sigma2}).full();
  std::vector<Eigen::Triplet<double>> trips;
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < Qfull.outerSize(); ++c) {
      for (SpMat::InnerIterator it(Qfull, c); it; ++it)
        trips.emplace_back(r * K + it.row(), r * K + it.col(), it.value());
    }
  }
  const double invV = 1.0 / spec.prior.fixed_effect_variance;
  trips.emplace_back(N - 2, N - 2, invV);
  trips.emplace_back(N - 1, N - 1, invV);
  js.prior_precision.resize(N, N);
  js.prior_precision.setFromTriplets(trips.begin(), trips.end());

  int n = 0;
  for (const auto& rr : rows) n += static_cast<int>(rr.size());
  js.design.resize(n, N);
  js.noise_var.resize(n);
  js.y.resize(n);
  std::vector<Eigen::Triplet<double>> dt;
  int row_id = 0;
  for (int r = 0; r < R; ++r) {
    for (const LinearRow& row : rows[r]) {
      for (std::size_t i = 0; i < row.idx.size(); ++i)
        dt.emplace_back(row_id, r * K + row.idx[i], row.val[i]);
      if (row.c0 != 0.0) dt.emplace_back(row_id, N - 2, row.c0);
      if (row.c1 != 0.0) dt.emplace_back(row_id, N - 1, row.c1);
      js.noise_var[row_id] =
          row.line ? row.h / v.lamL : 1.0 / v.lamP;
      js.y[row_id] = row.y;
      ++row_id;
    }
  }
  js.design.setFromTriplets(dt.begin(), dt.end());
  return js;
}

}  // namespace graphfield
