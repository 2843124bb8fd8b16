#include <doctest.h>

#include <Eigen/Dense>

#include "dense_oracle.hpp"
#include "graphfield/fem.hpp"
#include "helpers.hpp"

using namespace graphfield;

TEST_CASE("mass matrix on a two-interval edge") {
  const MetricGraph g = testutil::single_edge(1.0);
  const Mesh mesh = build_mesh(g, 0.5);
  const SparseSym C = assemble_mass(mesh);
  // frozen from hat-function quadrature with h = 0.5
  CHECK(C.coeff(0, 0) == doctest::Approx(1.0 / 6).epsilon(1e-12));
  CHECK(C.coeff(1, 1) == doctest::Approx(1.0 / 6).epsilon(1e-12));
  CHECK(C.coeff(2, 2) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(C.coeff(0, 2) == doctest::Approx(1.0 / 12).epsilon(1e-12));
  CHECK(C.coeff(1, 2) == doctest::Approx(1.0 / 12).epsilon(1e-12));
  CHECK(C.coeff(0, 1) == 0.0);

  // quadrature oracle for the per-interval contributions
  const double h = 0.5;
  CHECK(oracle::hat_product_integral(h, true, false) ==
        doctest::Approx(h / 3).epsilon(1e-8));
  CHECK(oracle::hat_product_integral(h, false, false) ==
        doctest::Approx(h / 6).epsilon(1e-8));
}

TEST_CASE("stiffness matrix on a two-interval edge") {
  const MetricGraph g = testutil::single_edge(1.0);
  const Mesh mesh = build_mesh(g, 0.5);
  const SparseSym G = assemble_stiffness(mesh);
  CHECK(G.coeff(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(G.coeff(2, 2) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(G.coeff(0, 2) == doctest::Approx(-2.0).epsilon(1e-12));

  const double h = 0.5;
  CHECK(oracle::hat_product_integral(h, true, true) ==
        doctest::Approx(1.0 / h).epsilon(1e-8));
  CHECK(oracle::hat_product_integral(h, false, true) ==
        doctest::Approx(-1.0 / h).epsilon(1e-8));
}

TEST_CASE("degree-3 vertex accumulates per-interval contributions") {
  const MetricGraph g = testutil::star_graph(3, 1.0);
  const Mesh mesh = build_mesh(g, 0.25);
  const double h = 0.25;
  const SparseSym C = assemble_mass(mesh);
  const SparseSym G = assemble_stiffness(mesh);
  const int centre = g.edge(0).v_start;
  CHECK(C.coeff(centre, centre) == doctest::Approx(3 * h / 3).epsilon(1e-12));
  CHECK(G.coeff(centre, centre) == doctest::Approx(3.0 / h).epsilon(1e-12));
}

TEST_CASE("mass conservation and stiffness kernel") {
  const MetricGraph g = testutil::demo_block();
  const Mesh mesh = build_mesh(g, 0.17);
  const Eigen::MatrixXd C = Eigen::MatrixXd(assemble_mass(mesh).full());
  const Eigen::MatrixXd G = Eigen::MatrixXd(assemble_stiffness(mesh).full());
  const int K = mesh.num_vertices();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(K);
  CHECK(ones.dot(C * ones) ==
        doctest::Approx(g.total_length()).epsilon(1e-10));
  const Eigen::VectorXd g1 = G * ones;
  for (int i = 0; i < K; ++i) CHECK(std::abs(g1[i]) < 1e-12);
}

TEST_CASE("precision parameterization") {
  const MetricGraph g = testutil::single_edge(1.0);
  const Mesh mesh = build_mesh(g, 0.5);
  const HyperParams theta{2.0, 1.0};
  CHECK(theta.kappa() == doctest::Approx(1.0));
  CHECK(theta.tau2() == doctest::Approx(0.5));

  const Eigen::MatrixXd Q1 = Eigen::MatrixXd(precision(mesh, {2.0, 1.0}).full());
  const Eigen::MatrixXd Q4 = Eigen::MatrixXd(precision(mesh, {2.0, 4.0}).full());
  CHECK((Q4 - 0.25 * Q1).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("midpoint variance of a long edge approaches sigma2") {
  const double rho = 1.0, s2 = 2.0;
  const MetricGraph g = testutil::single_edge(50 * rho);
  const Mesh mesh = build_mesh(g, rho / 20);
  const CholeskyFactor f(precision(mesh, {rho, s2}));
  const int kc = mesh.node(0, mesh.intervals_on_edge(0) / 2);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(mesh.num_vertices());
  e[kc] = 1.0;
  const double var = f.solve(e)[kc];
  CHECK(var == doctest::Approx(s2).epsilon(0.05));
}

TEST_CASE("factorize: identity, 2x2 logdet, random SPD solve") {
  {
    Eigen::SparseMatrix<double> I(3, 3);
    I.setIdentity();
    const CholeskyFactor f{SparseSym(I)};
    CHECK(f.log_det() == doctest::Approx(0.0));
  }
  {
    Eigen::SparseMatrix<double> Q(2, 2);
    std::vector<Eigen::Triplet<double>> t{{0, 0, 2.0}, {1, 1, 2.0}, {1, 0, 1.0}};
    Q.setFromTriplets(t.begin(), t.end());
    const CholeskyFactor f{SparseSym(Q)};
    CHECK(f.log_det() == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  }
  {
    // random SPD K = 50, solve residual against a dense solve
    const int K = 50;
    Rng rng(3);
    Eigen::MatrixXd Araw(K, K);
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j) Araw(i, j) = rng.normal();
    const Eigen::MatrixXd SPD =
        Araw * Araw.transpose() + 0.5 * K * Eigen::MatrixXd::Identity(K, K);
    Eigen::SparseMatrix<double> Q(K, K);
    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 0; i < K; ++i)
      for (int j = 0; j <= i; ++j) trips.emplace_back(i, j, SPD(i, j));
    Q.setFromTriplets(trips.begin(), trips.end());
    const CholeskyFactor f{SparseSym(Q)};
    Eigen::VectorXd b(K);
    for (int i = 0; i < K; ++i) b[i] = rng.normal();
    const Eigen::VectorXd x = f.solve(b);
    CHECK((SPD * x - b).cwiseAbs().maxCoeff() <
          1e-10 * b.cwiseAbs().maxCoeff());
    const Eigen::VectorXd x_dense = SPD.ldlt().solve(b);
    CHECK((x - x_dense).cwiseAbs().maxCoeff() < 1e-9);
    // logdet against dense
    double ld = 0.0;
    const Eigen::LLT<Eigen::MatrixXd> llt(SPD);
    for (int i = 0; i < K; ++i) ld += 2.0 * std::log(llt.matrixL()(i, i));
    CHECK(f.log_det() == doctest::Approx(ld).epsilon(1e-8));
  }
  {
    Eigen::SparseMatrix<double> bad(2, 2);
    std::vector<Eigen::Triplet<double>> t{{0, 0, 1.0}, {1, 1, -1.0}};
    bad.setFromTriplets(t.begin(), t.end());
    CHECK_THROWS_AS(CholeskyFactor{SparseSym(bad)}, NotPositiveDefinite);
  }
}

TEST_CASE("sampling: determinism, mean, covariance vs dense inverse") {
  const MetricGraph g = testutil::star_graph(3, 1.0);
  const Mesh mesh = build_mesh(g, 0.08);  // K = 3 + 3*12 = 39ish
  const SparseSym Q = precision(mesh, {0.8, 1.0});
  const CholeskyFactor f(Q);
  const int K = f.dim();

  const Eigen::MatrixXd s1 = sample_field(f, 5, 99);
  const Eigen::MatrixXd s2 = sample_field(f, 5, 99);
  CHECK((s1 - s2).cwiseAbs().maxCoeff() == 0.0);
  const Eigen::MatrixXd s3 = sample_field(f, 5, 100);
  CHECK((s1 - s3).cwiseAbs().maxCoeff() > 0.0);

  const int n = 20000;
  const Eigen::MatrixXd S = sample_field(f, n, 7);
  const Eigen::MatrixXd dense_cov =
      Eigen::MatrixXd(Q.full()).inverse();

  const Eigen::VectorXd mean = S.rowwise().mean();
  for (int k = 0; k < K; ++k) {
    const double sd = std::sqrt(dense_cov(k, k));
    CHECK(std::abs(mean[k]) < 4.0 * sd / std::sqrt(double(n)));
  }

  const Eigen::MatrixXd centered = S.colwise() - mean;
  const Eigen::MatrixXd emp = centered * centered.transpose() / (n - 1);
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < K; ++j) {
      // Monte-Carlo s.e. of a covariance entry
      const double se = std::sqrt((dense_cov(i, i) * dense_cov(j, j) +
                                   dense_cov(i, j) * dense_cov(i, j)) /
                                  n);
      CHECK(std::abs(emp(i, j) - dense_cov(i, j)) < 4.0 * se);
    }
  }
}

TEST_CASE("marginal variances against the dense inverse") {
  {
    Eigen::SparseMatrix<double> Q(4, 4);
    std::vector<Eigen::Triplet<double>> t;
    for (int i = 0; i < 4; ++i) t.emplace_back(i, i, 2.5);
    Q.setFromTriplets(t.begin(), t.end());
    const CholeskyFactor f{SparseSym(Q)};
    const Eigen::VectorXd v = marginal_variances(f);
    for (int i = 0; i < 4; ++i) CHECK(v[i] == doctest::Approx(1 / 2.5));
  }
  const MetricGraph g = testutil::star_graph(4, 1.0);
  const Mesh mesh = build_mesh(g, 0.11);
  const SparseSym Q = precision(mesh, {0.7, 1.4});
  const CholeskyFactor f(Q);
  const Eigen::VectorXd v = marginal_variances(f);
  const Eigen::MatrixXd dense = Eigen::MatrixXd(Q.full()).inverse();
  for (int k = 0; k < f.dim(); ++k)
    CHECK(v[k] == doctest::Approx(dense(k, k)).epsilon(1e-8));
}

TEST_CASE("exponential correlation on a long path graph") {
  const double rho = 2.0, s2 = 1.0;
  const MetricGraph g = testutil::single_edge(50 * rho);
  const Mesh mesh = build_mesh(g, rho / 20);
  const CholeskyFactor f(precision(mesh, {rho, s2}));
  const int K = f.dim();
  const int n = mesh.intervals_on_edge(0);
  const int kc = mesh.node(0, n / 2);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(K);
  e[kc] = 1.0;
  const Eigen::VectorXd col = f.solve(e);
  for (double dm : {0.5, 1.0, 2.0}) {
    const int kd = mesh.node(0, n / 2 + static_cast<int>(dm * 20));
    Eigen::VectorXd ed = Eigen::VectorXd::Zero(K);
    ed[kd] = 1.0;
    const double var_d = f.solve(ed)[kd];
    const double corr = col[kd] / std::sqrt(col[kc] * var_d);
    CHECK(std::abs(corr - std::exp(-2.0 * dm)) < 0.02);
  }
}

TEST_CASE("Kirchhoff vertex: positive cross-edge correlation below same-edge") {
  const double rho = 1.0;
  const MetricGraph g = testutil::star_graph(3, 5 * rho);
  const Mesh mesh = build_mesh(g, rho / 10);
  const Eigen::MatrixXd cov =
      Eigen::MatrixXd(precision(mesh, {rho, 1.0}).full()).inverse();
  const int n = mesh.intervals_on_edge(0);
  // points at distance a from the centre on legs 0 and 1 (path distance 2a)
  const int a_steps = n / 5;  // a = leg_len/5 = rho
  const int i = mesh.node(0, a_steps);
  const int j = mesh.node(1, a_steps);
  const double cross = cov(i, j) / std::sqrt(cov(i, i) * cov(j, j));
  // same-edge pair, 2a apart, far from the centre and the boundary
  const int p = mesh.node(0, 2 * a_steps);
  const int q = mesh.node(0, 4 * a_steps);
  const double same = cov(p, q) / std::sqrt(cov(p, p) * cov(q, q));
  CHECK(cross > 0.0);
  CHECK(cross < same);
}
