#include <doctest.h>

#include "graphfield/mesh.hpp"
#include "graphfield/rng.hpp"
#include "helpers.hpp"

using namespace graphfield;

TEST_CASE("build_mesh counts") {
  const MetricGraph g = testutil::single_edge(1.0);
  const Mesh mesh = build_mesh(g, 0.25);
  CHECK(mesh.intervals_on_edge(0) == 4);
  CHECK(mesh.num_vertices() == 5);
  CHECK(mesh.num_intervals() == 4);
}

TEST_CASE("short edges keep one interval") {
  const MetricGraph g = testutil::single_edge(0.01);
  const Mesh mesh = build_mesh(g, 0.07);
  CHECK(mesh.intervals_on_edge(0) == 1);
  CHECK(mesh.num_vertices() == 2);
}

TEST_CASE("K = m + sum(n_e - 1) and widths tile each edge") {
  for (double h : {0.3, 0.11, 0.07}) {
    const MetricGraph g = testutil::demo_block();
    const Mesh mesh = build_mesh(g, h);
    int expect = g.num_vertices();
    for (int e = 0; e < g.num_edges(); ++e) {
      expect += mesh.intervals_on_edge(e) - 1;
      double sum = 0.0;
      for (int j = 0; j < mesh.intervals_on_edge(e); ++j)
        sum += mesh.interval(mesh.interval_offset(e) + j).width;
      CHECK(sum == doctest::Approx(g.edge(e).length()).epsilon(1e-12));
      CHECK(g.edge(e).length() / mesh.intervals_on_edge(e) <= h * (1 + 1e-12));
    }
    CHECK(mesh.num_vertices() == expect);
  }
}

TEST_CASE("locate boundary rules") {
  const MetricGraph g = testutil::single_edge(1.0);
  const Mesh mesh = build_mesh(g, 0.25);
  auto [i0, l0] = mesh.locate({0, 0.6});
  CHECK(i0 == 2);
  CHECK(l0 == doctest::Approx(0.4).epsilon(1e-12));
  auto [i1, l1] = mesh.locate({0, 0.5});
  CHECK(i1 == 1);
  CHECK(l1 == 1.0);
  auto [i2, l2] = mesh.locate({0, 0.0});
  CHECK(i2 == 0);
  CHECK(l2 == 0.0);
  auto [i3, l3] = mesh.locate({0, 1.0});
  CHECK(i3 == 3);
  CHECK(l3 == 1.0);
}

TEST_CASE("basis weights: midpoints, nodes, graph vertices") {
  const MetricGraph g = testutil::star_graph(3, 1.0);
  const Mesh mesh = build_mesh(g, 0.25);

  const BasisEvaluation mid = mesh.basis({0, 0.125});
  CHECK(mid.count == 2);
  CHECK(mid.weight[0] == doctest::Approx(0.5));
  CHECK(mid.weight[1] == doctest::Approx(0.5));

  const BasisEvaluation node = mesh.basis({0, 0.25});
  CHECK(node.count == 1);
  CHECK(node.weight[0] == 1.0);

  // degree-3 centre: one pyramidal basis function, value 1 at the apex
  const BasisEvaluation apex = mesh.basis({2, 0.0});
  CHECK(apex.count == 1);
  CHECK(apex.weight[0] == 1.0);
  CHECK(apex.index[0] == g.edge(2).v_start);
}

TEST_CASE("evaluate_field: partition of unity and nodal property") {
  const MetricGraph g = testutil::demo_block();
  const Mesh mesh = build_mesh(g, 0.21);
  const int K = mesh.num_vertices();

  Rng rng(11);
  std::vector<GraphLocation> locs;
  for (int i = 0; i < 1000; ++i) {
    locs.push_back({static_cast<int>(rng.next_u64() % g.num_edges()),
                    rng.uniform()});
  }
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(K);
  const Eigen::VectorXd out = evaluate_field(mesh, locs, ones);
  for (int i = 0; i < out.size(); ++i)
    CHECK(out[i] == doctest::Approx(1.0).epsilon(1e-12));

  Eigen::VectorXd e3 = Eigen::VectorXd::Zero(K);
  e3[3] = 1.0;
  const Eigen::VectorXd at3 = evaluate_field(mesh, {mesh.vertex_location(3)}, e3);
  CHECK(at3[0] == 1.0);

  CHECK_THROWS_AS(evaluate_field(mesh, locs, Eigen::VectorXd::Ones(K + 1)),
                  DimensionMismatch);
}

TEST_CASE("linear functions of arc length are reproduced exactly") {
  const MetricGraph g = testutil::single_edge(2.0);
  const Mesh mesh = build_mesh(g, 0.4);
  const int K = mesh.num_vertices();
  const double a = 0.7, b = -1.3;
  Eigen::VectorXd w(K);
  for (int k = 0; k < K; ++k) w[k] = a + b * mesh.vertex_location(k).t;
  Rng rng(5);
  std::vector<GraphLocation> locs;
  for (int i = 0; i < 50; ++i) locs.push_back({0, rng.uniform()});
  const Eigen::VectorXd out = evaluate_field(mesh, locs, w);
  for (std::size_t i = 0; i < locs.size(); ++i)
    CHECK(out[i] == doctest::Approx(a + b * locs[i].t).epsilon(1e-12));
}

TEST_CASE("mesh interval counts are consistent on a bigger synthetic graph") {
  const MetricGraph g = testutil::thirteen_sixteen();
  const Mesh mesh = build_mesh(g, 0.07);
  int intervals = 0;
  for (int e = 0; e < g.num_edges(); ++e) intervals += mesh.intervals_on_edge(e);
  CHECK(mesh.num_intervals() == intervals);
  CHECK(mesh.num_vertices() ==
        g.num_vertices() + intervals - g.num_edges());
}
