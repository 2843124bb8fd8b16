#include <doctest.h>

#include <set>

#include "graphfield/simstudy.hpp"
#include "helpers.hpp"

using namespace graphfield;

TEST_CASE("generate_covariate: standardized, deterministic, smooth") {
  const MetricGraph g = build_graph(desk_segments());
  const Mesh mesh = build_mesh(g, 0.15);
  const CovariateField x = generate_covariate(mesh, 42, 2.1, 3.0);
  const int K = mesh.num_vertices();
  REQUIRE(x.size() == K);
  CHECK(std::abs(x.mean()) < 1e-12);
  const double sd = std::sqrt((x.array() - x.mean()).square().sum() / (K - 1));
  CHECK(sd == doctest::Approx(1.0).epsilon(1e-12));

  const CovariateField y = generate_covariate(mesh, 42, 2.1, 3.0);
  CHECK((x - y).cwiseAbs().maxCoeff() == 0.0);
  const CovariateField z = generate_covariate(mesh, 43, 2.1, 3.0);
  CHECK((x - z).cwiseAbs().maxCoeff() > 0.0);

  // lag-1 mesh-neighbour correlation is high when h << rho_cov
  double num = 0.0, den = 0.0;
  for (const MeshInterval& iv : mesh.intervals()) {
    num += x[iv.left] * x[iv.right];
    den += 0.5 * (x[iv.left] * x[iv.left] + x[iv.right] * x[iv.right]);
  }
  CHECK(num / den > 0.9);
}

TEST_CASE("desk network and design have the documented scale") {
  const MetricGraph g = build_graph(desk_segments());
  CHECK(g.num_vertices() >= 40);
  CHECK(g.num_edges() >= 50);
  CHECK(g.total_length() > 20.0);
  const Mesh mesh = build_mesh(g, 0.07);
  CHECK(mesh.num_vertices() >= 300);
  CHECK(mesh.num_vertices() <= 600);

  const StudyDesign d = desk_design(g, mesh);
  CHECK(d.point_locs.size() == 6);
  CHECK(d.paths.size() >= 30);
  CHECK(d.paths.size() <= 90);
  std::set<int> edges;
  for (const GraphLocation& loc : d.point_locs) edges.insert(loc.edge);
  CHECK(edges.size() == 6);
}

TEST_CASE("split_path tiles a path into near-equal segments") {
  const MetricGraph g = build_graph(desk_segments());
  const Mesh mesh = build_mesh(g, 0.15);
  const StudyDesign d = desk_design(g, mesh, 0.95);
  double total_one_way = 0.0;
  for (std::size_t i = 0; i < d.paths.size() / 2; ++i)
    total_one_way += d.paths[i].length();
  for (const GraphPath& p : d.paths) {
    CHECK(p.length() > 0.4);
    CHECK(p.length() < 1.6);
  }
  CHECK(total_one_way > 20.0);  // four routes worth of segments
}

TEST_CASE("run_scenario rows, determinism, flags propagate") {
  const MetricGraph g = build_graph(desk_segments());
  const Mesh mesh = build_mesh(g, 0.2);  // coarse: keep the test fast
  const CovariateField x = generate_covariate(mesh, 7, 2.1, 3.0);
  const StudyDesign d = desk_design(g, mesh, 0.95);

  Scenario scn;
  scn.name = "mini";
  scn.rho_true = 0.35;
  scn.replicates = 1;
  scn.n_realizations = 2;
  scn.seed_base = 31;

  const auto rows = run_scenario(scn, mesh, x, d, true, true, 1);
  REQUIRE(rows.size() == 4);  // 2 realizations x {IM, SM}
  for (const StudyRow& r : rows) {
    CHECK(r.coverage >= 0.0);
    CHECK(r.coverage <= 1.0);
    CHECK(r.rmse >= 0.0);
    CHECK(r.crps >= 0.0);
    CHECK(r.rho_hat > 0.0);
    CHECK(r.sigma2_hat > 0.0);
  }
  const auto rows2 = run_scenario(scn, mesh, x, d, true, true, 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].rmse == rows2[i].rmse);
    CHECK(rows[i].rho_hat == rows2[i].rho_hat);
    CHECK(rows[i].model == rows2[i].model);
  }
}

TEST_CASE("summarize emits three metric rows per study row") {
  std::vector<StudyRow> rows;
  for (int scen = 0; scen < 2; ++scen) {
    for (const char* model : {"IM", "SM"}) {
      for (int R : {1, 5, 25}) {
        for (int j = 0; j < 50; ++j) {
          StudyRow r;
          r.scenario = scen == 0 ? "medium" : "long";
          r.model = model;
          r.R = R;
          r.realization = j;
          r.rmse = 1.0 + j;
          r.crps = 0.5;
          r.coverage = 0.9;
          rows.push_back(r);
        }
      }
    }
  }
  const auto longrows = summarize(rows);
  CHECK(longrows.size() == 1800);
  for (const LongRow& lr : longrows) {
    CHECK((lr.metric == "rmse" || lr.metric == "crps" || lr.metric == "coverage"));
    CHECK(std::isfinite(lr.value));
  }
}
