#include "graphfield/simstudy.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "graphfield/scoring.hpp"

namespace graphfield {

CovariateField generate_covariate(const Mesh& mesh, std::uint64_t seed,
                                  double rho_cov, double sigma2_cov) {
  const SparseSym Q = precision(mesh, {rho_cov, sigma2_cov});
  const CholeskyFactor factor(Q);
  Eigen::VectorXd x = sample_field(factor, 1, seed).col(0);
  const double mean = x.mean();
  const double sd =
      std::sqrt((x.array() - mean).square().sum() / (x.size() - 1));
  return ((x.array() - mean) / sd).matrix();
}

std::vector<GraphPath> split_path(const MetricGraph& g, const GraphPath& path,
                                  double seg_len) {
  const double total = path.length();
  int n_seg = std::max(1, static_cast<int>(std::round(total / seg_len)));
  const double step = total / n_seg;

  std::vector<GraphPath> out;
  std::vector<InterEdgeInterval> current;
  double need = step;  // arc length remaining in the current segment
  int made = 0;
  for (const InterEdgeInterval& iv : path.intervals()) {
    double t0 = iv.t_start;
    const double el = g.edge(iv.edge).length();
    double remaining = std::abs(iv.t_end - iv.t_start) * el;
    const double dir = iv.t_end > iv.t_start ? 1.0 : -1.0;
    while (remaining > 1e-12) {
      if (made == n_seg - 1 || remaining < need - 1e-12) {
        // tail of the interval stays in the current segment
        if (std::abs(iv.t_end - t0) > 1e-12)
          current.push_back({iv.edge, t0, iv.t_end});
        need -= remaining;
        remaining = 0.0;
      } else {
        const double t_cut = t0 + dir * need / el;
        if (std::abs(t_cut - t0) > 1e-12)
          current.push_back({iv.edge, t0, t_cut});
        out.emplace_back(g, current);
        current.clear();
        ++made;
        t0 = t_cut;
        remaining -= need;
        need = step;
      }
    }
  }
  if (!current.empty()) out.emplace_back(g, current);
  return out;
}

namespace {

// Deterministic jitter in [-a, a].
double jitter(Rng& rng, double a) { return a * (2.0 * rng.uniform() - 1.0); }

}  // namespace

std::vector<std::vector<EuclideanPoint>> desk_segments() {
  // 8 x 6 street grid, 0.45 km blocks, jittered intersections, a few curved
  // blocks and three dead-end spurs.
  constexpr int nx = 8, ny = 6;
  constexpr double spacing = 0.45;
  Rng rng(90210);
  std::vector<std::vector<EuclideanPoint>> segs;
  EuclideanPoint grid[nx][ny];
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      grid[i][j] = {i * spacing + jitter(rng, 0.05),
                    j * spacing + jitter(rng, 0.05)};
    }
  }
  auto curved = [&](const EuclideanPoint& a, const EuclideanPoint& b,
                    double bulge) {
    const EuclideanPoint mid{0.5 * (a.x + b.x), 0.5 * (a.y + b.y)};
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len = std::sqrt(dx * dx + dy * dy);
    const EuclideanPoint apex{mid.x - bulge * dy / len, mid.y + bulge * dx / len};
    return std::vector<EuclideanPoint>{a, apex, b};
  };
  int count = 0;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      if (++count % 7 == 0) {
        segs.push_back(curved(grid[i][j], grid[i + 1][j], 0.06));
      } else {
        segs.push_back({grid[i][j], grid[i + 1][j]});
      }
    }
  }
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j + 1 < ny; ++j) {
      if (++count % 9 == 0) {
        segs.push_back(curved(grid[i][j], grid[i][j + 1], -0.05));
      } else {
        segs.push_back({grid[i][j], grid[i][j + 1]});
      }
    }
  }
  // spurs off the boundary
  segs.push_back({grid[0][0], {grid[0][0].x - 0.30, grid[0][0].y - 0.18}});
  segs.push_back({grid[7][5], {grid[7][5].x + 0.28, grid[7][5].y + 0.22}});
  segs.push_back({grid[3][5], {grid[3][5].x + 0.05, grid[3][5].y + 0.33}});
  return segs;
}

StudyDesign desk_design(const MetricGraph& g, const Mesh&,
                        double stop_spacing) {
  // Routes are vertex chains on the jittered grid, traced as polylines.
  auto vertex_near = [&](double x, double y) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int v = 0; v < g.num_vertices(); ++v) {
      const double d = distance(g.vertex(v), {x, y});
      if (d < bd) {
        bd = d;
        best = v;
      }
    }
    return g.vertex(best);
  };
  constexpr double sp = 0.45;
  auto route = [&](std::vector<std::pair<int, int>> cells) {
    std::vector<EuclideanPoint> pl;
    for (auto [i, j] : cells) pl.push_back(vertex_near(i * sp, j * sp));
    return pl;
  };

  std::vector<std::vector<EuclideanPoint>> polylines;
  // snake through rows 0-2
  polylines.push_back(route({{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}, {5, 0},
                             {6, 0}, {7, 0}, {7, 1}, {6, 1}, {5, 1}, {4, 1},
                             {3, 1}, {2, 1}, {1, 1}, {0, 1}, {0, 2}, {1, 2},
                             {2, 2}, {3, 2}, {4, 2}, {5, 2}, {6, 2}, {7, 2}}));
  // snake through rows 5-3
  polylines.push_back(route({{7, 5}, {6, 5}, {5, 5}, {4, 5}, {3, 5}, {2, 5},
                             {1, 5}, {0, 5}, {0, 4}, {1, 4}, {2, 4}, {3, 4},
                             {4, 4}, {5, 4}, {6, 4}, {7, 4}, {7, 3}, {6, 3},
                             {5, 3}, {4, 3}, {3, 3}, {2, 3}, {1, 3}, {0, 3}}));
  // columns 2 and 3 out and back
  polylines.push_back(route({{2, 0}, {2, 1}, {2, 2}, {2, 3}, {2, 4}, {2, 5},
                             {3, 5}, {3, 4}, {3, 3}, {3, 2}, {3, 1}, {3, 0},
                             {4, 0}}));
  // columns 5 and 6 out and back
  polylines.push_back(route({{5, 0}, {5, 1}, {5, 2}, {5, 3}, {5, 4}, {5, 5},
                             {6, 5}, {6, 4}, {6, 3}, {6, 2}, {6, 1}, {6, 0},
                             {7, 0}}));

  StudyDesign design;
  for (const auto& pl : polylines) {
    const GraphPath full = path_from_polyline(g, pl, 0.12);
    for (GraphPath& seg : split_path(g, full, stop_spacing))
      design.paths.push_back(std::move(seg));
  }
  // return direction: same segments traversed backwards
  const std::size_t one_way = design.paths.size();
  for (std::size_t i = 0; i < one_way; ++i) {
    std::vector<InterEdgeInterval> rev(design.paths[i].intervals().rbegin(),
                                       design.paths[i].intervals().rend());
    for (InterEdgeInterval& iv : rev) std::swap(iv.t_start, iv.t_end);
    design.paths.emplace_back(g, std::move(rev));
  }

  // six stations on distinct edges, spread over the network
  const int M = g.num_edges();
  const double ts[6] = {0.37, 0.61, 0.52, 0.44, 0.58, 0.33};
  for (int s = 0; s < 6; ++s) {
    const int e = (s * M) / 6 + (s % 3);
    design.point_locs.push_back({std::min(e, M - 1), ts[s]});
  }
  return design;
}

namespace {

StudyRow score_fit(const Scenario& scn, const std::string& model,
                   int realization, const FitResult& fit,
                   const std::vector<Eigen::VectorXd>& eta_true) {
  StudyRow row;
  row.scenario = scn.name;
  row.model = model;
  row.R = scn.replicates;
  row.realization = realization;
  const int R = static_cast<int>(eta_true.size());
  const int K = static_cast<int>(eta_true.front().size());
  Eigen::VectorXd means(K * R), sds(K * R), truths(K * R);
  for (int r = 0; r < R; ++r) {
    means.segment(r * K, K) = fit.eta_mean[r];
    sds.segment(r * K, K) = fit.eta_sd[r];
    truths.segment(r * K, K) = eta_true[r];
  }
  row.rmse = rmse(means, truths);
  row.crps = mean_crps(means, sds, truths);
  row.coverage = coverage(means, sds, truths);
  row.rho_hat = fit.rho_hat();
  row.sigma2_hat = fit.sigma2_hat();
  row.beta0_hat = fit.fixed_mean[0];
  row.beta1_hat = fit.fixed_mean[1];
  row.sigma2_point_hat = fit.sigma2_point_hat();
  row.sigma2_line_hat = fit.sigma2_line_hat();
  row.converged = fit.converged;
  return row;
}

}  // namespace

std::vector<StudyRow> run_scenario(const Scenario& scn, const Mesh& mesh,
                                   const CovariateField& x,
                                   const StudyDesign& design, bool run_im,
                                   bool run_sm, int jobs) {
  const SparseSym Q_true = precision(mesh, {scn.rho_true, scn.sigma2_true});
  const CholeskyFactor factor_true(Q_true);
  NoiseModel noise;
  noise.sigma2_point = scn.sigma2_point;
  noise.sigma2_line = scn.sigma2_line;
  noise.scale = LineScale::InverseSq;

  const int J = scn.n_realizations;
  std::vector<std::vector<StudyRow>> results(J);

  auto run_one = [&](int j) {
    const std::uint64_t seed_j = derive_seed(scn.seed_base, j);
    std::vector<Eigen::VectorXd> w;
    {
      Rng rng(derive_seed(seed_j, 1));
      Eigen::MatrixXd ws = factor_true.sample(scn.replicates, rng);
      for (int r = 0; r < scn.replicates; ++r) w.push_back(ws.col(r));
    }
    std::vector<Eigen::VectorXd> eta_true;
    for (int r = 0; r < scn.replicates; ++r)
      eta_true.push_back((scn.beta0_true + scn.beta1_true * x.array() +
                          w[r].array()).matrix());

    // Line values are length-averaged integrals, matching the traffic data
    // semantics; both models see the same numbers.
    const Observations obs = simulate_observations(
        mesh, w, scn.beta0_true, scn.beta1_true, x, Link::Identity, noise,
        design.point_locs, design.paths, derive_seed(seed_j, 2), 1);
    Dataset data{obs.points, obs.lines};

    for (const char* model : {"IM", "SM"}) {
      if ((model[0] == 'I' && !run_im) || (model[0] == 'S' && !run_sm)) continue;
      ModelSpec spec;
      spec.mesh = &mesh;
      spec.covariate = x;
      spec.link = Link::Identity;
      spec.support = model[0] == 'I' ? Support::IM : Support::SM;
      spec.scale = LineScale::InverseSq;
      spec.averaged_lines = 1;
      const FitResult fit = fit_linear(spec, data);
      results[j].push_back(score_fit(scn, model, j, fit, eta_true));
    }
  };

  if (jobs <= 1) {
    for (int j = 0; j < J; ++j) run_one(j);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < std::min(jobs, J); ++t) {
      pool.emplace_back([&]() {
        for (int j = next.fetch_add(1); j < J; j = next.fetch_add(1)) run_one(j);
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<StudyRow> rows;
  for (int j = 0; j < J; ++j)
    rows.insert(rows.end(), results[j].begin(), results[j].end());
  return rows;
}

std::vector<LongRow> summarize(const std::vector<StudyRow>& rows) {
  std::vector<LongRow> out;
  out.reserve(3 * rows.size());
  for (const StudyRow& r : rows) {
    for (const auto& [metric, value] :
         std::initializer_list<std::pair<const char*, double>>{
             {"rmse", r.rmse}, {"crps", r.crps}, {"coverage", r.coverage}}) {
      out.push_back({r.scenario, r.model, r.R, r.realization, metric, value});
    }
  }
  return out;
}

}  // namespace graphfield
