#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "graphfield/inference.hpp"
#include "graphfield/scoring.hpp"
#include "graphfield/simstudy.hpp"

namespace py = pybind11;
using namespace graphfield;

namespace {

std::vector<EuclideanPoint> to_points(const std::vector<std::pair<double, double>>& xy) {
  std::vector<EuclideanPoint> out;
  out.reserve(xy.size());
  for (const auto& [x, y] : xy) out.push_back({x, y});
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Whittle-Matern Gaussian fields on metric graphs";

  py::register_exception<DisconnectedGraph>(m, "DisconnectedGraphError");
  py::register_exception<DegenerateEdge>(m, "DegenerateEdgeError");
  py::register_exception<PointOffGraph>(m, "PointOffGraphError");
  py::register_exception<BrokenChain>(m, "BrokenChainError");
  py::register_exception<AmbiguousChain>(m, "AmbiguousChainError");
  py::register_exception<NotPositiveDefinite>(m, "NotPositiveDefiniteError");

  py::class_<GraphLocation>(m, "GraphLocation")
      .def(py::init<int, double>(), py::arg("edge"), py::arg("t"))
      .def_readwrite("edge", &GraphLocation::edge)
      .def_readwrite("t", &GraphLocation::t)
      .def("__repr__", [](const GraphLocation& g) {
        return "GraphLocation(edge=" + std::to_string(g.edge) +
               ", t=" + std::to_string(g.t) + ")";
      });

  py::class_<MetricGraph>(m, "MetricGraph")
      .def_property_readonly("num_vertices", &MetricGraph::num_vertices)
      .def_property_readonly("num_edges", &MetricGraph::num_edges)
      .def_property_readonly("total_length", &MetricGraph::total_length)
      .def("degree", &MetricGraph::degree, py::arg("vertex"))
      .def("vertex",
           [](const MetricGraph& g, int v) {
             const EuclideanPoint p = g.vertex(v);
             return std::make_pair(p.x, p.y);
           })
      .def("edge_length",
           [](const MetricGraph& g, int e) { return g.edge(e).length(); })
      .def("pte_to_xy",
           [](const MetricGraph& g, const GraphLocation& loc) {
             const EuclideanPoint p = g.pte_to_xy(loc);
             return std::make_pair(p.x, p.y);
           })
      .def("xy_to_pte",
           [](const MetricGraph& g, double x, double y, double snap_tol) {
             return g.xy_to_pte({x, y}, snap_tol);
           },
           py::arg("x"), py::arg("y"), py::arg("snap_tol"))
      .def("canonicalize", &MetricGraph::canonicalize);

  m.def(
      "build_graph",
      [](const std::vector<std::vector<std::pair<double, double>>>& segments,
         double merge_tol) {
        std::vector<std::vector<EuclideanPoint>> segs;
        segs.reserve(segments.size());
        for (const auto& s : segments) segs.push_back(to_points(s));
        return build_graph(segs, merge_tol);
      },
      py::arg("segments"), py::arg("merge_tol") = 1e-9);

  py::class_<Mesh>(m, "Mesh")
      .def_property_readonly("num_vertices", &Mesh::num_vertices)
      .def_property_readonly("num_intervals", &Mesh::num_intervals)
      .def("intervals_on_edge", &Mesh::intervals_on_edge)
      .def("vertex_location", &Mesh::vertex_location)
      .def("vertex_xy",
           [](const Mesh& mesh, int k) {
             const EuclideanPoint p = mesh.vertex_xy(k);
             return std::make_pair(p.x, p.y);
           })
      .def("locate", &Mesh::locate)
      .def("basis", [](const Mesh& mesh, const GraphLocation& loc) {
        const BasisEvaluation b = mesh.basis(loc);
        std::vector<int> idx(b.index.begin(), b.index.begin() + b.count);
        std::vector<double> w(b.weight.begin(), b.weight.begin() + b.count);
        return std::make_pair(idx, w);
      });

  m.def("build_mesh", &build_mesh, py::arg("graph"), py::arg("h_target"),
        py::keep_alive<0, 1>());
  m.def("evaluate_field", &evaluate_field);

  py::class_<HyperParams>(m, "HyperParams")
      .def(py::init<double, double>(), py::arg("rho"), py::arg("sigma2"))
      .def_readwrite("rho", &HyperParams::rho)
      .def_readwrite("sigma2", &HyperParams::sigma2)
      .def_property_readonly("kappa", &HyperParams::kappa)
      .def_property_readonly("tau2", &HyperParams::tau2);

  py::class_<SparseSym>(m, "SparseSym")
      .def_property_readonly("dim", &SparseSym::dim)
      .def("full", &SparseSym::full)
      .def("coeff", &SparseSym::coeff);

  m.def("assemble_mass", &assemble_mass);
  m.def("assemble_stiffness", &assemble_stiffness);
  m.def("precision", &precision, py::arg("mesh"), py::arg("theta"));
  m.def("sample_field", &sample_field, py::arg("factor"), py::arg("n_samples"),
        py::arg("seed"));
  m.def("marginal_variances",
        [](const CholeskyFactor& f) { return marginal_variances(f); });

  py::class_<CholeskyFactor>(m, "CholeskyFactor")
      .def(py::init<const SparseSym&>())
      .def_property_readonly("dim", &CholeskyFactor::dim)
      .def("log_det", &CholeskyFactor::log_det)
      .def("solve", &CholeskyFactor::solve)
      .def("sample",
           [](const CholeskyFactor& f, int n, std::uint64_t seed) {
             return sample_field(f, n, seed);
           },
           py::arg("n_samples"), py::arg("seed"))
      .def("marginal_variances", &CholeskyFactor::marginal_variances);

  py::class_<InterEdgeInterval>(m, "InterEdgeInterval")
      .def(py::init<int, double, double>(), py::arg("edge"),
           py::arg("t_start"), py::arg("t_end"))
      .def_readwrite("edge", &InterEdgeInterval::edge)
      .def_readwrite("t_start", &InterEdgeInterval::t_start)
      .def_readwrite("t_end", &InterEdgeInterval::t_end);

  py::class_<GraphPath>(m, "GraphPath")
      .def(py::init<const MetricGraph&, std::vector<InterEdgeInterval>>())
      .def_property_readonly("length", &GraphPath::length)
      .def_property_readonly("intervals", &GraphPath::intervals);

  m.def("path_from_waypoints", &path_from_waypoints);
  m.def("path_from_polyline",
        [](const MetricGraph& g,
           const std::vector<std::pair<double, double>>& polyline,
           double snap_tol) {
          return path_from_polyline(g, to_points(polyline), snap_tol);
        });
  m.def("midpoint", &midpoint);

  py::class_<IntegrationScheme>(m, "IntegrationScheme")
      .def_readonly("points", &IntegrationScheme::points)
      .def_readonly("weights", &IntegrationScheme::weights)
      .def_readonly("block", &IntegrationScheme::block);

  m.def("simpson_scheme", &simpson_scheme, py::arg("mesh"), py::arg("path"),
        py::arg("block") = 0);

  py::enum_<Link>(m, "Link")
      .value("identity", Link::Identity)
      .value("log", Link::Log);
  py::enum_<LineScale>(m, "LineScale")
      .value("unit", LineScale::Unit)
      .value("inverse_sq", LineScale::InverseSq);
  py::enum_<Support>(m, "Support").value("IM", Support::IM).value("SM", Support::SM);

  py::class_<NoiseModel>(m, "NoiseModel")
      .def(py::init([](double s2p, double s2l, LineScale sc) {
             return NoiseModel{s2p, s2l, sc};
           }),
           py::arg("sigma2_point"), py::arg("sigma2_line"),
           py::arg("scale") = LineScale::InverseSq)
      .def_readwrite("sigma2_point", &NoiseModel::sigma2_point)
      .def_readwrite("sigma2_line", &NoiseModel::sigma2_line);

  py::class_<PointObs>(m, "PointObs")
      .def(py::init([](const GraphLocation& loc, double value, int replicate) {
             return PointObs{loc, value, replicate};
           }),
           py::arg("location"), py::arg("value"), py::arg("replicate") = 0)
      .def_readwrite("location", &PointObs::location)
      .def_readwrite("value", &PointObs::value)
      .def_readwrite("replicate", &PointObs::replicate);

  py::class_<LineObs>(m, "LineObs")
      .def(py::init([](const GraphPath& path, double value, int replicate) {
             return LineObs{path, value, replicate};
           }),
           py::arg("path"), py::arg("value"), py::arg("replicate") = 0)
      .def_readwrite("value", &LineObs::value)
      .def_readwrite("replicate", &LineObs::replicate);

  py::class_<SparseDesign>(m, "SparseDesign")
      .def_readonly("A", &SparseDesign::A)
      .def_readonly("block", &SparseDesign::block);

  m.def("point_matrix", &point_matrix);
  m.def("line_matrix", &line_matrix, py::arg("mesh"), py::arg("paths"),
        py::arg("averaged"));
  m.def("average_covariate", &average_covariate);
  m.def("simulate_observations", &simulate_observations, py::arg("mesh"),
        py::arg("w"), py::arg("beta0"), py::arg("beta1"), py::arg("x"),
        py::arg("link"), py::arg("noise"), py::arg("point_locs"),
        py::arg("paths"), py::arg("seed"), py::arg("averaged_override") = -1);

  py::class_<Observations>(m, "Observations")
      .def_readwrite("points", &Observations::points)
      .def_readwrite("lines", &Observations::lines);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init([]() { return Dataset{}; }))
      .def(py::init([](const Observations& obs) {
             return Dataset{obs.points, obs.lines};
           }),
           py::arg("observations"))
      .def_readwrite("points", &Dataset::points)
      .def_readwrite("lines", &Dataset::lines)
      .def_property_readonly("num_replicates", &Dataset::num_replicates);

  py::class_<PriorSpec>(m, "PriorSpec")
      .def(py::init<>())
      .def_readwrite("fixed_effect_variance", &PriorSpec::fixed_effect_variance)
      .def_readwrite("alpha_sigma", &PriorSpec::alpha_sigma)
      .def_readwrite("beta_sigma", &PriorSpec::beta_sigma)
      .def_readwrite("mu_theta", &PriorSpec::mu_theta)
      .def_readwrite("sigma_theta", &PriorSpec::sigma_theta);

  py::class_<OptimizerOptions>(m, "OptimizerOptions")
      .def(py::init<>())
      .def_readwrite("max_outer", &OptimizerOptions::max_outer)
      .def_readwrite("multistart", &OptimizerOptions::multistart)
      .def_readwrite("hyper_mixture", &OptimizerOptions::hyper_mixture)
      .def_readwrite("hyper_init", &OptimizerOptions::hyper_init);

  py::class_<ModelSpec>(m, "ModelSpec")
      .def(py::init([](const Mesh& mesh, const CovariateField& x, Link link,
                       Support support, LineScale scale, int averaged_lines) {
             ModelSpec s;
             s.mesh = &mesh;
             s.covariate = x;
             s.link = link;
             s.support = support;
             s.scale = scale;
             s.averaged_lines = averaged_lines;
             return s;
           }),
           py::arg("mesh"), py::arg("covariate"),
           py::arg("link") = Link::Identity, py::arg("support") = Support::IM,
           py::arg("scale") = LineScale::InverseSq,
           py::arg("averaged_lines") = -1, py::keep_alive<1, 2>())
      .def_readwrite("link", &ModelSpec::link)
      .def_readwrite("support", &ModelSpec::support)
      .def_readwrite("averaged_lines", &ModelSpec::averaged_lines)
      .def_readwrite("prior", &ModelSpec::prior)
      .def_readwrite("opt", &ModelSpec::opt);

  py::class_<FitResult>(m, "FitResult")
      .def_readonly("hyper_mode", &FitResult::hyper_mode)
      .def_readonly("hyper_cov", &FitResult::hyper_cov)
      .def_readonly("eta_mean", &FitResult::eta_mean)
      .def_readonly("eta_sd", &FitResult::eta_sd)
      .def_readonly("fixed_mean", &FitResult::fixed_mean)
      .def_readonly("fixed_sd", &FitResult::fixed_sd)
      .def_readonly("iterations", &FitResult::iterations)
      .def_readonly("taylor_iterations", &FitResult::taylor_iterations)
      .def_readonly("converged", &FitResult::converged)
      .def_property_readonly("rho_hat", &FitResult::rho_hat)
      .def_property_readonly("sigma2_hat", &FitResult::sigma2_hat)
      .def_property_readonly("sigma2_point_hat", &FitResult::sigma2_point_hat)
      .def_property_readonly("sigma2_line_hat", &FitResult::sigma2_line_hat);

  m.def("log_marginal", &log_marginal);
  m.def("fit_linear", &fit_linear);
  m.def("fit_nonlinear", &fit_nonlinear);
  m.def("predict",
        [](const FitResult& fit, const std::vector<GraphLocation>& locs) {
          const std::vector<Prediction> preds = predict(fit, locs);
          std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> out;
          for (const Prediction& p : preds) out.emplace_back(p.mean, p.sd);
          return out;
        },
        py::arg("fit"), py::arg("locations") = std::vector<GraphLocation>{});
  m.def("posterior_sample", &posterior_sample, py::arg("fit"), py::arg("B"),
        py::arg("seed"));
  m.def("average_speed_estimand", [](const std::vector<Eigen::MatrixXd>& s) {
    const EstimandSummary e = average_speed_estimand(s);
    return std::make_tuple(e.median, e.lo95, e.hi95);
  });

  m.def("rmse", &rmse);
  m.def("crps_gaussian", &crps_gaussian);
  m.def("coverage", &coverage, py::arg("means"), py::arg("sds"),
        py::arg("truths"), py::arg("level") = 0.95);

  m.def("generate_covariate", &generate_covariate, py::arg("mesh"),
        py::arg("seed"), py::arg("rho_cov"), py::arg("sigma2_cov") = 3.0);
  m.def("desk_segments", []() {
    std::vector<std::vector<std::pair<double, double>>> out;
    for (const auto& seg : desk_segments()) {
      std::vector<std::pair<double, double>> s;
      for (const EuclideanPoint& p : seg) s.emplace_back(p.x, p.y);
      out.push_back(std::move(s));
    }
    return out;
  });
}
