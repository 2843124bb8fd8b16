// Command-line front end: mesh, sample, simulate, fit, predict, study,
// estimand, score. Exit codes: 0 ok, 1 numerical failure (results still
// written), 2 usage or parse error.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "graphfield/io.hpp"
#include "graphfield/scoring.hpp"

namespace fs = std::filesystem;
using namespace graphfield;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Mesh require_mesh(const MetricGraph& g, double h) {
  if (!(h > 0.0)) throw UsageError("h must be > 0");
  return build_mesh(g, h);
}

CovariateField covariate_from_edges(const Mesh& mesh,
                                    const std::vector<double>& per_edge) {
  CovariateField x(mesh.num_vertices());
  for (int k = 0; k < mesh.num_vertices(); ++k)
    x[k] = per_edge[mesh.vertex_location(k).edge];
  return x;
}

std::vector<GraphLocation> read_locations_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "edge,t")
    throw ParseError(path + ": expected header edge,t");
  std::vector<GraphLocation> locs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ParseError(path + ": bad location row");
    locs.push_back({std::stoi(line.substr(0, comma)),
                    std::stod(line.substr(comma + 1))});
  }
  return locs;
}

struct LoadedFit {
  io::FitRecord rec;
  std::unique_ptr<io::GraphFile> gf;
  Mesh mesh;
  std::vector<GraphPath> paths;
  Observations obs;
  io::RunConfig config;
  FitResult fit;
};

// Rebuild the latent conditional at the stored hyperparameter mode.
LoadedFit load_fit(const std::string& fit_json) {
  LoadedFit lf;
  lf.rec = io::read_fit_json(fit_json);
  lf.gf = std::make_unique<io::GraphFile>(io::read_graph_json(lf.rec.graph_path));
  lf.config = io::read_run_config(lf.rec.config_path);
  lf.mesh = build_mesh(lf.gf->graph, lf.config.mesh_h);
  lf.paths = io::resolve_paths(lf.gf->graph, io::read_paths_json(lf.rec.paths_path));
  lf.obs = io::read_obs_csv(lf.rec.obs_path, lf.paths);

  ModelSpec spec;
  spec.mesh = &lf.mesh;
  spec.support = lf.config.support;
  spec.link = lf.config.link;
  spec.scale = lf.config.scale;
  spec.averaged_lines = lf.config.averaged_lines;
  spec.prior = lf.config.prior;
  spec.opt = lf.config.opt;
  if (lf.gf->edge_covariate) {
    spec.covariate = covariate_from_edges(lf.mesh, *lf.gf->edge_covariate);
  } else {
    spec.covariate = CovariateField::Zero(lf.mesh.num_vertices());
  }
  Dataset data{lf.obs.points, lf.obs.lines};
  lf.fit = condition_at(spec, data, lf.rec.hyper_mode, lf.rec.linearization_point);
  return lf;
}

void write_estimand_csv(const std::string& path, const Mesh& mesh,
                        const EstimandSummary& a, const EstimandSummary* b) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  if (!b) {
    out << "vertex,x,y,median,lo95,hi95\n";
    for (int k = 0; k < mesh.num_vertices(); ++k) {
      const EuclideanPoint p = mesh.vertex_xy(k);
      out << k << "," << io::format_double(p.x) << "," << io::format_double(p.y)
          << "," << io::format_double(a.median[k]) << ","
          << io::format_double(a.lo95[k]) << "," << io::format_double(a.hi95[k])
          << "\n";
    }
    return;
  }
  out << "vertex,x,y,median_a,lo95_a,hi95_a,median_b,lo95_b,hi95_b,"
         "median_diff,width_ratio\n";
  for (int k = 0; k < mesh.num_vertices(); ++k) {
    const EuclideanPoint p = mesh.vertex_xy(k);
    const double wa = a.hi95[k] - a.lo95[k];
    const double wb = b->hi95[k] - b->lo95[k];
    out << k << "," << io::format_double(p.x) << "," << io::format_double(p.y)
        << "," << io::format_double(a.median[k]) << ","
        << io::format_double(a.lo95[k]) << "," << io::format_double(a.hi95[k])
        << "," << io::format_double(b->median[k]) << ","
        << io::format_double(b->lo95[k]) << "," << io::format_double(b->hi95[k])
        << "," << io::format_double(a.median[k] - b->median[k]) << ","
        << io::format_double(wb != 0.0 ? wa / wb : 1.0) << "\n";
  }
}

int run_mesh(const std::string& graph_path, double h) {
  const io::GraphFile gf = io::read_graph_json(graph_path);
  const Mesh mesh = require_mesh(gf.graph, h);
  double wmin = std::numeric_limits<double>::infinity(), wmax = 0.0;
  for (const MeshInterval& iv : mesh.intervals()) {
    wmin = std::min(wmin, iv.width);
    wmax = std::max(wmax, iv.width);
  }
  std::cout << "K=" << mesh.num_vertices()
            << " intervals=" << mesh.num_intervals()
            << " h_min=" << io::format_double(wmin)
            << " h_max=" << io::format_double(wmax) << "\n";
  return 0;
}

int run_sample(const std::string& graph_path, double h, double rho,
               double sigma2, int n, std::uint64_t seed,
               const std::string& out) {
  const io::GraphFile gf = io::read_graph_json(graph_path);
  const Mesh mesh = require_mesh(gf.graph, h);
  if (!(rho > 0.0) || !(sigma2 > 0.0) || n < 1)
    throw UsageError("need rho > 0, sigma2 > 0, n >= 1");
  const CholeskyFactor factor(precision(mesh, {rho, sigma2}));
  const Eigen::MatrixXd samples = sample_field(factor, n, seed);
  std::ofstream os(out);
  if (!os) throw ParseError("cannot write " + out);
  os << "vertex,x,y";
  for (int j = 0; j < n; ++j) os << ",s" << j;
  os << "\n";
  for (int k = 0; k < mesh.num_vertices(); ++k) {
    const EuclideanPoint p = mesh.vertex_xy(k);
    os << k << "," << io::format_double(p.x) << "," << io::format_double(p.y);
    for (int j = 0; j < n; ++j) os << "," << io::format_double(samples(k, j));
    os << "\n";
  }
  return 0;
}

int run_simulate(const std::string& graph_path, const std::string& paths_path,
                 const std::string& config_path,
                 const std::vector<std::string>& point_args,
                 const std::string& out_dir) {
  const io::GraphFile gf = io::read_graph_json(graph_path);
  const io::SimulateConfig cfg = io::read_simulate_config(config_path);
  const Mesh mesh = require_mesh(gf.graph, cfg.mesh_h);
  const std::vector<GraphPath> paths =
      io::resolve_paths(gf.graph, io::read_paths_json(paths_path));
  std::vector<GraphLocation> point_locs;
  for (const std::string& a : point_args) {
    const auto comma = a.find(',');
    if (comma == std::string::npos)
      throw UsageError("--point expects edge,t, got: " + a);
    point_locs.push_back(
        {std::stoi(a.substr(0, comma)), std::stod(a.substr(comma + 1))});
  }

  CovariateField x;
  if (cfg.use_graph_covariate && gf.edge_covariate) {
    x = covariate_from_edges(mesh, *gf.edge_covariate);
  } else {
    x = generate_covariate(mesh, cfg.cov_seed, cfg.cov_rho, cfg.cov_sigma2);
  }

  const CholeskyFactor factor(precision(mesh, {cfg.rho, cfg.sigma2}));
  Rng rng(derive_seed(cfg.seed, 1));
  const Eigen::MatrixXd ws = factor.sample(cfg.replicates, rng);
  std::vector<Eigen::VectorXd> w;
  for (int r = 0; r < cfg.replicates; ++r) w.push_back(ws.col(r));

  NoiseModel noise{cfg.sigma2_point, cfg.sigma2_line, cfg.scale};
  const Observations obs =
      simulate_observations(mesh, w, cfg.beta0, cfg.beta1, x, cfg.link, noise,
                            point_locs, paths, derive_seed(cfg.seed, 2));

  fs::create_directories(out_dir);
  io::write_obs_csv(out_dir + "/obs.csv", obs, paths);
  std::ofstream te(out_dir + "/truth_eta.csv");
  te << "replicate,vertex,value\n";
  for (int r = 0; r < cfg.replicates; ++r) {
    for (int k = 0; k < mesh.num_vertices(); ++k) {
      te << r << "," << k << ","
         << io::format_double(cfg.beta0 + cfg.beta1 * x[k] + w[r][k]) << "\n";
    }
  }
  std::ofstream cv(out_dir + "/covariate.csv");
  cv << "vertex,x,y,value\n";
  for (int k = 0; k < mesh.num_vertices(); ++k) {
    const EuclideanPoint p = mesh.vertex_xy(k);
    cv << k << "," << io::format_double(p.x) << "," << io::format_double(p.y)
       << "," << io::format_double(x[k]) << "\n";
  }
  std::cout << "wrote " << out_dir << "/obs.csv (" << obs.points.size()
            << " point rows, " << obs.lines.size() << " line rows)\n";
  return 0;
}

int run_fit(const std::string& graph_path, const std::string& obs_path,
            const std::string& paths_path, const std::string& config_path,
            const std::string& out_dir) {
  const io::GraphFile gf = io::read_graph_json(graph_path);
  const io::RunConfig cfg = io::read_run_config(config_path);
  const Mesh mesh = require_mesh(gf.graph, cfg.mesh_h);
  const std::vector<GraphPath> paths =
      io::resolve_paths(gf.graph, io::read_paths_json(paths_path));
  const Observations obs = io::read_obs_csv(obs_path, paths);

  ModelSpec spec;
  spec.mesh = &mesh;
  spec.support = cfg.support;
  spec.link = cfg.link;
  spec.scale = cfg.scale;
  spec.averaged_lines = cfg.averaged_lines;
  spec.prior = cfg.prior;
  spec.opt = cfg.opt;
  spec.covariate = gf.edge_covariate
                       ? covariate_from_edges(mesh, *gf.edge_covariate)
                       : CovariateField::Zero(mesh.num_vertices());
  Dataset data{obs.points, obs.lines};
  const FitResult fit = cfg.link == Link::Log ? fit_nonlinear(spec, data)
                                              : fit_linear(spec, data);

  fs::create_directories(out_dir);
  io::FitRecord rec;
  rec.hyper_mode = fit.hyper_mode;
  rec.hyper_cov = fit.hyper_cov;
  rec.fixed_mean = fit.fixed_mean;
  rec.fixed_sd = fit.fixed_sd;
  rec.iterations = fit.iterations;
  rec.taylor_iterations = fit.taylor_iterations;
  rec.final_step_norm = fit.final_step_norm;
  rec.converged = fit.converged;
  rec.linearization_point = fit.linearization_point;
  rec.graph_path = fs::absolute(graph_path).string();
  rec.obs_path = fs::absolute(obs_path).string();
  rec.paths_path = fs::absolute(paths_path).string();
  rec.config_path = fs::absolute(config_path).string();
  io::write_fit_json(out_dir + "/fit.json", rec);

  std::vector<Prediction> preds(fit.eta_mean.size());
  for (std::size_t r = 0; r < fit.eta_mean.size(); ++r)
    preds[r] = {fit.eta_mean[r], fit.eta_sd[r]};
  io::write_predictions_csv(out_dir + "/predictions.csv", mesh, preds);

  std::cout << "sigma2=" << io::format_double(fit.sigma2_hat())
            << " rho=" << io::format_double(fit.rho_hat())
            << " sigma2_P=" << io::format_double(fit.sigma2_point_hat())
            << " sigma2_L=" << io::format_double(fit.sigma2_line_hat())
            << " beta0=" << io::format_double(fit.fixed_mean[0])
            << " beta1=" << io::format_double(fit.fixed_mean[1])
            << " converged=" << (fit.converged ? 1 : 0) << "\n";
  return fit.converged ? 0 : 1;
}

int run_predict(const std::string& fit_path, const std::string& locations,
                const std::string& out) {
  const LoadedFit lf = load_fit(fit_path);
  if (locations.empty()) {
    std::vector<Prediction> preds(lf.fit.eta_mean.size());
    for (std::size_t r = 0; r < lf.fit.eta_mean.size(); ++r)
      preds[r] = {lf.fit.eta_mean[r], lf.fit.eta_sd[r]};
    io::write_predictions_csv(out, lf.mesh, preds);
  } else {
    const std::vector<GraphLocation> locs = read_locations_csv(locations);
    const std::vector<Prediction> preds = predict(lf.fit, locs);
    std::ofstream os(out);
    if (!os) throw ParseError("cannot write " + out);
    os << "replicate,location,x,y,mean,sd\n";
    for (std::size_t r = 0; r < preds.size(); ++r) {
      for (std::size_t j = 0; j < locs.size(); ++j) {
        const EuclideanPoint p = lf.mesh.graph().pte_to_xy(locs[j]);
        os << r << "," << j << "," << io::format_double(p.x) << ","
           << io::format_double(p.y) << ","
           << io::format_double(preds[r].mean[j]) << ","
           << io::format_double(preds[r].sd[j]) << "\n";
      }
    }
  }
  return 0;
}

int run_study(const std::string& config_path, const std::string& out_dir) {
  const io::StudyConfig cfg = io::read_study_config(config_path);
  MetricGraph g = cfg.graph == "desk"
                      ? build_graph(desk_segments())
                      : io::read_graph_json(cfg.graph).graph;
  const Mesh mesh = build_mesh(g, cfg.mesh_h);
  const StudyDesign design = desk_design(g, mesh, cfg.stop_spacing);
  double rho_min = std::numeric_limits<double>::infinity();
  for (const Scenario& s : cfg.scenarios) rho_min = std::min(rho_min, s.rho_true);
  const CovariateField x =
      generate_covariate(mesh, derive_seed(cfg.seed, 9001),
                         cfg.cov_rho_factor * rho_min, cfg.cov_sigma2);

  fs::create_directories(out_dir);
  std::vector<StudyRow> all_rows;
  for (const Scenario& scn : cfg.scenarios) {
    const std::vector<StudyRow> rows =
        run_scenario(scn, mesh, x, design, cfg.run_im, cfg.run_sm, cfg.jobs);
    fs::create_directories(out_dir + "/" + scn.name);
    io::write_scores_csv(out_dir + "/" + scn.name + "/scores.csv", rows);
    all_rows.insert(all_rows.end(), rows.begin(), rows.end());
    std::cout << scn.name << ": " << rows.size() << " rows\n";
  }
  io::write_scores_csv(out_dir + "/scores.csv", all_rows);
  io::write_long_csv(out_dir + "/scores_long.csv", summarize(all_rows));
  return 0;
}

int run_estimand(const std::string& fit_a, const std::string& fit_b, int B,
                 std::uint64_t seed, const std::string& out) {
  const LoadedFit a = load_fit(fit_a);
  const EstimandSummary sa =
      average_speed_estimand(posterior_sample(a.fit, B, seed));
  if (fit_b.empty()) {
    write_estimand_csv(out, a.mesh, sa, nullptr);
    return 0;
  }
  const LoadedFit b = load_fit(fit_b);
  const EstimandSummary sb =
      average_speed_estimand(posterior_sample(b.fit, B, seed));
  write_estimand_csv(out, a.mesh, sa, &sb);
  return 0;
}

int run_score(const std::string& pred_path, const std::string& truth_path,
              const std::string& out) {
  std::ifstream pin(pred_path);
  if (!pin) throw ParseError("cannot open " + pred_path);
  std::string line;
  std::getline(pin, line);
  if (line != "replicate,vertex,x,y,mean,sd")
    throw ParseError(pred_path + ": bad predictions header");
  std::map<std::pair<int, int>, std::pair<double, double>> pred;
  while (std::getline(pin, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[6];
    for (int i = 0; i < 6; ++i) std::getline(ss, f[i], ',');
    pred[{std::stoi(f[0]), std::stoi(f[1])}] = {std::stod(f[4]),
                                                std::stod(f[5])};
  }
  std::ifstream tin(truth_path);
  if (!tin) throw ParseError("cannot open " + truth_path);
  std::getline(tin, line);
  if (line != "replicate,vertex,value")
    throw ParseError(truth_path + ": bad truth header");
  std::vector<double> means, sds, truths;
  while (std::getline(tin, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[3];
    for (int i = 0; i < 3; ++i) std::getline(ss, f[i], ',');
    const auto it = pred.find({std::stoi(f[0]), std::stoi(f[1])});
    if (it == pred.end())
      throw ParseError("truth row without matching prediction: " + line);
    means.push_back(it->second.first);
    sds.push_back(it->second.second);
    truths.push_back(std::stod(f[2]));
  }
  const auto mv = [](const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
  };
  std::ofstream os(out);
  if (!os) throw ParseError("cannot write " + out);
  os << "rmse,crps,coverage\n";
  os << io::format_double(rmse(mv(means), mv(truths))) << ","
     << io::format_double(mean_crps(mv(means), mv(sds), mv(truths))) << ","
     << io::format_double(coverage(mv(means), mv(sds), mv(truths))) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Whittle-Matern fields on metric graphs with point and line "
               "observations"};
  app.require_subcommand(1);

  std::string graph_path, paths_path, config_path, obs_path, out, out_dir;
  std::string fit_a, fit_b, locations, pred_path, truth_path;
  double h = 0.05, rho = 0.35, sigma2 = 1.0;
  int n = 1, B = 100;
  std::uint64_t seed = 1;
  std::vector<std::string> point_args;

  auto* mesh_cmd = app.add_subcommand("mesh", "mesh summary for a graph");
  mesh_cmd->add_option("--graph", graph_path)->required();
  mesh_cmd->add_option("--mesh-h", h)->required();

  auto* sample_cmd =
      app.add_subcommand("sample", "draw GRF samples at mesh vertices");
  sample_cmd->add_option("--graph", graph_path)->required();
  sample_cmd->add_option("--mesh-h", h)->required();
  sample_cmd->add_option("--rho", rho)->required();
  sample_cmd->add_option("--sigma2", sigma2)->required();
  sample_cmd->add_option("--n", n);
  sample_cmd->add_option("--seed", seed);
  sample_cmd->add_option("--out", out)->required();

  auto* sim_cmd = app.add_subcommand("simulate", "simulate observations");
  sim_cmd->add_option("--graph", graph_path)->required();
  sim_cmd->add_option("--paths", paths_path)->required();
  sim_cmd->add_option("--config", config_path)->required();
  sim_cmd->add_option("--point", point_args,
                      "point observation location edge,t (repeatable)");
  sim_cmd->add_option("--out", out_dir)->required();

  auto* fit_cmd = app.add_subcommand("fit", "fit the hierarchical model");
  fit_cmd->add_option("--graph", graph_path)->required();
  fit_cmd->add_option("--obs", obs_path)->required();
  fit_cmd->add_option("--paths", paths_path)->required();
  fit_cmd->add_option("--config", config_path)->required();
  fit_cmd->add_option("--out", out_dir)->required();

  auto* pred_cmd = app.add_subcommand("predict", "predict from a stored fit");
  pred_cmd->add_option("--fit", fit_a)->required();
  pred_cmd->add_option("--locations", locations,
                       "CSV of edge,t rows (default: mesh vertices)");
  pred_cmd->add_option("--out", out)->required();

  auto* study_cmd = app.add_subcommand("study", "run the simulation study");
  study_cmd->add_option("--config", config_path)->required();
  study_cmd->add_option("--out", out_dir)->required();

  auto* est_cmd = app.add_subcommand("estimand", "averaged-speed estimand");
  est_cmd->add_option("--fit-a", fit_a)->required();
  est_cmd->add_option("--fit-b", fit_b);
  est_cmd->add_option("--B", B);
  est_cmd->add_option("--seed", seed);
  est_cmd->add_option("--out", out)->required();

  auto* score_cmd = app.add_subcommand("score", "score predictions vs truth");
  score_cmd->add_option("--pred", pred_path)->required();
  score_cmd->add_option("--truth", truth_path)->required();
  score_cmd->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (mesh_cmd->parsed()) return run_mesh(graph_path, h);
    if (sample_cmd->parsed())
      return run_sample(graph_path, h, rho, sigma2, n, seed, out);
    if (sim_cmd->parsed())
      return run_simulate(graph_path, paths_path, config_path, point_args,
                          out_dir);
    if (fit_cmd->parsed())
      return run_fit(graph_path, obs_path, paths_path, config_path, out_dir);
    if (pred_cmd->parsed()) return run_predict(fit_a, locations, out);
    if (study_cmd->parsed()) return run_study(config_path, out_dir);
    if (est_cmd->parsed()) return run_estimand(fit_a, fit_b, B, seed, out);
    if (score_cmd->parsed()) return run_score(pred_path, truth_path, out);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
