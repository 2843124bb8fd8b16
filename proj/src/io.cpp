#include "graphfield/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace graphfield::io {

using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return j;
}

void dump_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  out << j.dump(2) << "\n";
}

double require_positive(const json& j, const char* key, double fallback) {
  const double v = j.value(key, fallback);
  if (!(v > 0.0)) throw ParseError(std::string(key) + " must be > 0");
  return v;
}

Link parse_link(const std::string& s) {
  if (s == "identity") return Link::Identity;
  if (s == "log") return Link::Log;
  throw ParseError("unknown link: " + s);
}

LineScale parse_scale(const std::string& s) {
  if (s == "unit") return LineScale::Unit;
  if (s == "inverse_sq") return LineScale::InverseSq;
  throw ParseError("unknown line_scale: " + s);
}

Support parse_support(const std::string& s) {
  if (s == "IM") return Support::IM;
  if (s == "SM") return Support::SM;
  throw ParseError("unknown model: " + s);
}

PriorSpec parse_prior(const json& j) {
  PriorSpec p;
  if (!j.contains("prior")) return p;
  const json& q = j.at("prior");
  p.fixed_effect_variance = require_positive(q, "V", p.fixed_effect_variance);
  p.alpha_sigma = require_positive(q, "alpha_sigma", p.alpha_sigma);
  p.beta_sigma = require_positive(q, "beta_sigma", p.beta_sigma);
  if (q.contains("mu_theta")) {
    p.mu_theta[0] = q.at("mu_theta").at(0).get<double>();
    p.mu_theta[1] = q.at("mu_theta").at(1).get<double>();
  }
  if (q.contains("sigma_theta")) {
    p.sigma_theta.setZero();
    p.sigma_theta(0, 0) = q.at("sigma_theta").at(0).get<double>();
    p.sigma_theta(1, 1) = q.at("sigma_theta").at(1).get<double>();
  }
  return p;
}

OptimizerOptions parse_optimizer(const json& j) {
  OptimizerOptions o;
  if (!j.contains("optimizer")) return o;
  const json& q = j.at("optimizer");
  o.max_outer = q.value("max_iter", o.max_outer);
  o.grad_tol = q.value("grad_tol", o.grad_tol);
  o.step_tol = q.value("step_tol", o.step_tol);
  o.fd_step = q.value("fd_step", o.fd_step);
  o.multistart = q.value("multistart", o.multistart);
  o.max_taylor = q.value("max_taylor", o.max_taylor);
  o.taylor_tol = q.value("taylor_tol", o.taylor_tol);
  return o;
}

}  // namespace

GraphFile read_graph_json(const std::string& path) {
  const json j = load_json(path);
  if (!j.contains("vertices") || !j.contains("edges"))
    throw ParseError(path + ": graph JSON needs \"vertices\" and \"edges\"");
  std::vector<EuclideanPoint> vertices;
  for (const auto& v : j.at("vertices"))
    vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
  std::vector<std::vector<EuclideanPoint>> segments;
  for (const auto& e : j.at("edges")) {
    std::vector<EuclideanPoint> geom;
    if (e.contains("geometry")) {
      for (const auto& p : e.at("geometry"))
        geom.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    } else {
      const int a = e.at("v").at(0).get<int>();
      const int b = e.at("v").at(1).get<int>();
      if (a < 0 || b < 0 || a >= static_cast<int>(vertices.size()) ||
          b >= static_cast<int>(vertices.size()))
        throw ParseError(path + ": edge endpoint out of range");
      geom.push_back(vertices[a]);
      geom.push_back(vertices[b]);
    }
    segments.push_back(std::move(geom));
  }
  GraphFile gf;
  try {
    gf.graph = build_graph(segments);
  } catch (const Error& e) {
    throw ParseError(path + ": " + e.what());
  }
  gf.crs = j.value("crs", "");
  if (j.contains("covariate")) {
    std::vector<double> cov = j.at("covariate").get<std::vector<double>>();
    if (cov.size() != segments.size())
      throw ParseError(path + ": covariate must have one value per edge");
    gf.edge_covariate = std::move(cov);
  }
  return gf;
}

void write_graph_json(const std::string& path, const MetricGraph& g,
                      const std::optional<std::vector<double>>& edge_covariate,
                      const std::string& crs) {
  json j;
  json verts = json::array();
  for (int v = 0; v < g.num_vertices(); ++v)
    verts.push_back({g.vertex(v).x, g.vertex(v).y});
  j["vertices"] = std::move(verts);
  json edges = json::array();
  for (int e = 0; e < g.num_edges(); ++e) {
    const Edge& ed = g.edge(e);
    json je;
    je["v"] = {ed.v_start, ed.v_end};
    json geom = json::array();
    for (const EuclideanPoint& p : ed.geometry) geom.push_back({p.x, p.y});
    je["geometry"] = std::move(geom);
    edges.push_back(std::move(je));
  }
  j["edges"] = std::move(edges);
  if (edge_covariate) j["covariate"] = *edge_covariate;
  if (!crs.empty()) j["crs"] = crs;
  dump_json(path, j);
}

std::vector<PathSpec> read_paths_json(const std::string& path) {
  const json j = load_json(path);
  std::vector<PathSpec> specs;
  for (const auto& p : j.at("paths")) {
    PathSpec s;
    s.id = p.at("id").get<int>();
    if (p.contains("waypoints")) {
      const json& w = p.at("waypoints");
      s.start = {w.at("start").at(0).get<int>(), w.at("start").at(1).get<double>()};
      s.end = {w.at("end").at(0).get<int>(), w.at("end").at(1).get<double>()};
      if (w.contains("via")) s.via = w.at("via").get<std::vector<int>>();
    } else if (p.contains("polyline")) {
      s.is_polyline = true;
      for (const auto& q : p.at("polyline"))
        s.polyline.push_back({q.at(0).get<double>(), q.at(1).get<double>()});
      s.snap_tol = p.value("snap_tol", s.snap_tol);
    } else {
      throw ParseError(path + ": path needs \"waypoints\" or \"polyline\"");
    }
    specs.push_back(std::move(s));
  }
  return specs;
}

void write_paths_json(const std::string& path, const std::vector<PathSpec>& specs) {
  json j;
  json arr = json::array();
  for (const PathSpec& s : specs) {
    json p;
    p["id"] = s.id;
    if (s.is_polyline) {
      json pl = json::array();
      for (const EuclideanPoint& q : s.polyline) pl.push_back({q.x, q.y});
      p["polyline"] = std::move(pl);
      p["snap_tol"] = s.snap_tol;
    } else {
      json w;
      w["start"] = {json(s.start.edge), json(s.start.t)};
      w["end"] = {json(s.end.edge), json(s.end.t)};
      w["via"] = s.via;
      p["waypoints"] = std::move(w);
    }
    arr.push_back(std::move(p));
  }
  j["paths"] = std::move(arr);
  dump_json(path, j);
}

std::vector<GraphPath> resolve_paths(const MetricGraph& g,
                                     const std::vector<PathSpec>& specs) {
  std::vector<GraphPath> out;
  out.reserve(specs.size());
  for (const PathSpec& s : specs) {
    if (s.is_polyline) {
      out.push_back(path_from_polyline(g, s.polyline, s.snap_tol));
    } else {
      out.push_back(path_from_waypoints(g, s.start, s.via, s.end));
    }
  }
  return out;
}

Observations read_obs_csv(const std::string& path,
                          const std::vector<GraphPath>& paths) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "type,edge,t,path_id,replicate,value")
    throw ParseError(path + ": bad observation CSV header");
  Observations obs;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[6];
    for (int i = 0; i < 6; ++i) {
      if (!std::getline(ss, f[i], i == 5 ? '\n' : ','))
        throw ParseError(path + ":" + std::to_string(lineno) + ": short row");
    }
    try {
      if (f[0] == "P") {
        obs.points.push_back({{std::stoi(f[1]), std::stod(f[2])},
                              std::stod(f[5]),
                              std::stoi(f[4])});
      } else if (f[0] == "L") {
        const int pid = std::stoi(f[3]);
        if (pid < 0 || pid >= static_cast<int>(paths.size()))
          throw ParseError(path + ":" + std::to_string(lineno) +
                           ": unknown path_id " + f[3]);
        obs.lines.push_back({paths[pid], std::stod(f[5]), std::stoi(f[4])});
      } else {
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": unknown row type " + f[0]);
      }
    } catch (const std::invalid_argument&) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": bad number");
    } catch (const std::out_of_range&) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": bad number");
    }
  }
  return obs;
}

void write_obs_csv(const std::string& path, const Observations& obs,
                   const std::vector<GraphPath>& paths) {
  // line observations are matched to their path by interval identity
  auto path_id_of = [&paths](const GraphPath& p) {
    for (std::size_t i = 0; i < paths.size(); ++i) {
      if (paths[i].intervals().size() != p.intervals().size()) continue;
      bool same = true;
      for (std::size_t k = 0; k < p.intervals().size() && same; ++k) {
        const auto& a = paths[i].intervals()[k];
        const auto& b = p.intervals()[k];
        same = a.edge == b.edge && a.t_start == b.t_start && a.t_end == b.t_end;
      }
      if (same) return static_cast<int>(i);
    }
    throw ParseError("write_obs_csv: line observation path not in path list");
  };
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  out << "type,edge,t,path_id,replicate,value\n";
  for (const PointObs& p : obs.points) {
    out << "P," << p.location.edge << "," << format_double(p.location.t) << ",,"
        << p.replicate << "," << format_double(p.value) << "\n";
  }
  for (const LineObs& l : obs.lines) {
    out << "L,,," << path_id_of(l.path) << "," << l.replicate << ","
        << format_double(l.value) << "\n";
  }
}

RunConfig read_run_config(const std::string& path) {
  const json j = load_json(path);
  RunConfig c;
  c.mesh_h = require_positive(j, "mesh_h", c.mesh_h);
  c.support = parse_support(j.value("model", "IM"));
  c.link = parse_link(j.value("link", "identity"));
  c.scale = parse_scale(j.value("line_scale", "inverse_sq"));
  if (j.contains("averaged_lines"))
    c.averaged_lines = j.at("averaged_lines").get<bool>() ? 1 : 0;
  c.prior = parse_prior(j);
  c.opt = parse_optimizer(j);
  c.seed = j.value("seed", c.seed);
  return c;
}

SimulateConfig read_simulate_config(const std::string& path) {
  const json j = load_json(path);
  SimulateConfig c;
  c.mesh_h = require_positive(j, "mesh_h", c.mesh_h);
  c.rho = require_positive(j, "rho", c.rho);
  c.sigma2 = require_positive(j, "sigma2", c.sigma2);
  c.replicates = j.value("replicates", c.replicates);
  if (c.replicates < 1) throw ParseError("replicates must be >= 1");
  c.beta0 = j.value("beta0", c.beta0);
  c.beta1 = j.value("beta1", c.beta1);
  c.sigma2_line = require_positive(j, "sigma2_line", c.sigma2_line);
  c.sigma2_point = require_positive(j, "sigma2_point", c.sigma2_point);
  c.link = parse_link(j.value("link", "identity"));
  c.scale = parse_scale(j.value("line_scale", "inverse_sq"));
  c.seed = j.value("seed", c.seed);
  c.cov_rho = require_positive(j, "cov_rho", c.cov_rho);
  c.cov_sigma2 = require_positive(j, "cov_sigma2", c.cov_sigma2);
  c.cov_seed = j.value("cov_seed", c.cov_seed);
  c.use_graph_covariate = j.value("use_graph_covariate", c.use_graph_covariate);
  return c;
}

StudyConfig read_study_config(const std::string& path) {
  const json j = load_json(path);
  StudyConfig c;
  c.graph = j.value("graph", c.graph);
  c.mesh_h = require_positive(j, "mesh_h", c.mesh_h);
  c.stop_spacing = require_positive(j, "stop_spacing", c.stop_spacing);
  c.seed = j.value("seed", c.seed);
  c.jobs = j.value("jobs", c.jobs);
  c.cov_rho_factor = require_positive(j, "cov_rho_factor", c.cov_rho_factor);
  c.cov_sigma2 = require_positive(j, "cov_sigma2", c.cov_sigma2);
  if (j.contains("models")) {
    c.run_im = false;
    c.run_sm = false;
    for (const auto& m : j.at("models")) {
      if (m.get<std::string>() == "IM") c.run_im = true;
      if (m.get<std::string>() == "SM") c.run_sm = true;
    }
  }
  if (!j.contains("scenarios")) throw ParseError(path + ": needs \"scenarios\"");
  int idx = 0;
  for (const auto& s : j.at("scenarios")) {
    Scenario scn;
    scn.name = s.value("name", "scenario" + std::to_string(idx));
    scn.rho_true = s.at("rho").get<double>();
    scn.sigma2_true = s.value("sigma2", scn.sigma2_true);
    scn.sigma2_line = s.value("sigma2_line", 0.25 * scn.sigma2_true);
    scn.sigma2_point = s.value("sigma2_point", 0.01 * scn.sigma2_true);
    scn.n_realizations = s.value("n_realizations", scn.n_realizations);
    scn.beta0_true = s.value("beta0", scn.beta0_true);
    scn.beta1_true = s.value("beta1", scn.beta1_true);
    const std::vector<int> Rs =
        s.contains("R") ? s.at("R").get<std::vector<int>>() : std::vector<int>{1};
    for (int R : Rs) {
      Scenario sr = scn;
      sr.replicates = R;
      sr.name = scn.name + "_R" + std::to_string(R);
      sr.seed_base = derive_seed(c.seed, idx);
      c.scenarios.push_back(sr);
      ++idx;
    }
  }
  return c;
}

void write_scores_csv(const std::string& path, const std::vector<StudyRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  out << "scenario,model,R,realization,rmse,crps,coverage,rho_hat,sigma2_hat,"
         "beta0_hat,beta1_hat,sigma2_point_hat,sigma2_line_hat,converged\n";
  for (const StudyRow& r : rows) {
    out << r.scenario << "," << r.model << "," << r.R << "," << r.realization
        << "," << format_double(r.rmse) << "," << format_double(r.crps) << ","
        << format_double(r.coverage) << "," << format_double(r.rho_hat) << ","
        << format_double(r.sigma2_hat) << "," << format_double(r.beta0_hat)
        << "," << format_double(r.beta1_hat) << ","
        << format_double(r.sigma2_point_hat) << ","
        << format_double(r.sigma2_line_hat) << "," << (r.converged ? 1 : 0)
        << "\n";
  }
}

void write_long_csv(const std::string& path, const std::vector<LongRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  out << "scenario,model,R,realization,metric,value\n";
  for (const LongRow& r : rows) {
    out << r.scenario << "," << r.model << "," << r.R << "," << r.realization
        << "," << r.metric << "," << format_double(r.value) << "\n";
  }
}

void write_fit_json(const std::string& path, const FitRecord& rec) {
  json j;
  j["hyper_mode"] = {rec.hyper_mode[0], rec.hyper_mode[1], rec.hyper_mode[2],
                     rec.hyper_mode[3]};
  json cov = json::array();
  for (int i = 0; i < 4; ++i) {
    json row = json::array();
    for (int k = 0; k < 4; ++k) row.push_back(rec.hyper_cov(i, k));
    cov.push_back(std::move(row));
  }
  j["hyper_cov"] = std::move(cov);
  j["fixed_mean"] = {rec.fixed_mean[0], rec.fixed_mean[1]};
  j["fixed_sd"] = {rec.fixed_sd[0], rec.fixed_sd[1]};
  j["iterations"] = rec.iterations;
  j["taylor_iterations"] = rec.taylor_iterations;
  j["final_step_norm"] = rec.final_step_norm;
  j["converged"] = rec.converged;
  if (rec.linearization_point.size() > 0) {
    std::vector<double> z(rec.linearization_point.data(),
                          rec.linearization_point.data() +
                              rec.linearization_point.size());
    j["linearization_point"] = z;
  }
  j["inputs"] = {{"graph", rec.graph_path},
                 {"obs", rec.obs_path},
                 {"paths", rec.paths_path},
                 {"config", rec.config_path}};
  dump_json(path, j);
}

FitRecord read_fit_json(const std::string& path) {
  const json j = load_json(path);
  FitRecord rec;
  for (int i = 0; i < 4; ++i) {
    rec.hyper_mode[i] = j.at("hyper_mode").at(i).get<double>();
    for (int k = 0; k < 4; ++k)
      rec.hyper_cov(i, k) = j.at("hyper_cov").at(i).at(k).get<double>();
  }
  rec.fixed_mean[0] = j.at("fixed_mean").at(0).get<double>();
  rec.fixed_mean[1] = j.at("fixed_mean").at(1).get<double>();
  rec.fixed_sd[0] = j.at("fixed_sd").at(0).get<double>();
  rec.fixed_sd[1] = j.at("fixed_sd").at(1).get<double>();
  rec.iterations = j.at("iterations").get<int>();
  rec.taylor_iterations = j.value("taylor_iterations", 0);
  rec.final_step_norm = j.value("final_step_norm", 0.0);
  rec.converged = j.at("converged").get<bool>();
  if (j.contains("linearization_point")) {
    const std::vector<double> z =
        j.at("linearization_point").get<std::vector<double>>();
    rec.linearization_point =
        Eigen::Map<const Eigen::VectorXd>(z.data(), z.size());
  }
  const json& in = j.at("inputs");
  rec.graph_path = in.at("graph").get<std::string>();
  rec.obs_path = in.at("obs").get<std::string>();
  rec.paths_path = in.at("paths").get<std::string>();
  rec.config_path = in.at("config").get<std::string>();
  return rec;
}

void write_predictions_csv(const std::string& path, const Mesh& mesh,
                           const std::vector<Prediction>& preds) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  out << "replicate,vertex,x,y,mean,sd\n";
  for (std::size_t r = 0; r < preds.size(); ++r) {
    for (int k = 0; k < mesh.num_vertices(); ++k) {
      const EuclideanPoint p = mesh.vertex_xy(k);
      out << r << "," << k << "," << format_double(p.x) << ","
          << format_double(p.y) << "," << format_double(preds[r].mean[k]) << ","
          << format_double(preds[r].sd[k]) << "\n";
    }
  }
}

}  // namespace graphfield::io
