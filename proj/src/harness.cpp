#include "fracpinn/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "fracpinn/errors.hpp"

namespace fracpinn {

using nlohmann::json;

double error_inf(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& exact) {
  if (predicted.rows() != exact.rows() || predicted.cols() != exact.cols())
    throw ValidationError("fields", "shape mismatch");
  if (predicted.size() == 0) return 0;
  return (predicted - exact).cwiseAbs().maxCoeff();
}

double error_l2(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& exact) {
  if (predicted.rows() != exact.rows() || predicted.cols() != exact.cols())
    throw ValidationError("fields", "shape mismatch");
  const double denom = exact.norm();
  if (!(denom > 0)) throw ValidationError("exact", "reference field is identically zero");
  return (predicted - exact).norm() / denom;
}

std::vector<double> convergence_rates(const std::vector<double>& errors) {
  std::vector<double> r;
  for (std::size_t i = 1; i < errors.size(); ++i) r.push_back(std::log2(errors[i - 1] / errors[i]));
  return r;
}

std::function<double(const Eigen::VectorXd&, double)> comparison_field(const ProblemSpec& problem) {
  if (problem.exact) {
    const SeparableSolution sol = *problem.exact;
    return [sol](const Eigen::VectorXd& x, double t) { return sol.value(x, t); };
  }
  if (problem.reference) return problem.reference;
  throw ValidationError("problem", problem.name + " has no comparison field");
}

SoeCertificate certificate(const SoeApprox<double>& soe) {
  return {soe.alpha, soe.eps, soe.dt_cutoff, soe.horizon, soe.size(), soe.measured_max_error, soe.verified_samples};
}

// ---------------------------------------------------------------------------------------------
// Report serialization

namespace {

json cert_json(const SoeCertificate& c) {
  return {{"alpha", c.alpha},         {"eps", c.eps},
          {"dt_cutoff", c.dt_cutoff}, {"horizon", c.horizon},
          {"nodes", c.nodes},         {"measured_max_error", c.measured_max_error},
          {"verified_samples", c.verified_samples}};
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::string report_to_json(const Report& r) {
  json j;
  j["problem"] = r.problem;
  j["method"] = r.method;
  j["config"] = r.config;
  j["seed"] = r.seed;
  j["levels"] = r.levels;
  j["e_inf"] = r.e_inf;
  j["e_2"] = r.e_2;
  j["rates_inf"] = r.rates_inf;
  j["rates_2"] = r.rates_2;
  j["estimates"] = r.estimates;
  j["soe"] = json::array();
  for (const auto& c : r.soe) j["soe"].push_back(cert_json(c));
  j["wall_ms"] = r.wall_ms;
  j["events"] = r.events;
  return j.dump(2);
}

Report report_from_json(const std::string& text) {
  const json j = json::parse(text);
  Report r;
  r.problem = j.at("problem").get<std::string>();
  r.method = j.at("method").get<std::string>();
  r.config = j.at("config").get<std::map<std::string, std::string>>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.levels = j.at("levels").get<std::vector<int>>();
  r.e_inf = j.at("e_inf").get<std::vector<double>>();
  r.e_2 = j.at("e_2").get<std::vector<double>>();
  r.rates_inf = j.at("rates_inf").get<std::vector<double>>();
  r.rates_2 = j.at("rates_2").get<std::vector<double>>();
  r.estimates = j.at("estimates").get<std::map<std::string, double>>();
  for (const auto& c : j.at("soe"))
    r.soe.push_back({c.at("alpha"), c.at("eps"), c.at("dt_cutoff"), c.at("horizon"), c.at("nodes"),
                     c.at("measured_max_error"), c.at("verified_samples")});
  r.wall_ms = j.at("wall_ms").get<std::vector<double>>();
  r.events = j.at("events").get<std::vector<std::string>>();
  return r;
}

std::string report_to_csv(const Report& r) {
  std::ostringstream out;
  out << "section,key,index,value\n";
  auto row = [&out](const std::string& section, const std::string& key, long index, const std::string& value) {
    out << section << ',' << csv_field(key) << ',' << index << ',' << csv_field(value) << '\n';
  };
  row("meta", "problem", 0, r.problem);
  row("meta", "method", 0, r.method);
  row("meta", "seed", 0, std::to_string(r.seed));
  for (const auto& [k, v] : r.config) row("config", k, 0, v);
  auto series = [&](const char* key, const std::vector<double>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) row("series", key, static_cast<long>(i), num(v[i]));
  };
  for (std::size_t i = 0; i < r.levels.size(); ++i) row("series", "levels", static_cast<long>(i), std::to_string(r.levels[i]));
  series("e_inf", r.e_inf);
  series("e_2", r.e_2);
  series("rates_inf", r.rates_inf);
  series("rates_2", r.rates_2);
  series("wall_ms", r.wall_ms);
  for (const auto& [k, v] : r.estimates) row("estimate", k, 0, num(v));
  for (std::size_t i = 0; i < r.soe.size(); ++i) {
    const auto& c = r.soe[i];
    const long idx = static_cast<long>(i);
    row("soe", "alpha", idx, num(c.alpha));
    row("soe", "eps", idx, num(c.eps));
    row("soe", "dt_cutoff", idx, num(c.dt_cutoff));
    row("soe", "horizon", idx, num(c.horizon));
    row("soe", "nodes", idx, std::to_string(c.nodes));
    row("soe", "measured_max_error", idx, num(c.measured_max_error));
    row("soe", "verified_samples", idx, std::to_string(c.verified_samples));
  }
  for (std::size_t i = 0; i < r.events.size(); ++i) row("event", "event", static_cast<long>(i), r.events[i]);
  return out.str();
}

Report report_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "section,key,index,value") throw ValidationError("csv", "missing header row");
  Report r;
  auto put = [](auto& vec, std::size_t idx, auto value) {
    if (vec.size() <= idx) vec.resize(idx + 1);
    vec[idx] = value;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 4) throw ValidationError("csv", "expected 4 fields: " + line);
    const std::string& section = f[0];
    const std::string& key = f[1];
    const auto idx = static_cast<std::size_t>(std::stol(f[2]));
    const std::string& value = f[3];
    if (section == "meta") {
      if (key == "problem") r.problem = value;
      else if (key == "method") r.method = value;
      else if (key == "seed") r.seed = std::stoull(value);
    } else if (section == "config") {
      r.config[key] = value;
    } else if (section == "series") {
      if (key == "levels") put(r.levels, idx, std::stoi(value));
      else if (key == "e_inf") put(r.e_inf, idx, std::strtod(value.c_str(), nullptr));
      else if (key == "e_2") put(r.e_2, idx, std::strtod(value.c_str(), nullptr));
      else if (key == "rates_inf") put(r.rates_inf, idx, std::strtod(value.c_str(), nullptr));
      else if (key == "rates_2") put(r.rates_2, idx, std::strtod(value.c_str(), nullptr));
      else if (key == "wall_ms") put(r.wall_ms, idx, std::strtod(value.c_str(), nullptr));
    } else if (section == "estimate") {
      r.estimates[key] = std::strtod(value.c_str(), nullptr);
    } else if (section == "soe") {
      if (r.soe.size() <= idx) r.soe.resize(idx + 1);
      auto& c = r.soe[idx];
      const double v = std::strtod(value.c_str(), nullptr);
      if (key == "alpha") c.alpha = v;
      else if (key == "eps") c.eps = v;
      else if (key == "dt_cutoff") c.dt_cutoff = v;
      else if (key == "horizon") c.horizon = v;
      else if (key == "nodes") c.nodes = std::stoi(value);
      else if (key == "measured_max_error") c.measured_max_error = v;
      else if (key == "verified_samples") c.verified_samples = std::stoi(value);
    } else if (section == "event") {
      put(r.events, idx, value);
    } else {
      throw ValidationError("csv", "unknown section " + section);
    }
  }
  return r;
}

std::string trace_to_csv(const std::vector<TraceRow>& trace) {
  std::vector<std::string> names;
  for (const auto& row : trace)
    for (const auto& [k, v] : row.estimates)
      if (std::find(names.begin(), names.end(), k) == names.end()) names.push_back(k);
  std::ostringstream out;
  out << "stage,iteration,loss,wall_ms";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (const auto& row : trace) {
    out << row.stage << ',' << row.iteration << ',' << num(row.loss) << ',' << num(row.wall_ms);
    for (const auto& n : names) {
      const auto it = row.estimates.find(n);
      out << ',' << (it == row.estimates.end() ? std::string() : num(it->second));
    }
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------------------------
// Runs

TimeMesh<double> make_mesh(const ProblemSpec& problem, int levels, const std::string& grading,
                           std::optional<double> grading_alpha) {
  const double a = grading_alpha.value_or(problem.alpha);
  MeshSpec<double> spec{problem.horizon, levels, parse_grading(grading, a), problem.alpha};
  spec.validate();
  return TimeMesh<double>::graded(spec);
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double default_time_exponent(const ProblemSpec& problem, double alpha) {
  return problem.initial_lift ? alpha : 1.0;
}

std::vector<int> hidden_for(const RunConfig& config, int levels) {
  return config.hidden_for_levels ? config.hidden_for_levels(levels) : config.hidden;
}

/// Errors of a field that gives values at (lattice, t_k): E_inf over nodes t_1..t_K, E_2 at t_K.
template <typename Field>
void lattice_errors(const ProblemSpec& problem, const TimeMesh<double>& mesh, int per_axis, Field&& field,
                    RunOutcome& out) {
  const auto exact = comparison_field(problem);
  const Eigen::MatrixXd grid = full_lattice(problem.domain, per_axis);
  const Eigen::Index G = grid.cols();
  double einf = 0;
  for (int k = 1; k <= mesh.levels(); ++k) {
    const double t = mesh.node(k);
    const Eigen::RowVectorXd pred = field(k, grid, t);
    Eigen::RowVectorXd ref(G);
    for (Eigen::Index c = 0; c < G; ++c) ref(c) = exact(grid.col(c), t);
    einf = std::max(einf, error_inf(pred, ref));
    if (k == mesh.levels()) out.e_2 = error_l2(pred, ref);
  }
  out.e_inf = einf;
}

RunOutcome run_scalar_scheme(const ProblemSpec& problem, bool fast, int levels, const RunConfig& config) {
  if (!problem.exact) throw ValidationError("problem", "scheme study needs an exact solution");
  const auto t0 = Clock::now();
  const TimeMesh<double> mesh = make_mesh(problem, levels, config.grading);
  const SeparableSolution& sol = *problem.exact;
  Eigen::VectorXd f = Eigen::VectorXd::Zero(levels + 1);
  for (int k = 1; k <= levels; ++k) f(k) = sol.time_caputo(problem.alpha, mesh.offset(k));
  RunOutcome out;
  out.levels = levels;
  Eigen::VectorXd y;
  if (fast) {
    const SoeApprox<double> soe = build_soe(problem.alpha, config.eps_soe, default_dt_cutoff(mesh), problem.horizon);
    out.soe = certificate(soe);
    y = solve_scalar_fast(build_fast_table(mesh, soe), sol.time_factor(0), f);
  } else {
    y = solve_scalar_direct(mesh, sol.time_factor(0), f);
  }
  double einf = 0;
  for (int k = 1; k <= levels; ++k) einf = std::max(einf, std::abs(y(k) - sol.time_factor(mesh.node(k))));
  out.e_inf = einf;
  out.e_2 = std::abs(y(levels) - sol.time_factor(mesh.node(levels))) / std::abs(sol.time_factor(mesh.node(levels)));
  out.wall_ms = ms_since(t0);
  return out;
}

}  // namespace

Eigen::VectorXd solve_scalar_direct(const TimeMesh<double>& mesh, double y0, const Eigen::VectorXd& f) {
  const int K = mesh.levels();
  if (f.size() != K + 1) throw ValidationError("source", "need K+1 entries");
  const KernelTable<double> table = build_kernel_table(mesh);
  Eigen::VectorXd y(K + 1);
  y(0) = y0;
  for (int k = 1; k <= K; ++k) {
    const auto& ks = table.level(k);
    double hist = 0;
    for (int n = 1; n < k; ++n) hist += ks.kernels(n) * (y(n) - y(n - 1));
    y(k) = y(k - 1) + (f(k) - hist) / ks.kernels(k);
  }
  return y;
}

Eigen::VectorXd solve_scalar_fast(const FastTable& table, double y0, const Eigen::VectorXd& f) {
  const int K = table.levels;
  if (f.size() != K + 1) throw ValidationError("source", "need K+1 entries");
  Eigen::VectorXd y(K + 1);
  y(0) = y0;
  HistoryState state(table.size(), 1);
  for (int k = 1; k <= K; ++k) {
    double hc = 0, beta = 0;
    if (k >= 2) {
      const int n = k - 1;
      const double g_prev = y(n) - y(n - 1);
      hc = table.weights.dot(table.decay.col(n).cwiseProduct(state.values.col(0)) + (table.c.col(n) - table.d.col(n)) * g_prev);
      beta = table.ratio(n) * table.weights.dot(table.d.col(n));
    }
    y(k) = y(k - 1) + (f(k) - hc) / (table.a0(k) + beta);
    if (k >= 2) {
      Eigen::Matrix<double, 1, 1> g1, g2;
      g1(0) = y(k - 1) - y(k - 2);
      g2(0) = y(k) - y(k - 1);
      history_update(state, table, k - 1, g1, g2);
    }
  }
  return y;
}

RunOutcome run_method(const ProblemSpec& problem, const std::string& method, int levels, const RunConfig& config) {
  if (method == "direct-scheme") return run_scalar_scheme(problem, false, levels, config);
  if (method == "fast-scheme") return run_scalar_scheme(problem, true, levels, config);
  if (method != "marching" && method != "stagewise")
    throw ValidationError("method", "unknown method '" + method + "'");
  const auto t0 = Clock::now();
  const ConstraintMode mode = config.mode.value_or(problem.mode);
  if (method == "marching" && mode != ConstraintMode::Hard)
    throw ValidationError("mode", "time marching needs the hard-constraint ansatz");
  const TimeMesh<double> mesh = make_mesh(problem, levels, config.grading);
  const SoeApprox<double> soe = build_soe(problem.alpha, config.eps_soe, default_dt_cutoff(mesh), problem.horizon);
  CollocationOptions copt;
  copt.per_axis = config.per_axis;
  copt.random_points = config.random_points;
  copt.seed = config.seed;
  const CollocationSet data = make_collocation(problem, copt, mode);
  const ResidualContext ctx = make_residual_context(problem, mesh, soe, data.points);
  const double p = config.time_exponent > 0 ? config.time_exponent : default_time_exponent(problem, problem.alpha);
  const TrialFunction trial = make_trial(problem, mode, p);
  Network net = make_network(problem, hidden_for(config, levels), config.seed, config.activation, config.scale);
  net.slope = config.slope_init;

  RunOutcome out;
  out.levels = levels;
  out.soe = certificate(soe);
  if (method == "marching") {
    MarchResult m = train_marching(problem, trial, net, ctx, config.train);
    out.final_loss = m.levels.back().final_loss;
    out.trace = std::move(m.trace);
    lattice_errors(problem, mesh, config.eval_per_axis,
                   [&](int k, const Eigen::MatrixXd& grid, double t) {
                     Network nk = net;
                     nk.unflatten(m.parameters[static_cast<std::size_t>(k)]);
                     return trial_field(trial, nk, grid, Eigen::RowVectorXd::Constant(grid.cols(), t));
                   },
                   out);
    out.net = m.net;
  } else {
    TrainResult r = train_stagewise(problem, trial, net, ctx, config.train, &data);
    out.final_loss = r.stages.back().final_loss;
    out.trace = std::move(r.trace);
    lattice_errors(problem, mesh, config.eval_per_axis,
                   [&](int, const Eigen::MatrixXd& grid, double t) {
                     return trial_field(trial, r.net, grid, Eigen::RowVectorXd::Constant(grid.cols(), t));
                   },
                   out);
    out.net = r.net;
  }
  out.wall_ms = ms_since(t0);
  return out;
}

RunOutcome run_inverse(const ProblemSpec& problem, int levels, const RunConfig& config) {
  if (problem.unknowns.empty()) throw ValidationError("problem", problem.name + " has no unknowns");
  const auto t0 = Clock::now();
  std::map<std::string, double> initial = config.initial;
  for (const auto& name : problem.unknowns)
    if (!initial.count(name)) throw ValidationError("initial", "missing starting value for " + name);
  const double alpha0 = initial.count("alpha") ? initial.at("alpha") : problem.alpha;

  // The grading and the working alpha follow the starting guess; the truth is never consulted.
  ProblemSpec working = problem;
  working.alpha = alpha0;
  const TimeMesh<double> mesh = make_mesh(working, levels, config.grading);
  double min_step = mesh.step(levels);
  for (int k = 2; k <= levels; ++k) min_step = std::min(min_step, mesh.step(k));
  const SoeApprox<double> soe = build_soe(alpha0, config.eps_soe, 0.5 * min_step, problem.horizon);

  CollocationOptions copt;
  copt.per_axis = config.per_axis;
  copt.random_points = config.random_points;
  copt.seed = config.seed;
  const ConstraintMode mode = config.mode.value_or(problem.mode);
  const CollocationSet data = make_collocation(problem, copt, mode);
  const ResidualContext ctx = make_residual_context(problem, mesh, soe, data.points);
  const double p = config.time_exponent > 0 ? config.time_exponent : default_time_exponent(problem, alpha0);
  const TrialFunction trial = make_trial(problem, mode, p);
  Network net = make_network(problem, hidden_for(config, levels), config.seed, config.activation, config.scale);
  net.slope = config.slope_init;

  TrainResult r = train_inverse(problem, trial, net, ctx, data, initial, config.train);
  RunOutcome out;
  out.levels = levels;
  out.soe = certificate(soe);
  out.estimates = r.estimates;
  out.events = r.events;
  out.final_loss = r.stages.back().final_loss;
  out.trace = std::move(r.trace);
  const TimeMesh<double> final_mesh = mesh.with_alpha(r.estimates.count("alpha") ? r.estimates.at("alpha") : alpha0);
  lattice_errors(problem, final_mesh, config.eval_per_axis,
                 [&](int, const Eigen::MatrixXd& grid, double t) {
                   return trial_field(trial, r.net, grid, Eigen::RowVectorXd::Constant(grid.cols(), t));
                 },
                 out);
  out.net = r.net;
  out.wall_ms = ms_since(t0);
  return out;
}

Report convergence_study(const ProblemSpec& problem, const std::string& method, const std::vector<int>& levels,
                         const RunConfig& config) {
  if (levels.empty()) throw ValidationError("levels", "empty list");
  for (std::size_t i = 1; i < levels.size(); ++i)
    if (levels[i] != 2 * levels[i - 1]) throw ValidationError("levels", "list must double strictly");
  Report r;
  r.problem = problem.name;
  r.method = method;
  r.seed = config.seed;
  r.levels = levels;
  for (int K : levels) {
    RunOutcome o;
    try {
      o = run_method(problem, method, K, config);
    } catch (const TrainingError& e) {
      throw TrainingError("K=" + std::to_string(K) + ": " + e.what(), e.index());
    }
    r.e_inf.push_back(o.e_inf);
    r.e_2.push_back(o.e_2);
    r.wall_ms.push_back(o.wall_ms);
    if (o.soe.nodes > 0) r.soe.push_back(o.soe);
  }
  r.rates_inf = convergence_rates(r.e_inf);
  r.rates_2 = convergence_rates(r.e_2);
  return r;
}

// ---------------------------------------------------------------------------------------------
// Config

namespace {
std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}
}  // namespace

std::map<std::string, std::string> parse_config(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError("config", "line " + std::to_string(lineno) + ": bad section header");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("config", "line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    if (key.empty()) throw ValidationError("config", "line " + std::to_string(lineno) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config", "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const std::map<std::string, std::string>& config,
                           std::uint64_t fallback) {
  if (flag) return *flag;
  if (const char* env = std::getenv("FRACPINN_SEED"); env && *env) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ValidationError("FRACPINN_SEED", "not an unsigned integer");
    }
  }
  if (const auto it = config.find("seed"); it != config.end()) {
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      throw ValidationError("seed", "not an unsigned integer");
    }
  }
  return fallback;
}

}  // namespace fracpinn
