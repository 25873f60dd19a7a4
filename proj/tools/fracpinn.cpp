// Command-line front end: forward/inverse solves, convergence studies and numerical self-checks.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "fracpinn/caputo_direct.hpp"
#include "fracpinn/errors.hpp"
#include "fracpinn/harness.hpp"

namespace fs = std::filesystem;
using namespace fracpinn;
using nlohmann::json;

namespace {

/// Keys accepted both as flags and in config files.
const std::vector<std::string> kKeys = {"alpha",  "gamma",      "levels",   "eps-soe",       "seed",
                                        "out",    "report",     "tol",      "max-iters",     "activation",
                                        "scale-n", "mode",      "lr",       "lr-slope",      "lr-unknowns",
                                        "hidden", "per-axis",   "eval-per-axis", "method",   "dt-cutoff",
                                        "horizon", "init",      "slope-trainable", "time-exponent",
                                        "trace-every"};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ValidationError(key, "expected a number, got '" + v + "'");
  }
}

int to_int(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d != static_cast<int>(d)) throw ValidationError(key, "expected an integer, got '" + v + "'");
  return static_cast<int>(d);
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& s : split(v, ',')) out.push_back(to_int(key, s));
  if (out.empty()) throw ValidationError(key, "empty list");
  return out;
}

/// Merged settings: config file first, explicit flags on top.
class Settings {
 public:
  std::map<std::string, std::string> values;

  bool has(const std::string& k) const { return values.count(k) > 0; }
  std::string str(const std::string& k, const std::string& def) const { return has(k) ? values.at(k) : def; }
  double num(const std::string& k, double def) const { return has(k) ? to_double(k, values.at(k)) : def; }
  int integer(const std::string& k, int def) const { return has(k) ? to_int(k, values.at(k)) : def; }
};

RunConfig run_config(const Settings& s, std::uint64_t seed) {
  RunConfig c;
  c.grading = s.str("gamma", c.grading);
  c.eps_soe = s.num("eps-soe", c.eps_soe);
  c.train.tol = s.num("tol", c.train.tol);
  c.train.max_iters = s.integer("max-iters", c.train.max_iters);
  c.train.lr_network = s.num("lr", c.train.lr_network);
  c.train.lr_slope = s.num("lr-slope", c.train.lr_slope);
  c.train.lr_alpha = s.num("lr-unknowns", c.train.lr_alpha);
  c.train.lr_default_unknown = s.num("lr-unknowns", c.train.lr_default_unknown);
  c.train.slope_trainable = s.str("slope-trainable", "false") == "true";
  c.train.trace_every = s.integer("trace-every", c.train.trace_every);
  c.train.seed = seed;
  if (s.has("hidden")) c.hidden = to_int_list("hidden", s.str("hidden", ""));
  c.activation = parse_activation(s.str("activation", "tanh"));
  c.scale = s.integer("scale-n", c.scale);
  if (s.has("mode")) c.mode = parse_constraint_mode(s.str("mode", ""));
  c.per_axis = s.integer("per-axis", c.per_axis);
  c.eval_per_axis = s.integer("eval-per-axis", c.eval_per_axis);
  c.time_exponent = s.num("time-exponent", 0);
  c.seed = seed;
  for (const auto& kv : split(s.str("init", ""), ',')) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ValidationError("init", "expected name=value pairs");
    c.initial[kv.substr(0, eq)] = to_double("init", kv.substr(eq + 1));
  }
  return c;
}

json cert_to_json(const SoeCertificate& c) {
  return {{"alpha", c.alpha},         {"eps", c.eps},   {"dt_cutoff", c.dt_cutoff},
          {"horizon", c.horizon},     {"nodes", c.nodes}, {"measured_max_error", c.measured_max_error},
          {"verified_samples", c.verified_samples}};
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

/// Prints the report and mirrors it (plus the trace) into --out when given.
void emit(const Settings& s, const Report& report, const std::vector<TraceRow>* trace, const Network* net) {
  const std::string format = s.str("report", "json");
  if (format != "json" && format != "csv") throw ValidationError("report", "expected json or csv");
  const std::string text = format == "json" ? report_to_json(report) + "\n" : report_to_csv(report);
  std::cout << text;
  if (!s.has("out")) return;
  const fs::path dir = s.str("out", ".");
  fs::create_directories(dir);
  write_file(dir / (format == "json" ? "report.json" : "report.csv"), text);
  if (trace) write_file(dir / "trace.csv", trace_to_csv(*trace));
  if (net) save_snapshot((dir / "params.bin").string(), *net, {});
}

Report base_report(const std::string& problem, const std::string& method, const Settings& s, std::uint64_t seed) {
  Report r;
  r.problem = problem;
  r.method = method;
  r.config = s.values;
  r.config["seed"] = std::to_string(seed);
  r.seed = seed;
  return r;
}

int cmd_soe_check(const Settings& s) {
  const double alpha = s.num("alpha", 0.5);
  const double eps = s.num("eps-soe", 1e-8);
  const double dt = s.num("dt-cutoff", 1e-4);
  const double T = s.num("horizon", 1.0);
  const auto t0 = std::chrono::steady_clock::now();
  const SoeApprox<double> soe = build_soe(alpha, eps, dt, T);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  json j = cert_to_json(certificate(soe));
  j["within_tolerance"] = soe.measured_max_error <= eps;
  j["wall_ms"] = ms;
  std::cout << j.dump(2) << "\n";
  return soe.measured_max_error <= eps ? 0 : 1;
}

int cmd_kernel_check(const Settings& s) {
  const double alpha = s.num("alpha", 0.5);
  const std::vector<int> levels = to_int_list("levels", s.str("levels", "64"));
  const double gamma = parse_grading(s.str("gamma", "2/alpha"), alpha);
  json out = json::array();
  bool ok = true;
  for (int K : levels) {
    const TimeMesh<double> mesh = TimeMesh<double>::graded({s.num("horizon", 1.0), K, gamma, alpha});
    const KernelPropertyReport rep = check_kernel_properties(mesh);
    json preds = json::array();
    for (const auto& p : rep.predicates)
      preds.push_back({{"name", p.name},
                       {"gating", p.gating},
                       {"checked", p.checked},
                       {"violations", p.violations},
                       {"worst_margin", p.worst_margin}});
    ok = ok && rep.all_gating_hold();
    out.push_back({{"alpha", alpha}, {"gamma", gamma}, {"levels", K}, {"all_gating_hold", rep.all_gating_hold()},
                   {"predicates", preds}});
  }
  std::cout << out.dump(2) << "\n";
  return ok ? 0 : 1;
}

int cmd_activations_bench(const Settings& s) {
  const int scale = s.integer("scale-n", 1);
  const int samples = 200001;
  json out = json::array();
  for (Activation kind : {Activation::Sigmoid, Activation::Swish, Activation::SeLU, Activation::ReLU,
                          Activation::Tanh, Activation::XTanh}) {
    ad::Block u(1, samples);
    for (int i = 0; i < samples; ++i) u(0, i) = -5.0 + 10.0 * i / (samples - 1);
    const auto t0 = std::chrono::steady_clock::now();
    const auto d = activation_derivatives(kind, (scale * u).eval(), 2);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const ActivationValue at1 = activation_eval(kind, 1.0, scale, 0.5);
    out.push_back({{"activation", to_string(kind)},
                   {"samples", samples},
                   {"wall_ms", ms},
                   {"value_at_0.5", at1.value},
                   {"d1_at_0.5", at1.d1},
                   {"d2_at_0.5", at1.d2},
                   {"max_abs_d2", d[2].abs().maxCoeff()}});
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

std::optional<double> alpha_flag(const Settings& s) {
  if (!s.has("alpha")) return std::nullopt;
  return s.num("alpha", 0.5);
}

int cmd_solve(const Settings& s, const std::string& problem_name, const std::string& method, std::uint64_t seed) {
  const ProblemSpec problem = make_problem(problem_name, alpha_flag(s));
  const RunConfig cfg = run_config(s, seed);
  const int K = to_int_list("levels", s.str("levels", "16")).front();
  RunOutcome o = run_method(problem, method, K, cfg);
  Report r = base_report(problem.name, method, s, seed);
  r.levels = {K};
  r.e_inf = {o.e_inf};
  r.e_2 = {o.e_2};
  if (o.soe.nodes > 0) r.soe = {o.soe};
  r.wall_ms = {o.wall_ms};
  emit(s, r, &o.trace, o.net.widths.empty() ? nullptr : &o.net);
  return 0;
}

int cmd_inverse(const Settings& s, const std::string& problem_name, std::uint64_t seed) {
  const ProblemSpec problem = make_problem(problem_name, alpha_flag(s));
  const RunConfig cfg = run_config(s, seed);
  const int K = to_int_list("levels", s.str("levels", "8")).front();
  RunOutcome o = run_inverse(problem, K, cfg);
  Report r = base_report(problem.name, "inverse", s, seed);
  r.levels = {K};
  r.e_inf = {o.e_inf};
  r.e_2 = {o.e_2};
  r.soe = {o.soe};
  r.wall_ms = {o.wall_ms};
  r.estimates = o.estimates;
  r.events = o.events;
  emit(s, r, &o.trace, &o.net);
  return 0;
}

int cmd_converge(const Settings& s, const std::string& problem_name, std::uint64_t seed) {
  const ProblemSpec problem = make_problem(problem_name, alpha_flag(s));
  const RunConfig cfg = run_config(s, seed);
  const std::string method = s.str("method", "marching");
  Report r = convergence_study(problem, method, to_int_list("levels", s.str("levels", "8,16,32")), cfg);
  r.config = s.values;
  r.config["seed"] = std::to_string(seed);
  emit(s, r, nullptr, nullptr);
  return 0;
}

void print_error(const std::string& type, const std::string& message, const std::string& field = {}) {
  json e = {{"error", {{"type", type}, {"message", message}}}};
  if (!field.empty()) e["error"]["field"] = field;
  std::cerr << e.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fractional PINN solver with graded-mesh Alikhanov kernels and SOE history compression"};
  app.require_subcommand(1);
  app.fallthrough();

  std::map<std::string, std::string> flags;
  std::map<std::string, CLI::Option*> options;
  for (const auto& key : kKeys) options[key] = app.add_option("--" + key, flags[key]);
  options["levels"]->description("K or a comma list such as 8,16,32");
  options["gamma"]->description("1 | 2/alpha | (3-alpha)/alpha | <real>");
  options["report"]->check(CLI::IsMember({"json", "csv"}));
  options["mode"]->check(CLI::IsMember({"hard", "soft"}));
  std::string config_path;
  app.add_option("--config", config_path, "key = value file; flags override it");

  std::string problem_name;
  auto* forward = app.add_subcommand("solve-forward", "stage-wise training on one mesh");
  auto* inverse = app.add_subcommand("solve-inverse", "parameter identification from terminal data");
  auto* march = app.add_subcommand("march", "time-marching training on one mesh");
  auto* converge = app.add_subcommand("converge", "errors and rates over a doubling list of K");
  for (auto* sub : {forward, inverse, march, converge})
    sub->add_option("problem", problem_name, "one of: ntfsde1d ntfsde2d ntfsde3d burgers tffn1d tffn2d tfrd-inv tfac-inv")
        ->required();
  auto* soe_check = app.add_subcommand("soe-check", "build and certify a sum-of-exponentials kernel");
  auto* kernel_check = app.add_subcommand("kernel-check", "check discrete kernel properties on graded meshes");
  auto* bench = app.add_subcommand("activations-bench", "evaluate activation derivative stacks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    Settings s;
    if (!config_path.empty()) {
      s.values = load_config(config_path);
      for (const auto& [k, v] : s.values)
        if (std::find(kKeys.begin(), kKeys.end(), k) == kKeys.end() && k != "config")
          throw UsageError("unknown config key '" + k + "'");
    }
    for (const auto& key : kKeys)
      if (options[key]->count() > 0) s.values[key] = flags[key];

    std::optional<std::uint64_t> seed_flag;
    if (options["seed"]->count() > 0) seed_flag = static_cast<std::uint64_t>(to_int("seed", flags["seed"]));
    const std::uint64_t seed = resolve_seed(seed_flag, s.values, 1234);

    if (soe_check->parsed()) return cmd_soe_check(s);
    if (kernel_check->parsed()) return cmd_kernel_check(s);
    if (bench->parsed()) return cmd_activations_bench(s);
    if (forward->parsed()) return cmd_solve(s, problem_name, "stagewise", seed);
    if (march->parsed()) return cmd_solve(s, problem_name, "marching", seed);
    if (converge->parsed()) return cmd_converge(s, problem_name, seed);
    if (inverse->parsed()) return cmd_inverse(s, problem_name, seed);
    throw UsageError("no subcommand");
  } catch (const UsageError& e) {
    std::cerr << e.what() << "\n" << app.help();
    return 2;
  } catch (const ValidationError& e) {
    print_error("validation", e.what(), e.field());
    return 1;
  } catch (const ConstructionError& e) {
    print_error("construction", e.what());
    return 1;
  } catch (const TrainingError& e) {
    print_error("training", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("runtime", e.what());
    return 1;
  }
}
