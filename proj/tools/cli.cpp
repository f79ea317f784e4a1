#include "cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "gandyn/analytic_gan.hpp"
#include "gandyn/dynamics.hpp"
#include "gandyn/errors.hpp"
#include "gandyn/general_spectrum.hpp"
#include "gandyn/toy_gan.hpp"

namespace gandyn::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using numlin::format_double;

namespace {

// A subcommand plus what is needed to merge a JSON config into it and echo the result.
struct Command {
  CLI::App* app = nullptr;
  std::string config_path;
  std::vector<std::function<void(json&)>> echo;
};

template <class T>
CLI::Option* add(Command& c, const std::string& name, T& var, const std::string& help,
                 const std::string& alias = "") {
  std::string flags = "--" + name;
  if (!alias.empty()) flags += ",--" + alias;
  CLI::Option* opt = c.app->add_option(flags, var, help)->capture_default_str();
  if constexpr (requires { var.push_back(var.front()); }) opt->delimiter(',');
  c.echo.push_back([name, &var](json& j) { j[name] = var; });
  return opt;
}

Command make_command(CLI::App& app, const std::string& name, const std::string& help) {
  Command c;
  c.app = app.add_subcommand(name, help);
  c.app->add_option("--config", c.config_path, "JSON file whose keys are the long option names; flags win");
  return c;
}

std::string scalar_text(const json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_float()) return format_double(v.get<double>());
  if (v.is_number()) return v.dump();
  throw ValidationError("config key '" + key + "' must hold a number, string, boolean or array of those");
}

// Config values fill options the command line left unset.
void apply_config(Command& c) {
  if (c.config_path.empty()) return;
  std::ifstream in(c.config_path);
  if (!in) throw ValidationError("cannot open config file '" + c.config_path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(c.config_path + ": " + e.what());
  }
  if (!j.is_object()) throw ValidationError(c.config_path + ": config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    CLI::Option* opt = key == "config" ? nullptr : c.app->get_option_no_throw("--" + key);
    if (opt == nullptr) throw ValidationError("unknown config key '" + key + "'");
    if (opt->count() > 0) continue;
    std::vector<std::string> inputs;
    if (value.is_array()) {
      for (const json& e : value) inputs.push_back(scalar_text(e, key));
    } else {
      inputs.push_back(scalar_text(value, key));
    }
    opt->add_result(inputs);
    try {
      opt->run_callback();
    } catch (const CLI::ParseError& e) {
      throw ValidationError("config key '" + key + "': " + e.what());
    }
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

fs::path prepare_output(const Command& c, const std::string& dir, const std::string& command) {
  const fs::path out(dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw ValidationError("cannot create output directory '" + dir + "': " + ec.message());
  // Flat and keyed by option name, so the echo is itself a valid --config file.
  json echo = json::object();
  for (const auto& f : c.echo) f(echo);
  write_json(out / "config.json", echo);
  write_text(out / "command.txt", command + "\n");
  return out;
}

std::string ext_text(const ExtendedReal& x) { return x.is_infinite() ? "inf" : format_double(x.value()); }

template <class T>
std::string opt_text(const std::optional<T>& x) {
  if (!x) return "";
  if constexpr (std::is_same_v<T, ExtendedReal>) {
    return ext_text(*x);
  } else {
    return format_double(*x);
  }
}

std::vector<MethodKind> parse_methods(const std::vector<std::string>& names) {
  if (names.empty()) throw ValidationError("at least one method is required");
  std::vector<MethodKind> out;
  for (const std::string& n : names) out.push_back(parse_method(n));
  return out;
}

// SimGD ignores gamma, so it runs once at gamma = 0; every other method runs per gamma.
std::vector<MethodSpec> expand_methods(const std::vector<MethodKind>& kinds, const std::vector<double>& gammas) {
  if (gammas.empty()) throw ValidationError("at least one gamma is required");
  std::vector<MethodSpec> out;
  for (MethodKind k : kinds) {
    if (k == MethodKind::SimGD) {
      out.push_back({k, 0.0});
      continue;
    }
    for (double g : gammas) out.push_back({k, g});
  }
  for (const MethodSpec& m : out) m.validate();
  return out;
}

std::string method_tag(const MethodSpec& m) {
  if (m.kind == MethodKind::SimGD) return method_name(m.kind);
  return method_name(m.kind) + "_gamma_" + format_double(m.gamma);
}

GaussianGanConfig gaussian(const std::vector<double>& v, double sigma2, const std::string& loss) {
  GaussianGanConfig cfg;
  cfg.v = v;
  cfg.sigma2 = sigma2;
  cfg.loss = LossPair::preset(loss);
  cfg.validate();
  return cfg;
}

// ---- analyze ----

struct AnalyzeParams {
  double sigma2 = 0.04;
  std::vector<double> v{0.0, 4.0};
  std::string loss = "vanilla";
  std::vector<std::string> methods{"simgd", "onlygen", "onlydisc", "conopt", "jare"};
  std::vector<double> gamma{10.0};
  double eps = 1e-2;
  double c0 = 1.0;
  double c1 = 1.0;
  std::string out = "gandyn_out";
};

void register_analyze(Command& c, AnalyzeParams& p) {
  add(c, "sigma2", p.sigma2, "noise variance s2 > 0");
  add(c, "v", p.v, "real-data mean, comma separated");
  add(c, "loss", p.loss, "vanilla | wgan | reverse_kl");
  add(c, "methods", p.methods, "simgd, onlygen, onlydisc, conopt, jare", "method");
  add(c, "gamma", p.gamma, "regularization weights, comma separated");
  add(c, "eps", p.eps, "target accuracy for the iteration bounds");
  add(c, "c0", p.c0, "constant of the phase-factor iteration bound");
  add(c, "c1", p.c1, "constant of the conditioning-factor iteration bound");
  add(c, "out", p.out, "output directory");
}

int cmd_analyze(const Command& c, const AnalyzeParams& p, std::ostream& out) {
  const GaussianGanConfig cfg = gaussian(p.v, p.sigma2, p.loss);
  const std::vector<MethodSpec> specs = expand_methods(parse_methods(p.methods), p.gamma);
  for (const MethodSpec& m : specs) {
    if (m.kind == MethodKind::AdvExtrap) throw ValidationError("advextrap has no Jacobian to analyze; use simulate");
  }
  if (!(p.eps > 0.0 && p.eps < 1.0)) throw ValidationError("eps must be in (0, 1)");
  analytic::ReportOptions opts;
  opts.eps = p.eps;
  opts.c0 = p.c0;
  opts.c1 = p.c1;
  const fs::path dir = prepare_output(c, p.out, "analyze");

  std::ostringstream csv;
  std::ostringstream table;
  csv << "method,gamma,closed_form,zeta,tau,eta_max,n_bound_phase,n_bound_conditioning\n";
  table << std::left << std::setw(10) << "method" << std::setw(8) << "gamma" << std::setw(14) << "zeta"
        << std::setw(14) << "tau" << std::setw(14) << "eta_max" << std::setw(14) << "N_phase"
        << "N_conditioning\n";
  json files = json::array();
  for (const MethodSpec& m : specs) {
    const analytic::SpectrumReport r = analytic::report(cfg, m, opts);
    const std::string name = "report_" + method_tag(m) + ".json";
    write_json(dir / name, analytic::to_json(r));
    files.push_back(name);
    const std::optional<double> eta = r.eta_max_closed_form ? r.eta_max_closed_form : r.eta_max_numeric;
    csv << method_name(m.kind) << ',' << format_double(m.gamma) << ',' << (r.closed_form ? "true" : "false") << ','
        << ext_text(r.zeta) << ',' << ext_text(r.tau) << ',' << opt_text(eta) << ',' << opt_text(r.n_bound_phase)
        << ',' << opt_text(r.n_bound_conditioning) << '\n';
    auto cell = [](const std::string& s) { return s.empty() ? std::string("-") : s; };
    auto num = [](double x) {
      std::ostringstream s;
      s << std::setprecision(6) << x;
      return s.str();
    };
    auto ext = [&](const std::optional<ExtendedReal>& x) {
      if (!x) return std::string("-");
      return x->is_infinite() ? std::string("inf") : num(x->value());
    };
    table << std::setw(10) << method_name(m.kind) << std::setw(8) << num(m.gamma) << std::setw(14)
          << ext(r.zeta) << std::setw(14) << ext(r.tau) << std::setw(14) << cell(eta ? num(*eta) : "")
          << std::setw(14) << ext(r.n_bound_phase) << ext(r.n_bound_conditioning) << '\n';
    for (const std::string& note : r.notes) table << "  note (" << method_name(m.kind) << "): " << note << '\n';
  }
  write_text(dir / "summary.csv", csv.str());
  write_text(dir / "summary.txt", table.str());
  write_json(dir / "metadata.json", {{"command", "analyze"}, {"reports", files}});
  out << table.str();
  return 0;
}

// ---- simulate ----

struct SimulateParams {
  double sigma2 = 0.04;
  std::vector<double> v{0.0, 4.0};
  std::string loss = "vanilla";
  std::vector<std::string> methods{"simgd", "conopt", "jare"};
  double gamma = 10.0;
  double eta = 1e-3;
  std::size_t steps = 15000;
  std::uint64_t seed = 1;
  double init_radius = 0.05;
  std::size_t batch_size = 128;
  std::string optimizer = "sgd";
  std::string mode = "stochastic";
  double rmsprop_decay = 0.9;
  double rmsprop_eps = 1e-10;
  double divergence_threshold = 1e12;
  double eps = 1e-2;
  std::string out = "gandyn_out";
};

void register_run_options(Command& c, double& eta, std::size_t& steps, std::uint64_t& seed, std::size_t& batch,
                          std::string& optimizer, double& decay, double& rms_eps) {
  add(c, "eta", eta, "learning rate");
  add(c, "steps", steps, "iterations");
  add(c, "seed", seed, "random seed");
  add(c, "batch-size", batch, "minibatch size");
  add(c, "optimizer", optimizer, "sgd | rmsprop");
  add(c, "rmsprop-decay", decay, "RMSProp accumulator decay");
  add(c, "rmsprop-eps", rms_eps, "RMSProp denominator offset");
}

void register_simulate(Command& c, SimulateParams& p) {
  add(c, "sigma2", p.sigma2, "noise variance s2 > 0");
  add(c, "v", p.v, "real-data mean, comma separated");
  add(c, "loss", p.loss, "vanilla | wgan | reverse_kl");
  add(c, "methods", p.methods, "simgd, onlygen, onlydisc, conopt, jare, advextrap", "method");
  add(c, "gamma", p.gamma, "regularization weight");
  register_run_options(c, p.eta, p.steps, p.seed, p.batch_size, p.optimizer, p.rmsprop_decay, p.rmsprop_eps);
  add(c, "init-radius", p.init_radius, "initialization ball radius around the equilibrium");
  add(c, "mode", p.mode, "stochastic | linearized");
  add(c, "divergence-threshold", p.divergence_threshold, "distance at which a run counts as diverged");
  add(c, "eps", p.eps, "distance for the epsilon-iteration summary");
  add(c, "out", p.out, "output directory");
}

dynamics::RunConfig run_config(double eta, std::size_t steps, std::uint64_t seed, std::size_t batch,
                               const std::string& optimizer, double decay, double rms_eps) {
  dynamics::RunConfig run;
  run.eta = eta;
  run.steps = steps;
  run.seed = seed;
  run.batch_size = batch;
  run.optimizer = dynamics::parse_optimizer(optimizer);
  run.rmsprop.decay = decay;
  run.rmsprop.eps = rms_eps;
  return run;
}

int cmd_simulate(const Command& c, const SimulateParams& p, std::ostream& out) {
  const GaussianGanConfig cfg = gaussian(p.v, p.sigma2, p.loss);
  std::vector<MethodSpec> specs;
  for (MethodKind k : parse_methods(p.methods)) specs.push_back({k, k == MethodKind::SimGD ? 0.0 : p.gamma});
  for (const MethodSpec& m : specs) m.validate();
  dynamics::RunConfig run =
      run_config(p.eta, p.steps, p.seed, p.batch_size, p.optimizer, p.rmsprop_decay, p.rmsprop_eps);
  run.init_radius = p.init_radius;
  run.mode = dynamics::parse_mode(p.mode);
  run.divergence_threshold = p.divergence_threshold;
  // The library requires at least one step; a zero-step request keeps only the initial record.
  const bool zero_steps = p.steps == 0;
  if (zero_steps) run.steps = 1;
  run.validate();
  if (run.mode == dynamics::Mode::Linearized) {
    for (const MethodSpec& m : specs) {
      if (m.kind == MethodKind::AdvExtrap) throw ValidationError("linearized mode does not support advextrap");
    }
    if (run.optimizer != dynamics::Optimizer::Sgd) throw ValidationError("linearized mode needs the sgd optimizer");
  }
  if (!(p.eps > 0.0)) throw ValidationError("eps must be > 0");
  const fs::path dir = prepare_output(c, p.out, "simulate");

  bool diverged = false;
  json summary = json::array();
  for (const MethodSpec& m : specs) {
    dynamics::Trace trace = dynamics::simulate(cfg, m, run);
    dynamics::RunConfig shown = run;
    if (zero_steps) {
      trace.records.resize(1);
      shown.steps = 0;
    }
    const std::string tag = method_name(m.kind);
    {
      std::ofstream f(dir / ("trace_" + tag + ".csv"), std::ios::binary);
      dynamics::write_trace_csv(f, trace);
    }
    write_json(dir / ("metadata_" + tag + ".json"), dynamics::run_metadata(cfg, m, shown, trace));
    json row{{"method", tag}, {"gamma", m.gamma}};
    row["status"] = trace.status == dynamics::TraceStatus::Completed ? "completed" : "diverged";
    row["initial_d_norm"] = trace.records.front().d_norm;
    row["initial_g_norm"] = trace.records.front().g_norm;
    row["final_d_norm"] = trace.records.back().d_norm;
    row["final_g_norm"] = trace.records.back().g_norm;
    const auto eps_it = dynamics::epsilon_iterations(trace, p.eps);
    row["eps_iterations"] = eps_it ? json(*eps_it) : json(nullptr);
    if (trace.status == dynamics::TraceStatus::Completed && trace.records.size() >= 10) {
      row["contraction_last_20pct"] = dynamics::contraction_estimate(trace);
    }
    if (m.kind != MethodKind::AdvExtrap) {
      const numlin::Spectrum s = numlin::eig_real(analytic::jacobian(cfg, m));
      row["predicted_step_radius"] = analytic::spectral_radius_of_step(s.eigenvalues, run.eta);
    }
    if (trace.status == dynamics::TraceStatus::Diverged) {
      diverged = true;
      row["diverged_at"] = *trace.diverged_at;
      row["message"] = trace.message;
    }
    out << tag << ": " << row["status"].get<std::string>() << ", final d_norm "
        << format_double(trace.records.back().d_norm) << ", g_norm " << format_double(trace.records.back().g_norm)
        << '\n';
    summary.push_back(row);
  }
  write_json(dir / "summary.json", summary);
  return diverged ? 3 : 0;
}

// ---- mog ----

struct MogParams {
  std::vector<std::string> methods{"jare"};
  double gamma = 10.0;
  double eta = 1e-4;
  std::size_t steps = 10000;
  std::uint64_t seed = 1;
  std::size_t batch_size = 128;
  std::string optimizer = "rmsprop";
  double rmsprop_decay = 0.9;
  double rmsprop_eps = 1e-10;
  std::size_t mode_count = 8;
  double radius = 2.0;
  double mode_std = 0.06;
  std::size_t latent_dim = 64;
  double latent_scale = 2.0;
  std::size_t hidden = 16;
  std::size_t depth = 4;
  std::string objective = "minimax";
  std::string loss = "vanilla";
  std::size_t snapshot_every = 2000;
  std::size_t snapshot_count = 1024;
  bool svg = false;
  std::string out = "gandyn_out";
};

void register_mog(Command& c, MogParams& p) {
  add(c, "methods", p.methods, "simgd, onlygen, onlydisc, conopt, jare, advextrap", "method");
  add(c, "gamma", p.gamma, "regularization weight");
  register_run_options(c, p.eta, p.steps, p.seed, p.batch_size, p.optimizer, p.rmsprop_decay, p.rmsprop_eps);
  add(c, "mode-count", p.mode_count, "number of mixture components");
  add(c, "radius", p.radius, "circle radius r");
  add(c, "mode-std", p.mode_std, "per-mode standard deviation");
  add(c, "latent-dim", p.latent_dim, "generator input dimension");
  add(c, "latent-scale", p.latent_scale, "latent covariance scale (N(0, scale I))");
  add(c, "hidden", p.hidden, "units per hidden layer");
  add(c, "depth", p.depth, "hidden layers per network");
  add(c, "objective", p.objective, "minimax | non_saturating");
  add(c, "loss", p.loss, "vanilla | wgan | reverse_kl");
  add(c, "snapshot-every", p.snapshot_every, "iterations between sample snapshots");
  add(c, "snapshot-count", p.snapshot_count, "generated samples per snapshot");
  c.app->add_flag("--svg", p.svg, "also write SVG scatter plots")->capture_default_str();
  c.echo.push_back([&p](json& j) { j["svg"] = p.svg; });
  add(c, "out", p.out, "output directory");
}

int cmd_mog(const Command& c, const MogParams& p, std::ostream& out) {
  toy_gan::MogConfig cfg;
  cfg.mode_count = p.mode_count;
  cfg.radius = p.radius;
  cfg.mode_std = p.mode_std;
  cfg.latent_dim = p.latent_dim;
  cfg.latent_scale = p.latent_scale;
  cfg.validate();
  std::vector<MethodSpec> specs;
  for (MethodKind k : parse_methods(p.methods)) specs.push_back({k, k == MethodKind::SimGD ? 0.0 : p.gamma});
  for (const MethodSpec& m : specs) m.validate();
  const dynamics::RunConfig run =
      run_config(p.eta, p.steps, p.seed, p.batch_size, p.optimizer, p.rmsprop_decay, p.rmsprop_eps);
  dynamics::RunConfig checked = run;
  checked.steps = std::max<std::size_t>(run.steps, 1);
  checked.validate();
  if (p.hidden < 1 || p.depth < 1) throw ValidationError("hidden and depth must be >= 1");
  if (p.snapshot_every < 1 || p.snapshot_count < 1) throw ValidationError("snapshot cadence and size must be >= 1");
  toy_gan::MogOptions opts;
  opts.arch.generator = {p.latent_dim};
  opts.arch.discriminator = {2};
  for (std::size_t i = 0; i < p.depth; ++i) {
    opts.arch.generator.push_back(p.hidden);
    opts.arch.discriminator.push_back(p.hidden);
  }
  opts.arch.generator.push_back(2);
  opts.arch.discriminator.push_back(1);
  opts.loss = LossPair::preset(p.loss);
  if (p.objective == "minimax") {
    opts.objective = toy_gan::GeneratorObjective::Minimax;
  } else if (p.objective == "non_saturating") {
    opts.objective = toy_gan::GeneratorObjective::NonSaturating;
  } else {
    throw ValidationError("unknown objective '" + p.objective + "' (expected minimax or non_saturating)");
  }
  opts.snapshot_every = p.snapshot_every;
  opts.snapshot_count = p.snapshot_count;
  const fs::path dir = prepare_output(c, p.out, "mog");

  std::ostringstream coverage;
  coverage << "method,iteration,covered,hq_fraction";
  for (std::size_t k = 0; k < cfg.mode_count; ++k) coverage << ",mode_" << k;
  coverage << '\n';
  bool diverged = false;
  for (const MethodSpec& m : specs) {
    const toy_gan::MogResult r = toy_gan::train_mog(cfg, m, run, opts);
    const std::string tag = method_name(m.kind);
    for (const toy_gan::Snapshot& s : r.snapshots) {
      const std::string stem = "snapshot_" + tag + "_" + std::to_string(s.iteration);
      {
        std::ofstream f(dir / (stem + ".csv"), std::ios::binary);
        toy_gan::write_snapshot_csv(f, s);
      }
      if (p.svg) {
        std::ofstream f(dir / (stem + ".svg"), std::ios::binary);
        toy_gan::write_snapshot_svg(f, s, cfg);
      }
      const toy_gan::ModeCoverage cov = toy_gan::mode_coverage(s.samples, cfg);
      coverage << tag << ',' << s.iteration << ',' << cov.covered << ',' << format_double(cov.hq_fraction);
      for (std::size_t n : cov.per_mode) coverage << ',' << n;
      coverage << '\n';
      out << tag << " iteration " << s.iteration << ": " << cov.covered << " of " << cfg.mode_count
          << " modes, hq " << format_double(cov.hq_fraction) << '\n';
    }
    {
      std::ofstream f(dir / ("trace_" + tag + ".csv"), std::ios::binary);
      toy_gan::write_mog_trace_csv(f, r);
    }
    write_json(dir / ("metadata_" + tag + ".json"), toy_gan::mog_metadata(cfg, m, run, opts, r));
    if (r.status == dynamics::TraceStatus::Diverged) {
      diverged = true;
      out << tag << " diverged at iteration " << *r.diverged_at << ": " << r.message << '\n';
    }
  }
  write_text(dir / "coverage.csv", coverage.str());
  return diverged ? 3 : 0;
}

// ---- spectrum ----

struct SpectrumParams {
  std::string p_file;
  std::string q_file;
  std::size_t dim = 4;
  double p_scale = 1.0;
  double q_scale = 0.02;
  std::vector<double> gamma_grid{1e2, 1e3, 1e4};
  std::string out = "gandyn_out";
};

void register_spectrum(Command& c, SpectrumParams& p) {
  add(c, "p-file", p.p_file, "P matrix file (\"rows cols\" header, then rows); default p-scale * I");
  add(c, "q-file", p.q_file, "Q matrix file, symmetric negative semidefinite; default -q-scale * I");
  add(c, "dim", p.dim, "dimension of the synthetic isotropic P and Q");
  add(c, "p-scale", p.p_scale, "synthetic P = p-scale * I");
  add(c, "q-scale", p.q_scale, "synthetic Q = -q-scale * I");
  add(c, "gamma-grid", p.gamma_grid, "JARE weights for the large-gamma table, increasing");
  add(c, "out", p.out, "output directory");
}

int cmd_spectrum(const Command& c, const SpectrumParams& p, std::ostream& out) {
  std::optional<numlin::DenseMatrix> pm;
  std::optional<numlin::DenseMatrix> qm;
  if (!p.p_file.empty()) pm = numlin::read_matrix_file(p.p_file);
  if (!p.q_file.empty()) qm = numlin::read_matrix_file(p.q_file);
  if (!pm && !qm && p.dim < 1) throw ValidationError("dim must be >= 1");
  if (!pm) pm = numlin::DenseMatrix::identity(qm ? qm->rows() : p.dim) * p.p_scale;
  if (!qm) qm = numlin::DenseMatrix::identity(pm->cols()) * (-p.q_scale);
  const general_spectrum::BlockJacobian bj = general_spectrum::build(*pm, *qm);
  if (p.gamma_grid.empty()) throw ValidationError("gamma-grid must not be empty");
  const auto limit = general_spectrum::jare_limit(bj, p.gamma_grid);
  const fs::path dir = prepare_output(c, p.out, "spectrum");

  const general_spectrum::BalanceReport balance = general_spectrum::regime(bj);
  const general_spectrum::RayleighCheck rayleigh = general_spectrum::rayleigh_verify(bj);
  write_json(dir / "regime.json", general_spectrum::to_json(balance));
  write_json(dir / "rayleigh.json", general_spectrum::to_json(rayleigh));
  write_json(dir / "jare_limit.json", general_spectrum::to_json(limit));

  const numlin::Spectrum s = numlin::eig_real(bj.assembled());
  std::ostringstream eig;
  eig << "re,im\n";
  for (const Complex& l : s.eigenvalues) eig << format_double(l.real()) << ',' << format_double(l.imag()) << '\n';
  write_text(dir / "eigenvalues.csv", eig.str());

  std::ostringstream table;
  table << "gamma,max_relative_deviation,zero_targets\n";
  bool slope_ok = limit.size() >= 2;
  for (const auto& pt : limit) {
    table << format_double(pt.gamma) << ',' << format_double(pt.max_relative_deviation) << ',' << pt.zero_targets
          << '\n';
    slope_ok = slope_ok && pt.gamma > 0.0 && pt.max_relative_deviation > 0.0 && std::isfinite(pt.max_relative_deviation);
  }
  write_text(dir / "jare_limit.csv", table.str());

  json summary{{"regime", general_spectrum::regime_name(balance.regime)},
               {"rayleigh_max_residual", rayleigh.max_residual}};
  out << "regime: " << general_spectrum::regime_name(balance.regime) << '\n';
  out << "c = " << ext_text(balance.c) << ", c' = " << ext_text(balance.c_prime) << '\n';
  if (balance.predicted_zeta) out << "predicted zeta: " << ext_text(*balance.predicted_zeta) << '\n';
  if (balance.predicted_tau) out << "predicted tau: " << ext_text(*balance.predicted_tau) << '\n';
  for (const std::string& n : balance.notes) out << "note: " << n << '\n';
  out << "rayleigh max residual: " << format_double(rayleigh.max_residual) << '\n';
  out << table.str();
  if (slope_ok) {
    const double slope = general_spectrum::log_log_slope(limit);
    summary["log_log_slope"] = slope;
    out << "log-log slope of the deviation: " << format_double(slope) << '\n';
  }
  write_json(dir / "summary.json", summary);
  return 0;
}

// ---- sweep ----

struct SweepParams {
  std::vector<double> sigma2{0.04};
  std::vector<double> v_norm{4.0};
  std::size_t dim = 2;
  std::string loss = "vanilla";
  std::vector<std::string> methods{"simgd", "conopt", "jare"};
  std::vector<double> gamma{10.0};
  std::vector<double> eta{1e-3};
  std::size_t repeats = 1;
  std::size_t steps = 15000;
  std::uint64_t seed = 1;
  double init_radius = 0.05;
  std::size_t batch_size = 128;
  std::string optimizer = "sgd";
  double rmsprop_decay = 0.9;
  double rmsprop_eps = 1e-10;
  std::string mode = "stochastic";
  double eps = 1e-2;
  unsigned threads = 1;
  std::string out = "gandyn_out";
};

void register_sweep(Command& c, SweepParams& p) {
  add(c, "sigma2", p.sigma2, "noise variances, comma separated");
  add(c, "v-norm", p.v_norm, "real-data mean norms; v = (0, ..., 0, norm)");
  add(c, "dim", p.dim, "data dimension");
  add(c, "loss", p.loss, "vanilla | wgan | reverse_kl");
  add(c, "methods", p.methods, "simgd, onlygen, onlydisc, conopt, jare, advextrap", "method");
  add(c, "gamma", p.gamma, "regularization weights, comma separated");
  add(c, "eta", p.eta, "learning rates, comma separated");
  add(c, "repeats", p.repeats, "runs per cell, each with its own seed");
  add(c, "steps", p.steps, "iterations");
  add(c, "seed", p.seed, "base seed; row i uses seed + i");
  add(c, "init-radius", p.init_radius, "initialization ball radius around the equilibrium");
  add(c, "batch-size", p.batch_size, "minibatch size");
  add(c, "optimizer", p.optimizer, "sgd | rmsprop");
  add(c, "rmsprop-decay", p.rmsprop_decay, "RMSProp accumulator decay");
  add(c, "rmsprop-eps", p.rmsprop_eps, "RMSProp denominator offset");
  add(c, "mode", p.mode, "stochastic | linearized");
  add(c, "eps", p.eps, "distance for the epsilon-iteration column");
  add(c, "threads", p.threads, "worker threads; results do not depend on it");
  add(c, "out", p.out, "output directory");
}

int cmd_sweep(const Command& c, const SweepParams& p, std::ostream& out) {
  if (p.dim < 1) throw ValidationError("dim must be >= 1");
  if (p.sigma2.empty() || p.v_norm.empty() || p.eta.empty()) throw ValidationError("sweep axes must not be empty");
  if (p.repeats < 1) throw ValidationError("repeats must be >= 1");
  if (p.threads < 1) throw ValidationError("threads must be >= 1");
  std::vector<dynamics::SweepModel> models;
  for (double s2 : p.sigma2) {
    for (double mu : p.v_norm) {
      Vector v(p.dim, 0.0);
      v.back() = mu;
      models.push_back({"s2_" + format_double(s2) + "_mu_" + format_double(mu), gaussian(v, s2, p.loss)});
    }
  }
  const std::vector<MethodSpec> specs = expand_methods(parse_methods(p.methods), p.gamma);
  std::vector<dynamics::RunConfig> runs;
  for (double eta : p.eta) {
    for (std::size_t r = 0; r < p.repeats; ++r) {
      dynamics::RunConfig run =
          run_config(eta, p.steps, p.seed, p.batch_size, p.optimizer, p.rmsprop_decay, p.rmsprop_eps);
      run.init_radius = p.init_radius;
      run.mode = dynamics::parse_mode(p.mode);
      run.validate();
      runs.push_back(run);
    }
  }
  if (!(p.eps > 0.0)) throw ValidationError("eps must be > 0");
  const fs::path dir = prepare_output(c, p.out, "sweep");
  const auto rows = dynamics::sweep(models, specs, runs, p.seed, p.eps, p.threads);
  {
    std::ofstream f(dir / "sweep.csv", std::ios::binary);
    dynamics::write_sweep_csv(f, rows);
  }
  std::size_t diverged = 0;
  for (const auto& r : rows) diverged += r.status == dynamics::TraceStatus::Diverged ? 1 : 0;
  write_json(dir / "metadata.json",
             {{"command", "sweep"}, {"rows", rows.size()}, {"diverged_rows", diverged}, {"base_seed", p.seed}});
  out << rows.size() << " rows, " << diverged << " diverged\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Local convergence analysis and simulation of GAN training dynamics"};
  app.name("gandyn");
  app.require_subcommand(1);
  app.fallthrough(false);

  Command analyze = make_command(app, "analyze", "closed-form and numeric spectrum reports for the Gaussian model");
  AnalyzeParams ap;
  register_analyze(analyze, ap);
  Command simulate = make_command(app, "simulate", "stochastic or linearized training traces near equilibrium");
  SimulateParams sp;
  register_simulate(simulate, sp);
  Command mog = make_command(app, "mog", "train MLP GANs on a circular mixture of Gaussians");
  MogParams mp;
  register_mog(mog, mp);
  Command spectrum = make_command(app, "spectrum", "regime, Rayleigh check and large-gamma JARE table for [[0,-P],[P^T,Q]]");
  SpectrumParams pp;
  register_spectrum(spectrum, pp);
  Command sweep = make_command(app, "sweep", "grid of simulate runs, one CSV row each");
  SweepParams wp;
  register_sweep(sweep, wp);

  std::vector<std::string> argv_store{"gandyn"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (std::string& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (analyze.app->parsed()) {
      apply_config(analyze);
      return cmd_analyze(analyze, ap, out);
    }
    if (simulate.app->parsed()) {
      apply_config(simulate);
      return cmd_simulate(simulate, sp, out);
    }
    if (mog.app->parsed()) {
      apply_config(mog);
      return cmd_mog(mog, mp, out);
    }
    if (spectrum.app->parsed()) {
      apply_config(spectrum);
      return cmd_spectrum(spectrum, pp, out);
    }
    if (sweep.app->parsed()) {
      apply_config(sweep);
      return cmd_sweep(sweep, wp, out);
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 3;
  }
  return 2;
}

}  // namespace gandyn::cli
