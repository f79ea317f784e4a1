#include "gandyn/dynamics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ostream>
#include <thread>

#include "gandyn/errors.hpp"
#include "gandyn/oracles.hpp"

namespace gandyn::dynamics {

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

double diff_norm(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

class Recorder {
 public:
  Recorder(const ParamPoint& equilibrium, const RunConfig& run, Trace& trace)
      : eq_(equilibrium), run_(run), trace_(trace) {
    trace_.records.reserve(run.steps + 1);
  }

  // Returns false (and marks the trace) when w has left the threshold ball.
  bool record(std::size_t k, const ParamPoint& w, const Vector& grad_phi, const Vector& grad_theta) {
    TraceRecord r;
    r.iteration = k;
    r.d_norm = diff_norm(w.theta, eq_.theta);
    r.g_norm = diff_norm(w.phi, eq_.phi);
    r.grad_phi = numlin::norm2(grad_phi);
    r.grad_theta = numlin::norm2(grad_theta);
    const bool finite = std::isfinite(r.d_norm) && std::isfinite(r.g_norm) && std::isfinite(r.grad_phi) &&
                        std::isfinite(r.grad_theta);
    if (!finite || r.distance() > run_.divergence_threshold) {
      diverge(k, finite ? "distance to equilibrium exceeded the divergence threshold" : "non-finite state");
      return false;
    }
    trace_.records.push_back(r);
    if (run_.record_states) trace_.states.push_back(w);
    return true;
  }

  void diverge(std::size_t k, std::string why) {
    trace_.status = TraceStatus::Diverged;
    trace_.diverged_at = k;
    trace_.message = std::move(why);
  }

 private:
  const ParamPoint& eq_;
  const RunConfig& run_;
  Trace& trace_;
};

ParamPoint starting_point(const ParamPoint& equilibrium, const RunConfig& run) {
  if (run.initial) {
    if (run.initial->phi.size() != equilibrium.phi.size() || run.initial->theta.size() != equilibrium.theta.size()) {
      throw ValidationError("initial point has the wrong dimensions");
    }
    if (!run.initial->all_finite()) throw ValidationError("initial point must be finite");
    return *run.initial;
  }
  SplitMix64 rng(run.seed);
  return initial_point(equilibrium, run.init_radius, rng);
}

// Minibatches come from a stream independent of the initialization draw.
std::uint64_t batch_seed(std::uint64_t seed) { return seed ^ 0x5DEECE66DULL; }

Trace simulate_linearized(const GaussianGanConfig& model, const MethodSpec& method, const RunConfig& run) {
  if (method.kind == MethodKind::AdvExtrap) {
    throw ValidationError("linearized mode needs a Jacobian; adversarial extrapolation has none");
  }
  if (run.optimizer != Optimizer::Sgd) throw ValidationError("linearized mode iterates I + eta A and needs sgd");
  const std::size_t n = model.n();
  const numlin::DenseMatrix a = analytic::jacobian(model, method);
  const numlin::DenseMatrix h = analytic::hessian(model);
  const ParamPoint eq{model.v, Vector(n, 0.0)};
  const ParamPoint w0 = starting_point(eq, run);
  Vector x(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = w0.phi[i] - eq.phi[i];
    x[n + i] = w0.theta[i] - eq.theta[i];
  }

  Trace trace;
  Recorder rec(eq, run, trace);
  auto record = [&](std::size_t k) {
    ParamPoint w = eq;
    for (std::size_t i = 0; i < n; ++i) {
      w.phi[i] += x[i];
      w.theta[i] += x[n + i];
    }
    const Vector g = h.apply(x);
    return rec.record(k, w, Vector(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(n)),
                      Vector(g.begin() + static_cast<std::ptrdiff_t>(n), g.end()));
  };
  if (!record(0)) return trace;
  for (std::size_t k = 1; k <= run.steps; ++k) {
    const Vector ax = a.apply(x);
    numlin::axpy(run.eta, ax, x);
    if (!record(k)) return trace;
  }
  return trace;
}

}  // namespace

OptimizerState::OptimizerState(Optimizer kind, const RmsPropSettings& settings, std::size_t phi_dim,
                               std::size_t theta_dim)
    : kind_(kind), s_(settings), acc_phi_(phi_dim, 0.0), acc_theta_(theta_dim, 0.0) {}

void OptimizerState::apply_block(double eta, const Vector& d, Vector& acc, Vector& w) const {
  if (kind_ == Optimizer::Sgd || s_.force_unit_accumulator) {
    numlin::axpy(eta, d, w);
    return;
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    acc[i] = s_.decay * acc[i] + (1.0 - s_.decay) * d[i] * d[i];
    w[i] += eta * d[i] / (std::sqrt(acc[i]) + s_.eps);
  }
}

void OptimizerState::apply(double eta, const Gradients& d, ParamPoint& w) {
  apply_block(eta, d.phi, acc_phi_, w.phi);
  apply_block(eta, d.theta, acc_theta_, w.theta);
}

std::string optimizer_name(Optimizer o) { return o == Optimizer::Sgd ? "sgd" : "rmsprop"; }

Optimizer parse_optimizer(const std::string& s) {
  const std::string l = lower(s);
  if (l == "sgd") return Optimizer::Sgd;
  if (l == "rmsprop") return Optimizer::RmsProp;
  throw ValidationError("unknown optimizer '" + s + "' (expected sgd or rmsprop)");
}

std::string mode_name(Mode m) { return m == Mode::Stochastic ? "stochastic" : "linearized"; }

Mode parse_mode(const std::string& s) {
  const std::string l = lower(s);
  if (l == "stochastic") return Mode::Stochastic;
  if (l == "linearized") return Mode::Linearized;
  throw ValidationError("unknown mode '" + s + "' (expected stochastic or linearized)");
}

void RunConfig::validate() const {
  if (!std::isfinite(eta) || !(eta > 0.0)) throw ValidationError("eta must be finite and > 0");
  if (steps < 1) throw ValidationError("steps must be >= 1");
  if (!std::isfinite(init_radius) || !(init_radius > 0.0)) throw ValidationError("init_radius must be > 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(rmsprop.decay >= 0.0 && rmsprop.decay < 1.0)) throw ValidationError("rmsprop decay must be in [0, 1)");
  if (!(rmsprop.eps >= 0.0) || !std::isfinite(rmsprop.eps)) throw ValidationError("rmsprop eps must be >= 0");
  if (!(divergence_threshold > 0.0)) throw ValidationError("divergence threshold must be > 0");
}

double TraceRecord::distance() const { return std::hypot(d_norm, g_norm); }

ParamPoint initial_point(const ParamPoint& equilibrium, double radius, SplitMix64& rng) {
  const std::size_t m = equilibrium.phi.size();
  const std::size_t n = equilibrium.theta.size();
  Vector dir(m + n);
  double norm = 0.0;
  while (!(norm > 0.0)) {
    for (double& x : dir) x = rng.normal();
    norm = numlin::norm2(dir);
  }
  const double r = radius * rng.uniform();
  ParamPoint w = equilibrium;
  for (std::size_t i = 0; i < m; ++i) w.phi[i] += r * dir[i] / norm;
  for (std::size_t i = 0; i < n; ++i) w.theta[i] += r * dir[m + i] / norm;
  return w;
}

Trace simulate(GradientOracle& oracle, const ParamPoint& equilibrium, const MethodSpec& method,
               const RunConfig& run) {
  run.validate();
  method.validate();
  regularizers::check_dimensions(oracle, equilibrium);
  ParamPoint w = starting_point(equilibrium, run);
  Trace trace;
  Recorder rec(equilibrium, run, trace);
  OptimizerState opt(run.optimizer, run.rmsprop, oracle.phi_dim(), oracle.theta_dim());
  for (std::size_t k = 0;; ++k) {
    Gradients g;
    try {
      g = oracle.gradients(w);
    } catch (const NumericalError& e) {
      rec.diverge(k, e.what());
      return trace;
    }
    if (!rec.record(k, w, g.phi, g.theta)) return trace;
    if (k == run.steps) break;
    try {
      const Gradients d = method.kind == MethodKind::AdvExtrap
                              ? regularizers::adv_extrapolation_direction(oracle, w, method.gamma)
                              : regularizers::update_direction(method, oracle, w);
      opt.apply(run.eta, d, w);
      if (!w.all_finite()) throw DivergenceError("update produced non-finite parameters");
    } catch (const NumericalError& e) {
      rec.diverge(k + 1, e.what());
      return trace;
    }
    oracle.next_batch();
  }
  return trace;
}

Trace simulate(const GaussianGanConfig& model, const MethodSpec& method, const RunConfig& run) {
  model.validate();
  method.validate();
  run.validate();
  if (run.mode == Mode::Linearized) return simulate_linearized(model, method, run);
  MinibatchGanOracle oracle(model, run.batch_size, batch_seed(run.seed));
  return simulate(oracle, ParamPoint{model.v, Vector(model.n(), 0.0)}, method, run);
}

std::optional<std::size_t> epsilon_iterations(const Trace& trace, double eps) {
  if (!(eps > 0.0)) throw ValidationError("eps must be > 0");
  if (trace.status == TraceStatus::Diverged || trace.records.empty()) return std::nullopt;
  std::size_t k = trace.records.size();
  while (k > 0 && trace.records[k - 1].distance() <= eps) --k;
  if (k == trace.records.size()) return std::nullopt;
  return trace.records[k].iteration;
}

double contraction_estimate(const Trace& trace, std::size_t begin, std::size_t end) {
  if (begin >= end || end > trace.records.size()) throw ValidationError("contraction window is outside the trace");
  if (end - begin < 2) throw ValidationError("contraction window needs at least two records");
  double log_sum = 0.0;
  for (std::size_t k = begin; k < end; ++k) {
    const double d = trace.records[k].distance();
    if (!(d > 0.0)) throw NumericalError("zero distance inside the contraction window");
    if (k > begin) log_sum += std::log(d / trace.records[k - 1].distance());
  }
  return std::exp(log_sum / static_cast<double>(end - begin - 1));
}

double contraction_estimate(const Trace& trace, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("window fraction must be in (0, 1]");
  const std::size_t n = trace.records.size();
  const auto len = std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n))));
  if (len > n) throw ValidationError("trace is too short for a contraction window");
  return contraction_estimate(trace, n - len, n);
}

double eigencomponent_contraction(const Trace& trace, const ParamPoint& equilibrium,
                                  std::span<const Complex> left_vector, std::size_t begin, std::size_t end) {
  if (trace.states.size() != trace.records.size()) throw ValidationError("trace was recorded without states");
  if (begin >= end || end > trace.states.size() || end - begin < 2) {
    throw ValidationError("contraction window is outside the trace");
  }
  const std::size_t m = equilibrium.phi.size();
  if (left_vector.size() != m + equilibrium.theta.size()) throw ValidationError("left vector has the wrong size");
  auto component = [&](const ParamPoint& w) {
    Complex c = 0.0;
    for (std::size_t i = 0; i < m; ++i) c += left_vector[i] * (w.phi[i] - equilibrium.phi[i]);
    for (std::size_t i = 0; i < w.theta.size(); ++i) c += left_vector[m + i] * (w.theta[i] - equilibrium.theta[i]);
    return std::abs(c);
  };
  const double first = component(trace.states[begin]);
  const double last = component(trace.states[end - 1]);
  if (!(first > 0.0) || !(last > 0.0)) throw NumericalError("eigencomponent vanished inside the window");
  return std::exp(std::log(last / first) / static_cast<double>(end - begin - 1));
}

std::size_t oscillation_sign_changes(const Trace& trace, std::size_t window, std::size_t begin, std::size_t end) {
  if (window < 1) throw ValidationError("trailing window must be >= 1");
  if (begin < window || begin >= end || end > trace.records.size()) {
    throw ValidationError("oscillation range must leave room for the trailing window");
  }
  double sum = 0.0;
  for (std::size_t k = begin - window; k < begin; ++k) sum += trace.records[k].g_norm;
  std::size_t changes = 0;
  int last_sign = 0;
  for (std::size_t k = begin; k < end; ++k) {
    const double dev = trace.records[k].g_norm - sum / static_cast<double>(window);
    const int sign = dev > 0.0 ? 1 : (dev < 0.0 ? -1 : 0);
    if (sign != 0) {
      if (last_sign != 0 && sign != last_sign) ++changes;
      last_sign = sign;
    }
    sum += trace.records[k].g_norm - trace.records[k - window].g_norm;
  }
  return changes;
}

std::vector<SweepRow> sweep(const std::vector<SweepModel>& models, const std::vector<MethodSpec>& methods,
                            const std::vector<RunConfig>& runs, std::uint64_t base_seed, double eps,
                            unsigned threads) {
  if (models.empty() || methods.empty() || runs.empty()) throw ValidationError("sweep grid is empty");
  if (!(eps > 0.0)) throw ValidationError("eps must be > 0");
  std::vector<SweepRow> rows;
  for (const SweepModel& model : models) {
    model.config.validate();
    for (const MethodSpec& m : methods) {
      m.validate();
      for (const RunConfig& r : runs) {
        r.validate();
        SweepRow row;
        row.index = rows.size();
        row.model_label = model.label;
        row.method = m;
        row.run = r;
        row.run.seed = base_seed + row.index;
        rows.push_back(std::move(row));
      }
    }
  }
  const std::size_t per_model = methods.size() * runs.size();
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < rows.size(); i = next++) {
      SweepRow& row = rows[i];
      const Trace t = simulate(models[i / per_model].config, row.method, row.run);
      row.status = t.status;
      row.diverged_at = t.diverged_at;
      if (!t.records.empty()) {
        row.initial_distance = t.records.front().distance();
        row.final_d_norm = t.records.back().d_norm;
        row.final_g_norm = t.records.back().g_norm;
      }
      row.eps_iterations = epsilon_iterations(t, eps);
      if (t.status == TraceStatus::Completed) {
        try {
          row.contraction = contraction_estimate(t);
        } catch (const NumericalError&) {
          row.contraction = std::nullopt;
        }
      }
    }
  };
  const unsigned count = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(rows.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < count; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  return rows;
}

void write_trace_csv(std::ostream& out, const Trace& trace) {
  out << "iteration,d_norm,g_norm,grad_phi,grad_theta\n";
  for (const TraceRecord& r : trace.records) {
    out << r.iteration << ',' << numlin::format_double(r.d_norm) << ',' << numlin::format_double(r.g_norm) << ','
        << numlin::format_double(r.grad_phi) << ',' << numlin::format_double(r.grad_theta) << '\n';
  }
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "row,model,method,gamma,eta,seed,status,diverged_at,initial_distance,final_d_norm,final_g_norm,eps_iterations,contraction\n";
  for (const SweepRow& r : rows) {
    out << r.index << ',' << r.model_label << ',' << method_name(r.method.kind) << ','
        << numlin::format_double(r.method.gamma) << ',' << numlin::format_double(r.run.eta) << ',' << r.run.seed
        << ',' << (r.status == TraceStatus::Completed ? "completed" : "diverged") << ','
        << (r.diverged_at ? std::to_string(*r.diverged_at) : "") << ','
        << numlin::format_double(r.initial_distance) << ',' << numlin::format_double(r.final_d_norm)
        << ',' << numlin::format_double(r.final_g_norm) << ','
        << (r.eps_iterations ? std::to_string(*r.eps_iterations) : "") << ','
        << (r.contraction ? numlin::format_double(*r.contraction) : "") << '\n';
  }
}

nlohmann::json run_metadata(const GaussianGanConfig& model, const MethodSpec& method, const RunConfig& run,
                            const Trace& trace) {
  nlohmann::json j;
  j["model"] = {{"v", model.v}, {"sigma2", model.sigma2}, {"loss", model.loss.name}};
  j["method"] = {{"name", method_name(method.kind)}, {"gamma", method.gamma}};
  j["run"] = {{"eta", run.eta},
              {"steps", run.steps},
              {"seed", run.seed},
              {"init_radius", run.init_radius},
              {"batch_size", run.batch_size},
              {"optimizer", optimizer_name(run.optimizer)},
              {"mode", mode_name(run.mode)},
              {"divergence_threshold", run.divergence_threshold}};
  if (run.optimizer == Optimizer::RmsProp) {
    j["run"]["rmsprop"] = {{"decay", run.rmsprop.decay}, {"eps", run.rmsprop.eps}};
  }
  j["status"] = trace.status == TraceStatus::Completed ? "completed" : "diverged";
  j["diverged_at"] = trace.diverged_at ? nlohmann::json(*trace.diverged_at) : nlohmann::json(nullptr);
  if (!trace.message.empty()) j["message"] = trace.message;
  j["records"] = trace.records.size();
  return j;
}

}  // namespace gandyn::dynamics
