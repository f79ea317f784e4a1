#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gandyn/analytic_gan.hpp"
#include "gandyn/regularizers.hpp"
#include "gandyn/rng.hpp"

namespace gandyn::dynamics {

enum class Optimizer { Sgd, RmsProp };
enum class Mode { Stochastic, Linearized };

std::string optimizer_name(Optimizer o);
Optimizer parse_optimizer(const std::string& s);
std::string mode_name(Mode m);
Mode parse_mode(const std::string& s);

/// s <- decay s + (1 - decay) d^2, w <- w + eta d / (sqrt(s) + eps), no momentum.
/// force_unit_accumulator pins s = 1 and eps = 0, which reduces the update to plain SGD.
struct RmsPropSettings {
  double decay = 0.9;
  double eps = 1e-10;
  bool force_unit_accumulator = false;
};

/// Per-run optimizer state: plain w <- w + eta d for SGD, accumulators for RMSProp.
class OptimizerState {
 public:
  OptimizerState(Optimizer kind, const RmsPropSettings& settings, std::size_t phi_dim, std::size_t theta_dim);
  void apply(double eta, const Gradients& d, ParamPoint& w);

 private:
  void apply_block(double eta, const Vector& d, Vector& acc, Vector& w) const;

  Optimizer kind_;
  RmsPropSettings s_;
  Vector acc_phi_;
  Vector acc_theta_;
};

struct RunConfig {
  double eta = 1e-3;
  std::size_t steps = 15000;
  std::uint64_t seed = 0;
  double init_radius = 0.05;
  std::size_t batch_size = 128;
  Optimizer optimizer = Optimizer::Sgd;
  Mode mode = Mode::Stochastic;
  RmsPropSettings rmsprop;
  // Explicit starting point; drawn from the init_radius ball around equilibrium when absent.
  std::optional<ParamPoint> initial;
  // Runs stop as diverged once |w - w*| exceeds this.
  double divergence_threshold = 1e12;
  bool record_states = false;

  void validate() const;
};

struct TraceRecord {
  std::size_t iteration = 0;
  double d_norm = 0.0;  // |theta - theta*|
  double g_norm = 0.0;  // |phi - phi*|
  double grad_phi = 0.0;
  double grad_theta = 0.0;

  double distance() const;
};

enum class TraceStatus { Completed, Diverged };

struct Trace {
  std::vector<TraceRecord> records;
  TraceStatus status = TraceStatus::Completed;
  std::optional<std::size_t> diverged_at;
  std::string message;
  std::vector<ParamPoint> states;  // only with record_states
};

/// Uniform direction on the sphere times a radius delta * U, around the equilibrium.
ParamPoint initial_point(const ParamPoint& equilibrium, double radius, SplitMix64& rng);

/// Stochastic mode: fresh minibatch every step through the regularizers module.
/// Linearized mode: w <- w* + (I + eta A)(w - w*) with A = analytic::jacobian (SGD only, no AdvExtrap).
Trace simulate(const GaussianGanConfig& model, const MethodSpec& method, const RunConfig& run);

/// Stochastic-mode loop on any oracle with a known equilibrium.
Trace simulate(GradientOracle& oracle, const ParamPoint& equilibrium, const MethodSpec& method,
               const RunConfig& run);

/// First k with |w_j - w*| <= eps for every j >= k. None for diverged traces or if never reached.
std::optional<std::size_t> epsilon_iterations(const Trace& trace, double eps);

/// Geometric-mean per-step ratio of |w - w*| over records [begin, end).
double contraction_estimate(const Trace& trace, std::size_t begin, std::size_t end);
/// Same over the trailing `fraction` of the records.
double contraction_estimate(const Trace& trace, double fraction = 0.2);

/// Per-step modulus ratio of the component y^T (w - w*) over records [begin, end); needs states.
double eigencomponent_contraction(const Trace& trace, const ParamPoint& equilibrium,
                                  std::span<const Complex> left_vector, std::size_t begin, std::size_t end);

/// Sign changes of (g_norm - mean of the previous `window` g_norms) over records [begin, end).
std::size_t oscillation_sign_changes(const Trace& trace, std::size_t window, std::size_t begin, std::size_t end);

struct SweepRow {
  std::size_t index = 0;
  std::string model_label;
  MethodSpec method;
  RunConfig run;
  TraceStatus status = TraceStatus::Completed;
  std::optional<std::size_t> diverged_at;
  double initial_distance = 0.0;
  double final_d_norm = 0.0;
  double final_g_norm = 0.0;
  std::optional<std::size_t> eps_iterations;
  std::optional<double> contraction;
};

struct SweepModel {
  std::string label;
  GaussianGanConfig config;
};

/// One row per (model, method, run) in that nesting order; row i runs with seed base_seed + i.
/// Rows run on up to `threads` workers; results do not depend on the thread count.
std::vector<SweepRow> sweep(const std::vector<SweepModel>& models, const std::vector<MethodSpec>& methods,
                            const std::vector<RunConfig>& runs, std::uint64_t base_seed, double eps = 1e-2,
                            unsigned threads = 1);

void write_trace_csv(std::ostream& out, const Trace& trace);
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);
nlohmann::json run_metadata(const GaussianGanConfig& model, const MethodSpec& method, const RunConfig& run,
                            const Trace& trace);

}  // namespace gandyn::dynamics
