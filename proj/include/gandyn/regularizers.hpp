#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "gandyn/analytic_gan.hpp"
#include "gandyn/numlin.hpp"

namespace gandyn {

/// Raw generator/discriminator parameters (phi, theta).
struct ParamPoint {
  Vector phi;
  Vector theta;

  bool all_finite() const { return numlin::all_finite(phi) && numlin::all_finite(theta); }
  double norm() const;
  friend bool operator==(const ParamPoint&, const ParamPoint&) = default;
};

struct Gradients {
  Vector phi;    // grad_phi f
  Vector theta;  // grad_theta f
};

/// Second-derivative blocks of f. PhiTheta maps a theta-space vector to phi space
/// (d/dtheta of grad_phi f), ThetaPhi the reverse.
enum class HvpBlock { PhiTheta, ThetaPhi, PhiPhi, ThetaTheta };

class GradientOracle {
 public:
  virtual ~GradientOracle() = default;

  virtual std::size_t phi_dim() const = 0;
  virtual std::size_t theta_dim() const = 0;
  virtual Gradients gradients(const ParamPoint& w) = 0;

  // Exact Hessian-vector product, or nullopt when the oracle has none.
  virtual std::optional<Vector> hvp(const ParamPoint& w, HvpBlock block, std::span<const double> u);

  // Stochastic oracles resample here; every call in between sees the same f.
  virtual void next_batch() {}
};

namespace regularizers {

struct UpdateRule {
  MethodSpec method;
  double eta = 0.0;

  void validate() const;
};

/// Central difference of the output gradient block along u embedded in the input block,
/// with h = 1e-4 (1 + |w|) / |u|.
Vector hvp_fd(GradientOracle& oracle, const ParamPoint& w, std::span<const double> u, HvpBlock block);

/// Exact product when the oracle provides it, hvp_fd otherwise.
Vector hessian_vector(GradientOracle& oracle, const ParamPoint& w, std::span<const double> u, HvpBlock block);

/// Update direction d (the step is w + eta d) for the Gamma-based methods:
/// SimGD d = (-g_phi, g_theta); OnlyGen subtracts gamma H_phitheta g_theta from d_phi; OnlyDisc
/// subtracts gamma H_thetaphi g_phi from d_theta; JARE does both; ConOpt subtracts gamma H grad f.
/// ValidationError for AdvExtrap.
Gradients update_direction(const MethodSpec& method, GradientOracle& oracle, const ParamPoint& w);

/// One update. AdvExtrap dispatches to adv_extrapolation_step. Throws DivergenceError (and
/// leaves w untouched) when the result is not finite.
ParamPoint step(const UpdateRule& rule, GradientOracle& oracle, const ParamPoint& w);

/// Each player moves against the opponent's half-step prediction:
/// phi' = phi - eta grad_phi f(phi, theta + gamma/2 g_theta),
/// theta' = theta + eta grad_theta f(phi - gamma/2 g_phi, theta).
ParamPoint adv_extrapolation_step(GradientOracle& oracle, const ParamPoint& w, double eta, double gamma);

/// The direction d with adv_extrapolation_step(w) == w + eta d.
Gradients adv_extrapolation_direction(GradientOracle& oracle, const ParamPoint& w, double gamma);

struct FlowDiagnosis {
  bool reversed = false;
  bool reversed_phi = false;
  bool reversed_theta = false;
  // <d_phi, -grad_phi f> and <d_theta, grad_theta f>.
  double inner_product_phi = 0.0;
  double inner_product_theta = 0.0;
};

/// Flags a player whose regularized direction ascends its own objective:
/// <d, descent> < -tol |d| |grad|, tol = 1e-8.
FlowDiagnosis check_flow_reversal(GradientOracle& oracle, const ParamPoint& w, const MethodSpec& method);

void check_dimensions(const GradientOracle& oracle, const ParamPoint& w);

}  // namespace regularizers
}  // namespace gandyn
