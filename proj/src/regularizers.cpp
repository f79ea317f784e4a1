#include "gandyn/regularizers.hpp"

#include <cmath>

#include "gandyn/errors.hpp"

namespace gandyn {

double ParamPoint::norm() const { return std::sqrt(numlin::dot(phi, phi) + numlin::dot(theta, theta)); }

std::optional<Vector> GradientOracle::hvp(const ParamPoint&, HvpBlock, std::span<const double>) {
  return std::nullopt;
}

namespace regularizers {

namespace {

constexpr double kFlowTol = 1e-8;

bool input_is_theta(HvpBlock b) { return b == HvpBlock::PhiTheta || b == HvpBlock::ThetaTheta; }
bool output_is_phi(HvpBlock b) { return b == HvpBlock::PhiTheta || b == HvpBlock::PhiPhi; }

Gradients checked_gradients(GradientOracle& oracle, const ParamPoint& w) {
  Gradients g = oracle.gradients(w);
  if (g.phi.size() != oracle.phi_dim() || g.theta.size() != oracle.theta_dim()) {
    throw NumericalError("oracle returned gradients of the wrong size");
  }
  if (!numlin::all_finite(g.phi) || !numlin::all_finite(g.theta)) {
    throw NumericalError("oracle returned non-finite gradients");
  }
  return g;
}

}  // namespace

void UpdateRule::validate() const {
  method.validate();
  if (!std::isfinite(eta) || !(eta > 0.0)) throw ValidationError("step size eta must be finite and > 0");
}

void check_dimensions(const GradientOracle& oracle, const ParamPoint& w) {
  if (w.phi.size() != oracle.phi_dim() || w.theta.size() != oracle.theta_dim()) {
    throw ValidationError("parameter point has dimensions (" + std::to_string(w.phi.size()) + ", " +
                          std::to_string(w.theta.size()) + "), oracle expects (" +
                          std::to_string(oracle.phi_dim()) + ", " + std::to_string(oracle.theta_dim()) + ")");
  }
}

Vector hvp_fd(GradientOracle& oracle, const ParamPoint& w, std::span<const double> u, HvpBlock block) {
  check_dimensions(oracle, w);
  const std::size_t expected = input_is_theta(block) ? oracle.theta_dim() : oracle.phi_dim();
  if (u.size() != expected) throw ValidationError("probe vector has the wrong dimension");
  const double unorm = numlin::norm2(u);
  if (!(unorm > 0.0)) throw ValidationError("probe vector must be nonzero");
  const double h = 1e-4 * (1.0 + w.norm()) / unorm;
  if (!(h > 0.0) || !std::isfinite(h)) throw NumericalError("finite-difference step underflowed");

  ParamPoint plus = w;
  ParamPoint minus = w;
  Vector& p = input_is_theta(block) ? plus.theta : plus.phi;
  Vector& m = input_is_theta(block) ? minus.theta : minus.phi;
  for (std::size_t i = 0; i < u.size(); ++i) {
    p[i] += h * u[i];
    m[i] -= h * u[i];
  }
  if (plus == minus) throw NumericalError("finite-difference step underflowed");
  const Gradients gp = checked_gradients(oracle, plus);
  const Gradients gm = checked_gradients(oracle, minus);
  const Vector& a = output_is_phi(block) ? gp.phi : gp.theta;
  const Vector& b = output_is_phi(block) ? gm.phi : gm.theta;
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] - b[i]) / (2.0 * h);
  return out;
}

Vector hessian_vector(GradientOracle& oracle, const ParamPoint& w, std::span<const double> u, HvpBlock block) {
  if (auto exact = oracle.hvp(w, block, u)) return *std::move(exact);
  return hvp_fd(oracle, w, u, block);
}

Gradients update_direction(const MethodSpec& method, GradientOracle& oracle, const ParamPoint& w) {
  method.validate();
  check_dimensions(oracle, w);
  const Gradients g = checked_gradients(oracle, w);
  Gradients d{g.phi, g.theta};
  for (double& x : d.phi) x = -x;
  const double gamma = method.gamma;
  if (gamma == 0.0 && method.kind != MethodKind::AdvExtrap) return d;
  const bool zero_phi = numlin::norm2(g.phi) == 0.0;
  const bool zero_theta = numlin::norm2(g.theta) == 0.0;
  // Zero gradients give zero penalty terms; skipping them also keeps hvp_fd away from u = 0.
  auto product = [&](std::span<const double> u, bool u_zero, HvpBlock block, std::size_t out_dim) {
    return u_zero ? Vector(out_dim, 0.0) : hessian_vector(oracle, w, u, block);
  };
  switch (method.kind) {
    case MethodKind::SimGD:
      break;
    case MethodKind::OnlyGen:
      numlin::axpy(-gamma, product(g.theta, zero_theta, HvpBlock::PhiTheta, g.phi.size()), d.phi);
      break;
    case MethodKind::OnlyDisc:
      numlin::axpy(-gamma, product(g.phi, zero_phi, HvpBlock::ThetaPhi, g.theta.size()), d.theta);
      break;
    case MethodKind::JARE: {
      const Vector a = product(g.theta, zero_theta, HvpBlock::PhiTheta, g.phi.size());
      const Vector b = product(g.phi, zero_phi, HvpBlock::ThetaPhi, g.theta.size());
      numlin::axpy(-gamma, a, d.phi);
      numlin::axpy(-gamma, b, d.theta);
      break;
    }
    case MethodKind::ConOpt: {
      const Vector pp = product(g.phi, zero_phi, HvpBlock::PhiPhi, g.phi.size());
      const Vector pt = product(g.theta, zero_theta, HvpBlock::PhiTheta, g.phi.size());
      const Vector tp = product(g.phi, zero_phi, HvpBlock::ThetaPhi, g.theta.size());
      const Vector tt = product(g.theta, zero_theta, HvpBlock::ThetaTheta, g.theta.size());
      numlin::axpy(-gamma, pp, d.phi);
      numlin::axpy(-gamma, pt, d.phi);
      numlin::axpy(-gamma, tp, d.theta);
      numlin::axpy(-gamma, tt, d.theta);
      break;
    }
    case MethodKind::AdvExtrap:
      throw ValidationError("adversarial extrapolation has no single update direction");
  }
  return d;
}

namespace {

ParamPoint accept(ParamPoint next) {
  if (!next.all_finite()) throw DivergenceError("update produced non-finite parameters");
  return next;
}

}  // namespace

ParamPoint step(const UpdateRule& rule, GradientOracle& oracle, const ParamPoint& w) {
  rule.validate();
  if (rule.method.kind == MethodKind::AdvExtrap) {
    return adv_extrapolation_step(oracle, w, rule.eta, rule.method.gamma);
  }
  const Gradients d = update_direction(rule.method, oracle, w);
  ParamPoint next = w;
  numlin::axpy(rule.eta, d.phi, next.phi);
  numlin::axpy(rule.eta, d.theta, next.theta);
  return accept(std::move(next));
}

Gradients adv_extrapolation_direction(GradientOracle& oracle, const ParamPoint& w, double gamma) {
  MethodSpec{MethodKind::AdvExtrap, gamma}.validate();
  check_dimensions(oracle, w);
  const Gradients g = checked_gradients(oracle, w);
  ParamPoint theta_half{w.phi, w.theta};
  numlin::axpy(gamma / 2.0, g.theta, theta_half.theta);
  ParamPoint phi_half{w.phi, w.theta};
  numlin::axpy(-gamma / 2.0, g.phi, phi_half.phi);
  Gradients d{gamma == 0.0 ? g.phi : checked_gradients(oracle, theta_half).phi,
              gamma == 0.0 ? g.theta : checked_gradients(oracle, phi_half).theta};
  for (double& x : d.phi) x = -x;
  return d;
}

ParamPoint adv_extrapolation_step(GradientOracle& oracle, const ParamPoint& w, double eta, double gamma) {
  UpdateRule{{MethodKind::AdvExtrap, gamma}, eta}.validate();
  const Gradients d = adv_extrapolation_direction(oracle, w, gamma);
  ParamPoint next = w;
  numlin::axpy(eta, d.phi, next.phi);
  numlin::axpy(eta, d.theta, next.theta);
  return accept(std::move(next));
}

FlowDiagnosis check_flow_reversal(GradientOracle& oracle, const ParamPoint& w, const MethodSpec& method) {
  if (method.kind == MethodKind::AdvExtrap) {
    throw ValidationError("flow reversal is defined for the Gamma-based methods");
  }
  const Gradients g = checked_gradients(oracle, w);
  const Gradients d = update_direction(method, oracle, w);
  FlowDiagnosis out;
  const double gp = numlin::norm2(g.phi);
  const double gt = numlin::norm2(g.theta);
  out.inner_product_phi = -numlin::dot(d.phi, g.phi);
  out.inner_product_theta = numlin::dot(d.theta, g.theta);
  if (gp > 0.0) out.reversed_phi = out.inner_product_phi < -kFlowTol * numlin::norm2(d.phi) * gp;
  if (gt > 0.0) out.reversed_theta = out.inner_product_theta < -kFlowTol * numlin::norm2(d.theta) * gt;
  out.reversed = out.reversed_phi || out.reversed_theta;
  return out;
}

}  // namespace regularizers
}  // namespace gandyn
