#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gandyn/extended_real.hpp"
#include "gandyn/numlin.hpp"
#include "json.hpp"

namespace gandyn {

enum class LossKind { Vanilla, Wgan, ReverseKl, Custom };

/// The concave pair (g1, g2) of the objective f = E[g1(D(x))] + E[g2(D(G(z)))],
/// summarized by its derivatives at 0. The presets also carry the full functions.
struct LossPair {
  std::string name;
  double g1_d1 = 0.0;
  double g2_d1 = 0.0;
  double g1_d2 = 0.0;
  double g2_d2 = 0.0;
  LossKind kind = LossKind::Custom;

  static LossPair vanilla();
  static LossPair wgan();
  static LossPair reverse_kl();
  // "vanilla" | "wgan" | "reverse_kl"
  static LossPair preset(std::string_view name);

  // g1_d1 = -g2_d1 != 0 (an equilibrium at theta = 0 exists), both second derivatives <= 0,
  // and for anything but WGAN a strictly negative curvature sum.
  void validate() const;

  bool has_functions() const { return kind != LossKind::Custom; }
  // k-th derivative (k = 0..4) of g1 or g2 at t. ValidationError for custom pairs.
  double g1(int k, double t) const;
  double g2(int k, double t) const;
};

/// f(phi, theta) = E_x g1(theta^T x) + E_z g2(theta^T (phi + z)), x ~ N(v, s2 I), z ~ N(0, s2 I).
struct GaussianGanConfig {
  Vector v;
  double sigma2 = 1.0;
  LossPair loss = LossPair::vanilla();

  std::size_t n() const { return v.size(); }
  double beta2() const;
  void validate() const;
};

enum class MethodKind { SimGD, OnlyGen, OnlyDisc, ConOpt, JARE, AdvExtrap };

struct MethodSpec {
  MethodKind kind = MethodKind::SimGD;
  double gamma = 0.0;

  void validate() const;
};

std::string method_name(MethodKind kind);
// Case-insensitive; accepts simgd, onlygen, onlydisc, conopt, jare, advextrap.
MethodKind parse_method(std::string_view name);

namespace analytic {

/// Hessian of f at the equilibrium (phi, theta) = (v, 0): [[0, g2'I], [g2'I, (g1''+g2'')(s2 I + v v^T)]].
numlin::DenseMatrix hessian(const GaussianGanConfig& cfg);

/// (d grad~f / d w)^T with grad~f = (-grad_phi f, grad_theta f), at the equilibrium.
numlin::DenseMatrix simgd_jacobian(const GaussianGanConfig& cfg);

/// The regularization matrix applied to grad~f for a method (identity for SimGD).
numlin::DenseMatrix regularization_matrix(const GaussianGanConfig& cfg, const MethodSpec& method);

/// Gamma * simgd_jacobian. ValidationError for AdvExtrap and negative gamma.
numlin::DenseMatrix jacobian(const GaussianGanConfig& cfg, const MethodSpec& method);

struct Eigenvalue {
  Complex value;
  std::size_t multiplicity = 1;
};

/// Closed-form spectrum for the vanilla loss and SimGD / OnlyGen / OnlyDisc / JARE.
/// Identical values are merged (v = 0, or a zero discriminant).
std::vector<Eigenvalue> eigenvalues_closed_form(const GaussianGanConfig& cfg, const MethodSpec& method);
ComplexVector expand(const std::vector<Eigenvalue>& eigs);

/// Roots (-s +- sqrt(s^2 - c)) / 4 of 4 l^2 + 2 s l + c/4 = 0, computed without cancellation.
/// c = 4 for SimGD-like pairs and gamma^2 + 4 for JARE.
std::pair<Complex, Complex> quartic_pair(double s, double c);

struct ReportOptions {
  double eps = 1e-2;
  double c0 = 1.0;
  double c1 = 1.0;
};

struct SpectrumReport {
  MethodSpec method;
  ComplexVector eigenvalues;
  bool closed_form = false;
  ExtendedReal zeta;
  ExtendedReal tau;
  bool stable = false;
  // Open interval (0, eta_max); absent when no closed form exists or the spectrum is unstable.
  std::optional<double> eta_max_closed_form;
  std::optional<double> eta_max_numeric;
  // Absent when the closed-form bound does not apply (tau <= 2, or unstable).
  std::optional<ExtendedReal> n_bound_phase;
  std::optional<ExtendedReal> n_bound_conditioning;
  std::vector<std::string> notes;
};

SpectrumReport report(const GaussianGanConfig& cfg, const MethodSpec& method,
                      const ReportOptions& options = {});

/// sup{eta > 0 : max_i |1 + eta l_i| < 1} by bisection (relative width 1e-10).
/// nullopt when some eigenvalue has a nonnegative real part.
std::optional<double> eta_max_numeric(std::span<const Complex> eigenvalues);
/// Same supremum from the per-eigenvalue limits 2/|l| (real) and 2|Re l|/|l|^2 (complex).
std::optional<double> eta_max_per_eigenvalue(std::span<const Complex> eigenvalues, double tol);
double spectral_radius_of_step(std::span<const Complex> eigenvalues, double eta);

/// N >= 2 log(C0/eps) / log(1 + 1/zeta^2); 0 when zeta = 0.
ExtendedReal phase_iteration_bound(ExtendedReal zeta, double eps, double c0);
/// N > log(eps/C1) / log(1 - 2/tau) for tau > 2; nullopt otherwise.
std::optional<ExtendedReal> conditioning_iteration_bound(ExtendedReal tau, double eps, double c1);

nlohmann::json to_json(const SpectrumReport& r);

/// tau(M) * (1 + gamma |l_max(M)|) / (1 + gamma |l_min(M)|), the lower bound on the ConOpt
/// condition ratio in terms of the SimGD Jacobian M.
double conopt_tau_lower_bound(const GaussianGanConfig& cfg, double gamma);

struct CurvePoint {
  double gamma;
  double zeta;
  double tau;
};

/// zeta(gamma) and tau(gamma) for JARE from the closed forms with
/// h1 = (gamma^2+4)/(s2+gamma)^2 and h2 = (beta2+gamma)^2/(gamma^2+4).
/// Requires the vanilla loss, s2 < 2 < beta2, and a strictly increasing nonnegative grid.
std::vector<CurvePoint> jare_monotonicity_curve(const GaussianGanConfig& cfg,
                                                std::span<const double> gammas);

enum class Discriminator { Linear, Exponential };

/// Zero-noise, one-dimensional spectrum for D(x) = theta x or D(x) = theta e^x.
std::pair<Complex, Complex> fullrank_example(double v, Discriminator disc);
numlin::DenseMatrix fullrank_jacobian(double v, Discriminator disc);

}  // namespace analytic
}  // namespace gandyn
