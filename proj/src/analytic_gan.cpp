#include "gandyn/analytic_gan.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "gandyn/errors.hpp"

namespace gandyn {

using numlin::DenseMatrix;

LossPair LossPair::vanilla() { return {"vanilla", 0.5, -0.5, -0.25, -0.25, LossKind::Vanilla}; }
LossPair LossPair::wgan() { return {"wgan", 1.0, -1.0, 0.0, 0.0, LossKind::Wgan}; }
// g1(t) = -exp(-t), g2(t) = 1 - t
LossPair LossPair::reverse_kl() { return {"reverse_kl", 1.0, -1.0, -1.0, 0.0, LossKind::ReverseKl}; }

LossPair LossPair::preset(std::string_view name) {
  if (name == "vanilla") return vanilla();
  if (name == "wgan") return wgan();
  if (name == "reverse_kl") return reverse_kl();
  throw ValidationError("unknown loss preset '" + std::string(name) +
                        "' (expected vanilla, wgan or reverse_kl)");
}

void LossPair::validate() const {
  const double vals[] = {g1_d1, g2_d1, g1_d2, g2_d2};
  for (double x : vals)
    if (!std::isfinite(x)) throw ValidationError("loss pair '" + name + "' has non-finite derivatives");
  if (g1_d1 == 0.0 || g1_d1 != -g2_d1) {
    throw ValidationError("loss pair '" + name + "' needs g1'(0) = -g2'(0) != 0");
  }
  if (g1_d2 > 0.0 || g2_d2 > 0.0) throw ValidationError("loss pair '" + name + "' is not concave");
  if (kind != LossKind::Wgan && kind != LossKind::Custom && !(g1_d2 + g2_d2 < 0.0)) {
    throw ValidationError("loss pair '" + name + "' needs g1''(0) + g2''(0) < 0");
  }
}

namespace {

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// Derivatives of log(sigmoid(t)); order 0 uses a stable softplus.
double log_sigmoid_derivative(int k, double t) {
  const double s = sigmoid(t);
  switch (k) {
    case 0:
      return t >= 0 ? -std::log1p(std::exp(-t)) : t - std::log1p(std::exp(t));
    case 1:
      return sigmoid(-t);
    case 2:
      return -s * (1 - s);
    case 3:
      return -s * (1 - s) * (1 - 2 * s);
    case 4:
      return -s * (1 - s) * (1 - 6 * s + 6 * s * s);
    default:
      throw ValidationError("loss derivative order must be 0..4");
  }
}

void check_order(int k) {
  if (k < 0 || k > 4) throw ValidationError("loss derivative order must be 0..4");
}

}  // namespace

double LossPair::g1(int k, double t) const {
  check_order(k);
  switch (kind) {
    case LossKind::Vanilla:
      return log_sigmoid_derivative(k, t);
    case LossKind::Wgan:
      return k == 0 ? t : (k == 1 ? 1.0 : 0.0);
    case LossKind::ReverseKl:
      return (k % 2 == 0 ? -1.0 : 1.0) * std::exp(-t);
    case LossKind::Custom:
      break;
  }
  throw ValidationError("loss pair '" + name + "' has no function form");
}

double LossPair::g2(int k, double t) const {
  check_order(k);
  switch (kind) {
    case LossKind::Vanilla:
      // g2(t) = g1(-t)
      return (k % 2 == 0 ? 1.0 : -1.0) * log_sigmoid_derivative(k, -t);
    case LossKind::Wgan:
      return k == 0 ? -t : (k == 1 ? -1.0 : 0.0);
    case LossKind::ReverseKl:
      return k == 0 ? 1.0 - t : (k == 1 ? -1.0 : 0.0);
    case LossKind::Custom:
      break;
  }
  throw ValidationError("loss pair '" + name + "' has no function form");
}

double GaussianGanConfig::beta2() const { return sigma2 + numlin::dot(v, v); }

void GaussianGanConfig::validate() const {
  if (v.empty()) throw ValidationError("dimension n must be >= 1");
  if (!numlin::all_finite(v)) throw ValidationError("mean v has non-finite entries");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw ValidationError("sigma2 must be finite and > 0");
  loss.validate();
}

void MethodSpec::validate() const {
  if (!std::isfinite(gamma)) throw ValidationError("gamma must be finite");
  if (gamma < 0.0) throw ValidationError("gamma must be >= 0");
}

std::string method_name(MethodKind kind) {
  switch (kind) {
    case MethodKind::SimGD:
      return "simgd";
    case MethodKind::OnlyGen:
      return "onlygen";
    case MethodKind::OnlyDisc:
      return "onlydisc";
    case MethodKind::ConOpt:
      return "conopt";
    case MethodKind::JARE:
      return "jare";
    case MethodKind::AdvExtrap:
      return "advextrap";
  }
  return "unknown";
}

MethodKind parse_method(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (MethodKind k : {MethodKind::SimGD, MethodKind::OnlyGen, MethodKind::OnlyDisc, MethodKind::ConOpt,
                       MethodKind::JARE, MethodKind::AdvExtrap}) {
    if (lower == method_name(k)) return k;
  }
  throw ValidationError("unknown method '" + std::string(name) +
                        "' (expected simgd, onlygen, onlydisc, conopt, jare or advextrap)");
}

namespace analytic {

namespace {

struct Blocks {
  DenseMatrix phi_phi, phi_theta, theta_phi, theta_theta;
};

Blocks hessian_blocks(const GaussianGanConfig& cfg) {
  const std::size_t n = cfg.n();
  Blocks b;
  b.phi_phi = DenseMatrix(n, n);
  b.phi_theta = DenseMatrix::identity(n) * cfg.loss.g2_d1;
  b.theta_phi = b.phi_theta;
  DenseMatrix cov = DenseMatrix::identity(n) * cfg.sigma2 + DenseMatrix::outer(cfg.v, cfg.v);
  b.theta_theta = cov * (cfg.loss.g1_d2 + cfg.loss.g2_d2);
  return b;
}

bool is_closed_form_method(MethodKind k) {
  return k == MethodKind::SimGD || k == MethodKind::OnlyGen || k == MethodKind::OnlyDisc ||
         k == MethodKind::JARE;
}

}  // namespace

DenseMatrix hessian(const GaussianGanConfig& cfg) {
  cfg.validate();
  const Blocks b = hessian_blocks(cfg);
  return DenseMatrix::from_blocks(b.phi_phi, b.phi_theta, b.theta_phi, b.theta_theta);
}

DenseMatrix simgd_jacobian(const GaussianGanConfig& cfg) {
  cfg.validate();
  const Blocks b = hessian_blocks(cfg);
  return DenseMatrix::from_blocks(b.phi_phi * -1.0, b.phi_theta * -1.0, b.theta_phi, b.theta_theta);
}

DenseMatrix regularization_matrix(const GaussianGanConfig& cfg, const MethodSpec& method) {
  cfg.validate();
  method.validate();
  const std::size_t n = cfg.n();
  const double g = method.gamma;
  const Blocks b = hessian_blocks(cfg);
  const DenseMatrix eye = DenseMatrix::identity(n);
  const DenseMatrix zero(n, n);
  switch (method.kind) {
    case MethodKind::SimGD:
      return DenseMatrix::identity(2 * n);
    case MethodKind::OnlyGen:
      return DenseMatrix::from_blocks(eye, b.phi_theta * -g, zero, eye);
    case MethodKind::OnlyDisc:
      return DenseMatrix::from_blocks(eye, zero, b.theta_phi * g, eye);
    case MethodKind::JARE:
      return DenseMatrix::from_blocks(eye, b.phi_theta * -g, b.theta_phi * g, eye);
    case MethodKind::ConOpt:
      return DenseMatrix::identity(2 * n) - simgd_jacobian(cfg).transposed() * g;
    case MethodKind::AdvExtrap:
      break;
  }
  throw ValidationError("adversarial extrapolation has no single regularization matrix here");
}

DenseMatrix jacobian(const GaussianGanConfig& cfg, const MethodSpec& method) {
  return regularization_matrix(cfg, method) * simgd_jacobian(cfg);
}

std::pair<Complex, Complex> quartic_pair(double s, double c) {
  const double disc = s * s - c;
  if (disc < 0.0) {
    const double im = std::sqrt(-disc) / 4.0;
    return {Complex(-s / 4.0, im), Complex(-s / 4.0, -im)};
  }
  // Larger-magnitude root first, the other from the product c/16.
  const double root = std::sqrt(disc);
  const double big = (-s - (s >= 0 ? root : -root)) / 4.0;
  if (big == 0.0) return {0.0, 0.0};
  return {Complex(big, 0.0), Complex(c / 16.0 / big, 0.0)};
}

std::vector<Eigenvalue> eigenvalues_closed_form(const GaussianGanConfig& cfg, const MethodSpec& method) {
  cfg.validate();
  method.validate();
  if (cfg.loss.kind != LossKind::Vanilla) {
    throw ValidationError("closed-form eigenvalues are only available for the vanilla loss");
  }
  if (!is_closed_form_method(method.kind)) {
    throw ValidationError("no closed form for method '" + method_name(method.kind) +
                          "'; use jacobian() with the numeric eigensolver");
  }
  const double g = method.gamma;
  double s_low = cfg.sigma2;
  double s_high = cfg.beta2();
  double c = 4.0;
  switch (method.kind) {
    case MethodKind::OnlyGen:
    case MethodKind::OnlyDisc:
      s_low += g / 2.0;
      s_high += g / 2.0;
      break;
    case MethodKind::JARE:
      s_low += g;
      s_high += g;
      c = g * g + 4.0;
      break;
    default:
      break;
  }
  const std::size_t n = cfg.n();
  const bool v_zero = numlin::norm2(cfg.v) == 0.0;
  const auto [l1, l2] = quartic_pair(s_low, c);
  std::vector<Eigenvalue> raw;
  if (v_zero) {
    raw = {{l1, n}, {l2, n}};
  } else {
    const auto [l3, l4] = quartic_pair(s_high, c);
    if (n > 1) raw = {{l1, n - 1}, {l2, n - 1}};
    raw.push_back({l3, 1});
    raw.push_back({l4, 1});
  }
  std::vector<Eigenvalue> merged;
  for (const Eigenvalue& e : raw) {
    auto it = std::find_if(merged.begin(), merged.end(), [&](const Eigenvalue& m) { return m.value == e.value; });
    if (it != merged.end()) {
      it->multiplicity += e.multiplicity;
    } else {
      merged.push_back(e);
    }
  }
  return merged;
}

ComplexVector expand(const std::vector<Eigenvalue>& eigs) {
  ComplexVector out;
  for (const Eigenvalue& e : eigs) out.insert(out.end(), e.multiplicity, e.value);
  return out;
}

double spectral_radius_of_step(std::span<const Complex> eigenvalues, double eta) {
  double r = 0.0;
  for (const Complex& l : eigenvalues) r = std::max(r, std::abs(1.0 + eta * l));
  return r;
}

std::optional<double> eta_max_numeric(std::span<const Complex> eigenvalues) {
  double biggest = 0.0;
  for (const Complex& l : eigenvalues) {
    if (!(l.real() < 0.0)) return std::nullopt;
    biggest = std::max(biggest, std::abs(l));
  }
  if (biggest == 0.0) return std::nullopt;
  // At eta = 2/max|l| the largest eigenvalue already has |1 + eta l| >= 1.
  double lo = 0.0;
  double hi = 2.0 / biggest;
  while (hi - lo > 1e-10 * hi) {
    const double mid = 0.5 * (lo + hi);
    if (spectral_radius_of_step(eigenvalues, mid) < 1.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

std::optional<double> eta_max_per_eigenvalue(std::span<const Complex> eigenvalues, double tol) {
  double best = HUGE_VAL;
  for (const Complex& l : eigenvalues) {
    if (!(l.real() < 0.0)) return std::nullopt;
    const double mag = std::abs(l);
    const double limit = std::abs(l.imag()) <= tol ? 2.0 / mag : 2.0 * std::abs(l.real()) / (mag * mag);
    best = std::min(best, limit);
  }
  if (!std::isfinite(best)) return std::nullopt;
  return best;
}

ExtendedReal phase_iteration_bound(ExtendedReal zeta, double eps, double c0) {
  if (zeta.is_infinite()) return ExtendedReal::infinity();
  if (zeta.value() == 0.0 || c0 <= eps) return ExtendedReal(0.0);
  const double z = zeta.value();
  return ExtendedReal(2.0 * std::log(c0 / eps) / std::log1p(1.0 / (z * z)));
}

std::optional<ExtendedReal> conditioning_iteration_bound(ExtendedReal tau, double eps, double c1) {
  if (tau.is_infinite()) return ExtendedReal::infinity();
  if (!(tau.value() > 2.0)) return std::nullopt;
  if (c1 <= eps) return ExtendedReal(0.0);
  return ExtendedReal(std::log(eps / c1) / std::log1p(-2.0 / tau.value()));
}

double conopt_tau_lower_bound(const GaussianGanConfig& cfg, double gamma) {
  const numlin::Spectrum m = numlin::eig_real(simgd_jacobian(cfg));
  double hi = 0.0;
  double lo = HUGE_VAL;
  for (const Complex& l : m.eigenvalues) {
    hi = std::max(hi, std::abs(l));
    lo = std::min(lo, std::abs(l));
  }
  return (hi / lo) * (1.0 + gamma * hi) / (1.0 + gamma * lo);
}

namespace {

// Closed-form step limits inside the regime where they hold; per-eigenvalue limits otherwise.
std::optional<double> closed_form_eta_max(const GaussianGanConfig& cfg, const MethodSpec& method,
                                          std::span<const Complex> eigenvalues, double tol) {
  const double g = method.gamma;
  const double s2 = cfg.sigma2;
  const double b2 = cfg.beta2();
  switch (method.kind) {
    case MethodKind::SimGD:
    case MethodKind::OnlyGen:
    case MethodKind::OnlyDisc: {
      const double shift = method.kind == MethodKind::SimGD ? 0.0 : g / 2.0;
      const double lo = s2 + shift;
      const double hi = b2 + shift;
      if (lo < 2.0 && hi > 2.0) {
        const double zeta = std::sqrt((2.0 / lo) * (2.0 / lo) - 1.0);
        const double tau = 0.25 * std::pow(hi + std::sqrt(hi * hi - 4.0), 2);
        return std::min(4.0 / std::sqrt(1.0 + zeta * zeta), 4.0 / std::sqrt(tau));
      }
      break;
    }
    case MethodKind::JARE: {
      const double c = g * g + 4.0;
      if ((s2 + g) * (s2 + g) < c && (b2 + g) * (b2 + g) > c) {
        return 8.0 * std::min((g + s2) / c, 1.0 / ((b2 + g) + std::sqrt(2.0 * b2 * g + b2 * b2 - 4.0)));
      }
      break;
    }
    default:
      return std::nullopt;
  }
  return eta_max_per_eigenvalue(eigenvalues, tol);
}

}  // namespace

SpectrumReport report(const GaussianGanConfig& cfg, const MethodSpec& method, const ReportOptions& options) {
  cfg.validate();
  method.validate();
  if (!(options.eps > 0.0 && options.eps < 1.0)) throw ValidationError("eps must be in (0, 1)");
  if (!(options.c0 > 0.0) || !(options.c1 > 0.0)) throw ValidationError("C0 and C1 must be > 0");

  const DenseMatrix a = jacobian(cfg, method);
  SpectrumReport r;
  r.method = method;
  r.closed_form = cfg.loss.kind == LossKind::Vanilla && is_closed_form_method(method.kind);
  numlin::Spectrum spec;
  if (r.closed_form) {
    spec.eigenvalues = expand(eigenvalues_closed_form(cfg, method));
    spec.scale = a.spectral_norm_estimate();
  } else {
    spec = numlin::eig_real(a);
    r.notes.push_back("closed form unavailable; eigenvalues from the numeric eigensolver");
  }
  if (method.kind == MethodKind::ConOpt && method.gamma > 0.0) {
    r.notes.push_back("tau(A) >= tau(M) * Delta(gamma) = " +
                      numlin::format_double(conopt_tau_lower_bound(cfg, method.gamma)));
  }
  r.eigenvalues = spec.eigenvalues;
  r.zeta = numlin::phase_ratio(spec);
  r.tau = numlin::condition_ratio(spec);
  const double tol = spec.tolerance();
  r.stable = std::all_of(spec.eigenvalues.begin(), spec.eigenvalues.end(),
                         [&](const Complex& l) { return l.real() < -tol; });
  if (!r.stable) {
    r.notes.push_back("not asymptotically stable: an eigenvalue has nonnegative real part");
    return r;
  }
  r.eta_max_numeric = eta_max_numeric(spec.eigenvalues);
  if (r.closed_form) r.eta_max_closed_form = closed_form_eta_max(cfg, method, spec.eigenvalues, tol);
  r.n_bound_phase = phase_iteration_bound(r.zeta, options.eps, options.c0);
  r.n_bound_conditioning = conditioning_iteration_bound(r.tau, options.eps, options.c1);
  return r;
}

namespace {

nlohmann::json extended(const ExtendedReal& x) {
  if (x.is_infinite()) return "inf";
  return x.value();
}

template <typename T>
nlohmann::json optional_json(const std::optional<T>& x) {
  if (!x) return nullptr;
  if constexpr (std::is_same_v<T, ExtendedReal>) {
    return extended(*x);
  } else {
    return *x;
  }
}

}  // namespace

nlohmann::json to_json(const SpectrumReport& r) {
  nlohmann::json eig = nlohmann::json::array();
  for (const Complex& l : r.eigenvalues) eig.push_back({{"re", l.real()}, {"im", l.imag()}});
  return {
      {"method", method_name(r.method.kind)},
      {"gamma", r.method.gamma},
      {"closed_form", r.closed_form},
      {"eigenvalues", eig},
      {"zeta", extended(r.zeta)},
      {"tau", extended(r.tau)},
      {"stable", r.stable},
      {"eta_max_closed_form", optional_json(r.eta_max_closed_form)},
      {"eta_max_numeric", optional_json(r.eta_max_numeric)},
      {"n_bound_phase", optional_json(r.n_bound_phase)},
      {"n_bound_conditioning", optional_json(r.n_bound_conditioning)},
      {"notes", r.notes},
  };
}

std::vector<CurvePoint> jare_monotonicity_curve(const GaussianGanConfig& cfg, std::span<const double> gammas) {
  cfg.validate();
  if (cfg.loss.kind != LossKind::Vanilla) throw ValidationError("the JARE curve needs the vanilla loss");
  const double s2 = cfg.sigma2;
  const double b2 = cfg.beta2();
  if (!(s2 < 2.0 && b2 > 2.0)) throw ValidationError("the JARE curve needs sigma2 < 2 < beta2");
  if (gammas.empty()) throw ValidationError("gamma grid is empty");
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    if (!std::isfinite(gammas[i]) || gammas[i] < 0.0) throw ValidationError("gamma grid must be finite and >= 0");
    if (i > 0 && !(gammas[i] > gammas[i - 1])) throw ValidationError("gamma grid must be strictly increasing");
  }
  const double threshold = 2.0 / s2 - s2 / 2.0;
  std::vector<CurvePoint> out;
  for (double g : gammas) {
    const double h1 = (g * g + 4.0) / ((s2 + g) * (s2 + g));
    const double h2 = (b2 + g) * (b2 + g) / (g * g + 4.0);
    const double zeta = g < threshold ? std::sqrt(std::max(0.0, h1 - 1.0)) : 0.0;
    const double tau = std::pow(std::sqrt(h2) + std::sqrt(std::max(0.0, h2 - 1.0)), 2);
    out.push_back({g, zeta, tau});
  }
  return out;
}

DenseMatrix fullrank_jacobian(double v, Discriminator disc) {
  if (!std::isfinite(v)) throw ValidationError("v must be finite");
  const double a = disc == Discriminator::Linear ? v : std::exp(v);
  return DenseMatrix::from_rows({{0.0, 0.5 * (disc == Discriminator::Linear ? 1.0 : a)},
                                 {-0.5 * (disc == Discriminator::Linear ? 1.0 : a), -0.5 * a * a}});
}

std::pair<Complex, Complex> fullrank_example(double v, Discriminator disc) {
  if (!std::isfinite(v)) throw ValidationError("v must be finite");
  if (disc == Discriminator::Linear) return quartic_pair(v * v, 4.0);
  // 4 l^2 + 2 e^{2v} l + e^{2v} = 0
  const double a = std::exp(2.0 * v);
  return quartic_pair(a, 4.0 * a);
}

}  // namespace analytic
}  // namespace gandyn
