#include "gandyn/general_spectrum.hpp"

#include <algorithm>
#include <cmath>

#include "gandyn/errors.hpp"

namespace gandyn::general_spectrum {

using numlin::DenseMatrix;

namespace {

constexpr double kShapeTol = 1e-10;

double magnitude_scale(const DenseMatrix& m) { return std::max(1.0, m.frobenius_norm()); }

std::pair<double, double> range_of(const DenseMatrix& sym) {
  if (sym.rows() == 0) return {0.0, 0.0};
  const numlin::SymmetricEigen e = numlin::eig_symmetric(sym);
  return {e.values.front(), e.values.back()};
}

nlohmann::json extended(const ExtendedReal& x) {
  return x.is_infinite() ? nlohmann::json("inf") : nlohmann::json(x.value());
}

nlohmann::json complex_list(const ComplexVector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (const Complex& c : v) out.push_back({{"re", c.real()}, {"im", c.imag()}});
  return out;
}

}  // namespace

BlockJacobian build(DenseMatrix p, DenseMatrix q) {
  if (!q.is_square()) throw ValidationError("Q must be square");
  if (p.cols() != q.rows()) {
    throw ValidationError("P is " + std::to_string(p.rows()) + "x" + std::to_string(p.cols()) + " but Q is " +
                          std::to_string(q.rows()) + "x" + std::to_string(q.cols()) +
                          "; P needs one column per discriminator parameter");
  }
  if (p.rows() == 0 || q.rows() == 0) throw ValidationError("P and Q must be nonempty");
  if (!p.all_finite() || !q.all_finite()) throw ValidationError("P and Q must be finite");
  const double scale = magnitude_scale(q);
  if (!q.is_symmetric(kShapeTol * scale)) throw ValidationError("Q must be symmetric");
  const double qmax = range_of(q).second;
  if (qmax > kShapeTol * scale) {
    throw ValidationError("Q must be negative semidefinite; largest eigenvalue is " + numlin::format_double(qmax));
  }
  const std::size_t m = p.rows();
  BlockJacobian bj;
  bj.a_ = DenseMatrix::from_blocks(DenseMatrix(m, m), p * -1.0, p.transposed(), q);
  bj.p_ = std::move(p);
  bj.q_ = std::move(q);
  return bj;
}

BlockJacobian simple_gan_embedding(const GaussianGanConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n();
  const DenseMatrix s = DenseMatrix::identity(n) * cfg.sigma2 + DenseMatrix::outer(cfg.v, cfg.v);
  return build(DenseMatrix::identity(n) * cfg.loss.g2_d1, s * (cfg.loss.g1_d2 + cfg.loss.g2_d2));
}

RayleighCheck rayleigh_verify(const BlockJacobian& bj) {
  numlin::EigOptions opts;
  opts.want_vectors = true;
  const numlin::Spectrum s = numlin::eig_real(bj.assembled(), opts);
  const DenseMatrix ptp = bj.p().transposed() * bj.p();
  const auto [qmin, qmax] = range_of(bj.q());
  const auto [pmin, pmax] = range_of(ptp);
  const double tol_q = 1e-9 * magnitude_scale(bj.q());
  const double tol_p = 1e-9 * magnitude_scale(ptp);
  const std::size_t m = bj.gen_dim();
  const std::size_t n = bj.disc_dim();
  RayleighCheck out;
  for (std::size_t k = 0; k < s.eigenvalues.size(); ++k) {
    const ComplexVector& y = (*s.eigenvectors)[k];
    const ComplexVector y2(y.begin() + static_cast<std::ptrdiff_t>(m), y.end());
    double y2_norm2 = 0.0;
    for (const Complex& c : y2) y2_norm2 += std::norm(c);
    if (y2_norm2 <= 1e-24) {
      ++out.skipped;
      continue;
    }
    const ComplexVector qy = bj.q().apply(y2);
    const ComplexVector py = ptp.apply(y2);
    Complex a1 = 0.0;
    Complex a2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      a1 += std::conj(y2[i]) * qy[i];
      a2 += std::conj(y2[i]) * py[i];
    }
    a1 /= y2_norm2;
    a2 /= y2_norm2;
    const Complex lambda = s.eigenvalues[k];
    RayleighPair pair{lambda, a1, a2, std::abs(lambda * lambda - a1 * lambda + a2)};
    out.max_residual = std::max(out.max_residual, pair.residual);
    if (a1.real() < qmin - tol_q || a1.real() > qmax + tol_q || std::abs(a1.imag()) > tol_q) {
      out.a1_within_range = false;
    }
    if (a2.real() < pmin - tol_p || a2.real() > pmax + tol_p || std::abs(a2.imag()) > tol_p) {
      out.a2_within_range = false;
    }
    out.pairs.push_back(pair);
  }
  return out;
}

std::string regime_name(Regime r) {
  switch (r) {
    case Regime::PhaseDominated:
      return "phase-dominated";
    case Regime::ConditioningDominated:
      return "conditioning-dominated";
    case Regime::Mixed:
      return "mixed";
    case Regime::Degenerate:
      return "degenerate";
  }
  return "mixed";
}

BalanceReport regime(const BlockJacobian& bj) {
  BalanceReport r;
  const DenseMatrix ptp = bj.p().transposed() * bj.p();
  r.lambda_range_q = range_of(bj.q());
  r.lambda_range_ptp = range_of(ptp);
  // Clamp rounding noise so the ranges respect the semidefinite signs.
  r.lambda_range_q.first = std::min(r.lambda_range_q.first, 0.0);
  r.lambda_range_q.second = std::min(r.lambda_range_q.second, 0.0);
  r.lambda_range_ptp.first = std::max(r.lambda_range_ptp.first, 0.0);
  r.lambda_range_ptp.second = std::max(r.lambda_range_ptp.second, 0.0);
  const double zq = 1e-12 * magnitude_scale(bj.q());
  const double zp = 1e-12 * magnitude_scale(ptp);
  const double qmin = r.lambda_range_q.first;
  const double qmax = r.lambda_range_q.second;
  const double pmin = r.lambda_range_ptp.first <= zp ? 0.0 : r.lambda_range_ptp.first;
  const double pmax = r.lambda_range_ptp.second <= zp ? 0.0 : r.lambda_range_ptp.second;

  if (pmax == 0.0) {
    r.regime = Regime::Degenerate;
    r.c = ExtendedReal(0.0);
    r.c_prime = ExtendedReal(0.0);
    r.notes.push_back("P = 0: the generator block has zero eigenvalues and no convergence rate");
    return r;
  }
  auto ratio = [](double num, double q) {
    return q * q == 0.0 ? ExtendedReal::infinity() : ExtendedReal(4.0 * num / (q * q));
  };
  r.c = std::abs(qmin) <= zq ? (pmin > 0.0 ? ExtendedReal::infinity() : ExtendedReal(0.0)) : ratio(pmin, qmin);
  r.c_prime = std::abs(qmax) <= zq ? ExtendedReal::infinity() : ratio(pmax, qmax);

  if (r.c > ExtendedReal(1.0)) {
    r.regime = Regime::PhaseDominated;
    r.predicted_zeta = r.c.is_infinite() ? ExtendedReal::infinity() : ExtendedReal(std::sqrt(r.c.value() - 1.0));
    if (std::abs(qmin) <= zq) {
      r.notes.push_back("Q = 0: eigenvalues are purely imaginary, not asymptotically convergent; no rate");
    }
  } else if (r.c_prime <= ExtendedReal(1.0)) {
    r.regime = Regime::ConditioningDominated;
    const double inv = 1.0 / r.c_prime.value();
    r.predicted_tau = ExtendedReal(std::pow(std::sqrt(inv) + std::sqrt(inv - 1.0), 2));
  } else {
    r.regime = Regime::Mixed;
  }
  if (pmin == 0.0) r.notes.push_back("P^T P is singular: some modes have no coupling and zero eigenvalues");
  return r;
}

std::vector<JareLimitPoint> jare_limit(const BlockJacobian& bj, std::span<const double> gammas) {
  if (gammas.empty()) throw ValidationError("gamma grid is empty");
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    if (!std::isfinite(gammas[i]) || gammas[i] < 0.0) throw ValidationError("gamma values must be finite and >= 0");
    if (i > 0 && !(gammas[i] > gammas[i - 1])) throw ValidationError("gamma grid must be strictly increasing");
  }
  const DenseMatrix& p = bj.p();
  const std::size_t m = bj.gen_dim();
  const std::size_t n = bj.disc_dim();
  const numlin::SymmetricEigen ptp = numlin::eig_symmetric(p.transposed() * p);
  const numlin::SymmetricEigen ppt = numlin::eig_symmetric(p * p.transposed());
  const double top = std::max(ptp.values.back(), 0.0);

  std::vector<JareLimitPoint> out;
  for (double gamma : gammas) {
    const DenseMatrix g = DenseMatrix::from_blocks(DenseMatrix::identity(m), p * -gamma, p.transposed() * gamma,
                                                   DenseMatrix::identity(n));
    JareLimitPoint pt;
    pt.gamma = gamma;
    pt.eigenvalues = numlin::eig_real(g * bj.assembled()).eigenvalues;
    for (double l : ptp.values) pt.targets.emplace_back(-gamma * l, 0.0);
    for (double l : ppt.values) pt.targets.emplace_back(-gamma * l, 0.0);
    auto by_magnitude = [](const Complex& a, const Complex& b) { return std::abs(a) < std::abs(b); };
    ComplexVector ev = pt.eigenvalues;
    ComplexVector tg = pt.targets;
    std::stable_sort(ev.begin(), ev.end(), by_magnitude);
    std::stable_sort(tg.begin(), tg.end(), by_magnitude);
    const double zero = 1e-12 * std::max(gamma * top, 1e-300);
    for (std::size_t i = 0; i < tg.size(); ++i) {
      if (std::abs(tg[i]) <= zero) {
        ++pt.zero_targets;
        continue;
      }
      pt.max_relative_deviation = std::max(pt.max_relative_deviation, std::abs(ev[i] - tg[i]) / std::abs(tg[i]));
    }
    out.push_back(std::move(pt));
  }
  return out;
}

double log_log_slope(const std::vector<JareLimitPoint>& points) {
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  double count = 0.0;
  for (const JareLimitPoint& p : points) {
    if (!(p.gamma > 0.0) || !(p.max_relative_deviation > 0.0)) continue;
    const double x = std::log(p.gamma);
    const double y = std::log(p.max_relative_deviation);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    count += 1.0;
  }
  if (count < 2.0) throw ValidationError("slope needs at least two points with positive gamma and deviation");
  return (count * sxy - sx * sy) / (count * sxx - sx * sx);
}

LinearGan::LinearGan(Vector v, double sigma2, Vector theta)
    : v_(std::move(v)), sigma_(std::sqrt(sigma2)), theta_(std::move(theta)) {
  if (v_.empty() || theta_.size() != v_.size()) throw ValidationError("linear GAN needs matching v and theta");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw ValidationError("sigma2 must be > 0");
}

Vector LinearGan::sample_real(SplitMix64& rng) const {
  Vector x(v_);
  for (double& xi : x) xi += sigma_ * rng.normal();
  return x;
}

Vector LinearGan::sample_latent(SplitMix64& rng) const {
  Vector z(v_.size());
  for (double& zi : z) zi = sigma_ * rng.normal();
  return z;
}

Vector LinearGan::generate(std::span<const double> z) const {
  // At equilibrium phi = v.
  Vector x(v_);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += z[i];
  return x;
}

DenseMatrix LinearGan::generator_jacobian(std::span<const double>) const { return DenseMatrix::identity(v_.size()); }

Vector LinearGan::disc_gradient(std::span<const double> x) const { return Vector(x.begin(), x.end()); }

PqEstimate estimate_pq(const DifferentiableGan& model, const LossPair& loss, std::size_t samples, SplitMix64& rng) {
  if (samples < 1) throw ValidationError("sample count must be >= 1");
  loss.validate();
  const std::size_t gp = model.gen_params();
  const std::size_t dp = model.disc_params();
  const std::size_t d = model.data_dim();
  DenseMatrix q(dp, dp);
  DenseMatrix p(gp, dp);
  for (std::size_t s = 0; s < samples; ++s) {
    const Vector g = model.disc_gradient(model.sample_real(rng));
    if (g.size() != dp) throw ValidationError("discriminator gradient has the wrong size");
    for (std::size_t i = 0; i < dp; ++i)
      for (std::size_t j = 0; j < dp; ++j) q(i, j) += g[i] * g[j];
  }
  for (std::size_t s = 0; s < samples; ++s) {
    const Vector z = model.sample_latent(rng);
    Vector x = model.generate(z);
    const DenseMatrix jg = model.generator_jacobian(z);
    if (x.size() != d || jg.rows() != d || jg.cols() != gp) throw ValidationError("generator output has the wrong shape");
    const double h = 1e-4 * (1.0 + numlin::norm2(x));
    DenseMatrix cross(d, dp);  // d/dx_k of grad_theta D
    for (std::size_t k = 0; k < d; ++k) {
      const double xk = x[k];
      x[k] = xk + h;
      const Vector up = model.disc_gradient(x);
      x[k] = xk - h;
      const Vector down = model.disc_gradient(x);
      x[k] = xk;
      for (std::size_t j = 0; j < dp; ++j) cross(k, j) = (up[j] - down[j]) / (2.0 * h);
    }
    p = p + jg.transposed() * cross;
  }
  const double inv = 1.0 / static_cast<double>(samples);
  PqEstimate out{p * (loss.g2_d1 * inv), q * ((loss.g1_d2 + loss.g2_d2) * inv)};
  if (!out.p.all_finite() || !out.q.all_finite()) throw NumericalError("P/Q estimate is not finite");
  return out;
}

nlohmann::json to_json(const BalanceReport& r) {
  nlohmann::json j;
  j["lambda_range_Q"] = {r.lambda_range_q.first, r.lambda_range_q.second};
  j["lambda_range_PtP"] = {r.lambda_range_ptp.first, r.lambda_range_ptp.second};
  j["c"] = extended(r.c);
  j["c_prime"] = extended(r.c_prime);
  j["regime"] = regime_name(r.regime);
  j["predicted_zeta"] = r.predicted_zeta ? extended(*r.predicted_zeta) : nlohmann::json(nullptr);
  j["predicted_tau"] = r.predicted_tau ? extended(*r.predicted_tau) : nlohmann::json(nullptr);
  j["notes"] = r.notes;
  return j;
}

nlohmann::json to_json(const std::vector<JareLimitPoint>& points) {
  nlohmann::json out = nlohmann::json::array();
  for (const JareLimitPoint& p : points) {
    out.push_back({{"gamma", p.gamma},
                   {"max_relative_deviation", p.max_relative_deviation},
                   {"zero_targets", p.zero_targets},
                   {"eigenvalues", complex_list(p.eigenvalues)}});
  }
  return out;
}

nlohmann::json to_json(const RayleighCheck& r) {
  return {{"max_residual", r.max_residual},
          {"pairs_checked", r.pairs.size()},
          {"skipped", r.skipped},
          {"a1_within_range", r.a1_within_range},
          {"a2_within_range", r.a2_within_range}};
}

}  // namespace gandyn::general_spectrum
