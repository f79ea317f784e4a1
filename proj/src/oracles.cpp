#include "gandyn/oracles.hpp"

#include <cmath>

#include "gandyn/errors.hpp"

namespace gandyn {

using numlin::DenseMatrix;

QuadraticOracle::QuadraticOracle(std::size_t phi_dim, DenseMatrix h, Vector b)
    : phi_dim_(phi_dim), h_(std::move(h)), b_(std::move(b)) {
  if (!h_.is_square() || phi_dim_ > h_.rows()) throw ValidationError("quadratic oracle needs a square Hessian");
  if (!h_.is_symmetric(1e-12 * (1.0 + h_.frobenius_norm()))) {
    throw ValidationError("quadratic oracle Hessian must be symmetric");
  }
  if (b_.empty()) b_.assign(h_.rows(), 0.0);
  if (b_.size() != h_.rows()) throw ValidationError("linear term has the wrong dimension");
}

Gradients QuadraticOracle::gradients(const ParamPoint& w) {
  regularizers::check_dimensions(*this, w);
  Vector full(w.phi);
  full.insert(full.end(), w.theta.begin(), w.theta.end());
  Vector g = h_.apply(full);
  numlin::axpy(1.0, b_, g);
  return {Vector(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(phi_dim_)),
          Vector(g.begin() + static_cast<std::ptrdiff_t>(phi_dim_), g.end())};
}

std::optional<Vector> QuadraticOracle::hvp(const ParamPoint&, HvpBlock block, std::span<const double> u) {
  const std::size_t m = phi_dim_;
  const std::size_t n = theta_dim();
  switch (block) {
    case HvpBlock::PhiTheta:
      return h_.block(0, m, m, n).apply(u);
    case HvpBlock::ThetaPhi:
      return h_.block(m, 0, n, m).apply(u);
    case HvpBlock::PhiPhi:
      return h_.block(0, 0, m, m).apply(u);
    case HvpBlock::ThetaTheta:
      return h_.block(m, m, n, n).apply(u);
  }
  return std::nullopt;
}

namespace {

Vector linearized_offset(const GaussianGanConfig& cfg) {
  // grad f = H (w - w*) = H w - H w*, w* = (v, 0)
  const DenseMatrix h = analytic::hessian(cfg);
  Vector wstar(cfg.v);
  wstar.resize(2 * cfg.n(), 0.0);
  Vector b = h.apply(wstar);
  for (double& x : b) x = -x;
  return b;
}

}  // namespace

LinearizedGanOracle::LinearizedGanOracle(const GaussianGanConfig& cfg)
    : QuadraticOracle(cfg.n(), analytic::hessian(cfg), linearized_offset(cfg)),
      equilibrium_{cfg.v, Vector(cfg.n(), 0.0)} {}

GaussHermite GaussHermite::make(std::size_t count) {
  if (count == 0) throw ValidationError("quadrature needs at least one node");
  // Golub-Welsch on the probabilists' Hermite recurrence.
  DenseMatrix j(count, count);
  for (std::size_t k = 1; k < count; ++k) j(k, k - 1) = j(k - 1, k) = std::sqrt(static_cast<double>(k));
  const numlin::SymmetricEigen e = numlin::eig_symmetric(j);
  GaussHermite out;
  for (std::size_t k = 0; k < count; ++k) {
    out.nodes.push_back(e.values[k]);
    out.weights.push_back(e.vectors(0, k) * e.vectors(0, k));
  }
  return out;
}

PopulationGanOracle::PopulationGanOracle(const GaussianGanConfig& cfg, std::size_t nodes)
    : cfg_(cfg), quad_(GaussHermite::make(nodes)) {
  cfg_.validate();
  if (!cfg_.loss.has_functions()) throw ValidationError("population oracle needs a loss preset with functions");
}

std::array<double, 5> PopulationGanOracle::moments(bool first, double mean, double sd) const {
  std::array<double, 5> m{};
  for (std::size_t i = 0; i < quad_.nodes.size(); ++i) {
    const double t = mean + sd * quad_.nodes[i];
    for (int k = 0; k < 5; ++k) m[k] += quad_.weights[i] * (first ? cfg_.loss.g1(k, t) : cfg_.loss.g2(k, t));
  }
  return m;
}

double PopulationGanOracle::value(const ParamPoint& w) const {
  const double s = std::sqrt(cfg_.sigma2) * numlin::norm2(w.theta);
  return moments(true, numlin::dot(w.theta, cfg_.v), s)[0] + moments(false, numlin::dot(w.theta, w.phi), s)[0];
}

Gradients PopulationGanOracle::gradients(const ParamPoint& w) {
  regularizers::check_dimensions(*this, w);
  const double s2 = cfg_.sigma2;
  const double sd = std::sqrt(s2) * numlin::norm2(w.theta);
  const auto mx = moments(true, numlin::dot(w.theta, cfg_.v), sd);
  const auto my = moments(false, numlin::dot(w.theta, w.phi), sd);
  Gradients g;
  g.phi = w.theta;
  for (double& x : g.phi) x *= my[1];
  // E[g1'(theta^T x) x] + E[g2'(theta^T y) y], via Stein's lemma.
  g.theta.assign(cfg_.n(), 0.0);
  numlin::axpy(mx[1], cfg_.v, g.theta);
  numlin::axpy(s2 * mx[2], w.theta, g.theta);
  numlin::axpy(my[1], w.phi, g.theta);
  numlin::axpy(s2 * my[2], w.theta, g.theta);
  return g;
}

std::optional<Vector> PopulationGanOracle::hvp(const ParamPoint& w, HvpBlock block, std::span<const double> u) {
  regularizers::check_dimensions(*this, w);
  if (u.size() != cfg_.n()) throw ValidationError("probe vector has the wrong dimension");
  const double s2 = cfg_.sigma2;
  const Vector& th = w.theta;
  const double sd = std::sqrt(s2) * numlin::norm2(th);
  const auto mx = moments(true, numlin::dot(th, cfg_.v), sd);
  const auto my = moments(false, numlin::dot(th, w.phi), sd);
  // grad_theta E[g2'(theta^T y)] = phi E[g2''] + s2 theta E[g2''']
  Vector c(w.phi);
  for (double& x : c) x *= my[2];
  numlin::axpy(s2 * my[3], th, c);
  Vector out(u.begin(), u.end());
  switch (block) {
    case HvpBlock::PhiTheta:
      for (double& x : out) x *= my[1];
      numlin::axpy(numlin::dot(c, u), th, out);
      return out;
    case HvpBlock::ThetaPhi:
      for (double& x : out) x *= my[1];
      numlin::axpy(numlin::dot(th, u), c, out);
      return out;
    case HvpBlock::PhiPhi:
      out = th;
      for (double& x : out) x *= my[2] * numlin::dot(th, u);
      return out;
    case HvpBlock::ThetaTheta: {
      // E[h(theta^T x) x x^T] u for x ~ N(mu, s2 I), h = g'':
      // mu mu^T E[h] + s2 (mu theta^T + theta mu^T) E[h'] + s2 E[h] I + s2^2 theta theta^T E[h''].
      std::fill(out.begin(), out.end(), 0.0);
      auto add = [&](const Vector& mu, const std::array<double, 5>& m) {
        const double mu_u = numlin::dot(mu, u);
        const double th_u = numlin::dot(th, u);
        numlin::axpy(mu_u * m[2] + s2 * th_u * m[3], mu, out);
        numlin::axpy(s2 * mu_u * m[3] + s2 * s2 * th_u * m[4], th, out);
        numlin::axpy(s2 * m[2], u, out);
      };
      add(cfg_.v, mx);
      add(w.phi, my);
      return out;
    }
  }
  return std::nullopt;
}

MinibatchGanOracle::MinibatchGanOracle(const GaussianGanConfig& cfg, std::size_t batch_size, std::uint64_t seed)
    : cfg_(cfg), batch_(batch_size), rng_(seed) {
  cfg_.validate();
  if (batch_ == 0) throw ValidationError("batch size must be >= 1");
  if (!cfg_.loss.has_functions()) throw ValidationError("minibatch oracle needs a loss preset with functions");
  next_batch();
}

void MinibatchGanOracle::next_batch() {
  const std::size_t n = cfg_.n();
  const double sd = std::sqrt(cfg_.sigma2);
  x_.assign(batch_, Vector(n));
  z_.assign(batch_, Vector(n));
  for (std::size_t i = 0; i < batch_; ++i) {
    for (std::size_t k = 0; k < n; ++k) x_[i][k] = cfg_.v[k] + sd * rng_.normal();
    for (std::size_t k = 0; k < n; ++k) z_[i][k] = sd * rng_.normal();
  }
}

Gradients MinibatchGanOracle::gradients(const ParamPoint& w) {
  regularizers::check_dimensions(*this, w);
  const std::size_t n = cfg_.n();
  const double inv = 1.0 / static_cast<double>(batch_);
  Gradients g{Vector(n, 0.0), Vector(n, 0.0)};
  double mean_g2 = 0.0;
  Vector y(n);
  for (std::size_t i = 0; i < batch_; ++i) {
    const double a = cfg_.loss.g1(1, numlin::dot(w.theta, x_[i]));
    numlin::axpy(a * inv, x_[i], g.theta);
    for (std::size_t k = 0; k < n; ++k) y[k] = w.phi[k] + z_[i][k];
    const double b = cfg_.loss.g2(1, numlin::dot(w.theta, y));
    numlin::axpy(b * inv, y, g.theta);
    mean_g2 += b * inv;
  }
  g.phi = w.theta;
  for (double& x : g.phi) x *= mean_g2;
  return g;
}

std::optional<Vector> MinibatchGanOracle::hvp(const ParamPoint& w, HvpBlock block, std::span<const double> u) {
  regularizers::check_dimensions(*this, w);
  const std::size_t n = cfg_.n();
  if (u.size() != n) throw ValidationError("probe vector has the wrong dimension");
  const double inv = 1.0 / static_cast<double>(batch_);
  const double th_u = numlin::dot(w.theta, u);
  Vector out(n, 0.0);
  Vector y(n);
  double a = 0.0;                // mean g2'(theta^T y)
  double mean_g2pp = 0.0;        // mean g2''(theta^T y)
  Vector c(n, 0.0);              // mean g2''(theta^T y) y
  double c_u = 0.0;              // mean g2''(theta^T y) y^T u
  for (std::size_t i = 0; i < batch_; ++i) {
    for (std::size_t k = 0; k < n; ++k) y[k] = w.phi[k] + z_[i][k];
    const double t = numlin::dot(w.theta, y);
    const double d2 = cfg_.loss.g2(2, t);
    switch (block) {
      case HvpBlock::PhiTheta:
        a += cfg_.loss.g2(1, t) * inv;
        c_u += d2 * numlin::dot(y, u) * inv;
        break;
      case HvpBlock::ThetaPhi:
        a += cfg_.loss.g2(1, t) * inv;
        numlin::axpy(d2 * inv, y, c);
        break;
      case HvpBlock::PhiPhi:
        mean_g2pp += d2 * inv;
        break;
      case HvpBlock::ThetaTheta: {
        const double d1 = cfg_.loss.g1(2, numlin::dot(w.theta, x_[i]));
        numlin::axpy(d1 * numlin::dot(x_[i], u) * inv, x_[i], out);
        numlin::axpy(d2 * numlin::dot(y, u) * inv, y, out);
        break;
      }
    }
  }
  switch (block) {
    case HvpBlock::PhiTheta:
      numlin::axpy(a, u, out);
      numlin::axpy(c_u, w.theta, out);
      break;
    case HvpBlock::ThetaPhi:
      numlin::axpy(a, u, out);
      numlin::axpy(th_u, c, out);
      break;
    case HvpBlock::PhiPhi:
      numlin::axpy(mean_g2pp * th_u, w.theta, out);
      break;
    case HvpBlock::ThetaTheta:
      break;
  }
  return out;
}

}  // namespace gandyn
