#pragma once

#include <array>
#include <cstdint>

#include "gandyn/analytic_gan.hpp"
#include "gandyn/regularizers.hpp"
#include "gandyn/rng.hpp"

namespace gandyn {

/// f(w) = 1/2 w^T H w + b^T w over w = (phi, theta); H symmetric.
class QuadraticOracle : public GradientOracle {
 public:
  QuadraticOracle(std::size_t phi_dim, numlin::DenseMatrix h, Vector b = {});

  std::size_t phi_dim() const override { return phi_dim_; }
  std::size_t theta_dim() const override { return h_.rows() - phi_dim_; }
  Gradients gradients(const ParamPoint& w) override;
  std::optional<Vector> hvp(const ParamPoint& w, HvpBlock block, std::span<const double> u) override;

  const numlin::DenseMatrix& hessian() const { return h_; }

 private:
  std::size_t phi_dim_;
  numlin::DenseMatrix h_;
  Vector b_;
};

/// Gradients linear in w: grad f = H (w - w*) with H the equilibrium Hessian of the Gaussian
/// model and w* = (v, 0). Exactly the first-order expansion of the model around w*.
class LinearizedGanOracle : public QuadraticOracle {
 public:
  explicit LinearizedGanOracle(const GaussianGanConfig& cfg);
  ParamPoint equilibrium() const { return equilibrium_; }

 private:
  ParamPoint equilibrium_;
};

/// Gauss-Hermite nodes and weights for E[h(Z)], Z ~ N(0, 1).
struct GaussHermite {
  Vector nodes;
  Vector weights;
  static GaussHermite make(std::size_t count);
};

/// Population objective of the Gaussian model with G(z) = phi + z and D(x) = theta^T x,
/// evaluated in closed form up to one-dimensional Gaussian expectations (quadrature).
class PopulationGanOracle : public GradientOracle {
 public:
  explicit PopulationGanOracle(const GaussianGanConfig& cfg, std::size_t nodes = 48);

  std::size_t phi_dim() const override { return cfg_.n(); }
  std::size_t theta_dim() const override { return cfg_.n(); }
  Gradients gradients(const ParamPoint& w) override;
  std::optional<Vector> hvp(const ParamPoint& w, HvpBlock block, std::span<const double> u) override;
  double value(const ParamPoint& w) const;

 private:
  // E[g^(k)(mean + sd Z)] for k = 0..4.
  std::array<double, 5> moments(bool first, double mean, double sd) const;

  GaussianGanConfig cfg_;
  GaussHermite quad_;
};

/// Minibatch objective: x_i ~ N(v, s2 I), z_i ~ N(0, s2 I), redrawn by next_batch().
/// Gradients and Hessian-vector products are exact for the current batch.
class MinibatchGanOracle : public GradientOracle {
 public:
  MinibatchGanOracle(const GaussianGanConfig& cfg, std::size_t batch_size, std::uint64_t seed);

  std::size_t phi_dim() const override { return cfg_.n(); }
  std::size_t theta_dim() const override { return cfg_.n(); }
  Gradients gradients(const ParamPoint& w) override;
  std::optional<Vector> hvp(const ParamPoint& w, HvpBlock block, std::span<const double> u) override;
  void next_batch() override;

 private:
  GaussianGanConfig cfg_;
  std::size_t batch_;
  SplitMix64 rng_;
  std::vector<Vector> x_;
  std::vector<Vector> z_;
};

}  // namespace gandyn
