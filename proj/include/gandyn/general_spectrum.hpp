#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gandyn/analytic_gan.hpp"
#include "gandyn/numlin.hpp"
#include "gandyn/rng.hpp"

namespace gandyn::general_spectrum {

/// A = [[0, -P], [P^T, Q]] with P gen x disc and Q disc x disc symmetric negative semidefinite.
class BlockJacobian {
 public:
  const numlin::DenseMatrix& p() const { return p_; }
  const numlin::DenseMatrix& q() const { return q_; }
  const numlin::DenseMatrix& assembled() const { return a_; }
  std::size_t gen_dim() const { return p_.rows(); }
  std::size_t disc_dim() const { return p_.cols(); }

 private:
  friend BlockJacobian build(numlin::DenseMatrix p, numlin::DenseMatrix q);
  numlin::DenseMatrix p_;
  numlin::DenseMatrix q_;
  numlin::DenseMatrix a_;
};

/// ValidationError for incompatible shapes, Q asymmetric beyond 1e-10 (relative to |Q|), or an
/// eigenvalue of Q above 1e-10 |Q|.
BlockJacobian build(numlin::DenseMatrix p, numlin::DenseMatrix q);

/// P = g2'(0) I and Q = (g1''(0) + g2''(0)) (s2 I + v v^T); the assembled matrix is the SimGD Jacobian.
BlockJacobian simple_gan_embedding(const GaussianGanConfig& cfg);

struct RayleighPair {
  Complex lambda;
  Complex a1;
  Complex a2;
  double residual = 0.0;  // |lambda^2 - a1 lambda + a2|
};

struct RayleighCheck {
  std::vector<RayleighPair> pairs;
  std::size_t skipped = 0;  // eigenvectors with y2 = 0 (those have lambda = 0)
  double max_residual = 0.0;
  bool a1_within_range = true;  // lambda_min(Q) <= a1 <= lambda_max(Q)
  bool a2_within_range = true;  // lambda_min(P^T P) <= a2 <= lambda_max(P^T P)
};

/// For each eigenpair (y1, y2) of A: a1 = y2^H Q y2 / |y2|^2, a2 = y2^H P^T P y2 / |y2|^2.
RayleighCheck rayleigh_verify(const BlockJacobian& bj);

enum class Regime { PhaseDominated, ConditioningDominated, Mixed, Degenerate };
std::string regime_name(Regime r);

struct BalanceReport {
  std::pair<double, double> lambda_range_q;
  std::pair<double, double> lambda_range_ptp;
  ExtendedReal c;        // 4 lambda_min(P^T P) / lambda_min(Q)^2
  ExtendedReal c_prime;  // 4 lambda_max(P^T P) / lambda_max(Q)^2
  Regime regime = Regime::Mixed;
  std::optional<ExtendedReal> predicted_zeta;
  std::optional<ExtendedReal> predicted_tau;
  std::vector<std::string> notes;
};

/// Phase-dominated when c > 1 (every pair complex), conditioning-dominated when c' <= 1 (every
/// pair real), mixed otherwise. P = 0 is degenerate: zero eigenvalues, no rate.
BalanceReport regime(const BlockJacobian& bj);

struct JareLimitPoint {
  double gamma = 0.0;
  ComplexVector eigenvalues;
  ComplexVector targets;  // -gamma lambda(P^T P) and -gamma lambda(P P^T)
  double max_relative_deviation = 0.0;
  std::size_t zero_targets = 0;  // rank deficiency shows up here
};

/// Gamma = [[I, -gamma P], [gamma P^T, I]]; eigenvalues of Gamma A paired with the targets by
/// sorted magnitude. Grid must be nonnegative and strictly increasing.
std::vector<JareLimitPoint> jare_limit(const BlockJacobian& bj, std::span<const double> gammas);

/// Least-squares slope of log(deviation) against log(gamma).
double log_log_slope(const std::vector<JareLimitPoint>& points);

/// A GAN whose generator and discriminator can be differentiated with respect to their parameters.
class DifferentiableGan {
 public:
  virtual ~DifferentiableGan() = default;
  virtual std::size_t gen_params() const = 0;
  virtual std::size_t disc_params() const = 0;
  virtual std::size_t data_dim() const = 0;
  virtual Vector sample_real(SplitMix64& rng) const = 0;
  virtual Vector sample_latent(SplitMix64& rng) const = 0;
  virtual Vector generate(std::span<const double> z) const = 0;
  // d G(z) / d phi, data_dim x gen_params.
  virtual numlin::DenseMatrix generator_jacobian(std::span<const double> z) const = 0;
  // d D(x) / d theta.
  virtual Vector disc_gradient(std::span<const double> x) const = 0;
};

/// D(x) = theta^T x, G(z) = phi + z with x ~ N(v, s2 I), z ~ N(0, s2 I).
class LinearGan : public DifferentiableGan {
 public:
  LinearGan(Vector v, double sigma2, Vector theta);
  std::size_t gen_params() const override { return v_.size(); }
  std::size_t disc_params() const override { return v_.size(); }
  std::size_t data_dim() const override { return v_.size(); }
  Vector sample_real(SplitMix64& rng) const override;
  Vector sample_latent(SplitMix64& rng) const override;
  Vector generate(std::span<const double> z) const override;
  numlin::DenseMatrix generator_jacobian(std::span<const double> z) const override;
  Vector disc_gradient(std::span<const double> x) const override;

 private:
  Vector v_;
  double sigma_;
  Vector theta_;
};

struct PqEstimate {
  numlin::DenseMatrix p;
  numlin::DenseMatrix q;
};

/// Q = (g1'' + g2'') mean over real x of grad_theta D grad_theta D^T;
/// P = g2' mean over z of (dG/dphi)^T d2D/dx dtheta at x = G(z), the cross term by central
/// differences in x with step 1e-4 (1 + |x|).
PqEstimate estimate_pq(const DifferentiableGan& model, const LossPair& loss, std::size_t samples, SplitMix64& rng);

nlohmann::json to_json(const BalanceReport& r);
nlohmann::json to_json(const std::vector<JareLimitPoint>& points);
nlohmann::json to_json(const RayleighCheck& r);

}  // namespace gandyn::general_spectrum
