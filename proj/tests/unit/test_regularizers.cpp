#include <cmath>

#include "doctest.h"
#include "gandyn/errors.hpp"
#include "gandyn/oracles.hpp"
#include "gandyn/regularizers.hpp"

using namespace gandyn;
using namespace gandyn::regularizers;
using numlin::DenseMatrix;

namespace {

GaussianGanConfig make_cfg(Vector v, double sigma2) {
  GaussianGanConfig c;
  c.v = std::move(v);
  c.sigma2 = sigma2;
  return c;
}

Vector random_vector(SplitMix64& rng, std::size_t n, double scale = 1.0) {
  Vector v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

double rel_diff(std::span<const double> a, std::span<const double> b) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

double point_diff(const ParamPoint& a, const ParamPoint& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.phi.size(); ++i) s += std::pow(a.phi[i] - b.phi[i], 2);
  for (std::size_t i = 0; i < a.theta.size(); ++i) s += std::pow(a.theta[i] - b.theta[i], 2);
  return std::sqrt(s);
}

// f = 1/2 phi^T(-t2 I)phi + c phi^T theta - 1/2 |theta|^2
QuadraticOracle reversal_oracle(double t2, double c, std::size_t n) {
  const DenseMatrix eye = DenseMatrix::identity(n);
  return QuadraticOracle(n, DenseMatrix::from_blocks(eye * -t2, eye * c, eye * c, eye * -1.0));
}

const MethodKind kGammaMethods[] = {MethodKind::SimGD, MethodKind::OnlyGen, MethodKind::OnlyDisc,
                                    MethodKind::ConOpt, MethodKind::JARE};

}  // namespace

TEST_CASE("gamma zero JARE is bit-identical to SimGD") {
  MinibatchGanOracle oracle(make_cfg({0.0, 4.0}, 0.04), 16, 5);
  const ParamPoint w{{0.03, 3.98}, {0.02, -0.01}};
  for (MethodKind k : kGammaMethods) {
    CHECK(step({{k, 0.0}, 0.01}, oracle, w) == step({{MethodKind::SimGD, 0.0}, 0.01}, oracle, w));
  }
  CHECK(step({{MethodKind::AdvExtrap, 0.0}, 0.01}, oracle, w) == step({{MethodKind::SimGD, 0.0}, 0.01}, oracle, w));
}

TEST_CASE("SimGD step on the population model is first-order the Jacobian step") {
  const GaussianGanConfig cfg = make_cfg({2.0}, 1.0);
  PopulationGanOracle oracle(cfg);
  const DenseMatrix a = analytic::jacobian(cfg, {MethodKind::SimGD, 0.0});
  const double eta = 0.1;
  auto mismatch = [&](double e) {
    const ParamPoint w{{2.0 + e}, {e}};
    const ParamPoint next = step({{MethodKind::SimGD, 0.0}, eta}, oracle, w);
    const Vector predicted = a.apply(Vector{e, e});
    const Vector moved{next.phi[0] - w.phi[0], next.theta[0] - w.theta[0]};
    return rel_diff(moved, Vector{eta * predicted[0], eta * predicted[1]});
  };
  // Reference values from an independent quadrature of the population objective.
  CHECK(mismatch(1e-2) == doctest::Approx(3.634157e-3).epsilon(1e-4));
  CHECK(mismatch(1e-3) == doctest::Approx(3.670661e-4).epsilon(1e-3));
  CHECK(mismatch(1e-3) < 1e-3);
  CHECK(mismatch(1e-4) < 1e-4);
}

TEST_CASE("steps on the linearized oracle equal w + eta Gamma grad~f") {
  SplitMix64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + rng.below(4);
    const GaussianGanConfig cfg = make_cfg(random_vector(rng, n, 2.0), 0.1 + rng.uniform());
    LinearizedGanOracle oracle(cfg);
    const ParamPoint w{random_vector(rng, n), random_vector(rng, n)};
    Vector offset(w.phi);
    for (std::size_t i = 0; i < n; ++i) offset[i] -= cfg.v[i];
    offset.insert(offset.end(), w.theta.begin(), w.theta.end());
    const double eta = 0.05;
    for (MethodKind k : kGammaMethods) {
      const MethodSpec m{k, 3.0 * rng.uniform()};
      const Vector dw = analytic::jacobian(cfg, m).apply(offset);
      const ParamPoint next = step({m, eta}, oracle, w);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(std::abs(next.phi[i] - (w.phi[i] + eta * dw[i])) < 1e-10);
        CHECK(std::abs(next.theta[i] - (w.theta[i] + eta * dw[n + i])) < 1e-10);
      }
    }
  }
}

TEST_CASE("equilibrium is fixed for every method") {
  const GaussianGanConfig cfg = make_cfg({1.0, -2.0}, 0.5);
  const ParamPoint star{cfg.v, {0.0, 0.0}};
  PopulationGanOracle pop(cfg);
  LinearizedGanOracle lin(cfg);
  for (GradientOracle* o : {static_cast<GradientOracle*>(&pop), static_cast<GradientOracle*>(&lin)}) {
    for (MethodKind k : {MethodKind::SimGD, MethodKind::OnlyGen, MethodKind::OnlyDisc, MethodKind::ConOpt,
                         MethodKind::JARE, MethodKind::AdvExtrap}) {
      CHECK(point_diff(step({{k, 2.0}, 0.1}, *o, star), star) <= 1e-12);
    }
  }
}

TEST_CASE("adversarial extrapolation on a bilinear game") {
  QuadraticOracle bilinear(1, DenseMatrix::from_rows({{0, 1}, {1, 0}}));
  const ParamPoint next = adv_extrapolation_step(bilinear, {{1.0}, {1.0}}, 0.1, 0.2);
  CHECK(next.phi[0] == doctest::Approx(0.89).epsilon(1e-14));
  CHECK(next.theta[0] == doctest::Approx(1.09).epsilon(1e-14));
}

TEST_CASE("adversarial extrapolation against SimGD and JARE as gamma shrinks") {
  const GaussianGanConfig cfg = make_cfg({2.0, 1.0}, 0.5);
  PopulationGanOracle oracle(cfg);
  const ParamPoint w{{2.3, 0.8}, {0.2, -0.1}};
  const double eta = 0.1;
  const ParamPoint simgd = step({{MethodKind::SimGD, 0.0}, eta}, oracle, w);
  std::vector<double> to_simgd, to_half_jare, to_jare;
  for (double g : {1e-2, 1e-3, 1e-4}) {
    const ParamPoint adv = adv_extrapolation_step(oracle, w, eta, g);
    to_simgd.push_back(point_diff(adv, simgd));
    to_half_jare.push_back(point_diff(adv, step({{MethodKind::JARE, g / 2}, eta}, oracle, w)));
    to_jare.push_back(point_diff(adv, step({{MethodKind::JARE, g}, eta}, oracle, w)));
  }
  for (std::size_t i = 1; i < 3; ++i) {
    CHECK(to_simgd[i - 1] / to_simgd[i] == doctest::Approx(10.0).epsilon(0.01));
    CHECK(to_half_jare[i - 1] / to_half_jare[i] == doctest::Approx(100.0).epsilon(0.01));
    CHECK(to_jare[i - 1] / to_jare[i] == doctest::Approx(10.0).epsilon(0.01));
  }
  // The gap to full-gamma JARE is the other half of the penalty.
  const ParamPoint half = step({{MethodKind::JARE, 0.5e-4}, eta}, oracle, w);
  const ParamPoint full = step({{MethodKind::JARE, 1e-4}, eta}, oracle, w);
  CHECK(to_jare[2] == doctest::Approx(point_diff(half, full)).epsilon(1e-3));
}

TEST_CASE("finite-difference cross-Hessian near equilibrium") {
  const GaussianGanConfig cfg = make_cfg({2.0, -1.0, 0.5}, 1.0);
  PopulationGanOracle oracle(cfg);
  const ParamPoint star{cfg.v, Vector(3, 0.0)};
  const Vector u{0.3, -1.1, 0.7};
  const Vector fd = hvp_fd(oracle, star, u, HvpBlock::PhiTheta);
  CHECK(rel_diff(fd, Vector{-0.15, 0.55, -0.35}) <= 1e-5);
  const Vector fd2 = hvp_fd(oracle, star, u, HvpBlock::ThetaPhi);
  CHECK(rel_diff(fd2, Vector{-0.15, 0.55, -0.35}) <= 1e-5);
}

TEST_CASE("finite differences are linear in the probe and exact on quadratics") {
  SplitMix64 rng(12);
  const DenseMatrix r(5, 5, std::vector<double>(25, 0.0));
  DenseMatrix h = DenseMatrix::identity(5);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j <= i; ++j) h(i, j) = h(j, i) = rng.normal();
  QuadraticOracle q(2, h);
  const ParamPoint w{random_vector(rng, 2), random_vector(rng, 3)};
  const Vector u = random_vector(rng, 3);
  const Vector exact = h.block(2, 2, 3, 3).apply(u);
  const Vector fd = hvp_fd(q, w, u, HvpBlock::ThetaTheta);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(fd[i] - exact[i]) < 1e-8);

  PopulationGanOracle pop(make_cfg({1.0, 2.0}, 0.3));
  const ParamPoint wp{{0.9, 2.1}, {0.3, -0.2}};
  const Vector p{0.4, -0.6};
  const Vector p2{0.8, -1.2};
  const Vector a = hvp_fd(pop, wp, p, HvpBlock::PhiTheta);
  const Vector b = hvp_fd(pop, wp, p2, HvpBlock::PhiTheta);
  for (std::size_t i = 0; i < 2; ++i) CHECK(std::abs(b[i] - 2 * a[i]) <= 1e-6 * std::abs(b[i]) + 1e-12);
  CHECK_THROWS_AS(hvp_fd(pop, wp, Vector{0.0, 0.0}, HvpBlock::PhiTheta), ValidationError);
  CHECK_THROWS_AS(hvp_fd(pop, wp, Vector{1.0}, HvpBlock::PhiTheta), ValidationError);
}

TEST_CASE("exact and finite-difference products agree on every oracle") {
  SplitMix64 rng(77);
  const GaussianGanConfig cfg = make_cfg({1.5, -0.5, 2.0}, 0.4);
  PopulationGanOracle pop(cfg);
  MinibatchGanOracle mb(cfg, 32, 9);
  LinearizedGanOracle lin(cfg);
  GradientOracle* oracles[] = {&pop, &mb, &lin};
  const HvpBlock blocks[] = {HvpBlock::PhiTheta, HvpBlock::ThetaPhi, HvpBlock::PhiPhi, HvpBlock::ThetaTheta};
  for (GradientOracle* o : oracles) {
    double worst = 0.0;
    for (int probe = 0; probe < 50; ++probe) {
      ParamPoint w{cfg.v, random_vector(rng, 3, 0.5)};
      for (std::size_t i = 0; i < 3; ++i) w.phi[i] += 0.5 * rng.normal();
      const Vector u = random_vector(rng, 3);
      const HvpBlock b = blocks[probe % 4];
      const Vector exact = *o->hvp(w, b, u);
      const Vector fd = hvp_fd(*o, w, u, b);
      const double scale = std::max(numlin::norm2(exact), 1e-3 * numlin::norm2(u));
      double diff = 0.0;
      for (std::size_t i = 0; i < 3; ++i) diff += std::pow(exact[i] - fd[i], 2);
      worst = std::max(worst, std::sqrt(diff) / scale);
    }
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("population gradients match finite differences of the objective") {
  PopulationGanOracle pop(make_cfg({1.0, -2.0}, 0.7));
  const ParamPoint w{{0.5, -1.0}, {0.4, 0.3}};
  const Gradients g = pop.gradients(w);
  const double h = 1e-6;
  for (std::size_t i = 0; i < 2; ++i) {
    ParamPoint p = w, m = w;
    p.phi[i] += h;
    m.phi[i] -= h;
    CHECK((pop.value(p) - pop.value(m)) / (2 * h) == doctest::Approx(g.phi[i]).epsilon(1e-7));
    p = w;
    m = w;
    p.theta[i] += h;
    m.theta[i] -= h;
    CHECK((pop.value(p) - pop.value(m)) / (2 * h) == doctest::Approx(g.theta[i]).epsilon(1e-7));
  }
}

TEST_CASE("minibatch oracle keeps its batch until resampled") {
  MinibatchGanOracle mb(make_cfg({4.0}, 0.04), 8, 3);
  const ParamPoint w{{3.9}, {0.1}};
  const Gradients a = mb.gradients(w);
  const Gradients b = mb.gradients(w);
  CHECK(a.theta == b.theta);
  mb.next_batch();
  CHECK(mb.gradients(w).theta != a.theta);
  MinibatchGanOracle again(make_cfg({4.0}, 0.04), 8, 3);
  CHECK(again.gradients(w).theta == a.theta);
}

TEST_CASE("flow reversal on the negative-curvature family") {
  const double t2 = 4.0;
  const double c = 0.5;
  QuadraticOracle oracle = reversal_oracle(t2, c, 2);
  // theta = c phi zeroes grad_theta, so grad_phi = (c^2 - t2) phi is the only signal.
  const ParamPoint w{{1.0, -0.5}, {c * 1.0, c * -0.5}};
  REQUIRE(numlin::norm2(oracle.gradients(w).theta) == 0.0);
  const FlowDiagnosis bad = check_flow_reversal(oracle, w, {MethodKind::ConOpt, 1.0});
  CHECK(bad.reversed);
  CHECK(bad.reversed_phi);
  CHECK(bad.inner_product_phi < 0.0);
  CHECK_FALSE(check_flow_reversal(oracle, w, {MethodKind::ConOpt, 0.2}).reversed);
  for (double g : {0.1, 1.0, 10.0, 100.0}) {
    CHECK_FALSE(check_flow_reversal(oracle, w, {MethodKind::JARE, g}).reversed);
    CHECK_FALSE(check_flow_reversal(oracle, w, {MethodKind::SimGD, g}).reversed);
  }
  const ParamPoint zero{{0.0, 0.0}, {0.0, 0.0}};
  const FlowDiagnosis z = check_flow_reversal(oracle, zero, {MethodKind::ConOpt, 5.0});
  CHECK_FALSE(z.reversed);
  CHECK(z.inner_product_phi == 0.0);
}

TEST_CASE("divergence is reported and the step is rejected") {
  QuadraticOracle q(1, DenseMatrix::from_rows({{1e300, 0}, {0, 1e300}}));
  const ParamPoint w{{1.0}, {1.0}};
  CHECK_THROWS_AS(step({{MethodKind::SimGD, 0.0}, 1e10}, q, w), DivergenceError);
  CHECK_THROWS_AS(step({{MethodKind::SimGD, 0.0}, 0.1}, q, {{1e10}, {1e10}}), NumericalError);
  CHECK_THROWS_AS(step({{MethodKind::SimGD, 0.0}, 0.0}, q, w), ValidationError);
  CHECK_THROWS_AS(step({{MethodKind::SimGD, 0.0}, 0.1}, q, {{1.0, 2.0}, {1.0}}), ValidationError);
  CHECK_THROWS_AS(update_direction({MethodKind::AdvExtrap, 1.0}, q, {{1.0}, {1.0}}), ValidationError);
}
