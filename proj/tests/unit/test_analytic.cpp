#include <cmath>

#include "doctest.h"
#include "gandyn/analytic_gan.hpp"
#include "gandyn/errors.hpp"
#include "gandyn/rng.hpp"

using namespace gandyn;
using namespace gandyn::analytic;
using numlin::DenseMatrix;

namespace {

GaussianGanConfig make_cfg(Vector v, double sigma2, LossPair loss = LossPair::vanilla()) {
  GaussianGanConfig c;
  c.v = std::move(v);
  c.sigma2 = sigma2;
  c.loss = std::move(loss);
  return c;
}

GaussianGanConfig random_cfg(SplitMix64& rng) {
  const std::size_t dims[] = {1, 2, 4, 8};
  const std::size_t n = dims[rng.below(4)];
  Vector v(n);
  for (double& x : v) x = rng.normal();
  const double norm = numlin::norm2(v);
  const double target = 10.0 * rng.uniform();
  for (double& x : v) x *= target / norm;
  return make_cfg(v, 0.01 + 3.99 * rng.uniform());
}

void check_matrix(const DenseMatrix& got, const DenseMatrix& want, double tol) {
  REQUIRE(got.rows() == want.rows());
  REQUIRE(got.cols() == want.cols());
  for (std::size_t i = 0; i < got.rows(); ++i)
    for (std::size_t j = 0; j < got.cols(); ++j) CHECK(std::abs(got(i, j) - want(i, j)) <= tol);
}

const MethodKind kClosedForm[] = {MethodKind::SimGD, MethodKind::OnlyGen, MethodKind::OnlyDisc,
                                  MethodKind::JARE};

}  // namespace

TEST_CASE("loss presets") {
  const LossPair v = LossPair::vanilla();
  CHECK(v.g1_d1 == 0.5);
  CHECK(v.g2_d1 == -0.5);
  CHECK(v.g1_d2 == -0.25);
  CHECK(v.g2_d2 == -0.25);
  const LossPair w = LossPair::wgan();
  CHECK(w.g1_d2 + w.g2_d2 == 0.0);
  const LossPair r = LossPair::reverse_kl();
  CHECK(r.g1_d1 == 1.0);
  CHECK(r.g2_d1 == -1.0);
  CHECK(r.g1_d2 == -1.0);
  CHECK(r.g2_d2 == 0.0);
  CHECK_THROWS_AS(LossPair::preset("hinge"), ValidationError);
  for (const auto& p : {v, w, r}) {
    CHECK_NOTHROW(p.validate());
    CHECK(p.g1(1, 0.0) == doctest::Approx(p.g1_d1).epsilon(1e-15));
    CHECK(p.g2(1, 0.0) == doctest::Approx(p.g2_d1).epsilon(1e-15));
    CHECK(p.g1(2, 0.0) == doctest::Approx(p.g1_d2).epsilon(1e-15));
    CHECK(p.g2(2, 0.0) == doctest::Approx(p.g2_d2).epsilon(1e-15));
  }
  CHECK(v.g1(0, 0.0) == doctest::Approx(-std::log(2.0)));
  CHECK(v.g2(0, 0.0) == doctest::Approx(-std::log(2.0)));
}

TEST_CASE("loss function derivatives match finite differences") {
  for (const LossPair& p : {LossPair::vanilla(), LossPair::wgan(), LossPair::reverse_kl()}) {
    for (double t : {-2.3, -0.4, 0.0, 0.7, 3.1}) {
      for (int k = 0; k < 4; ++k) {
        const double h = 1e-5;
        const double fd1 = (p.g1(k, t + h) - p.g1(k, t - h)) / (2 * h);
        const double fd2 = (p.g2(k, t + h) - p.g2(k, t - h)) / (2 * h);
        CHECK(std::abs(fd1 - p.g1(k + 1, t)) < 1e-8);
        CHECK(std::abs(fd2 - p.g2(k + 1, t)) < 1e-8);
      }
    }
  }
}

TEST_CASE("custom loss validation") {
  LossPair bad{"bad", 0.5, 0.5, -0.25, -0.25, LossKind::Custom};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  LossPair convex{"convex", 1.0, -1.0, 0.5, -1.0, LossKind::Custom};
  CHECK_THROWS_AS(convex.validate(), ValidationError);
  CHECK_THROWS_AS(bad.g1(1, 0.0), ValidationError);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(make_cfg({}, 1.0).validate(), ValidationError);
  CHECK_THROWS_AS(make_cfg({1.0}, 0.0).validate(), ValidationError);
  CHECK_THROWS_AS(make_cfg({std::nan("")}, 1.0).validate(), ValidationError);
  CHECK(make_cfg({3.0, 4.0}, 1.0).beta2() == 26.0);
}

TEST_CASE("hessian examples") {
  check_matrix(hessian(make_cfg({0.0}, 1.0)), DenseMatrix::from_rows({{0, -0.5}, {-0.5, -0.5}}), 0.0);
  const DenseMatrix w = hessian(make_cfg({1.0, 2.0}, 1.0, LossPair::wgan()));
  check_matrix(w.block(2, 2, 2, 2), DenseMatrix(2, 2), 0.0);
  const DenseMatrix h = hessian(make_cfg({0.0, 2.0}, 1.0));
  check_matrix(h.block(2, 2, 2, 2), DenseMatrix::from_rows({{-0.5, 0}, {0, -2.5}}), 0.0);
  check_matrix(h.block(0, 0, 2, 2), DenseMatrix(2, 2), 0.0);
  CHECK(h.is_symmetric(0.0));
}

TEST_CASE("jacobian examples") {
  const GaussianGanConfig cfg = make_cfg({0.0}, 1.0);
  const DenseMatrix m = jacobian(cfg, {MethodKind::SimGD, 0.0});
  check_matrix(m, DenseMatrix::from_rows({{0, 0.5}, {-0.5, -0.5}}), 0.0);
  check_matrix(jacobian(cfg, {MethodKind::JARE, 0.0}), m, 0.0);
  // M - M^T M, by hand: M^T M = [[0.25, 0.25], [0.25, 0.5]].
  check_matrix(jacobian(cfg, {MethodKind::ConOpt, 1.0}),
               DenseMatrix::from_rows({{-0.25, 0.25}, {-0.75, -1.0}}), 1e-15);
  CHECK_THROWS_AS(jacobian(cfg, {MethodKind::AdvExtrap, 1.0}), ValidationError);
  CHECK_THROWS_AS(jacobian(cfg, {MethodKind::JARE, -1.0}), ValidationError);
}

TEST_CASE("gamma zero reduces every regularized jacobian to SimGD") {
  const GaussianGanConfig cfg = make_cfg({0.3, -1.2, 2.0}, 0.7);
  const DenseMatrix m = jacobian(cfg, {MethodKind::SimGD, 5.0});
  for (MethodKind k : {MethodKind::OnlyGen, MethodKind::OnlyDisc, MethodKind::ConOpt, MethodKind::JARE}) {
    check_matrix(jacobian(cfg, {k, 0.0}), m, 0.0);
  }
}

TEST_CASE("JARE jacobian on the simple model matches the explicit block form") {
  const double g = 3.0;
  const double s2 = 0.5;
  const GaussianGanConfig cfg = make_cfg({1.0, 2.0}, s2);
  const DenseMatrix cov = DenseMatrix::identity(2) * s2 + DenseMatrix::outer(cfg.v, cfg.v);
  const DenseMatrix eye = DenseMatrix::identity(2);
  const DenseMatrix want = DenseMatrix::from_blocks(eye * (-g / 4), eye * 0.5 - cov * (g / 4), eye * -0.5,
                                                    eye * (-g / 4) - cov * 0.5);
  check_matrix(jacobian(cfg, {MethodKind::JARE, g}), want, 1e-14);
}

TEST_CASE("closed-form examples") {
  const GaussianGanConfig cfg = make_cfg({0.0, 4.004}, 0.04);
  const auto eigs = eigenvalues_closed_form(cfg, {MethodKind::SimGD, 0.0});
  REQUIRE(eigs.size() == 4);
  CHECK(eigs[0].multiplicity == 1);
  CHECK(eigs[0].value.real() == doctest::Approx(-0.01).epsilon(1e-14));
  CHECK(std::abs(eigs[0].value.imag()) == doctest::Approx(0.4998999899979995).epsilon(1e-14));
  CHECK(eigs[1].value == std::conj(eigs[0].value));

  const auto crit = eigenvalues_closed_form(make_cfg({0.0}, 2.0), {MethodKind::SimGD, 0.0});
  REQUIRE(crit.size() == 1);
  CHECK(crit[0].value == Complex(-0.5, 0.0));
  CHECK(crit[0].multiplicity == 2);

  // JARE with s2 = 0, gamma = 2: (-2 +- sqrt(4 - 8)) / 4
  const auto [a, b] = quartic_pair(0.0 + 2.0, 2.0 * 2.0 + 4.0);
  CHECK(a == Complex(-0.5, 0.5));
  CHECK(b == Complex(-0.5, -0.5));
  CHECK(numlin::phase_ratio(numlin::Spectrum::from_values({a, b})).value() == 1.0);
}

TEST_CASE("closed form errors") {
  const GaussianGanConfig cfg = make_cfg({1.0}, 1.0);
  CHECK_THROWS_AS(eigenvalues_closed_form(cfg, {MethodKind::ConOpt, 1.0}), ValidationError);
  CHECK_THROWS_AS(eigenvalues_closed_form(cfg, {MethodKind::AdvExtrap, 1.0}), ValidationError);
  CHECK_THROWS_AS(eigenvalues_closed_form(make_cfg({1.0}, 1.0, LossPair::wgan()), {MethodKind::SimGD, 0.0}),
                  ValidationError);
}

TEST_CASE("closed forms agree with the numeric eigensolver") {
  SplitMix64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const GaussianGanConfig cfg = random_cfg(rng);
    for (MethodKind k : kClosedForm) {
      for (double g : {0.0, 1.0, 10.0}) {
        const MethodSpec m{k, g};
        const ComplexVector closed = expand(eigenvalues_closed_form(cfg, m));
        const numlin::Spectrum num = numlin::eig_real(jacobian(cfg, m));
        REQUIRE(closed.size() == 2 * cfg.n());
        CHECK(numlin::max_relative_mismatch(num.eigenvalues, closed) < 1e-8);
      }
    }
  }
}

TEST_CASE("multiplicity structure and merged degenerate case") {
  const auto eigs = eigenvalues_closed_form(make_cfg({1.0, 0.0, 0.0, 0.0}, 0.3), {MethodKind::JARE, 2.0});
  REQUIRE(eigs.size() == 4);
  CHECK(eigs[0].multiplicity == 3);
  CHECK(eigs[1].multiplicity == 3);
  CHECK(eigs[2].multiplicity == 1);
  CHECK(eigs[3].multiplicity == 1);
  const auto zero_v = eigenvalues_closed_form(make_cfg({0.0, 0.0, 0.0}, 0.3), {MethodKind::SimGD, 0.0});
  REQUIRE(zero_v.size() == 2);
  CHECK(zero_v[0].multiplicity == 3);
  const auto one_d = eigenvalues_closed_form(make_cfg({2.0}, 0.3), {MethodKind::SimGD, 0.0});
  CHECK(expand(one_d).size() == 2);
}

TEST_CASE("vanilla spectra are strictly stable and OnlyGen equals OnlyDisc") {
  SplitMix64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const GaussianGanConfig cfg = random_cfg(rng);
    const double g = 20.0 * rng.uniform();
    for (MethodKind k : kClosedForm)
      for (const Complex& l : expand(eigenvalues_closed_form(cfg, {k, g}))) CHECK(l.real() < 0.0);
    const auto a = numlin::eig_real(jacobian(cfg, {MethodKind::OnlyGen, g})).eigenvalues;
    const auto b = numlin::eig_real(jacobian(cfg, {MethodKind::OnlyDisc, g})).eigenvalues;
    CHECK(numlin::max_relative_mismatch(a, b) < 1e-8);
  }
}

TEST_CASE("ConOpt conditioning lower bound") {
  SplitMix64 rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    const double s2 = 0.05 + 1.9 * rng.uniform();
    const double norm = std::sqrt(2.0 - s2) + 0.1 + 6.0 * rng.uniform();
    const GaussianGanConfig cfg = make_cfg({0.0, norm}, s2);
    REQUIRE(cfg.beta2() > 2.0);
    for (double g : {0.1, 1.0, 10.0}) {
      const auto spec = numlin::eig_real(jacobian(cfg, {MethodKind::ConOpt, g}));
      const double tau = numlin::condition_ratio(spec).value();
      CHECK(tau >= conopt_tau_lower_bound(cfg, g) * (1 - 1e-6));
    }
  }
}

TEST_CASE("eta interval brackets the stability boundary") {
  SplitMix64 rng(123);
  const MethodKind kinds[] = {MethodKind::SimGD, MethodKind::OnlyGen, MethodKind::OnlyDisc, MethodKind::ConOpt,
                              MethodKind::JARE};
  for (int trial = 0; trial < 20; ++trial) {
    const GaussianGanConfig cfg = random_cfg(rng);
    const MethodSpec m{kinds[rng.below(5)], 10.0 * rng.uniform()};
    const SpectrumReport r = report(cfg, m);
    REQUIRE(r.stable);
    REQUIRE(r.eta_max_numeric.has_value());
    const double eta = *r.eta_max_numeric;
    CHECK(spectral_radius_of_step(r.eigenvalues, 0.99 * eta) < 1.0);
    CHECK(spectral_radius_of_step(r.eigenvalues, 1.01 * eta) >= 1.0);
    if (r.eta_max_closed_form) CHECK(*r.eta_max_closed_form == doctest::Approx(eta).epsilon(1e-8));
  }
}

TEST_CASE("report magnitudes for the small-variance and far-mean cases") {
  const SpectrumReport phase = report(make_cfg({0.0, 1.0}, 0.01), {MethodKind::SimGD, 0.0}, {1e-2, 1, 1});
  CHECK(phase.zeta.value() == doctest::Approx(199.9974999843748).epsilon(1e-12));
  CHECK(phase.n_bound_phase->value() > 1e4);
  const SpectrumReport cond = report(make_cfg({0.0, 10.0}, 2.0), {MethodKind::SimGD, 0.0}, {1e-2, 1, 1});
  CHECK(cond.tau.value() == doctest::Approx(10401.99990386464).epsilon(1e-10));
  CHECK(cond.zeta.value() == 0.0);
  CHECK(cond.n_bound_conditioning->value() > 1e3);
  CHECK(cond.n_bound_conditioning->value() ==
        doctest::Approx(std::log(1e-2) / std::log(1 - 2 / 10401.99990386464)).epsilon(1e-9));
}

TEST_CASE("report quantities match the ratio functions and closed-form step sizes") {
  const GaussianGanConfig cfg = make_cfg({0.0, 4.0}, 0.04);
  const SpectrumReport r = report(cfg, {MethodKind::SimGD, 0.0});
  const numlin::Spectrum s{r.eigenvalues, std::nullopt, std::nullopt,
                           jacobian(cfg, {MethodKind::SimGD, 0.0}).spectral_norm_estimate()};
  CHECK(std::abs(r.zeta.value() - numlin::phase_ratio(s).value()) <= 1e-10);
  CHECK(std::abs(r.tau.value() - numlin::condition_ratio(s).value()) <= 1e-10);
  // min(2 s2, 8 / (beta2 + sqrt(beta2^2 - 4)))
  CHECK(*r.eta_max_closed_form == doctest::Approx(0.08).epsilon(1e-12));
  const SpectrumReport j = report(cfg, {MethodKind::JARE, 10.0});
  CHECK(*j.eta_max_closed_form == doctest::Approx(0.16).epsilon(1e-12));
  CHECK(*j.eta_max_numeric == doctest::Approx(0.16).epsilon(1e-8));
}

TEST_CASE("large-gamma JARE report") {
  const SpectrumReport r = report(make_cfg({0.0, 4.0}, 0.04), {MethodKind::JARE, 1e6});
  CHECK(r.zeta.value() == 0.0);
  CHECK(r.tau.value() == doctest::Approx(1.0113922287309398).epsilon(1e-9));
}

TEST_CASE("ConOpt report is numeric and echoes the bound") {
  const SpectrumReport r = report(make_cfg({0.0, 4.0}, 0.04), {MethodKind::ConOpt, 10.0});
  CHECK_FALSE(r.closed_form);
  CHECK_FALSE(r.eta_max_closed_form.has_value());
  REQUIRE(r.notes.size() == 2);
  CHECK(r.notes[0].find("closed form unavailable") != std::string::npos);
  CHECK(r.notes[1].find("Delta") != std::string::npos);
  const nlohmann::json j = to_json(r);
  CHECK(j["method"] == "conopt");
  CHECK(j["eta_max_closed_form"].is_null());
  CHECK(j["eigenvalues"].size() == 4);
}

TEST_CASE("unstable spectra give an empty interval") {
  const SpectrumReport r = report(make_cfg({1.0}, 1.0, LossPair::wgan()), {MethodKind::SimGD, 0.0});
  CHECK_FALSE(r.stable);
  CHECK(r.zeta.is_infinite());
  CHECK_FALSE(r.eta_max_numeric.has_value());
  const nlohmann::json j = to_json(r);
  CHECK(j["zeta"] == "inf");
  CHECK(j["eta_max_numeric"].is_null());
  CHECK_THROWS_AS(report(make_cfg({1.0}, 1.0), {MethodKind::SimGD, 0.0}, {1.5, 1, 1}), ValidationError);
}

TEST_CASE("iteration bounds") {
  CHECK(phase_iteration_bound(ExtendedReal(0.0), 1e-2, 1.0).value() == 0.0);
  CHECK(phase_iteration_bound(ExtendedReal::infinity(), 1e-2, 1.0).is_infinite());
  CHECK(phase_iteration_bound(ExtendedReal(1.0), 1e-2, 1.0).value() ==
        doctest::Approx(2 * std::log(100.0) / std::log(2.0)));
  CHECK_FALSE(conditioning_iteration_bound(ExtendedReal(2.0), 1e-2, 1.0).has_value());
  CHECK(conditioning_iteration_bound(ExtendedReal(4.0), 1e-2, 1.0)->value() ==
        doctest::Approx(std::log(1e-2) / std::log(0.5)));
}

TEST_CASE("JARE monotonicity curve") {
  const double sigma2 = 0.04;
  const GaussianGanConfig cfg = make_cfg({0.0, std::sqrt(16.0 - sigma2)}, sigma2);
  const std::vector<double> grid{0, 0.5, 1, 2, 5, 10, 1e2, 1e3, 1e4};
  const auto curve = jare_monotonicity_curve(cfg, grid);
  REQUIRE(curve.size() == grid.size());
  for (std::size_t i = 1; i < curve.size(); ++i) {
    CHECK(curve[i].zeta <= curve[i - 1].zeta);
    if (grid[i - 1] >= 2) CHECK(curve[i].tau <= curve[i - 1].tau);
  }
  for (const auto& p : curve)
    if (p.gamma >= 49.98) CHECK(p.zeta == 0.0);
  const SpectrumReport simgd = report(cfg, {MethodKind::SimGD, 0.0});
  CHECK(curve[0].zeta == doctest::Approx(simgd.zeta.value()).epsilon(1e-12));
  CHECK(curve[0].tau == doctest::Approx(simgd.tau.value()).epsilon(1e-10));
  // tau - 1 decays like gamma^{-1/2}; at 1e4 it is still about 0.12.
  CHECK(curve.back().tau == doctest::Approx(1.1197677497577914).epsilon(1e-10));
  for (const auto& p : curve) {
    const SpectrumReport r = report(cfg, {MethodKind::JARE, p.gamma});
    CHECK(p.zeta == doctest::Approx(r.zeta.value()).epsilon(1e-8));
    CHECK(p.tau == doctest::Approx(r.tau.value()).epsilon(1e-8));
  }
  CHECK_THROWS_AS(jare_monotonicity_curve(make_cfg({0.0}, 0.5), grid), ValidationError);
  const std::vector<double> bad{1.0, 1.0};
  CHECK_THROWS_AS(jare_monotonicity_curve(cfg, bad), ValidationError);
}

TEST_CASE("full-rank representation example") {
  const auto [l1, l2] = fullrank_example(0.0, Discriminator::Linear);
  CHECK(l1 == Complex(0.0, 0.5));
  CHECK(l2 == Complex(0.0, -0.5));
  CHECK(numlin::phase_ratio(numlin::Spectrum::from_values({l1, l2})).is_infinite());
  const auto [e1, e2] = fullrank_example(0.0, Discriminator::Exponential);
  CHECK(e1.real() == doctest::Approx(-0.25));
  CHECK(std::abs(e1.imag()) == doctest::Approx(std::sqrt(3.0) / 4));
  CHECK(numlin::phase_ratio(numlin::Spectrum::from_values({e1, e2})).value() ==
        doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
  const auto [a1, a2] = fullrank_example(5.0, Discriminator::Linear);
  CHECK(std::abs(a1 / a2) == doctest::Approx(622.9983948594419).epsilon(1e-10));
  const auto [b1, b2] = fullrank_example(5.0, Discriminator::Exponential);
  CHECK(std::abs(b1 / b2) == doctest::Approx(22024.465749396924).epsilon(1e-9));
  for (Discriminator d : {Discriminator::Linear, Discriminator::Exponential}) {
    const auto [p, q] = fullrank_example(1.3, d);
    const auto num = numlin::eig_real(fullrank_jacobian(1.3, d)).eigenvalues;
    CHECK(numlin::max_relative_mismatch(num, ComplexVector{p, q}) < 1e-12);
  }
}

TEST_CASE("method names round trip") {
  for (MethodKind k : {MethodKind::SimGD, MethodKind::OnlyGen, MethodKind::OnlyDisc, MethodKind::ConOpt,
                       MethodKind::JARE, MethodKind::AdvExtrap})
    CHECK(parse_method(method_name(k)) == k);
  CHECK(parse_method("JARE") == MethodKind::JARE);
  CHECK_THROWS_AS(parse_method("sga"), ValidationError);
}
