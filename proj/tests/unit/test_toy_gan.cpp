#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "gandyn/csv.hpp"
#include "gandyn/errors.hpp"
#include "gandyn/toy_gan.hpp"

using namespace gandyn;
using namespace gandyn::toy_gan;

namespace {

Batch small_batch(const MogConfig& cfg, std::size_t n, SplitMix64& rng) {
  Batch b;
  for (const Point2& p : sample_real(cfg, n, rng)) b.real.push_back({p[0], p[1]});
  for (std::size_t i = 0; i < n; ++i) b.latent.push_back(sample_latent(cfg, rng));
  return b;
}

// Largest deviation relative to the largest partial.
double max_rel(std::span<const double> a, std::span<const double> b) {
  double err = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    err = std::max(err, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return err / scale;
}

MogConfig small_cfg() {
  MogConfig cfg;
  cfg.latent_dim = 4;
  return cfg;
}

}  // namespace

TEST_CASE("mlp parameters round-trip through flatten and unflatten") {
  SplitMix64 rng(3);
  Mlp m = Mlp::glorot({3, 5, 2}, rng);
  CHECK(m.param_count() == 5 * 3 + 5 + 2 * 5 + 2);
  CHECK(m.bias_offset(0) == 15);
  CHECK(m.weight_offset(1) == 20);
  const Vector p = m.flatten();
  Mlp copy({3, 5, 2});
  copy.unflatten(p);
  CHECK(copy.flatten() == p);
  const Vector x{0.3, -1.0, 2.0};
  CHECK(copy.forward(x) == m.forward(x));
  CHECK_THROWS_AS(copy.unflatten(Vector(3)), ValidationError);
  CHECK_THROWS_AS(Mlp({3}), ValidationError);
  CHECK_THROWS_AS(copy.forward(Vector(2)), ValidationError);
}

TEST_CASE("glorot init bounds weights and zeroes biases") {
  SplitMix64 rng(4);
  Mlp m = Mlp::glorot({10, 6}, rng);
  const double limit = std::sqrt(6.0 / 16.0);
  for (std::size_t i = 0; i < 60; ++i) CHECK(std::abs(m.flatten()[i]) <= limit);
  for (std::size_t i = 60; i < 66; ++i) CHECK(m.flatten()[i] == 0.0);
}

TEST_CASE("mlp backward matches finite differences") {
  SplitMix64 rng(5);
  Mlp m = Mlp::glorot({3, 8, 8, 8, 2}, rng);
  Vector p = m.flatten();
  for (double& v : p) v += 0.1 * rng.normal();  // nonzero biases move the relu kinks
  m.unflatten(p);
  const Vector x{0.4, -0.7, 1.1};
  const Vector dout{0.8, -1.3};
  Mlp::Tape tape;
  m.forward(x, tape);
  Vector grad(m.param_count(), 0.0);
  const Vector dx = m.backward(tape, dout, grad);

  auto objective = [&](const Mlp& net, const Vector& in) {
    const Vector y = net.forward(in);
    return dout[0] * y[0] + dout[1] * y[1];
  };
  const double h = 1e-6;
  Vector fd(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    Mlp plus = m;
    Mlp minus = m;
    Vector q = p;
    q[i] += h;
    plus.unflatten(q);
    q[i] -= 2 * h;
    minus.unflatten(q);
    fd[i] = (objective(plus, x) - objective(minus, x)) / (2 * h);
  }
  CHECK(max_rel(grad, fd) < 1e-5);
  Vector fdx(3);
  for (std::size_t j = 0; j < 3; ++j) {
    Vector xp = x;
    Vector xm = x;
    xp[j] += h;
    xm[j] -= h;
    fdx[j] = (objective(m, xp) - objective(m, xm)) / (2 * h);
  }
  CHECK(max_rel(dx, fdx) < 1e-5);
}

TEST_CASE("gan gradients match finite differences of the objective") {
  const MogConfig cfg = small_cfg();
  SplitMix64 rng(6);
  Mlp g = Mlp::glorot({4, 8, 8, 2}, rng);
  Mlp d = Mlp::glorot({2, 8, 8, 1}, rng);
  const Batch batch = small_batch(cfg, 16, rng);
  const LossPair loss = LossPair::vanilla();
  const Gradients grads = gan_gradients(g, d, loss, batch);

  const double h = 1e-6;
  auto fd_of = [&](Mlp& net, std::size_t n) {
    Vector p = net.flatten();
    Vector out(n);
    for (std::size_t i = 0; i < n; ++i) {
      Vector q = p;
      q[i] += h;
      net.unflatten(q);
      const double fp = gan_objective(g, d, loss, batch);
      q[i] -= 2 * h;
      net.unflatten(q);
      const double fm = gan_objective(g, d, loss, batch);
      out[i] = (fp - fm) / (2 * h);
    }
    net.unflatten(p);
    return out;
  };
  CHECK(max_rel(grads.phi, fd_of(g, g.param_count())) < 1e-5);
  CHECK(max_rel(grads.theta, fd_of(d, d.param_count())) < 1e-5);
}

TEST_CASE("non-saturating generator gradient reweights each fake sample") {
  const MogConfig cfg = small_cfg();
  SplitMix64 rng(7);
  Mlp g = Mlp::glorot({4, 8, 2}, rng);
  Mlp d = Mlp::glorot({2, 8, 1}, rng);
  Batch batch = small_batch(cfg, 16, rng);
  batch.latent.resize(1);
  const LossPair loss = LossPair::vanilla();
  const Gradients mm = gan_gradients(g, d, loss, batch, GeneratorObjective::Minimax);
  const Gradients ns = gan_gradients(g, d, loss, batch, GeneratorObjective::NonSaturating);
  CHECK(mm.theta == ns.theta);
  // One fake sample: the generator gradient is scaled by -g1'(t) / g2'(t) = exp(-t).
  const double t = d.forward(g.forward(batch.latent[0]))[0];
  for (std::size_t i = 0; i < mm.phi.size(); ++i) {
    CHECK(ns.phi[i] == doctest::Approx(mm.phi[i] * std::exp(-t)).epsilon(1e-12).scale(1e-300));
  }
}

TEST_CASE("constant discriminator gives zero generator gradient and f = -2 log 2") {
  const MogConfig cfg = small_cfg();
  SplitMix64 rng(8);
  Mlp g = Mlp::glorot({4, 8, 2}, rng);
  Mlp d({2, 8, 8, 1});
  const Batch batch = small_batch(cfg, 16, rng);
  const Gradients grads = gan_gradients(g, d, LossPair::vanilla(), batch);
  for (double x : grads.phi) CHECK(x == 0.0);
  CHECK(gan_objective(g, d, LossPair::vanilla(), batch) == doctest::Approx(-2.0 * std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("gan gradients reject mismatched networks") {
  Mlp g({4, 3});
  Mlp d({2, 1});
  Batch b;
  b.real.push_back({0.0, 0.0});
  b.latent.push_back(Vector(4, 0.0));
  CHECK_THROWS_AS(gan_gradients(g, d, LossPair::vanilla(), b), ValidationError);
  CHECK_THROWS_AS(gan_gradients(Mlp({4, 2}), Mlp({2, 2}), LossPair::vanilla(), b), ValidationError);
  CHECK_THROWS_AS(gan_gradients(Mlp({4, 2}), d, LossPair::vanilla(), Batch{}), ValidationError);
}

TEST_CASE("mog sampler") {
  SUBCASE("zero spread puts every sample on the circle") {
    MogConfig cfg;
    cfg.mode_std = 1e-300;
    SplitMix64 rng(9);
    for (const Point2& p : sample_real(cfg, 200, rng)) CHECK(std::hypot(p[0], p[1]) == doctest::Approx(2.0));
  }
  SUBCASE("one mode sits at (r, 0)") {
    MogConfig cfg;
    cfg.mode_count = 1;
    SplitMix64 rng(10);
    double mx = 0.0;
    double my = 0.0;
    const auto s = sample_real(cfg, 20000, rng);
    for (const Point2& p : s) {
      mx += p[0] / 20000.0;
      my += p[1] / 20000.0;
    }
    CHECK(mx == doctest::Approx(2.0).epsilon(0.002));
    CHECK(std::abs(my) < 0.002);
  }
  SUBCASE("mode counts follow the uniform multinomial") {
    MogConfig cfg;
    SplitMix64 rng(11);
    const std::size_t n = 100000;
    const auto s = sample_real(cfg, n, rng);
    // Nearest-center assignment recovers the mode index: the modes are 1.53 apart, 25 std.
    std::vector<double> counts(8, 0.0);
    for (const Point2& p : s) {
      const double angle = std::atan2(p[1], p[0]);
      counts[static_cast<std::size_t>(std::lround(angle / (std::numbers::pi / 4.0)) + 8) % 8] += 1.0;
    }
    const double expect = n / 8.0;
    const double sd = std::sqrt(n * 0.125 * 0.875);
    for (double k : counts) CHECK(std::abs(k - expect) <= 3.0 * sd);
    // Within 3 std of a 2-D Gaussian holds 1 - exp(-4.5) of its mass.
    const ModeCoverage c = mode_coverage(s, cfg);
    CHECK(c.hq_fraction == doctest::Approx(1.0 - std::exp(-4.5)).epsilon(0.002));
  }
  SUBCASE("centers are evenly spaced") {
    MogConfig cfg;
    const Point2 c2 = cfg.center(2);
    CHECK(std::abs(c2[0]) < 1e-15);
    CHECK(c2[1] == doctest::Approx(2.0));
  }
  SUBCASE("latent variance") {
    MogConfig cfg;
    SplitMix64 rng(12);
    double s2 = 0.0;
    for (int i = 0; i < 2000; ++i) {
      for (double z : sample_latent(cfg, rng)) s2 += z * z;
    }
    CHECK(s2 / (2000.0 * 64.0) == doctest::Approx(2.0).epsilon(0.02));
  }
  SUBCASE("validation") {
    MogConfig cfg;
    cfg.mode_std = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = MogConfig{};
    cfg.mode_count = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    SplitMix64 rng(1);
    CHECK_THROWS_AS(sample_real(MogConfig{}, 0, rng), ValidationError);
  }
}

TEST_CASE("mode coverage") {
  MogConfig cfg;
  SUBCASE("exact centers cover every mode") {
    std::vector<Point2> s;
    for (int rep = 0; rep < 100; ++rep) {
      for (std::size_t k = 0; k < 8; ++k) s.push_back(cfg.center(k));
    }
    const ModeCoverage c = mode_coverage(s, cfg);
    CHECK(c.covered == 8);
    CHECK(c.hq_fraction == 1.0);
  }
  SUBCASE("origin covers nothing") {
    const std::vector<Point2> s(500, Point2{0.0, 0.0});
    const ModeCoverage c = mode_coverage(s, cfg);
    CHECK(c.covered == 0);
    CHECK(c.hq_fraction == 0.0);
  }
  SUBCASE("real samples") {
    SplitMix64 rng(13);
    const ModeCoverage c = mode_coverage(sample_real(cfg, 4096, rng), cfg);
    CHECK(c.covered == 8);
    CHECK(c.hq_fraction >= 0.98);
  }
  SUBCASE("threshold is max(10, 1%)") {
    std::vector<Point2> s(9, cfg.center(0));
    CHECK(mode_coverage(s, cfg).covered == 0);
    s.push_back(cfg.center(0));
    CHECK(mode_coverage(s, cfg).covered == 1);
    s.resize(2000, Point2{0.0, 0.0});
    CHECK(mode_coverage(s, cfg).covered == 0);
  }
}

TEST_CASE("mog training is deterministic and jare at gamma 0 is simgd") {
  MogConfig cfg = small_cfg();
  MogOptions opt;
  opt.arch.generator = {4, 8, 8, 2};
  opt.arch.discriminator = {2, 8, 8, 1};
  opt.snapshot_every = 10;
  opt.snapshot_count = 64;
  dynamics::RunConfig run;
  run.steps = 25;
  run.eta = 1e-3;
  run.seed = 21;
  run.batch_size = 32;
  run.optimizer = dynamics::Optimizer::RmsProp;
  const MogResult a = train_mog(cfg, {MethodKind::JARE, 10.0}, run, opt);
  const MogResult b = train_mog(cfg, {MethodKind::JARE, 10.0}, run, opt);
  CHECK(a.final_params.phi == b.final_params.phi);
  CHECK(a.final_params.theta == b.final_params.theta);
  REQUIRE(a.snapshots.size() == 4);  // 0, 10, 20 and the final 25
  CHECK(a.snapshots.back().iteration == 25);
  CHECK(a.records.size() == 26);

  const MogResult j0 = train_mog(cfg, {MethodKind::JARE, 0.0}, run, opt);
  const MogResult sg = train_mog(cfg, {MethodKind::SimGD, 0.0}, run, opt);
  CHECK(j0.final_params.phi == sg.final_params.phi);
  CHECK(j0.final_params.theta == sg.final_params.theta);

  for (MethodKind k : {MethodKind::ConOpt, MethodKind::OnlyGen, MethodKind::OnlyDisc, MethodKind::AdvExtrap}) {
    const MogResult r = train_mog(cfg, {k, 1.0}, run, opt);
    CHECK(r.status == dynamics::TraceStatus::Completed);
  }
}

TEST_CASE("zero-step mog run snapshots the initial generator") {
  MogConfig cfg = small_cfg();
  MogOptions opt;
  opt.arch.generator = {4, 8, 2};
  opt.arch.discriminator = {2, 8, 1};
  opt.snapshot_count = 32;
  dynamics::RunConfig run;
  run.steps = 0;
  run.seed = 5;
  const MogResult r = train_mog(cfg, {MethodKind::JARE, 10.0}, run, opt);
  REQUIRE(r.snapshots.size() == 1);
  CHECK(r.snapshots[0].iteration == 0);
  CHECK(r.records.size() == 1);

  SplitMix64 rng(5);
  Mlp g = Mlp::glorot(opt.arch.generator, rng);
  Mlp::glorot(opt.arch.discriminator, rng);
  SplitMix64 snap = rng.fork();
  std::vector<Vector> latents;
  for (int i = 0; i < 32; ++i) latents.push_back(sample_latent(cfg, snap));
  const auto expect = generate(g, latents);
  CHECK(r.snapshots[0].samples == expect);
  CHECK(r.final_params.phi == g.flatten());
}

TEST_CASE("mog training validates its inputs") {
  MogConfig cfg = small_cfg();
  dynamics::RunConfig run;
  MogOptions opt;  // default generator expects 64 latent inputs
  CHECK_THROWS_AS(train_mog(cfg, {MethodKind::JARE, 10.0}, run, opt), ValidationError);
  opt.arch.generator = {4, 8, 2};
  opt.arch.discriminator = {2, 8, 1};
  opt.snapshot_every = 0;
  CHECK_THROWS_AS(train_mog(cfg, {MethodKind::JARE, 10.0}, run, opt), ValidationError);
  opt.snapshot_every = 5;
  run.eta = -1.0;
  CHECK_THROWS_AS(train_mog(cfg, {MethodKind::JARE, 10.0}, run, opt), ValidationError);
}

TEST_CASE("mlp gan adapter") {
  const MogConfig cfg = small_cfg();
  SplitMix64 rng(14);
  Mlp g = Mlp::glorot({4, 6, 2}, rng);
  Mlp d = Mlp::glorot({2, 6, 6, 1}, rng);

  SUBCASE("generator jacobian matches finite differences") {
    MlpGan gan(cfg, g, d);
    const Vector z = sample_latent(cfg, rng);
    const numlin::DenseMatrix j = gan.generator_jacobian(z);
    const Vector p = g.flatten();
    const double h = 1e-6;
    double err = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      Mlp gp = g;
      Mlp gm = g;
      Vector q = p;
      q[i] += h;
      gp.unflatten(q);
      q[i] -= 2 * h;
      gm.unflatten(q);
      const Vector yp = gp.forward(z);
      const Vector ym = gm.forward(z);
      for (std::size_t o = 0; o < 2; ++o) {
        err = std::max(err, std::abs(j(o, i) - (yp[o] - ym[o]) / (2 * h)));
        scale = std::max(scale, std::abs(j(o, i)));
      }
    }
    CHECK(err / scale < 1e-5);
  }

  SUBCASE("zero discriminator head leaves only head rows in P and Q") {
    Vector theta = d.flatten();
    const std::size_t head = d.weight_offset(d.layer_count() - 1);
    for (std::size_t i = head; i < theta.size(); ++i) theta[i] = 0.0;
    d.unflatten(theta);
    MlpGan gan(cfg, g, d);
    SplitMix64 srng(15);
    const general_spectrum::PqEstimate est = general_spectrum::estimate_pq(gan, LossPair::vanilla(), 200, srng);
    CHECK(est.q.rows() == d.param_count());
    CHECK(est.p.rows() == g.param_count());
    for (std::size_t i = 0; i < head; ++i) {
      for (std::size_t j = 0; j < est.q.cols(); ++j) CHECK(est.q(i, j) == 0.0);
      for (std::size_t r = 0; r < est.p.rows(); ++r) CHECK(est.p(r, i) == 0.0);
    }
    double head_mass = 0.0;
    for (std::size_t i = head; i < theta.size(); ++i) head_mass += std::abs(est.q(i, i));
    CHECK(head_mass > 0.0);
  }
}

TEST_CASE("snapshot and trace writers round-trip") {
  MogConfig cfg;
  Snapshot s{2000, {{0.125, -1.5}, {2.0, 1e-7}, {-3.25, 0.0}}};
  std::ostringstream csv;
  write_snapshot_csv(csv, s);
  std::istringstream in(csv.str());
  const CsvTable t = read_csv(in);
  REQUIRE(t.rows.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(t.number(i, "x") == s.samples[i][0]);
    CHECK(t.number(i, "y") == s.samples[i][1]);
  }

  std::ostringstream svg;
  write_snapshot_svg(svg, s, cfg);
  const std::string text = svg.str();
  CHECK(text.find("<svg") == 0);
  CHECK(text.find("viewBox=\"0 0 480 480\"") != std::string::npos);
  CHECK(text.find("iteration 2000") != std::string::npos);
  // Eight mode rings plus the two samples inside [-3, 3]^2.
  std::size_t circles = 0;
  for (std::size_t pos = text.find("<circle"); pos != std::string::npos; pos = text.find("<circle", pos + 1)) ++circles;
  CHECK(circles == 10);

  MogResult r;
  r.records = {{0, 1.5, 0.25}, {1, 0.5, 0.75}};
  std::ostringstream tr;
  write_mog_trace_csv(tr, r);
  std::istringstream tin(tr.str());
  const CsvTable tt = read_csv(tin);
  CHECK(tt.header == std::vector<std::string>{"iteration", "grad_phi", "grad_theta"});
  CHECK(tt.number(1, "grad_theta") == 0.75);
}

TEST_CASE("mog metadata and coverage json") {
  MogConfig cfg;
  MogOptions opt;
  dynamics::RunConfig run;
  MogResult r;
  r.snapshots.push_back({0, std::vector<Point2>(20, cfg.center(3))});
  const nlohmann::json j = mog_metadata(cfg, {MethodKind::JARE, 10.0}, run, opt, r);
  CHECK(j["method"]["name"] == "jare");
  CHECK(j["architecture"]["generator"].size() == 6);
  CHECK(j["snapshots"][0]["coverage"]["covered"] == 1);
  CHECK(j["hvp"] == "finite_difference");
  CHECK(j.dump().find("time") == std::string::npos);
}
