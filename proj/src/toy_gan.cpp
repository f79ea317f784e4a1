#include "gandyn/toy_gan.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

#include "gandyn/errors.hpp"

namespace gandyn::toy_gan {

using numlin::DenseMatrix;

Mlp::Mlp(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw ValidationError("an MLP needs at least an input and an output size");
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] == 0 || sizes_[l + 1] == 0) throw ValidationError("MLP layer sizes must be >= 1");
    offsets_.push_back(total);
    total += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
  }
  params_.assign(total, 0.0);
}

Mlp Mlp::glorot(std::vector<std::size_t> sizes, SplitMix64& rng) {
  Mlp m(std::move(sizes));
  for (std::size_t l = 0; l < m.layer_count(); ++l) {
    const std::size_t in = m.sizes_[l];
    const std::size_t out = m.sizes_[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (std::size_t i = 0; i < in * out; ++i) m.params_[m.offsets_[l] + i] = limit * (2.0 * rng.uniform() - 1.0);
  }
  return m;
}

std::size_t Mlp::bias_offset(std::size_t layer) const {
  return offsets_[layer] + sizes_[layer + 1] * sizes_[layer];
}

void Mlp::unflatten(std::span<const double> params) {
  if (params.size() != params_.size()) {
    throw ValidationError("expected " + std::to_string(params_.size()) + " MLP parameters, got " +
                          std::to_string(params.size()));
  }
  std::copy(params.begin(), params.end(), params_.begin());
}

Vector Mlp::forward(std::span<const double> x) const {
  Tape tape;
  return forward(x, tape);
}

Vector Mlp::forward(std::span<const double> x, Tape& tape) const {
  if (x.size() != input_dim()) throw ValidationError("MLP input has the wrong size");
  tape.act.resize(sizes_.size());
  tape.act[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const double* w = params_.data() + offsets_[l];
    const double* b = w + in * out;
    const Vector& a = tape.act[l];
    Vector& y = tape.act[l + 1];
    y.assign(out, 0.0);
    const bool hidden = l + 1 < layer_count();
    for (std::size_t i = 0; i < out; ++i) {
      double s = b[i];
      for (std::size_t j = 0; j < in; ++j) s += w[i * in + j] * a[j];
      y[i] = hidden ? std::max(s, 0.0) : s;
    }
  }
  return tape.act.back();
}

Vector Mlp::backward(const Tape& tape, std::span<const double> dout, std::span<double> grad, double scale) const {
  if (dout.size() != output_dim() || grad.size() != params_.size()) {
    throw ValidationError("MLP backward got buffers of the wrong size");
  }
  Vector delta(dout.begin(), dout.end());
  for (std::size_t l = layer_count(); l-- > 0;) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const double* w = params_.data() + offsets_[l];
    double* gw = grad.data() + offsets_[l];
    double* gb = gw + in * out;
    const Vector& a = tape.act[l];
    Vector din(in, 0.0);
    for (std::size_t i = 0; i < out; ++i) {
      const double di = delta[i];
      if (di == 0.0) continue;
      const double sd = scale * di;
      gb[i] += sd;
      for (std::size_t j = 0; j < in; ++j) {
        gw[i * in + j] += sd * a[j];
        din[j] += w[i * in + j] * di;
      }
    }
    if (l > 0) {
      for (std::size_t j = 0; j < in; ++j) {
        if (!(a[j] > 0.0)) din[j] = 0.0;
      }
    }
    delta = std::move(din);
  }
  return delta;
}

void MogConfig::validate() const {
  if (mode_count < 1) throw ValidationError("mode_count must be >= 1");
  if (!(radius > 0.0) || !std::isfinite(radius)) throw ValidationError("radius must be > 0");
  if (!(mode_std > 0.0) || !std::isfinite(mode_std)) throw ValidationError("mode_std must be > 0");
  if (latent_dim < 1) throw ValidationError("latent_dim must be >= 1");
  if (!(latent_scale > 0.0) || !std::isfinite(latent_scale)) throw ValidationError("latent_scale must be > 0");
}

std::array<double, 2> MogConfig::center(std::size_t k) const {
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(mode_count);
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

std::vector<Point2> sample_real(const MogConfig& cfg, std::size_t count, SplitMix64& rng) {
  cfg.validate();
  if (count < 1) throw ValidationError("sample count must be >= 1");
  std::vector<Point2> out(count);
  for (Point2& p : out) {
    const Point2 c = cfg.center(rng.below(cfg.mode_count));
    p[0] = c[0] + cfg.mode_std * rng.normal();
    p[1] = c[1] + cfg.mode_std * rng.normal();
  }
  return out;
}

Vector sample_latent(const MogConfig& cfg, SplitMix64& rng) {
  const double sd = std::sqrt(cfg.latent_scale);
  Vector z(cfg.latent_dim);
  for (double& x : z) x = sd * rng.normal();
  return z;
}

ModeCoverage mode_coverage(std::span<const Point2> samples, const MogConfig& cfg) {
  cfg.validate();
  ModeCoverage out;
  out.per_mode.assign(cfg.mode_count, 0);
  if (samples.empty()) return out;
  std::vector<Point2> centers;
  for (std::size_t k = 0; k < cfg.mode_count; ++k) centers.push_back(cfg.center(k));
  const double reach = 3.0 * cfg.mode_std;
  std::size_t good = 0;
  for (const Point2& p : samples) {
    std::size_t best = 0;
    double best_d = HUGE_VAL;
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const double d = std::hypot(p[0] - centers[k][0], p[1] - centers[k][1]);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    if (best_d <= reach) {
      ++out.per_mode[best];
      ++good;
    }
  }
  const double threshold = std::max(10.0, 0.01 * static_cast<double>(samples.size()));
  for (std::size_t c : out.per_mode) out.covered += static_cast<double>(c) >= threshold ? 1 : 0;
  out.hq_fraction = static_cast<double>(good) / static_cast<double>(samples.size());
  return out;
}

namespace {

void check_pair(const Mlp& g, const Mlp& d) {
  if (d.output_dim() != 1) throw ValidationError("discriminator must output one logit");
  if (g.output_dim() != d.input_dim()) throw ValidationError("generator output does not match discriminator input");
}

}  // namespace

Gradients gan_gradients(const Mlp& g, const Mlp& d, const LossPair& loss, const Batch& batch,
                        GeneratorObjective objective) {
  check_pair(g, d);
  if (batch.real.empty() || batch.latent.empty()) throw ValidationError("batch must hold real and latent samples");
  Gradients out{Vector(g.param_count(), 0.0), Vector(d.param_count(), 0.0)};
  const double one[] = {1.0};
  Mlp::Tape td;
  Mlp::Tape tg;
  const double inv_real = 1.0 / static_cast<double>(batch.real.size());
  for (const Vector& x : batch.real) {
    const double s = d.forward(x, td)[0];
    d.backward(td, one, out.theta, loss.g1(1, s) * inv_real);
  }
  const double inv_fake = 1.0 / static_cast<double>(batch.latent.size());
  for (const Vector& z : batch.latent) {
    const Vector x = g.forward(z, tg);
    const double t = d.forward(x, td)[0];
    const double g2p = loss.g2(1, t);
    Vector dx = d.backward(td, one, out.theta, g2p * inv_fake);
    const double coef = (objective == GeneratorObjective::Minimax ? g2p : -loss.g1(1, t)) * inv_fake;
    for (double& v : dx) v *= coef;
    g.backward(tg, dx, out.phi);
  }
  if (!numlin::all_finite(out.phi) || !numlin::all_finite(out.theta)) {
    throw NumericalError("non-finite activations in GAN gradients");
  }
  return out;
}

double gan_objective(const Mlp& g, const Mlp& d, const LossPair& loss, const Batch& batch) {
  check_pair(g, d);
  double f = 0.0;
  for (const Vector& x : batch.real) f += loss.g1(0, d.forward(x)[0]) / static_cast<double>(batch.real.size());
  for (const Vector& z : batch.latent) {
    f += loss.g2(0, d.forward(g.forward(z))[0]) / static_cast<double>(batch.latent.size());
  }
  return f;
}

MogOracle::MogOracle(const MogConfig& cfg, Mlp g, Mlp d, LossPair loss, std::size_t batch_size, std::uint64_t seed,
                     GeneratorObjective objective)
    : cfg_(cfg), g_(std::move(g)), d_(std::move(d)), loss_(std::move(loss)), batch_size_(batch_size), rng_(seed),
      objective_(objective) {
  cfg_.validate();
  loss_.validate();
  if (!loss_.has_functions()) throw ValidationError("MoG training needs a loss preset with functions");
  if (batch_size_ < 1) throw ValidationError("batch size must be >= 1");
  check_pair(g_, d_);
  if (g_.input_dim() != cfg_.latent_dim) throw ValidationError("generator input must equal latent_dim");
  if (d_.input_dim() != 2) throw ValidationError("discriminator input must be 2-D");
  next_batch();
}

Gradients MogOracle::gradients(const ParamPoint& w) {
  regularizers::check_dimensions(*this, w);
  g_.unflatten(w.phi);
  d_.unflatten(w.theta);
  return gan_gradients(g_, d_, loss_, batch_, objective_);
}

void MogOracle::next_batch() {
  batch_.real.clear();
  batch_.latent.clear();
  for (const Point2& p : sample_real(cfg_, batch_size_, rng_)) batch_.real.push_back({p[0], p[1]});
  for (std::size_t i = 0; i < batch_size_; ++i) batch_.latent.push_back(sample_latent(cfg_, rng_));
}

std::vector<Point2> generate(const Mlp& g, std::span<const Vector> latents) {
  if (g.output_dim() != 2) throw ValidationError("generator must output 2-D samples");
  std::vector<Point2> out;
  out.reserve(latents.size());
  for (const Vector& z : latents) {
    const Vector x = g.forward(z);
    out.push_back({x[0], x[1]});
  }
  return out;
}

MogResult train_mog(const MogConfig& cfg, const MethodSpec& method, const dynamics::RunConfig& run,
                    const MogOptions& options) {
  cfg.validate();
  method.validate();
  dynamics::RunConfig checked = run;
  checked.steps = std::max<std::size_t>(run.steps, 1);
  checked.validate();
  if (options.snapshot_every < 1 || options.snapshot_count < 1) {
    throw ValidationError("snapshot cadence and size must be >= 1");
  }
  if (options.arch.generator.front() != cfg.latent_dim || options.arch.generator.back() != 2) {
    throw ValidationError("generator must map latent_dim inputs to 2 outputs");
  }
  if (options.arch.discriminator.front() != 2 || options.arch.discriminator.back() != 1) {
    throw ValidationError("discriminator must map 2 inputs to 1 logit");
  }

  SplitMix64 rng(run.seed);
  Mlp g = Mlp::glorot(options.arch.generator, rng);
  Mlp d = Mlp::glorot(options.arch.discriminator, rng);
  SplitMix64 snap_rng = rng.fork();
  std::vector<Vector> snap_latents;
  for (std::size_t i = 0; i < options.snapshot_count; ++i) snap_latents.push_back(sample_latent(cfg, snap_rng));
  MogOracle oracle(cfg, g, d, options.loss, run.batch_size, rng.next_u64(), options.objective);

  MogResult result;
  ParamPoint w{g.flatten(), d.flatten()};
  dynamics::OptimizerState opt(run.optimizer, run.rmsprop, w.phi.size(), w.theta.size());
  auto snapshot = [&](std::size_t k) {
    g.unflatten(w.phi);
    result.snapshots.push_back({k, generate(g, snap_latents)});
  };
  for (std::size_t k = 0;; ++k) {
    try {
      const Gradients grads = oracle.gradients(w);
      result.records.push_back({k, numlin::norm2(grads.phi), numlin::norm2(grads.theta)});
      if (k % options.snapshot_every == 0 || k == run.steps) snapshot(k);
      if (k == run.steps) break;
      const Gradients dir = method.kind == MethodKind::AdvExtrap
                                ? regularizers::adv_extrapolation_direction(oracle, w, method.gamma)
                                : regularizers::update_direction(method, oracle, w);
      opt.apply(run.eta, dir, w);
      if (!w.all_finite()) throw DivergenceError("update produced non-finite parameters");
    } catch (const NumericalError& e) {
      result.status = dynamics::TraceStatus::Diverged;
      result.diverged_at = k;
      result.message = e.what();
      break;
    }
    oracle.next_batch();
  }
  result.final_params = std::move(w);
  return result;
}

MlpGan::MlpGan(MogConfig cfg, Mlp g, Mlp d) : cfg_(std::move(cfg)), g_(std::move(g)), d_(std::move(d)) {
  cfg_.validate();
  check_pair(g_, d_);
  if (g_.input_dim() != cfg_.latent_dim || d_.input_dim() != 2) throw ValidationError("MLP pair does not fit the MoG");
}

Vector MlpGan::sample_real(SplitMix64& rng) const {
  const Point2 p = toy_gan::sample_real(cfg_, 1, rng)[0];
  return {p[0], p[1]};
}

Vector MlpGan::sample_latent(SplitMix64& rng) const { return toy_gan::sample_latent(cfg_, rng); }

Vector MlpGan::generate(std::span<const double> z) const { return g_.forward(z); }

DenseMatrix MlpGan::generator_jacobian(std::span<const double> z) const {
  Mlp::Tape tape;
  g_.forward(z, tape);
  DenseMatrix j(2, g_.param_count());
  for (std::size_t o = 0; o < 2; ++o) {
    Vector row(g_.param_count(), 0.0);
    const double e[] = {o == 0 ? 1.0 : 0.0, o == 1 ? 1.0 : 0.0};
    g_.backward(tape, e, row);
    for (std::size_t i = 0; i < row.size(); ++i) j(o, i) = row[i];
  }
  return j;
}

Vector MlpGan::disc_gradient(std::span<const double> x) const {
  Mlp::Tape tape;
  d_.forward(x, tape);
  Vector grad(d_.param_count(), 0.0);
  const double one[] = {1.0};
  d_.backward(tape, one, grad);
  return grad;
}

void write_snapshot_csv(std::ostream& out, const Snapshot& s) {
  out << "x,y\n";
  for (const Point2& p : s.samples) out << numlin::format_double(p[0]) << ',' << numlin::format_double(p[1]) << '\n';
}

void write_snapshot_svg(std::ostream& out, const Snapshot& s, const MogConfig& cfg) {
  const double half = 1.5 * cfg.radius;
  const double size = 480.0;
  auto px = [&](double v) { return (v + half) / (2.0 * half) * size; };
  auto py = [&](double v) { return (half - v) / (2.0 * half) * size; };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
      << "\" viewBox=\"0 0 " << size << ' ' << size << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"8\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\">iteration " << s.iteration
      << "</text>\n";
  for (std::size_t k = 0; k < cfg.mode_count; ++k) {
    const Point2 c = cfg.center(k);
    out << "<circle cx=\"" << px(c[0]) << "\" cy=\"" << py(c[1]) << "\" r=\"" << 3.0 * cfg.mode_std / (2.0 * half) * size
        << "\" fill=\"none\" stroke=\"#d62728\"/>\n";
  }
  for (const Point2& p : s.samples) {
    if (std::abs(p[0]) > half || std::abs(p[1]) > half) continue;
    out << "<circle cx=\"" << px(p[0]) << "\" cy=\"" << py(p[1]) << "\" r=\"1.5\" fill=\"#1f77b4\" fill-opacity=\"0.6\"/>\n";
  }
  out << "</svg>\n";
}

void write_mog_trace_csv(std::ostream& out, const MogResult& r) {
  out << "iteration,grad_phi,grad_theta\n";
  for (const MogRecord& rec : r.records) {
    out << rec.iteration << ',' << numlin::format_double(rec.grad_phi) << ',' << numlin::format_double(rec.grad_theta)
        << '\n';
  }
}

nlohmann::json to_json(const ModeCoverage& c) {
  return {{"covered", c.covered}, {"hq_fraction", c.hq_fraction}, {"per_mode", c.per_mode}};
}

nlohmann::json mog_metadata(const MogConfig& cfg, const MethodSpec& method, const dynamics::RunConfig& run,
                            const MogOptions& options, const MogResult& r) {
  nlohmann::json j;
  j["mog"] = {{"mode_count", cfg.mode_count},
              {"radius", cfg.radius},
              {"mode_std", cfg.mode_std},
              {"latent_dim", cfg.latent_dim},
              {"latent_scale", cfg.latent_scale}};
  j["method"] = {{"name", method_name(method.kind)}, {"gamma", method.gamma}};
  j["run"] = {{"eta", run.eta},
              {"steps", run.steps},
              {"seed", run.seed},
              {"batch_size", run.batch_size},
              {"optimizer", dynamics::optimizer_name(run.optimizer)}};
  if (run.optimizer == dynamics::Optimizer::RmsProp) {
    j["run"]["rmsprop"] = {{"decay", run.rmsprop.decay}, {"eps", run.rmsprop.eps}, {"momentum", 0.0}};
  }
  j["architecture"] = {{"generator", options.arch.generator},
                       {"discriminator", options.arch.discriminator},
                       {"hidden_activation", "relu"},
                       {"init", "glorot_uniform"},
                       {"note", "reconstructed toy architecture; mode_count and mode_std are reconstructions"}};
  j["loss"] = options.loss.name;
  j["generator_objective"] = options.objective == GeneratorObjective::Minimax ? "minimax" : "non_saturating";
  j["hvp"] = "finite_difference";
  j["snapshot_every"] = options.snapshot_every;
  j["snapshot_count"] = options.snapshot_count;
  j["status"] = r.status == dynamics::TraceStatus::Completed ? "completed" : "diverged";
  j["diverged_at"] = r.diverged_at ? nlohmann::json(*r.diverged_at) : nlohmann::json(nullptr);
  if (!r.message.empty()) j["message"] = r.message;
  nlohmann::json snaps = nlohmann::json::array();
  for (const Snapshot& s : r.snapshots) {
    snaps.push_back({{"iteration", s.iteration}, {"coverage", to_json(mode_coverage(s.samples, cfg))}});
  }
  j["snapshots"] = snaps;
  return j;
}

}  // namespace gandyn::toy_gan
