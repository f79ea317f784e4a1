#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gandyn/analytic_gan.hpp"
#include "gandyn/dynamics.hpp"
#include "gandyn/general_spectrum.hpp"
#include "gandyn/regularizers.hpp"
#include "gandyn/rng.hpp"

namespace gandyn::toy_gan {

/// Fully connected network, relu on hidden layers, identity output. Parameters live in one flat
/// vector; layer l stores W_l (out x in, row-major) followed by b_l.
class Mlp {
 public:
  explicit Mlp(std::vector<std::size_t> sizes);
  /// Glorot-uniform weights, limit sqrt(6 / (fan_in + fan_out)); zero biases.
  static Mlp glorot(std::vector<std::size_t> sizes, SplitMix64& rng);

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t param_count() const { return params_.size(); }
  std::size_t layer_count() const { return sizes_.size() - 1; }
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const;

  const Vector& flatten() const { return params_; }
  void unflatten(std::span<const double> params);

  struct Tape {
    std::vector<Vector> act;  // act[0] is the input, act[l + 1] the output of layer l
  };

  Vector forward(std::span<const double> x) const;
  Vector forward(std::span<const double> x, Tape& tape) const;

  /// Adds scale * (d out / d params)^T dout to grad and returns (d out / d x)^T dout.
  Vector backward(const Tape& tape, std::span<const double> dout, std::span<double> grad, double scale = 1.0) const;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  Vector params_;
};

struct MogConfig {
  std::size_t mode_count = 8;
  double radius = 2.0;
  double mode_std = 0.06;
  std::size_t latent_dim = 64;
  double latent_scale = 2.0;  // latent covariance latent_scale * I

  void validate() const;
  std::array<double, 2> center(std::size_t k) const;
};

using Point2 = std::array<double, 2>;

std::vector<Point2> sample_real(const MogConfig& cfg, std::size_t count, SplitMix64& rng);
Vector sample_latent(const MogConfig& cfg, SplitMix64& rng);

struct ModeCoverage {
  std::size_t covered = 0;
  double hq_fraction = 0.0;
  std::vector<std::size_t> per_mode;  // samples within 3 std of each center
};

/// Nearest-center assignment; a mode is covered with >= max(10, 1% of samples) within 3 std.
ModeCoverage mode_coverage(std::span<const Point2> samples, const MogConfig& cfg);

/// Minimax uses grad_phi of f itself; NonSaturating swaps g2'(t) for -g1'(t) in the generator gradient.
enum class GeneratorObjective { Minimax, NonSaturating };

struct Batch {
  std::vector<Vector> real;
  std::vector<Vector> latent;
};

/// Gradients of f = mean g1(D(x)) + mean g2(D(G(z))) with phi = G parameters, theta = D parameters.
Gradients gan_gradients(const Mlp& g, const Mlp& d, const LossPair& loss, const Batch& batch,
                        GeneratorObjective objective = GeneratorObjective::Minimax);
double gan_objective(const Mlp& g, const Mlp& d, const LossPair& loss, const Batch& batch);

struct Architecture {
  std::vector<std::size_t> generator{64, 16, 16, 16, 16, 2};
  std::vector<std::size_t> discriminator{2, 16, 16, 16, 16, 1};
};

/// Minibatch oracle over the MLP pair; no exact HVPs, so the regularizers fall back to hvp_fd.
class MogOracle : public GradientOracle {
 public:
  MogOracle(const MogConfig& cfg, Mlp g, Mlp d, LossPair loss, std::size_t batch_size, std::uint64_t seed,
            GeneratorObjective objective = GeneratorObjective::Minimax);

  std::size_t phi_dim() const override { return g_.param_count(); }
  std::size_t theta_dim() const override { return d_.param_count(); }
  Gradients gradients(const ParamPoint& w) override;
  void next_batch() override;

  const Batch& batch() const { return batch_; }

 private:
  MogConfig cfg_;
  Mlp g_;
  Mlp d_;
  LossPair loss_;
  std::size_t batch_size_;
  SplitMix64 rng_;
  GeneratorObjective objective_;
  Batch batch_;
};

struct MogOptions {
  Architecture arch;
  LossPair loss = LossPair::vanilla();
  GeneratorObjective objective = GeneratorObjective::Minimax;
  std::size_t snapshot_every = 2000;
  std::size_t snapshot_count = 1024;
};

struct Snapshot {
  std::size_t iteration = 0;
  std::vector<Point2> samples;
};

struct MogRecord {
  std::size_t iteration = 0;
  double grad_phi = 0.0;
  double grad_theta = 0.0;
};

struct MogResult {
  std::vector<MogRecord> records;
  std::vector<Snapshot> snapshots;  // every snapshot_every iterations and at the end
  dynamics::TraceStatus status = dynamics::TraceStatus::Completed;
  std::optional<std::size_t> diverged_at;
  std::string message;
  ParamPoint final_params;
};

/// run.steps may be 0 here: the result then holds the initialization snapshot only.
MogResult train_mog(const MogConfig& cfg, const MethodSpec& method, const dynamics::RunConfig& run,
                    const MogOptions& options = {});

/// Generator samples on a fixed latent set.
std::vector<Point2> generate(const Mlp& g, std::span<const Vector> latents);

/// Adapter for general_spectrum::estimate_pq.
class MlpGan : public general_spectrum::DifferentiableGan {
 public:
  MlpGan(MogConfig cfg, Mlp g, Mlp d);
  std::size_t gen_params() const override { return g_.param_count(); }
  std::size_t disc_params() const override { return d_.param_count(); }
  std::size_t data_dim() const override { return 2; }
  Vector sample_real(SplitMix64& rng) const override;
  Vector sample_latent(SplitMix64& rng) const override;
  Vector generate(std::span<const double> z) const override;
  numlin::DenseMatrix generator_jacobian(std::span<const double> z) const override;
  Vector disc_gradient(std::span<const double> x) const override;

 private:
  MogConfig cfg_;
  Mlp g_;
  Mlp d_;
};

void write_snapshot_csv(std::ostream& out, const Snapshot& s);
void write_snapshot_svg(std::ostream& out, const Snapshot& s, const MogConfig& cfg);
void write_mog_trace_csv(std::ostream& out, const MogResult& r);
nlohmann::json mog_metadata(const MogConfig& cfg, const MethodSpec& method, const dynamics::RunConfig& run,
                            const MogOptions& options, const MogResult& r);
nlohmann::json to_json(const ModeCoverage& c);

}  // namespace gandyn::toy_gan
