#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pagan/config.hpp"
#include "pagan/data_io.hpp"
#include "pagan/metrics.hpp"
#include "pagan/nets.hpp"
#include "pagan/objectives.hpp"
#include "pagan/rng.hpp"

namespace pagan {

// Any loss magnitude beyond this flags the run as diverged and stops it.
inline constexpr double kDivergenceThreshold = 1e4;

// Parameter blocks in update order: the three discriminators, then the
// generator, then the encoder.
inline constexpr const char* kBlockNames[5] = {
    "data discriminator", "latent discriminator", "pair discriminator",
    "generator", "encoder"};

struct StepRecord {
  int step = 0;
  double d_x = 0.0, d_z = 0.0, d_xx = 0.0, g = 0.0, e = 0.0;
  std::array<double, 5> grad_norms{};  // per block, update order
  bool diverged = false;
};

// Runs the alternating adversarial update loop: per step, critic_steps
// rounds of discriminator descent on fresh batches, with the generator and
// encoder updated only on the last round, from losses computed before any
// parameter moved that round.
class Trainer {
 public:
  // Builds the dataset named by the config and a fresh model bundle, all
  // derived deterministically from the config seed.
  explicit Trainer(const TrainConfig& cfg);
  // Uses an already-loaded dataset instead of building one.
  Trainer(const TrainConfig& cfg, Dataset data);

  // One full alternating update. Throws on non-finite gradients, naming the
  // parameter block; flags (and skips updates for) diverged losses.
  StepRecord train_step();

  // Full orchestration into the config's out_dir: config echo, loss log,
  // initial/periodic/final checkpoints, periodic previews, final metrics.
  void run();

  void save_checkpoint(const std::string& path);
  void load_checkpoint(const std::string& path);

  // Prior samples G(z), reconstructions G(z_hat) with z_hat ~ q(z|x), and
  // raw posterior draws z_hat as an (n, latent) matrix; all three leave
  // training state (including power-iteration vectors) untouched.
  Tensor<float> sample(int n, Rng& rng);
  Tensor<float> reconstruct(const Tensor<float>& x, Rng& rng);
  Tensor<float> encode(const Tensor<float>& x, Rng& rng);

  // Probe-backed metric report over the leading slice of the dataset.
  MetricReport evaluate();

  // Writes samples_<step> and recons_<step> preview artifacts into out_dir:
  // scatter .tsv files for point data, .pgm/.ppm grids for images.
  void emit_previews(int step);

  ModelBundle<float>& bundle() { return bundle_; }
  const Dataset& data() const { return data_; }
  const TrainConfig& config() const { return cfg_; }
  int step_count() const { return step_; }
  bool diverged() const { return diverged_; }

 private:
  struct OptimizerBlock {
    std::vector<std::vector<float>> m, v;  // adam moments per parameter
    std::uint64_t t = 0;
  };

  Tensor<float> next_batch();
  // Applies one descent update to a block; returns the gradient norm.
  double apply_update(int block, GradientMap<float>& grads);

  TrainConfig cfg_;
  Dataset data_;
  ModelBundle<float> bundle_;
  std::array<OptimizerBlock, 5> opt_;
  Rng loss_rng_;  // z, eps, crop offsets and interpolation draws
  Rng data_rng_;  // batch index stream
  int step_ = 0;
  bool diverged_ = false;
};

// Builds the dataset a config names: the sampled Gaussian ring, the
// procedural shape corpus, or the MNIST test files found under the
// PAGAN_MNIST_DIR directory (default data/mnist).
Dataset load_training_dataset(const TrainConfig& cfg);

// The one-call surface the CLI uses.
inline void train(const TrainConfig& cfg) {
  Trainer t(cfg);
  t.run();
}

}  // namespace pagan
