#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ambicodec/audio_io.hpp"
#include "ambicodec/discriminators.hpp"
#include "ambicodec/generator.hpp"
#include "ambicodec/losses.hpp"
#include "ambicodec/rng.hpp"
#include "ambicodec/types.hpp"

namespace ambicodec::train {

struct TrainConfig {
  int steps = 2000;
  int batch_size = 4;
  double excerpt_seconds = 0.5;
  double lr_generator = 1e-4;
  double lr_discriminator = 1e-4;
  double adam_beta1 = 0.8;
  double adam_beta2 = 0.99;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  double lr_decay = 0.999996;
  int covariance_start_step = 0;
  int validation_interval = 100;
  int max_validation_excerpts = 8;
  std::uint64_t seed = 1;
  nn::GeneratorConfig generator;
  disc::SuiteConfig discriminators;
  losses::LossWeights weights;
  // Window/band pairs of the multiscale mel loss.
  std::vector<int> mel_windows = {32, 64, 128, 256, 512, 1024, 2048};
  std::vector<int> mel_n_mels = {5, 10, 20, 40, 80, 160, 320};
};

void validate(const TrainConfig& config);
bool operator==(const TrainConfig& a, const TrainConfig& b);

// Flat key=value text with '#' comments. Unknown keys are errors. The
// discriminator suite's channel count and sample rate always follow the
// generator's and have no keys of their own.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::string& path);
std::string serialize_train_config(const TrainConfig& config);

std::vector<dsp::SpectrogramConfig> mel_scales(const TrainConfig& config);
Index excerpt_samples(const TrainConfig& config);

// Adam with decoupled weight decay and a per-step exponential learning
// rate decay. Holds one moment pair per parameter tensor of the store.
class AdamW {
 public:
  AdamW(nn::ParamStore& store, double lr, double beta1, double beta2,
        double eps, double weight_decay, double lr_decay);

  // Applies the gradients accumulated in the store since the last step.
  void step();
  std::int64_t step_count() const { return t_; }

 private:
  nn::ParamStore* store_;
  double lr_, beta1_, beta2_, eps_, weight_decay_, lr_decay_;
  std::int64_t t_ = 0;
  std::vector<Arr> m_, v_;
};

double grad_norm(const nn::ParamStore& store);

struct ValidationRecord {
  int step = 0;
  double mel = 0.0;
  double covariance = 0.0;
  double wall_time_s = 0.0;
};

struct LossReport {
  losses::LossTerms terms;
  double total = 0.0;          // weighted generator objective
  double discriminator = 0.0;  // least-squares discriminator objective
  double grad_norm_generator = 0.0;
  double grad_norm_discriminator = 0.0;
};

// In-memory training corpus: full decoded waves for random excerpting
// plus a fixed grid of held-out excerpts for validation.
struct Dataset {
  std::vector<Mat> train_waves;
  std::vector<Mat> validation;
};

Dataset load_dataset(const std::vector<audio::ManifestEntry>& manifest,
                     const TrainConfig& config);

class Trainer {
 public:
  // Random initialization, or a warm start from a generator checkpoint
  // (which must match the configured topology).
  explicit Trainer(const TrainConfig& config);
  Trainer(const TrainConfig& config, const nn::ModelCheckpoint& init);

  // The optimizers hold pointers into the models.
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  std::vector<Mat> sample_batch(const Dataset& data);

  // One discriminator update on (real, detached fake) followed by one
  // generator update on the weighted composite objective.
  LossReport train_step(const std::vector<Mat>& batch);

  // Mean multiscale mel and covariance losses over the held-out
  // excerpts; parameters are left untouched.
  ValidationRecord validate_on(const std::vector<Mat>& heldout);

  int step() const { return step_; }
  nn::Generator& generator() { return generator_; }
  disc::DiscriminatorSuite& discriminators() { return discs_; }
  const TrainConfig& config() const { return config_; }

 private:
  TrainConfig config_;
  nn::Generator generator_;
  disc::DiscriminatorSuite discs_;
  AdamW opt_g_, opt_d_;
  std::vector<dsp::SpectrogramConfig> scales_;
  Rng batch_rng_;
  int step_ = 0;
  double start_time_ = 0.0;
};

struct TrainingRun {
  nn::ModelCheckpoint checkpoint;
  std::vector<ValidationRecord> curve;
};

// Full loop: records validation at step 0, every validation_interval
// steps, and at the final step. `init` may be null for random
// initialization; `log` (optional) receives one line per record.
TrainingRun run_training(const TrainConfig& config, const Dataset& data,
                         const nn::ModelCheckpoint* init = nullptr,
                         std::ostream* log = nullptr);

// Curve files are CSV with the header `step,mel_val,cov_val,wall_time_s`.
void save_curve(const std::string& path,
                const std::vector<ValidationRecord>& curve);
std::vector<ValidationRecord> load_curve(const std::string& path);

struct InitComparison {
  TrainingRun transfer;
  TrainingRun random;
};

// Two runs differing only in initialization: a warm start replicated
// from the mono checkpoint versus a random start, identical seeds
// elsewhere.
InitComparison compare_inits(const TrainConfig& config, const Dataset& data,
                             const nn::ModelCheckpoint& mono,
                             std::ostream* log = nullptr);

// Synthetic third-order test scene: one to three plane-wave sources
// (sine mixtures with an amplitude-modulated noise component) from
// random directions plus an isotropic noise bed, mixed at a random
// signal-to-bed ratio and peak-normalized.
audio::Wave synthesize_scene(int order, double seconds, double sample_rate,
                             Rng& rng);

}  // namespace ambicodec::train
