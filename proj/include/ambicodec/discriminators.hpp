#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "ambicodec/losses.hpp"
#include "ambicodec/nn.hpp"
#include "ambicodec/types.hpp"

namespace ambicodec::disc {

struct SuiteConfig {
  int io_channels = 16;
  std::vector<int> mpd_periods = {2, 3, 5};
  std::vector<int> msd_scales = {1, 2};      // average-pooling factors
  std::vector<int> mrsd_windows = {512, 1024};
  int base_channels = 4;
  // One weight set applied to every audio channel (default), or an
  // independent weight set per channel.
  bool shared_across_channels = true;
  int sample_rate = 44100;
};

void validate(const SuiteConfig& config);

// Internal per-(sub-discriminator, channel) processor.
class SubDiscriminator;

// Multi-period, multi-scale and multi-resolution-spectrogram
// discriminators, each applied to every audio channel independently.
// Outputs are ordered sub-discriminator-major, channel-minor.
class DiscriminatorSuite {
 public:
  DiscriminatorSuite(const SuiteConfig& config, std::uint64_t seed);
  ~DiscriminatorSuite();

  std::vector<losses::DiscriminatorScore> discriminate(const Mat& audio);
  size_t unit_count() const;

  // Least-squares discriminator objective on (real, detached fake):
  // accumulates parameter gradients scaled by batch_scale, returns the
  // unscaled loss value.
  double discriminator_pass(const Mat& real, const Mat& fake,
                            double batch_scale);

  struct GeneratorPass {
    double adversarial = 0.0;
    double feature_matching = 0.0;
    Mat grad_fake;  // d(weighted adversarial + feature loss)/d(fake audio)
  };
  // Generator-side losses and their gradient with respect to the fake
  // audio. Parameter gradients accumulated along the way are garbage for
  // the discriminator update; zero them before the next discriminator_pass.
  GeneratorPass generator_pass(const Mat& real, const Mat& fake,
                               double adversarial_weight,
                               double feature_weight, double batch_scale);

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  void zero_grad() { params_.zero_grad(); }
  const SuiteConfig& config() const { return config_; }

  // Period folding helpers: x is cut to floor(len/period) full periods
  // and laid out as [period x floor(len/period)].
  static Mat fold_phases(const Vec& x, Index period);
  static Vec unfold_phases(const Mat& phases, Index len);

 private:
  SubDiscriminator& unit_disc(size_t disc_index, Index channel);

  SuiteConfig config_;
  nn::ParamStore params_;
  // Per sub-discriminator: one instance when shared, one per channel
  // otherwise.
  std::vector<std::vector<std::unique_ptr<SubDiscriminator>>> discs_;
};

}  // namespace ambicodec::disc
