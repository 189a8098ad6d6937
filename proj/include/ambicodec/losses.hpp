#pragma once

#include <vector>

#include "ambicodec/dsp.hpp"
#include "ambicodec/types.hpp"

namespace ambicodec::losses {

// The seven window/mel-band pairs of the multiscale mel loss, largest
// windows resolving the most bands.
std::vector<dsp::SpectrogramConfig> default_mel_scales(double sample_rate);

// Per channel and per scale: mean absolute distance between
// log(mel + 1e-5) spectrograms; mean over scales, then over channels.
double multiscale_mel_loss(const Mat& reference, const Mat& reconstruction,
                           const std::vector<dsp::SpectrogramConfig>& scales);

struct ValueAndGrad {
  double value = 0.0;
  Mat grad;  // dL/d(reconstruction)
};

ValueAndGrad multiscale_mel_loss_grad(
    const Mat& reference, const Mat& reconstruction,
    const std::vector<dsp::SpectrogramConfig>& scales);

// Pearson correlation matrix of the rows: unit diagonal, off-diagonal
// entries C_ij / sqrt(C_ii * C_jj + 1e-9) with C the sample covariance
// (divisor L - 1). The regularizer keeps silent channels finite.
Mat correlation_matrix(const Mat& signals);

// Half the elementwise absolute difference between the reference and
// reconstruction correlation matrices, summed over all n^2 entries.
double covariance_loss(const Mat& reference, const Mat& reconstruction);
ValueAndGrad covariance_loss_grad(const Mat& reference,
                                  const Mat& reconstruction);

// One discriminator output unit: the logits and intermediate features
// produced for a single (sub-discriminator, audio channel) pair.
struct DiscriminatorScore {
  Mat logits;
  std::vector<Mat> features;
};

// Least-squares GAN objectives, averaged over units and over the
// elements within each unit.
double adversarial_g_loss(const std::vector<DiscriminatorScore>& fake);
double adversarial_d_loss(const std::vector<DiscriminatorScore>& real,
                          const std::vector<DiscriminatorScore>& fake);
// Plain L1 between real and fake features: mean over elements per layer,
// over layers per unit, over units.
double feature_matching_loss(const std::vector<DiscriminatorScore>& real,
                             const std::vector<DiscriminatorScore>& fake);

// Per-unit gradient seeds for the streaming passes of the suite. n_units
// is the total unit count the means are taken over.
Mat adv_g_logit_grad(const Mat& fake_logits, size_t n_units);
Mat adv_d_real_logit_grad(const Mat& real_logits, size_t n_units);
Mat adv_d_fake_logit_grad(const Mat& fake_logits, size_t n_units);
std::vector<Mat> feature_matching_grads(const std::vector<Mat>& real_features,
                                        const std::vector<Mat>& fake_features,
                                        size_t n_units);

struct LossWeights {
  double mel = 15.0;
  double adversarial = 1.0;
  double feature_matching = 2.0;
  double codebook = 1.0;
  double commitment = 0.25;
  double covariance = 1.0;
};

struct LossTerms {
  double mel = 0.0;
  double adversarial = 0.0;
  double feature_matching = 0.0;
  double codebook = 0.0;
  double commitment = 0.0;
  double covariance = 0.0;
};

// Weighted sum; throws NumericError naming the first non-finite term.
double composite_generator_loss(const LossTerms& terms,
                                const LossWeights& weights);

}  // namespace ambicodec::losses
