#include "ambicodec/losses.hpp"

#include <cmath>
#include <string>

#include "ambicodec/errors.hpp"

namespace ambicodec::losses {

namespace {

constexpr double kLogFloor = 1e-5;
constexpr double kCorrEpsilon = 1e-9;

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_pair(const Mat& reference, const Mat& reconstruction) {
  if (reference.rows() != reconstruction.rows() ||
      reference.cols() != reconstruction.cols())
    throw DataError("reference and reconstruction shapes differ");
  if (reference.rows() < 1 || reference.cols() < 1)
    throw DataError("empty signals");
}

}  // namespace

std::vector<dsp::SpectrogramConfig> default_mel_scales(double sample_rate) {
  const int windows[] = {32, 64, 128, 256, 512, 1024, 2048};
  const int mels[] = {5, 10, 20, 40, 80, 160, 320};
  std::vector<dsp::SpectrogramConfig> scales;
  for (int i = 0; i < 7; ++i) {
    dsp::SpectrogramConfig cfg;
    cfg.window_length = windows[i];
    cfg.hop_length = windows[i] / 4;
    cfg.n_mels = mels[i];
    cfg.sample_rate = sample_rate;
    scales.push_back(cfg);
  }
  return scales;
}

double multiscale_mel_loss(const Mat& reference, const Mat& reconstruction,
                           const std::vector<dsp::SpectrogramConfig>& scales) {
  check_pair(reference, reconstruction);
  if (scales.empty()) throw DataError("no mel scales configured");
  double channel_mean = 0.0;
  for (Index c = 0; c < reference.rows(); ++c) {
    double scale_mean = 0.0;
    for (const auto& cfg : scales) {
      const Mat ref = dsp::mel_spectrogram(reference.row(c).transpose(), cfg);
      const Mat rec =
          dsp::mel_spectrogram(reconstruction.row(c).transpose(), cfg);
      scale_mean += ((rec.array() + kLogFloor).log() -
                     (ref.array() + kLogFloor).log())
                        .abs()
                        .mean();
    }
    channel_mean += scale_mean / static_cast<double>(scales.size());
  }
  return channel_mean / static_cast<double>(reference.rows());
}

ValueAndGrad multiscale_mel_loss_grad(
    const Mat& reference, const Mat& reconstruction,
    const std::vector<dsp::SpectrogramConfig>& scales) {
  check_pair(reference, reconstruction);
  if (scales.empty()) throw DataError("no mel scales configured");
  const double inv_scales = 1.0 / static_cast<double>(scales.size());
  const double inv_channels = 1.0 / static_cast<double>(reference.rows());

  ValueAndGrad out;
  out.grad = Mat::Zero(reconstruction.rows(), reconstruction.cols());
  for (Index c = 0; c < reference.rows(); ++c) {
    const Vec rec_c = reconstruction.row(c).transpose();
    const Vec ref_c = reference.row(c).transpose();
    for (const auto& cfg : scales) {
      const Mat fb = dsp::mel_filterbank(cfg);
      const dsp::CMat spectrum = dsp::stft(rec_c, cfg);
      const Mat magnitude = spectrum.cwiseAbs();
      const Mat mel = fb * magnitude;
      const Mat mel_ref = fb * dsp::stft_magnitude(ref_c, cfg);

      const Mat diff = (mel.array() + kLogFloor).log().matrix() -
                       (mel_ref.array() + kLogFloor).log().matrix();
      const double n_elem = static_cast<double>(mel.size());
      out.value += diff.array().abs().sum() / n_elem * inv_scales * inv_channels;

      // dL/dmel = sign(diff) / (mel + eps) / n_elem, then back through the
      // filterbank and the magnitude spectrogram.
      Mat grad_mel(mel.rows(), mel.cols());
      for (Index j = 0; j < mel.cols(); ++j)
        for (Index i = 0; i < mel.rows(); ++i)
          grad_mel(i, j) = sign(diff(i, j)) / (mel(i, j) + kLogFloor) / n_elem *
                           inv_scales * inv_channels;
      const Mat grad_magnitude = fb.transpose() * grad_mel;
      out.grad.row(c) += dsp::stft_magnitude_adjoint(spectrum, grad_magnitude,
                                                     rec_c.size(), cfg)
                             .transpose();
    }
  }
  return out;
}

Mat correlation_matrix(const Mat& signals) {
  if (signals.cols() < 2)
    throw DataError("correlation needs at least two frames");
  const double inv = 1.0 / static_cast<double>(signals.cols() - 1);
  const Mat centered = signals.colwise() - signals.rowwise().mean();
  const Mat cov = centered * centered.transpose() * inv;
  Mat corr(cov.rows(), cov.cols());
  for (Index i = 0; i < cov.rows(); ++i)
    for (Index j = 0; j < cov.cols(); ++j)
      corr(i, j) =
          i == j ? 1.0
                 : cov(i, j) / std::sqrt(cov(i, i) * cov(j, j) + kCorrEpsilon);
  return corr;
}

double covariance_loss(const Mat& reference, const Mat& reconstruction) {
  check_pair(reference, reconstruction);
  const Mat r_ref = correlation_matrix(reference);
  const Mat r_rec = correlation_matrix(reconstruction);
  return 0.5 * (r_ref - r_rec).array().abs().sum();
}

ValueAndGrad covariance_loss_grad(const Mat& reference,
                                  const Mat& reconstruction) {
  check_pair(reference, reconstruction);
  const Index n = reconstruction.rows();
  const Index len = reconstruction.cols();
  if (len < 2) throw DataError("correlation needs at least two frames");
  const double inv = 1.0 / static_cast<double>(len - 1);

  const Mat r_ref = correlation_matrix(reference);
  const Mat centered =
      reconstruction.colwise() - reconstruction.rowwise().mean();
  const Mat cov = centered * centered.transpose() * inv;

  ValueAndGrad out;
  Mat grad_cov = Mat::Zero(n, n);  // dL/dC accumulated entry by entry
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;  // both diagonals are exactly 1
      const double denom_sq = cov(i, i) * cov(j, j) + kCorrEpsilon;
      const double denom = std::sqrt(denom_sq);
      const double r = cov(i, j) / denom;
      const double diff = r - r_ref(i, j);
      out.value += 0.5 * std::abs(diff);
      const double s = 0.5 * sign(diff);
      grad_cov(i, j) += s / denom;
      const double d32 = s * cov(i, j) * (-0.5) / (denom_sq * denom);
      grad_cov(i, i) += d32 * cov(j, j);
      grad_cov(j, j) += d32 * cov(i, i);
    }
  }
  // dL/dy~ = (D + D^T) y~ / (L-1), then remove the per-row mean that the
  // centering projection absorbs.
  Mat grad = (grad_cov + grad_cov.transpose()) * centered * inv;
  grad.colwise() -= grad.rowwise().mean().eval();
  out.grad = grad;
  return out;
}

double adversarial_g_loss(const std::vector<DiscriminatorScore>& fake) {
  if (fake.empty()) throw DataError("no discriminator outputs");
  double sum = 0.0;
  for (const auto& score : fake)
    sum += (score.logits.array() - 1.0).square().mean();
  return sum / static_cast<double>(fake.size());
}

double adversarial_d_loss(const std::vector<DiscriminatorScore>& real,
                          const std::vector<DiscriminatorScore>& fake) {
  if (real.size() != fake.size() || real.empty())
    throw DataError("discriminator output lists do not align");
  double sum = 0.0;
  for (size_t u = 0; u < real.size(); ++u)
    sum += (real[u].logits.array() - 1.0).square().mean() +
           fake[u].logits.array().square().mean();
  return sum / static_cast<double>(real.size());
}

double feature_matching_loss(const std::vector<DiscriminatorScore>& real,
                             const std::vector<DiscriminatorScore>& fake) {
  if (real.size() != fake.size() || real.empty())
    throw DataError("discriminator output lists do not align");
  double sum = 0.0;
  for (size_t u = 0; u < real.size(); ++u) {
    if (real[u].features.size() != fake[u].features.size() ||
        real[u].features.empty())
      throw DataError("feature lists do not align");
    double layer_mean = 0.0;
    for (size_t l = 0; l < real[u].features.size(); ++l)
      layer_mean +=
          (real[u].features[l] - fake[u].features[l]).array().abs().mean();
    sum += layer_mean / static_cast<double>(real[u].features.size());
  }
  return sum / static_cast<double>(real.size());
}

Mat adv_g_logit_grad(const Mat& fake_logits, size_t n_units) {
  const double scale =
      2.0 / (static_cast<double>(n_units) * fake_logits.size());
  return (fake_logits.array() - 1.0).matrix() * scale;
}

Mat adv_d_real_logit_grad(const Mat& real_logits, size_t n_units) {
  const double scale =
      2.0 / (static_cast<double>(n_units) * real_logits.size());
  return (real_logits.array() - 1.0).matrix() * scale;
}

Mat adv_d_fake_logit_grad(const Mat& fake_logits, size_t n_units) {
  const double scale =
      2.0 / (static_cast<double>(n_units) * fake_logits.size());
  return fake_logits * scale;
}

std::vector<Mat> feature_matching_grads(const std::vector<Mat>& real_features,
                                        const std::vector<Mat>& fake_features,
                                        size_t n_units) {
  if (real_features.size() != fake_features.size() || real_features.empty())
    throw DataError("feature lists do not align");
  const double unit_scale =
      1.0 / (static_cast<double>(n_units) * real_features.size());
  std::vector<Mat> grads;
  for (size_t l = 0; l < real_features.size(); ++l) {
    const double scale = unit_scale / fake_features[l].size();
    grads.push_back(fake_features[l].binaryExpr(
        real_features[l],
        [scale](double f, double r) { return sign(f - r) * scale; }));
  }
  return grads;
}

double composite_generator_loss(const LossTerms& terms,
                                const LossWeights& weights) {
  const std::pair<const char*, double> parts[] = {
      {"mel", weights.mel * terms.mel},
      {"adversarial", weights.adversarial * terms.adversarial},
      {"feature_matching", weights.feature_matching * terms.feature_matching},
      {"codebook", weights.codebook * terms.codebook},
      {"commitment", weights.commitment * terms.commitment},
      {"covariance", weights.covariance * terms.covariance},
  };
  double total = 0.0;
  for (const auto& [name, value] : parts) {
    if (!std::isfinite(value))
      throw NumericError(std::string("non-finite loss term: ") + name);
    total += value;
  }
  return total;
}

}  // namespace ambicodec::losses
