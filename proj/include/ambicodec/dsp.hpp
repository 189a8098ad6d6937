#pragma once

#include <complex>
#include <vector>

#include "ambicodec/types.hpp"

namespace ambicodec::dsp {

using CMat = Eigen::MatrixXcd;

struct SpectrogramConfig {
  int window_length = 1024;
  int hop_length = 256;
  int n_mels = 80;
  double f_min = 0.0;
  double f_max = 0.0;  // 0 means sample_rate / 2
  double sample_rate = 44100.0;
};

// Frames after centered reflect padding: 1 + floor(len / hop).
Index stft_frame_count(Index len, const SpectrogramConfig& cfg);

// Centered STFT with a periodic Hann window and reflect padding,
// one-sided spectrum [window/2 + 1 bins x frames].
CMat stft(const Vec& signal, const SpectrogramConfig& cfg);
Mat stft_magnitude(const Vec& signal, const SpectrogramConfig& cfg);

// Adjoint of `stft` as a linear map: given dL/d(complex spectrum) with
// dL/dRe and dL/dIm packed as real and imaginary parts, accumulates
// dL/d(signal) of the original length.
Vec stft_adjoint(const CMat& grad_spectrum, Index signal_len,
                 const SpectrogramConfig& cfg);

// Chain rule through the magnitude: grad_magnitude is dL/d|X|.
// Zero-magnitude bins contribute nothing.
Vec stft_magnitude_adjoint(const CMat& spectrum, const Mat& grad_magnitude,
                           Index signal_len, const SpectrogramConfig& cfg);

// HTK-scale mel frequency helpers.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular mel filterbank [n_mels x bins] on the HTK mel scale.
// A triangle too narrow to touch any bin center collapses to unit weight
// on the bin nearest its peak so every row keeps positive mass.
Mat mel_filterbank(const SpectrogramConfig& cfg);

// mel_filterbank(cfg) * stft_magnitude(signal, cfg).
Mat mel_spectrogram(const Vec& signal, const SpectrogramConfig& cfg);

// Linear-phase Kaiser windowed-sinc lowpass at `cutoff_hz`, at least
// 60 dB stopband attenuation, group delay compensated, unity DC gain.
Mat lowpass_anchor(const Mat& samples, double sample_rate,
                   double cutoff_hz = 3500.0);

}  // namespace ambicodec::dsp
