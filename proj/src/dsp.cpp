#include "ambicodec/dsp.hpp"

#include <cmath>
#include <map>
#include <memory>

#include <unsupported/Eigen/FFT>

#include "ambicodec/errors.hpp"

namespace ambicodec::dsp {

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::FFT<double>& fft_for(int nfft) {
  static std::map<int, std::unique_ptr<Eigen::FFT<double>>> cache;
  auto& slot = cache[nfft];
  if (!slot) slot = std::make_unique<Eigen::FFT<double>>();
  return *slot;
}

void check_config(const SpectrogramConfig& cfg) {
  if (cfg.window_length < 2 || cfg.window_length % 2 != 0)
    throw DataError("window length must be even and at least 2");
  if (cfg.hop_length < 1) throw DataError("hop length must be positive");
  if (!(cfg.sample_rate > 0.0)) throw DataError("sample rate must be positive");
}

Vec hann_window(int n) {
  Vec w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);  // periodic form
  return w;
}

// Index into the reflect-padded signal; pad is window/2 on each side.
Index reflect_index(Index padded_pos, Index pad, Index len) {
  Index j = padded_pos - pad;
  if (j < 0) j = -j;
  if (j >= len) j = 2 * len - 2 - j;
  return j;
}

void check_length(Index len, const SpectrogramConfig& cfg) {
  if (len < 2 || cfg.window_length / 2 > len - 1)
    throw DataError("signal too short for the analysis window");
}

// Zeroth-order modified Bessel function, for the Kaiser window.
double bessel_i0(double x) {
  double term = 1.0, sum = 1.0;
  const double q = 0.25 * x * x;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term <= 1e-18 * sum) break;
  }
  return sum;
}

}  // namespace

Index stft_frame_count(Index len, const SpectrogramConfig& cfg) {
  check_config(cfg);
  check_length(len, cfg);
  return 1 + len / cfg.hop_length;
}

CMat stft(const Vec& signal, const SpectrogramConfig& cfg) {
  check_config(cfg);
  const Index len = signal.size();
  check_length(len, cfg);
  const int n = cfg.window_length;
  const Index pad = n / 2;
  const Index frames = stft_frame_count(len, cfg);
  const Vec window = hann_window(n);

  Eigen::FFT<double>& fft = fft_for(n);
  std::vector<std::complex<double>> freq(static_cast<size_t>(n));
  std::vector<double> frame(static_cast<size_t>(n));

  CMat out(n / 2 + 1, frames);
  for (Index f = 0; f < frames; ++f) {
    const Index start = f * cfg.hop_length;
    for (int i = 0; i < n; ++i)
      frame[static_cast<size_t>(i)] =
          window[i] * signal[reflect_index(start + i, pad, len)];
    fft.fwd(freq, frame);
    for (int k = 0; k <= n / 2; ++k) out(k, f) = freq[static_cast<size_t>(k)];
  }
  return out;
}

Mat stft_magnitude(const Vec& signal, const SpectrogramConfig& cfg) {
  return stft(signal, cfg).cwiseAbs();
}

Vec stft_adjoint(const CMat& grad_spectrum, Index signal_len,
                 const SpectrogramConfig& cfg) {
  check_config(cfg);
  check_length(signal_len, cfg);
  const int n = cfg.window_length;
  const Index pad = n / 2;
  const Index frames = stft_frame_count(signal_len, cfg);
  if (grad_spectrum.rows() != n / 2 + 1 || grad_spectrum.cols() != frames)
    throw DataError("spectrum gradient shape does not match the config");
  const Vec window = hann_window(n);

  Eigen::FFT<double>& fft = fft_for(n);
  std::vector<std::complex<double>> freq(static_cast<size_t>(n));
  std::vector<std::complex<double>> time(static_cast<size_t>(n));

  Vec grad = Vec::Zero(signal_len);
  for (Index f = 0; f < frames; ++f) {
    // One-sided bins act independently on Re and Im, so the adjoint frame
    // is Re(sum_k G_k e^{+2pi i k t / n}) with no conjugate extension.
    for (int k = 0; k < n; ++k)
      freq[static_cast<size_t>(k)] =
          k <= n / 2 ? grad_spectrum(k, f) : std::complex<double>(0.0, 0.0);
    fft.inv(time, freq);
    const Index start = f * cfg.hop_length;
    for (int i = 0; i < n; ++i) {
      const double g = window[i] * n * time[static_cast<size_t>(i)].real();
      grad[reflect_index(start + i, pad, signal_len)] += g;
    }
  }
  return grad;
}

Vec stft_magnitude_adjoint(const CMat& spectrum, const Mat& grad_magnitude,
                           Index signal_len, const SpectrogramConfig& cfg) {
  if (spectrum.rows() != grad_magnitude.rows() ||
      spectrum.cols() != grad_magnitude.cols())
    throw DataError("magnitude gradient shape does not match the spectrum");
  CMat grad_spectrum(spectrum.rows(), spectrum.cols());
  for (Index j = 0; j < spectrum.cols(); ++j) {
    for (Index i = 0; i < spectrum.rows(); ++i) {
      const std::complex<double> x = spectrum(i, j);
      const double mag = std::abs(x);
      grad_spectrum(i, j) =
          mag > 0.0 ? grad_magnitude(i, j) * x / mag : std::complex<double>(0.0);
    }
  }
  return stft_adjoint(grad_spectrum, signal_len, cfg);
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

Mat mel_filterbank(const SpectrogramConfig& cfg) {
  check_config(cfg);
  const double f_max = cfg.f_max > 0.0 ? cfg.f_max : 0.5 * cfg.sample_rate;
  if (cfg.n_mels < 1) throw DataError("need at least one mel band");
  if (cfg.f_min < 0.0 || cfg.f_min >= f_max)
    throw DataError("mel band edges are inverted");
  if (f_max > 0.5 * cfg.sample_rate + 1e-9)
    throw DataError("mel f_max above Nyquist");

  const int bins = cfg.window_length / 2 + 1;
  const double bin_hz = cfg.sample_rate / cfg.window_length;
  const double mel_lo = hz_to_mel(cfg.f_min);
  const double mel_hi = hz_to_mel(f_max);
  std::vector<double> edges(static_cast<size_t>(cfg.n_mels) + 2);
  for (size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      (cfg.n_mels + 1));

  Mat fb = Mat::Zero(cfg.n_mels, bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[static_cast<size_t>(m)];
    const double peak = edges[static_cast<size_t>(m) + 1];
    const double hi = edges[static_cast<size_t>(m) + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = k * bin_hz;
      if (f > lo && f < peak) fb(m, k) = (f - lo) / (peak - lo);
      else if (f >= peak && f < hi) fb(m, k) = (hi - f) / (hi - peak);
    }
    if (fb.row(m).sum() <= 0.0) {
      int nearest = static_cast<int>(std::clamp(
          std::lround(peak / bin_hz), 0L, static_cast<long>(bins - 1)));
      fb(m, nearest) = 1.0;
    }
  }
  return fb;
}

Mat mel_spectrogram(const Vec& signal, const SpectrogramConfig& cfg) {
  return mel_filterbank(cfg) * stft_magnitude(signal, cfg);
}

Mat lowpass_anchor(const Mat& samples, double sample_rate, double cutoff_hz) {
  if (!(cutoff_hz > 0.0)) throw DataError("lowpass cutoff must be positive");
  if (!(sample_rate > 2.0 * cutoff_hz))
    throw DataError("sample rate too low for the lowpass cutoff");
  const double nyquist = 0.5 * sample_rate;
  const double transition = std::min(2500.0, nyquist - cutoff_hz);

  // Kaiser design for 70 dB of stopband attenuation.
  const double atten = 70.0;
  const double beta = 0.1102 * (atten - 8.7);
  const double d_omega = 2.0 * kPi * transition / sample_rate;
  int taps = static_cast<int>(std::ceil((atten - 8.0) / (2.285 * d_omega))) + 1;
  if (taps % 2 == 0) ++taps;
  const int mid = (taps - 1) / 2;

  Vec h(taps);
  const double i0_beta = bessel_i0(beta);
  const double fc = cutoff_hz / sample_rate;  // cycles per sample
  for (int i = 0; i < taps; ++i) {
    const int k = i - mid;
    const double sinc =
        k == 0 ? 2.0 * fc : std::sin(2.0 * kPi * fc * k) / (kPi * k);
    const double r = 2.0 * static_cast<double>(i) / (taps - 1) - 1.0;
    h[i] = sinc * bessel_i0(beta * std::sqrt(1.0 - r * r)) / i0_beta;
  }
  h /= h.sum();  // exact unity DC gain

  Mat out = Mat::Zero(samples.rows(), samples.cols());
  for (Index c = 0; c < samples.rows(); ++c) {
    for (Index t = 0; t < samples.cols(); ++t) {
      double acc = 0.0;
      // Delay-compensated: tap k reads input at t + mid - k.
      const Index lo = std::max<Index>(0, t + mid - (taps - 1));
      const Index hi = std::min<Index>(samples.cols() - 1, t + mid);
      for (Index s = lo; s <= hi; ++s) acc += h[t + mid - s] * samples(c, s);
      out(c, t) = acc;
    }
  }
  return out;
}

}  // namespace ambicodec::dsp
