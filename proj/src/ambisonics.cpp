#include "ambicodec/ambisonics.hpp"

#include <cmath>

#include <Eigen/SVD>

#include "ambicodec/errors.hpp"

namespace ambicodec::hoa {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegree = kPi / 180.0;

// Tikhonov regularization of the decoder pseudoinverse.
constexpr double kDecoderEpsilon = 1e-9;

double bessel_series(int m, double ax) {
  // J_m(x) = sum_k (-1)^k (x/2)^(m+2k) / (k! (m+k)!)
  // The alternating terms grow to ~(x/2)^(2k)/(k!)^2 before they decay,
  // so near the switchover the cancellation eats ~4 digits of a double
  // accumulator; extended precision keeps the result at full accuracy.
  long double term = 1.0L;
  const long double half = 0.5L * static_cast<long double>(ax);
  for (int i = 1; i <= m; ++i) term *= half / i;
  long double sum = term;
  const long double q = -half * half;
  for (int k = 1; k < 200 && term != 0.0L; ++k) {
    term *= q / (static_cast<long double>(k) * (m + k));
    sum += term;
    if (std::abs(term) <= 1e-18L * std::abs(sum)) break;
  }
  return static_cast<double>(sum);
}

double bessel_recurrence(int m, double ax) {
  // Downward recurrence normalized with J_0 + 2*sum_{k>=1} J_2k = 1.
  int start = std::max(m, static_cast<int>(std::ceil(ax))) + 44;
  if (start % 2 != 0) ++start;
  double above = 0.0;   // J_{k+1}
  double cur = 1e-30;   // J_k, arbitrary scale
  double norm = 0.0;
  double result = 0.0;
  for (int k = start; k > 0; --k) {
    const double below = (2.0 * k / ax) * cur - above;
    above = cur;
    cur = below;
    if (std::abs(cur) > 1e100) {
      cur *= 1e-100;
      above *= 1e-100;
      norm *= 1e-100;
      result *= 1e-100;
    }
    const int idx = k - 1;
    if (idx >= 2 && idx % 2 == 0) norm += 2.0 * cur;
    if (idx == m) result = cur;
  }
  norm += cur;  // J_0 term
  return result / norm;
}

// Associated Legendre P_l^m(x) without the Condon-Shortley phase.
double legendre_p(int l, int m, double x) {
  double pmm = 1.0;
  if (m > 0) {
    const double s = std::sqrt((1.0 - x) * (1.0 + x));
    double fact = 1.0;
    for (int i = 0; i < m; ++i) {
      pmm *= fact * s;
      fact += 2.0;
    }
  }
  if (l == m) return pmm;
  double pmmp1 = x * (2.0 * m + 1.0) * pmm;
  if (l == m + 1) return pmmp1;
  double pll = 0.0;
  for (int ll = m + 2; ll <= l; ++ll) {
    pll = ((2.0 * ll - 1.0) * x * pmmp1 - (ll + m - 1.0) * pmm) / (ll - m);
    pmm = pmmp1;
    pmmp1 = pll;
  }
  return pll;
}

double sn3d(int l, int m) {
  double f = 1.0;
  for (int i = l - m + 1; i <= l + m; ++i) f *= i;  // (l+m)!/(l-m)!
  return std::sqrt((m == 0 ? 1.0 : 2.0) / f);
}

Mat speaker_sh_matrix(const SpeakerLayout& layout, int order) {
  Mat y(static_cast<Index>(layout.speakers.size()), channel_count(order));
  for (Index i = 0; i < y.rows(); ++i) {
    const Speaker& s = layout.speakers[static_cast<size_t>(i)];
    y.row(i) = encode_direction(order, s.azimuth, s.elevation).transpose();
  }
  return y;
}

}  // namespace

int channel_count(int order) {
  if (order < 0) throw DataError("ambisonics order must be non-negative");
  return (order + 1) * (order + 1);
}

void validate(const BFormatSignal& signal) {
  if (signal.samples.rows() != channel_count(signal.order))
    throw DataError("B-format channel count does not match order");
  if (!(signal.sample_rate > 0.0))
    throw DataError("B-format sample rate must be positive");
}

double bessel_j(int m, double x) {
  if (m < 0) throw DataError("bessel_j order must be non-negative");
  if (!std::isfinite(x)) throw NumericError("bessel_j argument not finite");
  const double ax = std::abs(x);
  double v = ax < 12.0 ? bessel_series(m, ax) : bessel_recurrence(m, ax);
  if (x < 0.0 && m % 2 != 0) v = -v;
  return v;
}

double pressure_field(const PressureFieldSpec& spec, double k, double r,
                      double theta) {
  if (spec.truncation_order < 0)
    throw DataError("pressure field truncation order must be non-negative");
  const double kr = k * r;
  double p = 0.0;
  for (const CircularCoefficient& c : spec.coefficients) {
    if (c.m < 0 || c.m > spec.truncation_order)
      throw DataError("circular coefficient outside truncation order");
    if (c.sign != +1 && c.sign != -1)
      throw DataError("circular coefficient sign must be +1 or -1");
    if (c.m == 0 && c.sign != +1)
      throw DataError("m = 0 carries only the +1 component");
    const double jm = bessel_j(c.m, kr);
    if (c.m == 0) {
      p += c.value * jm;
    } else {
      const double angular =
          c.sign > 0 ? std::cos(c.m * theta) : std::sin(c.m * theta);
      p += c.value * std::sqrt(2.0) * jm * angular;
    }
  }
  return p;
}

Vec encode_direction(int order, double azimuth, double elevation) {
  if (order < 0 || order > 4)
    throw DataError("plane-wave encoding supports orders 0 through 4");
  Vec y(channel_count(order));
  const double se = std::sin(elevation);
  for (int l = 0; l <= order; ++l) {
    for (int m = -l; m <= l; ++m) {
      const int am = std::abs(m);
      double v = sn3d(l, am) * legendre_p(l, am, se);
      v *= m >= 0 ? std::cos(am * azimuth) : std::sin(am * azimuth);
      y[l * (l + 1) + m] = v;
    }
  }
  return y;
}

BFormatSignal encode_plane_wave(int order, double azimuth, double elevation,
                                const Vec& signal, double sample_rate) {
  const Vec y = encode_direction(order, azimuth, elevation);
  BFormatSignal out;
  out.order = order;
  out.sample_rate = sample_rate;
  out.samples = y * signal.transpose();
  validate(out);
  return out;
}

BFormatSignal truncate_order(const BFormatSignal& signal, int new_order) {
  validate(signal);
  if (new_order > signal.order)
    throw DataError("cannot truncate to a higher order");
  BFormatSignal out;
  out.order = new_order;
  out.sample_rate = signal.sample_rate;
  out.samples = signal.samples.topRows(channel_count(new_order));
  return out;
}

void validate(const SpeakerLayout& layout) {
  if (layout.speakers.empty()) throw DataError("speaker layout is empty");
  const size_t n = layout.speakers.size();
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const Speaker& a = layout.speakers[i];
      const Speaker& b = layout.speakers[j];
      const double dot = std::sin(a.elevation) * std::sin(b.elevation) +
                         std::cos(a.elevation) * std::cos(b.elevation) *
                             std::cos(a.azimuth - b.azimuth);
      if (dot > 1.0 - 1e-12)
        throw DataError("speaker layout has coincident directions");
    }
  }
}

Mat decoding_matrix(const SpeakerLayout& layout, int order) {
  validate(layout);
  const int n_ch = channel_count(order);
  const Mat yt = speaker_sh_matrix(layout, order).transpose();  // [n_ch x n_spk]
  Eigen::JacobiSVD<Mat> svd(yt, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& sv = svd.singularValues();
  if (yt.cols() >= n_ch && sv[sv.size() - 1] < 1e-6 * std::max(1.0, sv[0]))
    throw DataError("degenerate speaker layout: spherical-harmonic matrix "
                    "is rank-deficient");
  Vec inv(sv.size());
  for (Index i = 0; i < sv.size(); ++i)
    inv[i] = sv[i] / (sv[i] * sv[i] + kDecoderEpsilon);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Mat render(const BFormatSignal& signal, const SpeakerLayout& layout) {
  validate(signal);
  return decoding_matrix(layout, signal.order) * signal.samples;
}

SpeakerLayout builtin_layout(const std::string& name) {
  auto sp = [](double az_deg, double el_deg) {
    return Speaker{az_deg * kDegree, el_deg * kDegree};
  };
  SpeakerLayout layout;
  layout.name = name;
  if (name == "stereo") {
    layout.speakers = {sp(30, 0), sp(-30, 0)};
  } else if (name == "cube8") {
    const double el = std::atan(1.0 / std::sqrt(2.0)) / kDegree;
    layout.speakers = {sp(45, el),  sp(135, el),  sp(-135, el),  sp(-45, el),
                       sp(45, -el), sp(135, -el), sp(-135, -el), sp(-45, -el)};
  } else if (name == "7.1.4") {
    layout.speakers = {sp(30, 0),    sp(-30, 0),   sp(0, 0),
                       sp(90, 0),    sp(-90, 0),   sp(135, 0),
                       sp(-135, 0),  sp(45, 35),   sp(-45, 35),
                       sp(135, 35),  sp(-135, 35)};
    layout.lfe_index = 3;
  } else {
    throw DataError("unknown speaker layout: " + name);
  }
  return layout;
}

}  // namespace ambicodec::hoa
