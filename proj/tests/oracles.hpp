// Independent reference implementations the tests compare the library
// against. Everything here is written from the defining formulas with
// plain loops, deliberately sharing no code with the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "ambicodec/nn.hpp"
#include "ambicodec/rng.hpp"
#include "ambicodec/types.hpp"

namespace oracles {

using ambicodec::Arr;
using ambicodec::Index;
using ambicodec::Mat;
using ambicodec::Rng;
using ambicodec::Vec;

inline constexpr double kPi = 3.14159265358979323846;

// ---- Bessel J_m via the integral representation ----
// J_m(x) = (1/2pi) * integral over a full period of cos(m*t - x*sin t);
// the periodic trapezoid rule converges spectrally, so a few thousand
// nodes reach machine precision for the m and x ranges tested.
inline double bessel_quadrature(int m, double x, int n = 8192) {
  // Kahan summation keeps the accumulated roundoff below the
  // quadrature's own truncation error.
  double sum = 0.0, carry = 0.0;
  for (int j = 0; j < n; ++j) {
    const double t = 2.0 * kPi * j / n;
    const double term = std::cos(m * t - x * std::sin(t)) - carry;
    const double next = sum + term;
    carry = (next - sum) - term;
    sum = next;
  }
  return sum / n;
}

// ---- direct-summation convolutions ----

inline Mat conv_oracle(const ambicodec::nn::ConvSpec& s, const Arr& w,
                       const Arr& b, const Mat& x) {
  const Index len = x.cols();
  const Index out_len =
      (len + 2 * s.padding - s.dilation * (s.kernel - 1) - 1) / s.stride + 1;
  Mat y(s.out_channels, out_len);
  for (Index co = 0; co < s.out_channels; ++co)
    for (Index t = 0; t < out_len; ++t) {
      double acc = b[co];
      for (Index ci = 0; ci < s.in_channels; ++ci)
        for (Index k = 0; k < s.kernel; ++k) {
          const Index pos = t * s.stride + k * s.dilation - s.padding;
          if (pos >= 0 && pos < len)
            acc += w[(co * s.in_channels + ci) * s.kernel + k] * x(ci, pos);
        }
      y(co, t) = acc;
    }
  return y;
}

inline Mat conv_transpose_oracle(const ambicodec::nn::ConvSpec& s,
                                 const Arr& w, const Arr& b, const Mat& x) {
  const Index len = x.cols();
  const Index out_len = (len - 1) * s.stride - 2 * s.padding +
                        s.dilation * (s.kernel - 1) + 1 + s.output_padding;
  Mat y(s.out_channels, out_len);
  for (Index co = 0; co < s.out_channels; ++co) y.row(co).setConstant(b[co]);
  for (Index ci = 0; ci < s.in_channels; ++ci)
    for (Index t = 0; t < len; ++t)
      for (Index co = 0; co < s.out_channels; ++co)
        for (Index k = 0; k < s.kernel; ++k) {
          const Index pos = t * s.stride + k * s.dilation - s.padding;
          if (pos >= 0 && pos < out_len)
            y(co, pos) += w[(ci * s.out_channels + co) * s.kernel + k] * x(ci, t);
        }
  return y;
}

// ---- direct DFT ----

inline Eigen::VectorXcd dft_oracle(const Vec& frame) {
  const Index n = frame.size();
  Eigen::VectorXcd out(n);
  for (Index k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (Index t = 0; t < n; ++t) {
      const double phase = -2.0 * kPi * k * t / n;
      acc += frame[t] * std::complex<double>(std::cos(phase), std::sin(phase));
    }
    out[k] = acc;
  }
  return out;
}

// ---- real spherical harmonics, SN3D, ACN, no Condon-Shortley ----
// Cartesian polynomial table for degrees 0..3, written from the
// published ambisonics component table rather than the recurrence.
inline double sh_table_oracle(int acn, double azimuth, double elevation) {
  const double x = std::cos(elevation) * std::cos(azimuth);
  const double y = std::cos(elevation) * std::sin(azimuth);
  const double z = std::sin(elevation);
  switch (acn) {
    case 0: return 1.0;
    case 1: return y;
    case 2: return z;
    case 3: return x;
    case 4: return std::sqrt(3.0) * x * y;
    case 5: return std::sqrt(3.0) * y * z;
    case 6: return 0.5 * (3.0 * z * z - 1.0);
    case 7: return std::sqrt(3.0) * x * z;
    case 8: return 0.5 * std::sqrt(3.0) * (x * x - y * y);
    case 9: return std::sqrt(5.0 / 8.0) * y * (3.0 * x * x - y * y);
    case 10: return std::sqrt(15.0) * x * y * z;
    case 11: return std::sqrt(3.0 / 8.0) * y * (5.0 * z * z - 1.0);
    case 12: return 0.5 * z * (5.0 * z * z - 3.0);
    case 13: return std::sqrt(3.0 / 8.0) * x * (5.0 * z * z - 1.0);
    case 14: return 0.5 * std::sqrt(15.0) * z * (x * x - y * y);
    case 15: return std::sqrt(5.0 / 8.0) * x * (x * x - 3.0 * y * y);
    default: return std::nan("");
  }
}

// ---- Gauss-Legendre nodes for exact sphere quadrature ----
// Integrates polynomials in the direction cosines exactly: product of
// Gauss-Legendre in z and the trapezoid rule in azimuth.
struct SphereQuadrature {
  std::vector<double> z, z_weight, azimuth;
};

inline SphereQuadrature sphere_quadrature(int n_z = 16, int n_az = 32) {
  SphereQuadrature q;
  for (int i = 0; i < n_z; ++i) {
    // Newton iteration on P_n from the Chebyshev-like initial guess.
    double root = std::cos(kPi * (i + 0.75) / (n_z + 0.5));
    double deriv = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = root;
      for (int k = 2; k <= n_z; ++k) {
        const double p2 = ((2.0 * k - 1.0) * root * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      deriv = n_z * (root * p1 - p0) / (root * root - 1.0);
      const double step = p1 / deriv;
      root -= step;
      if (std::abs(step) < 1e-15) break;
    }
    q.z.push_back(root);
    q.z_weight.push_back(2.0 / ((1.0 - root * root) * deriv * deriv));
  }
  for (int j = 0; j < n_az; ++j)
    q.azimuth.push_back(2.0 * kPi * j / n_az);
  return q;
}

// Mean over the sphere of f(azimuth, elevation).
inline double sphere_mean(const SphereQuadrature& q,
                          const std::function<double(double, double)>& f) {
  double sum = 0.0;
  for (size_t i = 0; i < q.z.size(); ++i) {
    const double el = std::asin(q.z[i]);
    double az_sum = 0.0;
    for (const double az : q.azimuth) az_sum += f(az, el);
    sum += q.z_weight[i] * az_sum / q.azimuth.size();
  }
  return sum / 2.0;
}

// ---- two-pass covariance / correlation ----

inline Mat correlation_oracle(const Mat& m) {
  const Index n = m.rows();
  const Index len = m.cols();
  Vec mu = Vec::Zero(n);
  for (Index i = 0; i < n; ++i) {
    for (Index t = 0; t < len; ++t) mu[i] += m(i, t);
    mu[i] /= static_cast<double>(len);
  }
  Mat cov = Mat::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      for (Index t = 0; t < len; ++t)
        cov(i, j) += (m(i, t) - mu[i]) * (m(j, t) - mu[j]);
      cov(i, j) /= static_cast<double>(len - 1);
    }
  Mat corr(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      corr(i, j) =
          i == j ? 1.0 : cov(i, j) / std::sqrt(cov(i, i) * cov(j, j) + 1e-9);
  return corr;
}

inline double covariance_loss_oracle(const Mat& a, const Mat& b) {
  const Mat ra = correlation_oracle(a);
  const Mat rb = correlation_oracle(b);
  double sum = 0.0;
  for (Index i = 0; i < ra.rows(); ++i)
    for (Index j = 0; j < ra.cols(); ++j) sum += std::abs(ra(i, j) - rb(i, j));
  return 0.5 * sum;
}

// ---- brute-force nearest codebook entry ----

inline Index nearest_entry_oracle(const Arr& codebook, Index n_entries,
                                  Index dim, const Vec& v) {
  Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index e = 0; e < n_entries; ++e) {
    double d = 0.0;
    for (Index c = 0; c < dim; ++c) {
      const double diff = codebook[e * dim + c] - v[c];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = e;
    }
  }
  return best;
}

// ---- central finite differences ----
// Checks an analytic gradient coordinate by coordinate. Coordinates
// whose one-sided slopes disagree (an L1 kink within h of the point)
// are skipped rather than failed.
struct FdResult {
  double worst = 0.0;
  Index worst_index = -1;
  Index checked = 0;
  Index skipped = 0;
};

inline FdResult check_gradient(const std::function<double()>& eval, double* x,
                               Index n, const double* analytic,
                               double h = 1e-6, double floor = 1e-5) {
  FdResult r;
  const double f0 = eval();
  for (Index i = 0; i < n; ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = eval();
    x[i] = keep - h;
    const double fm = eval();
    x[i] = keep;
    const double fd = (fp - fm) / (2.0 * h);
    // Slope mismatch between the two sides marks a kink.
    const double bend = std::abs(fp + fm - 2.0 * f0) / h;
    if (bend > 0.01 * std::max(1.0, std::abs(fd))) {
      ++r.skipped;
      continue;
    }
    ++r.checked;
    const double gap =
        std::abs(fd - analytic[i]) /
        std::max({floor, std::abs(fd), std::abs(analytic[i])});
    if (gap > r.worst) {
      r.worst = gap;
      r.worst_index = i;
    }
  }
  return r;
}

// ---- misc helpers ----

inline Mat random_mat(Rng& rng, Index rows, Index cols, double scale = 1.0) {
  Mat m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline Vec random_vec(Rng& rng, Index n, double scale = 1.0) {
  Vec v(n);
  for (Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

// Evenly spread directions (golden-angle spiral) for synthetic layouts.
inline std::vector<std::pair<double, double>> fibonacci_directions(int n) {
  std::vector<std::pair<double, double>> dirs;
  for (int i = 0; i < n; ++i) {
    const double z = (2.0 * i + 1.0) / n - 1.0;
    dirs.emplace_back(std::fmod(i * 2.399963229728653, 2.0 * kPi),
                      std::asin(z));
  }
  return dirs;
}

}  // namespace oracles
