#pragma once

#include <string>
#include <vector>

#include "ambicodec/types.hpp"

namespace ambicodec::hoa {

// Number of B-format channels carried by a given ambisonics order.
int channel_count(int order);

// B-format audio in ACN channel order with SN3D normalization.
// samples is [channel_count(order) x frames].
struct BFormatSignal {
  int order = 0;
  double sample_rate = 0.0;
  Mat samples;
};

void validate(const BFormatSignal& signal);

// Cylindrical Bessel function J_m(x) for integer m >= 0.
// Power series below |x| = 12, normalized downward recurrence above.
double bessel_j(int m, double x);

// One term of a 2-D circular-harmonic expansion. sign +1 selects the
// cos(m*theta) component, -1 the sin(m*theta) component; m = 0 carries
// only the +1 term.
struct CircularCoefficient {
  int m = 0;
  int sign = +1;
  double value = 0.0;
};

struct PressureFieldSpec {
  std::vector<CircularCoefficient> coefficients;
  int truncation_order = 0;
};

// Pressure of the expansion at radius r, azimuth theta, wavenumber k:
// the m = 0 coefficient is weighted by J_0(kr), and each m >= 1
// coefficient by sqrt(2) * J_m(kr) * cos/sin(m*theta).
double pressure_field(const PressureFieldSpec& spec, double k, double r,
                      double theta);

// Real spherical-harmonic coefficients for a unit plane wave from
// (azimuth, elevation), ACN order, SN3D normalization, no Condon-Shortley
// phase. Azimuth is counterclockwise from the front, radians. Supports
// order <= 4.
Vec encode_direction(int order, double azimuth, double elevation);

// B-format of a plane-wave source carrying `signal` (1 x frames row or
// column vector) from the given direction.
BFormatSignal encode_plane_wave(int order, double azimuth, double elevation,
                                const Vec& signal, double sample_rate);

// Drops the channels above new_order. new_order must not exceed the
// signal's order.
BFormatSignal truncate_order(const BFormatSignal& signal, int new_order);

struct Speaker {
  double azimuth = 0.0;
  double elevation = 0.0;
};

// Loudspeaker directions for rendering. lfe_index marks where a silent
// LFE channel belongs in the output file of the named layout (-1: none);
// the decoder itself never feeds the LFE.
struct SpeakerLayout {
  std::string name;
  std::vector<Speaker> speakers;
  int lfe_index = -1;
};

void validate(const SpeakerLayout& layout);

// Mode-matching decoder matrix [n_speakers x channel_count(order)]:
// Tikhonov-regularized pseudoinverse of the transposed speaker
// spherical-harmonic matrix. Throws if the layout has at least as many
// speakers as channels but is rank-deficient beyond the regularization.
Mat decoding_matrix(const SpeakerLayout& layout, int order);

// Speaker feeds [n_speakers x frames].
Mat render(const BFormatSignal& signal, const SpeakerLayout& layout);

// Built-in layouts: "7.1.4", "cube8", "stereo".
SpeakerLayout builtin_layout(const std::string& name);

}  // namespace ambicodec::hoa
