#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "ambicodec/errors.hpp"
#include "ambicodec/losses.hpp"
#include "ambicodec/rng.hpp"
#include "oracles.hpp"

using namespace ambicodec;
using namespace ambicodec::losses;

namespace {

std::vector<dsp::SpectrogramConfig> small_scales(double sample_rate) {
  std::vector<dsp::SpectrogramConfig> scales;
  for (const auto& [win, mels] : {std::pair{16, 4}, {32, 8}}) {
    dsp::SpectrogramConfig cfg;
    cfg.window_length = win;
    cfg.hop_length = win / 4;
    cfg.n_mels = mels;
    cfg.sample_rate = sample_rate;
    scales.push_back(cfg);
  }
  return scales;
}

// log-compressed mel distance recomputed with plain loops on top of the
// dsp primitives
double mel_loss_oracle(const Mat& ref, const Mat& rec,
                       const std::vector<dsp::SpectrogramConfig>& scales) {
  double channel_sum = 0.0;
  for (Index c = 0; c < ref.rows(); ++c) {
    double scale_sum = 0.0;
    for (const auto& cfg : scales) {
      const Mat a = dsp::mel_spectrogram(ref.row(c).transpose(), cfg);
      const Mat b = dsp::mel_spectrogram(rec.row(c).transpose(), cfg);
      double acc = 0.0;
      for (Index i = 0; i < a.size(); ++i)
        acc += std::abs(std::log(a.data()[i] + 1e-5) -
                        std::log(b.data()[i] + 1e-5));
      scale_sum += acc / static_cast<double>(a.size());
    }
    channel_sum += scale_sum / static_cast<double>(scales.size());
  }
  return channel_sum / static_cast<double>(ref.rows());
}

}  // namespace

TEST_CASE("default mel scales cover the documented sweep") {
  const auto scales = default_mel_scales(44100.0);
  REQUIRE(scales.size() == 7);
  const int wins[7] = {32, 64, 128, 256, 512, 1024, 2048};
  const int mels[7] = {5, 10, 20, 40, 80, 160, 320};
  for (size_t i = 0; i < 7; ++i) {
    CHECK(scales[i].window_length == wins[i]);
    CHECK(scales[i].n_mels == mels[i]);
    CHECK(scales[i].hop_length == wins[i] / 4);
    CHECK(scales[i].sample_rate == 44100.0);
  }
}

TEST_CASE("mel loss of identical signals is zero") {
  Rng rng(81);
  const Mat x = oracles::random_mat(rng, 2, 64);
  const auto scales = small_scales(8000.0);
  CHECK(multiscale_mel_loss(x, x, scales) == 0.0);
  const auto vg = multiscale_mel_loss_grad(x, x, scales);
  CHECK(vg.value == 0.0);
}

TEST_CASE("mel loss matches the loops-only recomputation") {
  Rng rng(82);
  const auto scales = small_scales(8000.0);
  for (int trial = 0; trial < 5; ++trial) {
    const Mat ref = oracles::random_mat(rng, 3, 50, 0.5);
    const Mat rec = oracles::random_mat(rng, 3, 50, 0.5);
    const double got = multiscale_mel_loss(ref, rec, scales);
    CHECK(got == doctest::Approx(mel_loss_oracle(ref, rec, scales))
                     .epsilon(1e-12));
    CHECK(got > 0.0);
    // symmetric in its arguments
    CHECK(got == doctest::Approx(multiscale_mel_loss(rec, ref, scales))
                     .epsilon(1e-12));
  }
}

TEST_CASE("mel loss gradient matches finite differences") {
  Rng rng(83);
  const auto scales = small_scales(8000.0);
  const Mat ref = oracles::random_mat(rng, 2, 40, 0.5);
  Mat rec = oracles::random_mat(rng, 2, 40, 0.5);
  const auto eval = [&] { return multiscale_mel_loss(ref, rec, scales); };
  const auto vg = multiscale_mel_loss_grad(ref, rec, scales);
  CHECK(vg.value == doctest::Approx(eval()).epsilon(1e-14));
  REQUIRE(vg.grad.rows() == 2);
  REQUIRE(vg.grad.cols() == 40);
  const auto r = oracles::check_gradient(eval, rec.data(), rec.size(),
                                         vg.grad.data(), 1e-6);
  CHECK(r.checked > 10);
  CHECK(r.worst < 1e-5);
}

TEST_CASE("correlation matrix matches the two-pass oracle") {
  Rng rng(84);
  for (Index n : {2, 5}) {
    const Mat x = oracles::random_mat(rng, n, 50);
    const Mat got = correlation_matrix(x);
    const Mat want = oracles::correlation_oracle(x);
    REQUIRE(got.rows() == n);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
    for (Index i = 0; i < n; ++i) CHECK(got(i, i) == 1.0);
  }
}

TEST_CASE("covariance loss hand cases") {
  Rng rng(85);
  const Mat x = oracles::random_mat(rng, 4, 30);
  CHECK(covariance_loss(x, x) == 0.0);

  // Two perfectly correlated reference rows vs anti-correlated
  // reconstruction rows: the two off-diagonal entries flip from +1 to -1,
  // so the loss is 0.5 * (2 + 2) = 2.
  Mat ref(2, 20), rec(2, 20);
  for (Index t = 0; t < 20; ++t) {
    const double v = rng.normal();
    ref(0, t) = v;
    ref(1, t) = v;
    rec(0, t) = v;
    rec(1, t) = -v;
  }
  CHECK(covariance_loss(ref, rec) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("covariance loss stays within its bound") {
  Rng rng(86);
  for (Index n : {2, 4, 16}) {
    for (int trial = 0; trial < 50; ++trial) {
      const Mat a = oracles::random_mat(rng, n, 24);
      const Mat b = oracles::random_mat(rng, n, 24);
      const double loss = covariance_loss(a, b);
      CHECK(loss >= 0.0);
      CHECK(loss <= double(n * (n - 1)));
      CHECK(loss == doctest::Approx(oracles::covariance_loss_oracle(a, b))
                        .epsilon(1e-10));
    }
  }
}

TEST_CASE("covariance loss gradient matches finite differences") {
  Rng rng(87);
  const Mat ref = oracles::random_mat(rng, 3, 40);
  Mat rec = oracles::random_mat(rng, 3, 40);
  const auto eval = [&] { return covariance_loss(ref, rec); };
  const auto vg = covariance_loss_grad(ref, rec);
  CHECK(vg.value == doctest::Approx(eval()).epsilon(1e-14));
  const auto r = oracles::check_gradient(eval, rec.data(), rec.size(),
                                         vg.grad.data(), 1e-6);
  CHECK(r.checked > 10);
  CHECK(r.worst < 1e-5);
}

TEST_CASE("least-squares adversarial losses on hand values") {
  DiscriminatorScore fake1, fake2, real1, real2;
  fake1.logits = Mat::Constant(1, 2, 0.5);
  fake2.logits = Mat::Constant(1, 1, -1.0);
  real1.logits = Mat::Constant(1, 2, 1.0);
  real2.logits = Mat::Constant(1, 1, 0.0);

  // generator wants fakes at 1: mean over units of mean (D-1)^2
  const double g = adversarial_g_loss({fake1, fake2});
  CHECK(g == doctest::Approx(0.5 * (0.25 + 4.0)).epsilon(1e-15));

  // discriminator wants reals at 1, fakes at 0
  const double d = adversarial_d_loss({real1, real2}, {fake1, fake2});
  CHECK(d == doctest::Approx(0.5 * (0.0 + 1.0) + 0.5 * (0.25 + 1.0))
                 .epsilon(1e-15));
}

TEST_CASE("per-unit logit grads assemble the full-suite gradient") {
  Rng rng(88);
  std::vector<DiscriminatorScore> fake(3);
  for (auto& s : fake) s.logits = oracles::random_mat(rng, 2, 5);

  const auto eval = [&] { return adversarial_g_loss(fake); };
  for (auto& s : fake) {
    const Mat g = adv_g_logit_grad(s.logits, 3);
    const auto r =
        oracles::check_gradient(eval, s.logits.data(), s.logits.size(),
                                g.data(), 1e-6);
    CHECK(r.worst < 1e-6);
  }

  std::vector<DiscriminatorScore> real(3);
  for (auto& s : real) s.logits = oracles::random_mat(rng, 2, 5);
  const auto eval_d = [&] { return adversarial_d_loss(real, fake); };
  for (auto& s : real) {
    const Mat g = adv_d_real_logit_grad(s.logits, 3);
    const auto r =
        oracles::check_gradient(eval_d, s.logits.data(), s.logits.size(),
                                g.data(), 1e-6);
    CHECK(r.worst < 1e-6);
  }
  for (auto& s : fake) {
    const Mat g = adv_d_fake_logit_grad(s.logits, 3);
    const auto r =
        oracles::check_gradient(eval_d, s.logits.data(), s.logits.size(),
                                g.data(), 1e-6);
    CHECK(r.worst < 1e-6);
  }
}

TEST_CASE("feature matching is the unit-averaged per-layer L1") {
  Rng rng(89);
  std::vector<DiscriminatorScore> real(2), fake(2);
  for (int u = 0; u < 2; ++u) {
    for (const auto& [r_, c_] : {std::pair{3, 7}, {2, 4}}) {
      real[u].features.push_back(oracles::random_mat(rng, r_, c_));
      fake[u].features.push_back(oracles::random_mat(rng, r_, c_));
    }
  }
  double want = 0.0;
  for (int u = 0; u < 2; ++u) {
    double unit = 0.0;
    for (size_t l = 0; l < 2; ++l)
      unit += (real[u].features[l] - fake[u].features[l]).cwiseAbs().mean();
    want += unit / 2.0;
  }
  want /= 2.0;
  CHECK(feature_matching_loss(real, fake) ==
        doctest::Approx(want).epsilon(1e-14));

  // gradient seeds against finite differences
  const auto eval = [&] { return feature_matching_loss(real, fake); };
  for (int u = 0; u < 2; ++u) {
    const auto grads =
        feature_matching_grads(real[u].features, fake[u].features, 2);
    REQUIRE(grads.size() == 2);
    for (size_t l = 0; l < 2; ++l) {
      auto& target = fake[u].features[l];
      const auto r = oracles::check_gradient(
          eval, target.data(), target.size(), grads[l].data(), 1e-7);
      CHECK(r.worst < 1e-5);
    }
  }

  CHECK(feature_matching_loss(real, real) == 0.0);
}

TEST_CASE("composite loss applies the weights") {
  LossTerms terms;
  terms.mel = 0.5;
  terms.adversarial = 0.25;
  terms.feature_matching = 1.5;
  terms.codebook = 0.125;
  terms.commitment = 0.25;
  terms.covariance = 2.0;
  LossWeights w;  // defaults: 15, 1, 2, 1, 0.25, 1
  const double want =
      15.0 * 0.5 + 1.0 * 0.25 + 2.0 * 1.5 + 1.0 * 0.125 + 0.25 * 0.25 +
      1.0 * 2.0;
  CHECK(composite_generator_loss(terms, w) ==
        doctest::Approx(want).epsilon(1e-15));

  terms.covariance = std::nan("");
  CHECK_THROWS_AS(composite_generator_loss(terms, w), NumericError);
}

TEST_CASE("default loss weights") {
  const LossWeights w;
  CHECK(w.mel == 15.0);
  CHECK(w.adversarial == 1.0);
  CHECK(w.feature_matching == 2.0);
  CHECK(w.codebook == 1.0);
  CHECK(w.commitment == 0.25);
  CHECK(w.covariance == 1.0);
}
