#include "ambicodec/discriminators.hpp"

#include <string>

#include "ambicodec/dsp.hpp"
#include "ambicodec/errors.hpp"

namespace ambicodec::disc {

using losses::DiscriminatorScore;
using nn::Conv1d;
using nn::ConvSpec;
using nn::Init;
using nn::LeakyRelu;
using nn::ParamStore;
using nn::Sequential;
using nn::Tensor;

namespace {

// With rng set, creates fresh parameters; without it, attaches to the
// tensors an earlier instance created (weight sharing between phases).
std::unique_ptr<nn::Layer> make_conv(ParamStore& store, const std::string& name,
                                     const ConvSpec& spec, Rng* rng) {
  if (rng != nullptr)
    return std::unique_ptr<nn::Layer>(
        Conv1d::create(store, name, spec, *rng, Init::kNormal002));
  Tensor* w = store.find(name + ".weight");
  Tensor* b = store.find(name + ".bias");
  if (w == nullptr || b == nullptr)
    throw DataError("missing shared discriminator tensors for " + name);
  return std::make_unique<Conv1d>(spec, w, b);
}

// Convolution stack shared by all sub-discriminator types; every
// post-activation map is a feature tap.
void build_stack(Sequential& seq, ParamStore& store, const std::string& prefix,
                 const std::vector<ConvSpec>& specs, Rng* rng) {
  for (size_t i = 0; i + 1 < specs.size(); ++i) {
    const std::string name = prefix + ".conv" + std::to_string(i);
    seq.append(name, make_conv(store, name, specs[i], rng));
    seq.append(name + ".act", std::make_unique<LeakyRelu>(0.1), true);
  }
  const std::string name = prefix + ".logits";
  seq.append(name, make_conv(store, name, specs.back(), rng));
}

}  // namespace

class SubDiscriminator {
 public:
  virtual ~SubDiscriminator() = default;
  // Scores one audio channel. want_grad keeps backward caches,
  // want_features copies out the tapped activations.
  virtual DiscriminatorScore forward(const Vec& x, bool want_grad,
                                     bool want_features) = 0;
  // grad_features may be empty. Returns dL/dx for the last forward.
  virtual Vec backward(const Mat& grad_logits,
                       const std::vector<Mat>& grad_features) = 0;
};

namespace {

class PeriodDiscriminator : public SubDiscriminator {
 public:
  PeriodDiscriminator(ParamStore& store, const std::string& prefix,
                      Index period, int base, Rng& rng)
      : period_(period) {
    const Index c = base;
    const std::vector<ConvSpec> specs = {
        {1, c, 5, 3, 1, 2},
        {c, 2 * c, 5, 3, 1, 2},
        {2 * c, 4 * c, 5, 3, 1, 2},
        {4 * c, 1, 3, 1, 1, 1},
    };
    for (Index p = 0; p < period_; ++p) {
      phase_stacks_.push_back(std::make_unique<Sequential>());
      build_stack(*phase_stacks_.back(), store, prefix, specs,
                  p == 0 ? &rng : nullptr);
    }
  }

  DiscriminatorScore forward(const Vec& x, bool want_grad,
                             bool want_features) override {
    const Mat phases = DiscriminatorSuite::fold_phases(x, period_);
    input_len_ = x.size();
    logit_widths_.clear();
    feature_widths_.clear();

    DiscriminatorScore score;
    std::vector<std::vector<Mat>> phase_features(
        static_cast<size_t>(period_));
    std::vector<Mat> phase_logits;
    for (Index p = 0; p < period_; ++p) {
      Sequential& stack = *phase_stacks_[static_cast<size_t>(p)];
      const Mat logits =
          stack.forward(phases.row(p), want_grad, want_features);
      logit_widths_.push_back(logits.cols());
      phase_logits.push_back(logits);
      if (want_features) phase_features[static_cast<size_t>(p)] = stack.features();
    }
    Index total = 0;
    for (Index w : logit_widths_) total += w;
    score.logits.resize(1, total);
    Index at = 0;
    for (Index p = 0; p < period_; ++p) {
      score.logits.middleCols(at, logit_widths_[static_cast<size_t>(p)]) =
          phase_logits[static_cast<size_t>(p)];
      at += logit_widths_[static_cast<size_t>(p)];
    }
    if (want_features) {
      const size_t n_layers = phase_features[0].size();
      for (size_t l = 0; l < n_layers; ++l) {
        std::vector<Index> widths;
        Index width = 0, rows = phase_features[0][l].rows();
        for (Index p = 0; p < period_; ++p) {
          widths.push_back(phase_features[static_cast<size_t>(p)][l].cols());
          width += widths.back();
        }
        feature_widths_.push_back(widths);
        Mat f(rows, width);
        Index col = 0;
        for (Index p = 0; p < period_; ++p) {
          const Mat& pf = phase_features[static_cast<size_t>(p)][l];
          f.middleCols(col, pf.cols()) = pf;
          col += pf.cols();
        }
        score.features.push_back(std::move(f));
      }
    }
    return score;
  }

  Vec backward(const Mat& grad_logits,
               const std::vector<Mat>& grad_features) override {
    Mat phase_grads(period_, input_len_ / period_);
    Index logit_at = 0;
    for (Index p = 0; p < period_; ++p) {
      Sequential& stack = *phase_stacks_[static_cast<size_t>(p)];
      const Mat gl =
          grad_logits.middleCols(logit_at, logit_widths_[static_cast<size_t>(p)]);
      logit_at += logit_widths_[static_cast<size_t>(p)];
      std::vector<Mat> gf;
      if (!grad_features.empty()) {
        for (size_t l = 0; l < grad_features.size(); ++l) {
          Index col = 0;
          for (Index q = 0; q < p; ++q)
            col += feature_widths_[l][static_cast<size_t>(q)];
          gf.push_back(grad_features[l].middleCols(
              col, feature_widths_[l][static_cast<size_t>(p)]));
        }
      }
      phase_grads.row(p) = stack.backward_with_features(gl, gf);
    }
    return DiscriminatorSuite::unfold_phases(phase_grads, input_len_);
  }

 private:
  Index period_;
  std::vector<std::unique_ptr<Sequential>> phase_stacks_;
  Index input_len_ = 0;
  std::vector<Index> logit_widths_;
  std::vector<std::vector<Index>> feature_widths_;  // [layer][phase]
};

class ScaleDiscriminator : public SubDiscriminator {
 public:
  ScaleDiscriminator(ParamStore& store, const std::string& prefix, Index factor,
                     int base, Rng& rng) {
    const Index c = base;
    if (factor > 1)
      stack_.append(prefix + ".pool", std::make_unique<nn::AvgPool1d>(factor));
    const std::vector<ConvSpec> specs = {
        {1, c, 15, 4, 1, 7},
        {c, 2 * c, 15, 4, 1, 7},
        {2 * c, 4 * c, 15, 4, 1, 7},
        {4 * c, 1, 3, 1, 1, 1},
    };
    build_stack(stack_, store, prefix, specs, &rng);
  }

  DiscriminatorScore forward(const Vec& x, bool want_grad,
                             bool want_features) override {
    DiscriminatorScore score;
    score.logits = stack_.forward(x.transpose(), want_grad, want_features);
    score.features = stack_.features();
    return score;
  }

  Vec backward(const Mat& grad_logits,
               const std::vector<Mat>& grad_features) override {
    return stack_.backward_with_features(grad_logits, grad_features)
        .row(0)
        .transpose();
  }

 private:
  Sequential stack_;
};

class SpectrogramDiscriminator : public SubDiscriminator {
 public:
  SpectrogramDiscriminator(ParamStore& store, const std::string& prefix,
                           int window, int base, int sample_rate, Rng& rng) {
    cfg_.window_length = window;
    cfg_.hop_length = window / 4;
    cfg_.sample_rate = sample_rate;
    const Index bins = window / 2 + 1;
    const Index c = base;
    const std::vector<ConvSpec> specs = {
        {bins, 2 * c, 3, 1, 1, 1},
        {2 * c, 2 * c, 3, 2, 1, 1},
        {2 * c, 1, 3, 1, 1, 1},
    };
    build_stack(stack_, store, prefix, specs, &rng);
  }

  DiscriminatorScore forward(const Vec& x, bool want_grad,
                             bool want_features) override {
    input_len_ = x.size();
    spectrum_ = dsp::stft(x, cfg_);
    DiscriminatorScore score;
    score.logits =
        stack_.forward(spectrum_.cwiseAbs(), want_grad, want_features);
    score.features = stack_.features();
    return score;
  }

  Vec backward(const Mat& grad_logits,
               const std::vector<Mat>& grad_features) override {
    const Mat grad_magnitude =
        stack_.backward_with_features(grad_logits, grad_features);
    return dsp::stft_magnitude_adjoint(spectrum_, grad_magnitude, input_len_,
                                       cfg_);
  }

 private:
  dsp::SpectrogramConfig cfg_;
  Sequential stack_;
  dsp::CMat spectrum_;
  Index input_len_ = 0;
};

}  // namespace

void validate(const SuiteConfig& c) {
  if (c.io_channels < 1) throw DataError("discriminator needs channels");
  if (c.base_channels < 1) throw DataError("discriminator width too small");
  if (c.sample_rate < 1) throw DataError("bad discriminator sample rate");
  if (c.mpd_periods.empty() && c.msd_scales.empty() && c.mrsd_windows.empty())
    throw DataError("discriminator suite is empty");
  for (int p : c.mpd_periods)
    if (p < 1) throw DataError("bad discriminator period");
  for (int s : c.msd_scales)
    if (s < 1) throw DataError("bad discriminator scale");
  for (int w : c.mrsd_windows)
    if (w < 4 || w % 2 != 0) throw DataError("bad discriminator window");
}

DiscriminatorSuite::DiscriminatorSuite(const SuiteConfig& config,
                                       std::uint64_t seed)
    : config_(config) {
  validate(config_);
  Rng rng(seed);
  const int copies = config_.shared_across_channels ? 1 : config_.io_channels;
  auto add = [&](auto make_one) {
    discs_.emplace_back();
    for (int i = 0; i < copies; ++i) {
      const std::string suffix =
          config_.shared_across_channels ? "" : ".ch" + std::to_string(i);
      discs_.back().push_back(make_one(suffix));
    }
  };
  for (int p : config_.mpd_periods)
    add([&](const std::string& sfx) -> std::unique_ptr<SubDiscriminator> {
      return std::make_unique<PeriodDiscriminator>(
          params_, "mpd" + std::to_string(p) + sfx, p, config_.base_channels,
          rng);
    });
  for (int s : config_.msd_scales)
    add([&](const std::string& sfx) -> std::unique_ptr<SubDiscriminator> {
      return std::make_unique<ScaleDiscriminator>(
          params_, "msd" + std::to_string(s) + sfx, s, config_.base_channels,
          rng);
    });
  for (int w : config_.mrsd_windows)
    add([&](const std::string& sfx) -> std::unique_ptr<SubDiscriminator> {
      return std::make_unique<SpectrogramDiscriminator>(
          params_, "mrsd" + std::to_string(w) + sfx, w, config_.base_channels,
          config_.sample_rate, rng);
    });
}

DiscriminatorSuite::~DiscriminatorSuite() = default;

size_t DiscriminatorSuite::unit_count() const {
  return discs_.size() * static_cast<size_t>(config_.io_channels);
}

SubDiscriminator& DiscriminatorSuite::unit_disc(size_t disc_index,
                                                Index channel) {
  auto& group = discs_[disc_index];
  return group.size() == 1 ? *group[0] : *group[static_cast<size_t>(channel)];
}

std::vector<DiscriminatorScore> DiscriminatorSuite::discriminate(
    const Mat& audio) {
  if (audio.rows() != config_.io_channels)
    throw DataError("audio channel count does not match the discriminators");
  std::vector<DiscriminatorScore> scores;
  for (size_t d = 0; d < discs_.size(); ++d)
    for (Index c = 0; c < audio.rows(); ++c)
      scores.push_back(
          unit_disc(d, c).forward(audio.row(c).transpose(), false, true));
  return scores;
}

double DiscriminatorSuite::discriminator_pass(const Mat& real, const Mat& fake,
                                              double batch_scale) {
  if (real.rows() != config_.io_channels || fake.rows() != real.rows() ||
      fake.cols() != real.cols())
    throw DataError("discriminator pass shape mismatch");
  const size_t n_units = unit_count();
  double value = 0.0;
  for (size_t d = 0; d < discs_.size(); ++d) {
    for (Index c = 0; c < real.rows(); ++c) {
      SubDiscriminator& sub = unit_disc(d, c);
      const DiscriminatorScore sr =
          sub.forward(real.row(c).transpose(), true, false);
      value += (sr.logits.array() - 1.0).square().mean() / n_units;
      sub.backward(losses::adv_d_real_logit_grad(sr.logits, n_units) *
                       batch_scale,
                   {});
      const DiscriminatorScore sf =
          sub.forward(fake.row(c).transpose(), true, false);
      value += sf.logits.array().square().mean() / n_units;
      sub.backward(losses::adv_d_fake_logit_grad(sf.logits, n_units) *
                       batch_scale,
                   {});
    }
  }
  return value;
}

DiscriminatorSuite::GeneratorPass DiscriminatorSuite::generator_pass(
    const Mat& real, const Mat& fake, double adversarial_weight,
    double feature_weight, double batch_scale) {
  if (real.rows() != config_.io_channels || fake.rows() != real.rows() ||
      fake.cols() != real.cols())
    throw DataError("discriminator pass shape mismatch");
  const size_t n_units = unit_count();
  GeneratorPass out;
  out.grad_fake = Mat::Zero(fake.rows(), fake.cols());
  for (size_t d = 0; d < discs_.size(); ++d) {
    for (Index c = 0; c < real.rows(); ++c) {
      SubDiscriminator& sub = unit_disc(d, c);
      const DiscriminatorScore sr =
          sub.forward(real.row(c).transpose(), false, true);
      const DiscriminatorScore sf =
          sub.forward(fake.row(c).transpose(), true, true);

      out.adversarial += (sf.logits.array() - 1.0).square().mean() / n_units;
      double layer_mean = 0.0;
      for (size_t l = 0; l < sr.features.size(); ++l)
        layer_mean += (sr.features[l] - sf.features[l]).array().abs().mean();
      out.feature_matching +=
          layer_mean / static_cast<double>(sr.features.size()) / n_units;

      const Mat gl = losses::adv_g_logit_grad(sf.logits, n_units) *
                     (adversarial_weight * batch_scale);
      std::vector<Mat> gf =
          losses::feature_matching_grads(sr.features, sf.features, n_units);
      for (Mat& g : gf) g *= feature_weight * batch_scale;
      out.grad_fake.row(c) += sub.backward(gl, gf).transpose();
    }
  }
  return out;
}

Mat DiscriminatorSuite::fold_phases(const Vec& x, Index period) {
  if (period < 1) throw DataError("period must be positive");
  const Index m = x.size() / period;
  if (m < 1) throw DataError("audio too short for the period");
  Mat phases(period, m);
  for (Index t = 0; t < m; ++t)
    for (Index p = 0; p < period; ++p) phases(p, t) = x[t * period + p];
  return phases;
}

Vec DiscriminatorSuite::unfold_phases(const Mat& phases, Index len) {
  const Index period = phases.rows();
  const Index m = phases.cols();
  if (len < period * m) throw DataError("unfold target shorter than phases");
  Vec x = Vec::Zero(len);
  for (Index t = 0; t < m; ++t)
    for (Index p = 0; p < period; ++p) x[t * period + p] = phases(p, t);
  return x;
}

}  // namespace ambicodec::disc
