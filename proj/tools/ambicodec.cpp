// Command line front end: dataset preparation, training, the
// transfer-vs-random comparison, encode/decode, objective evaluation,
// loudspeaker rendering, and a condensed gradient self-check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ambicodec/ambisonics.hpp"
#include "ambicodec/audio_io.hpp"
#include "ambicodec/bitstream.hpp"
#include "ambicodec/discriminators.hpp"
#include "ambicodec/dsp.hpp"
#include "ambicodec/errors.hpp"
#include "ambicodec/generator.hpp"
#include "ambicodec/losses.hpp"
#include "ambicodec/nn.hpp"
#include "ambicodec/trainer.hpp"
#include "ambicodec/types.hpp"

namespace fs = std::filesystem;
using namespace ambicodec;

namespace {

struct PrepareArgs {
  std::string input_dir;
  std::string out_dir;
  int order = 3;
  std::uint64_t seed = 1;
  int synth_count = 0;
  int synth_scenes = 2;
  double synth_seconds = 4.0;
  int synth_sample_rate = 44100;
};

struct TrainArgs {
  std::string config_path;
  std::string manifest_path;
  std::string out_dir;
  std::string init_path;
  std::string transfer_from;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
};

struct CompareArgs {
  std::string config_path;
  std::string manifest_path;
  std::string mono_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
};

struct CodecArgs {
  std::string input;
  std::string checkpoint;
  std::string out;
  int bit_depth = 16;
};

struct EvalArgs {
  std::string reference;
  std::string degraded;
  std::string out;
  std::string anchor_out;
};

struct RenderArgs {
  std::string input;
  std::string layout = "7.1.4";
  std::string out_dir;
};

// Scene label for the train/heldout split: the subdirectory the file
// lives in, or for flat directories the stem with its trailing
// take number stripped ("Beach-03" -> "Beach").
std::string scene_of(const fs::path& file, const fs::path& root) {
  const fs::path rel = fs::relative(file, root);
  if (rel.has_parent_path() && rel.parent_path() != fs::path("."))
    return rel.parent_path().generic_string();
  std::string stem = file.stem().string();
  const auto cut = stem.find_last_not_of("0123456789");
  if (cut != std::string::npos && cut + 1 < stem.size()) {
    stem = stem.substr(0, cut + 1);
    while (!stem.empty() &&
           (stem.back() == '-' || stem.back() == '_' || stem.back() == '.'))
      stem.pop_back();
  }
  return stem.empty() ? "scene" : stem;
}

int run_prepare(const PrepareArgs& args) {
  std::cout << "command = prepare\norder = " << args.order
            << "\nseed = " << args.seed << "\nout = " << args.out_dir << "\n";
  const int n_ch = hoa::channel_count(args.order);
  fs::create_directories(args.out_dir);
  std::vector<std::pair<std::string, std::string>> scene_files;

  if (args.synth_count > 0) {
    std::cout << "synthesize = " << args.synth_count << " files, "
              << args.synth_scenes << " scenes, " << args.synth_seconds
              << " s at " << args.synth_sample_rate << " Hz\n";
    for (int i = 0; i < args.synth_count; ++i) {
      Rng rng = Rng::derive(args.seed, 1000 + static_cast<std::uint64_t>(i));
      const audio::Wave wave = train::synthesize_scene(
          args.order, args.synth_seconds, args.synth_sample_rate, rng);
      const std::string scene =
          "synth" + std::to_string(i % std::max(args.synth_scenes, 1));
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%03d.wav", scene.c_str(),
                    i / std::max(args.synth_scenes, 1));
      const fs::path out = fs::path(args.out_dir) / name;
      audio::write_wav(out.string(), wave, 24);
      scene_files.emplace_back(scene, out.string());
    }
  } else {
    if (args.input_dir.empty())
      throw UsageError("prepare needs an input directory or --synthesize");
    if (!fs::is_directory(args.input_dir))
      throw DataError("not a directory: " + args.input_dir);
    std::vector<fs::path> inputs;
    for (const auto& entry : fs::recursive_directory_iterator(args.input_dir))
      if (entry.is_regular_file() && entry.path().extension() == ".wav")
        inputs.push_back(entry.path());
    std::sort(inputs.begin(), inputs.end());
    if (inputs.empty()) throw DataError("no wav files under " + args.input_dir);
    int file_index = 0;
    for (const auto& input : inputs) {
      const audio::Wave wave = audio::read_wav(input.string());
      if (wave.samples.rows() < n_ch)
        throw DataError(input.string() + ": has " +
                        std::to_string(wave.samples.rows()) +
                        " channels, order " + std::to_string(args.order) +
                        " needs " + std::to_string(n_ch));
      audio::Wave truncated;
      truncated.sample_rate = wave.sample_rate;
      truncated.samples = wave.samples.topRows(n_ch);
      const std::string scene = scene_of(input, args.input_dir);
      char name[96];
      std::snprintf(name, sizeof(name), "%03d_%s.wav", file_index++,
                    input.stem().string().c_str());
      const fs::path out = fs::path(args.out_dir) / name;
      audio::write_wav(out.string(), truncated, 24);
      scene_files.emplace_back(scene, out.string());
    }
  }

  const auto manifest = audio::split_dataset(scene_files, args.seed);
  const fs::path manifest_path = fs::path(args.out_dir) / "manifest.tsv";
  audio::save_manifest(manifest_path.string(), manifest);
  int n_train = 0;
  for (const auto& e : manifest) n_train += e.train ? 1 : 0;
  std::cout << "wrote " << manifest.size() << " files (" << n_train
            << " train, " << manifest.size() - n_train << " heldout) and "
            << manifest_path.string() << "\n";
  return 0;
}

train::TrainConfig resolved_config(const std::string& path,
                                   const std::optional<std::uint64_t>& seed,
                                   const std::optional<int>& steps) {
  train::TrainConfig config = train::load_train_config(path);
  if (seed.has_value()) config.seed = *seed;
  if (steps.has_value()) config.steps = *steps;
  train::validate(config);
  std::cout << "resolved configuration:\n"
            << train::serialize_train_config(config);
  return config;
}

int run_train(const TrainArgs& args) {
  std::cout << "command = train\n";
  const train::TrainConfig config =
      resolved_config(args.config_path, args.seed, args.steps);
  const auto manifest = audio::load_manifest(args.manifest_path);
  const train::Dataset data = train::load_dataset(manifest, config);
  std::cout << "dataset: " << data.train_waves.size() << " training files, "
            << data.validation.size() << " validation excerpts\n";

  nn::ModelCheckpoint init;
  const nn::ModelCheckpoint* init_ptr = nullptr;
  if (!args.init_path.empty() && !args.transfer_from.empty())
    throw UsageError("--init and --transfer-from are mutually exclusive");
  if (!args.init_path.empty()) {
    init = nn::load_checkpoint(args.init_path);
    init_ptr = &init;
    std::cout << "warm start from " << args.init_path << "\n";
  } else if (!args.transfer_from.empty()) {
    init = nn::transfer_from_mono(nn::load_checkpoint(args.transfer_from),
                                  config.generator.io_channels);
    init_ptr = &init;
    std::cout << "transfer initialization from " << args.transfer_from << "\n";
  }

  const train::TrainingRun run =
      train::run_training(config, data, init_ptr, &std::cout);
  fs::create_directories(args.out_dir);
  const fs::path ckpt = fs::path(args.out_dir) / "checkpoint.ambc";
  const fs::path curve = fs::path(args.out_dir) / "curve.csv";
  nn::save_checkpoint(ckpt.string(), run.checkpoint);
  train::save_curve(curve.string(), run.curve);
  std::cout << "wrote " << ckpt.string() << " and " << curve.string() << "\n";
  return 0;
}

int run_compare(const CompareArgs& args) {
  std::cout << "command = compare-inits\n";
  const train::TrainConfig config =
      resolved_config(args.config_path, args.seed, args.steps);
  const auto manifest = audio::load_manifest(args.manifest_path);
  const train::Dataset data = train::load_dataset(manifest, config);
  const nn::ModelCheckpoint mono = nn::load_checkpoint(args.mono_path);
  const train::InitComparison cmp =
      train::compare_inits(config, data, mono, &std::cout);
  fs::create_directories(args.out_dir);
  const fs::path dir(args.out_dir);
  nn::save_checkpoint((dir / "transfer_checkpoint.ambc").string(),
                      cmp.transfer.checkpoint);
  nn::save_checkpoint((dir / "random_checkpoint.ambc").string(),
                      cmp.random.checkpoint);
  train::save_curve((dir / "transfer_curve.csv").string(), cmp.transfer.curve);
  train::save_curve((dir / "random_curve.csv").string(), cmp.random.curve);
  std::cout << "final validation mel: transfer "
            << cmp.transfer.curve.back().mel << ", random "
            << cmp.random.curve.back().mel << "\n";
  return 0;
}

int run_encode(const CodecArgs& args) {
  std::cout << "command = encode\ninput = " << args.input
            << "\ncheckpoint = " << args.checkpoint << "\nout = " << args.out
            << "\n";
  const auto digest = codec::file_sha256(args.checkpoint);
  nn::Generator generator =
      nn::generator_from_checkpoint(nn::load_checkpoint(args.checkpoint));
  const audio::Wave wave = audio::read_wav(args.input);
  const codec::EncodedStream stream =
      codec::encode_wave(generator, wave, digest);
  codec::write_stream(args.out, stream);
  std::cerr << "bitrate_bps = " << codec::bitrate_bps(stream.header) << "\n";
  std::cout << "wrote " << args.out << " (" << stream.header.n_frames
            << " frames)\n";
  return 0;
}

int run_decode(const CodecArgs& args) {
  std::cout << "command = decode\ninput = " << args.input
            << "\ncheckpoint = " << args.checkpoint << "\nout = " << args.out
            << "\nbits = " << args.bit_depth << "\n";
  const auto digest = codec::file_sha256(args.checkpoint);
  nn::Generator generator =
      nn::generator_from_checkpoint(nn::load_checkpoint(args.checkpoint));
  const codec::EncodedStream stream = codec::read_stream(args.input);
  const audio::Wave wave = codec::decode_stream(generator, stream, digest);
  audio::write_wav(args.out, wave, args.bit_depth);
  std::cout << "wrote " << args.out << " (" << wave.samples.rows() << " x "
            << wave.samples.cols() << ")\n";
  return 0;
}

double channel_snr_db(const Mat& reference, const Mat& degraded, Index c) {
  const double num = reference.row(c).squaredNorm();
  const double den = (reference.row(c) - degraded.row(c)).squaredNorm();
  if (den == 0.0) return num == 0.0 ? 0.0 : 999.0;
  if (num == 0.0) return -999.0;
  return std::clamp(10.0 * std::log10(num / den), -999.0, 999.0);
}

int run_eval(const EvalArgs& args) {
  std::cout << "command = eval\nreference = " << args.reference
            << "\ndegraded = " << args.degraded << "\n";
  const audio::Wave ref = audio::read_wav(args.reference);
  const audio::Wave deg = audio::read_wav(args.degraded);
  if (ref.samples.rows() != deg.samples.rows() ||
      ref.samples.cols() != deg.samples.cols())
    throw DataError("reference and degraded shapes differ");
  if (ref.sample_rate != deg.sample_rate)
    throw DataError("reference and degraded sample rates differ");

  auto scales = losses::default_mel_scales(ref.sample_rate);
  const Index len = ref.samples.cols();
  std::erase_if(scales, [len](const dsp::SpectrogramConfig& s) {
    return s.window_length / 2 > len - 1;
  });
  if (scales.empty())
    throw DataError("signals too short for the mel scales");

  nlohmann::json report;
  report["mel_distance"] =
      losses::multiscale_mel_loss(ref.samples, deg.samples, scales);
  report["covariance_loss"] =
      losses::covariance_loss(ref.samples, deg.samples);
  std::vector<double> snr;
  for (Index c = 0; c < ref.samples.rows(); ++c)
    snr.push_back(channel_snr_db(ref.samples, deg.samples, c));
  report["per_channel_snr_db"] = snr;

  if (!args.anchor_out.empty()) {
    audio::Wave anchor;
    anchor.sample_rate = ref.sample_rate;
    anchor.samples = dsp::lowpass_anchor(ref.samples, ref.sample_rate);
    audio::write_wav(args.anchor_out, anchor, 24);
    std::cout << "wrote anchor " << args.anchor_out << "\n";
  }

  const std::string text = report.dump(2);
  if (args.out.empty()) {
    std::cout << text << "\n";
  } else {
    std::ofstream f(args.out);
    if (!f) throw DataError("cannot write report " + args.out);
    f << text << "\n";
    std::cout << "wrote " << args.out << "\n";
  }
  return 0;
}

int run_render(const RenderArgs& args) {
  std::cout << "command = render\ninput = " << args.input
            << "\nlayout = " << args.layout << "\nout = " << args.out_dir
            << "\n";
  const audio::Wave wave = audio::read_wav(args.input);
  int order = 0;
  while (hoa::channel_count(order) < wave.samples.rows() && order < 4) ++order;
  if (hoa::channel_count(order) != wave.samples.rows())
    throw DataError("input channel count " +
                    std::to_string(wave.samples.rows()) +
                    " is not (order+1)^2 for any order <= 4");
  hoa::BFormatSignal signal;
  signal.order = order;
  signal.sample_rate = wave.sample_rate;
  signal.samples = wave.samples;
  const hoa::SpeakerLayout layout = hoa::builtin_layout(args.layout);
  const Mat feeds = hoa::render(signal, layout);

  fs::create_directories(args.out_dir);
  const Index n_out =
      feeds.rows() + (layout.lfe_index >= 0 ? 1 : 0);
  Index speaker = 0;
  for (Index i = 0; i < n_out; ++i) {
    audio::Wave out;
    out.sample_rate = wave.sample_rate;
    if (i == layout.lfe_index) {
      out.samples = Mat::Zero(1, wave.samples.cols());
      std::cout << "channel " << i << ": LFE (silence)\n";
    } else {
      out.samples = feeds.row(speaker);
      std::cout << "channel " << i << ": azimuth "
                << layout.speakers[speaker].azimuth * 180.0 / M_PI
                << " deg, elevation "
                << layout.speakers[speaker].elevation * 180.0 / M_PI
                << " deg\n";
      ++speaker;
    }
    char name[32];
    std::snprintf(name, sizeof(name), "speaker_%02d.wav",
                  static_cast<int>(i));
    audio::write_wav((fs::path(args.out_dir) / name).string(), out, 24);
  }
  std::cout << "wrote " << n_out << " files to " << args.out_dir << "\n";
  return 0;
}

// ---- condensed finite-difference self-check ----

double central_diff(const std::function<double(double)>& f, double x,
                    double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

void report_check(const std::string& name, double worst, double tol) {
  std::cout << name << ": max gradient gap " << worst
            << (worst <= tol ? "  ok" : "  FAIL") << "\n";
  if (worst > tol)
    throw NumericError(name + " gradient check failed (gap " +
                       std::to_string(worst) + ")");
}

// Largest |analytic - finite difference| over the tensor, normalized by
// max(1, |analytic|).
double worst_gap(const Arr& analytic, const Arr& fd) {
  double worst = 0.0;
  for (Index i = 0; i < analytic.size(); ++i) {
    const double denom = std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
  }
  return worst;
}

void grad_check_conv(Rng& rng, bool transposed) {
  nn::ConvSpec spec;
  spec.in_channels = 3;
  spec.out_channels = 2;
  spec.kernel = 5;
  spec.stride = 2;
  spec.padding = 2;
  if (transposed) spec.output_padding = 1;
  nn::Tensor weight = nn::make_tensor(
      "w", transposed ? std::vector<Index>{3, 2, 5} : std::vector<Index>{2, 3, 5});
  nn::Tensor bias = nn::make_tensor("b", {2});
  for (Index i = 0; i < weight.size(); ++i) weight.values[i] = rng.normal();
  for (Index i = 0; i < bias.size(); ++i) bias.values[i] = rng.normal();
  const Index len = 17;
  Mat input(3, len);
  for (Index i = 0; i < input.size(); ++i)
    input.data()[i] = rng.normal();

  const auto forward = [&](const Mat& x) {
    return transposed ? nn::conv_transpose1d_forward(spec, weight, bias, x)
                      : nn::conv1d_forward(spec, weight, bias, x);
  };
  Mat seed_grad = forward(input);
  for (Index i = 0; i < seed_grad.size(); ++i)
    seed_grad.data()[i] = rng.normal();
  const auto loss = [&] {
    return (forward(input).array() * seed_grad.array()).sum();
  };

  weight.zero_grad();
  bias.zero_grad();
  const Mat grad_input =
      transposed
          ? nn::conv_transpose1d_backward(spec, weight, bias, input, seed_grad)
          : nn::conv1d_backward(spec, weight, bias, input, seed_grad);

  const double h = 1e-6;
  Arr fd_w(weight.size());
  for (Index i = 0; i < weight.size(); ++i)
    fd_w[i] = central_diff(
        [&](double v) {
          const double keep = weight.values[i];
          weight.values[i] = v;
          const double out = loss();
          weight.values[i] = keep;
          return out;
        },
        weight.values[i], h);
  Arr fd_x(input.size());
  for (Index i = 0; i < input.size(); ++i)
    fd_x[i] = central_diff(
        [&](double v) {
          const double keep = input.data()[i];
          input.data()[i] = v;
          const double out = loss();
          input.data()[i] = keep;
          return out;
        },
        input.data()[i], h);
  Arr analytic_x(input.size());
  for (Index i = 0; i < input.size(); ++i) analytic_x[i] = grad_input.data()[i];
  const double worst = std::max(worst_gap(weight.grad, fd_w),
                                worst_gap(analytic_x, fd_x));
  report_check(transposed ? "conv_transpose1d" : "conv1d", worst, 1e-4);
}

void grad_check_snake(Rng& rng) {
  nn::Tensor alpha = nn::make_tensor("alpha", {4});
  for (Index i = 0; i < 4; ++i) alpha.values[i] = rng.uniform(0.2, 2.0);
  Mat x(4, 9);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  Mat seed_grad(4, 9);
  for (Index i = 0; i < seed_grad.size(); ++i)
    seed_grad.data()[i] = rng.normal();
  const auto loss = [&] {
    return (nn::snake_forward(x, alpha).array() * seed_grad.array()).sum();
  };
  alpha.zero_grad();
  const Mat grad_x = nn::snake_backward(x, alpha, seed_grad);
  const double h = 1e-6;
  Arr fd_a(4);
  for (Index i = 0; i < 4; ++i)
    fd_a[i] = central_diff(
        [&](double v) {
          const double keep = alpha.values[i];
          alpha.values[i] = v;
          const double out = loss();
          alpha.values[i] = keep;
          return out;
        },
        alpha.values[i], h);
  Arr fd_x(x.size()), an_x(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    an_x[i] = grad_x.data()[i];
    fd_x[i] = central_diff(
        [&](double v) {
          const double keep = x.data()[i];
          x.data()[i] = v;
          const double out = loss();
          x.data()[i] = keep;
          return out;
        },
        x.data()[i], h);
  }
  report_check("snake", std::max(worst_gap(alpha.grad, fd_a),
                                 worst_gap(an_x, fd_x)),
               1e-4);
}

void grad_check_mel(Rng& rng) {
  std::vector<dsp::SpectrogramConfig> scales(1);
  scales[0].window_length = 16;
  scales[0].hop_length = 4;
  scales[0].n_mels = 5;
  scales[0].sample_rate = 8000.0;
  Mat ref(2, 64), rec(2, 64);
  for (Index i = 0; i < ref.size(); ++i) ref.data()[i] = rng.normal() * 0.3;
  for (Index i = 0; i < rec.size(); ++i) rec.data()[i] = rng.normal() * 0.3;
  const auto vg = losses::multiscale_mel_loss_grad(ref, rec, scales);
  const double h = 1e-6;
  Arr fd(rec.size()), an(rec.size());
  for (Index i = 0; i < rec.size(); ++i) {
    an[i] = vg.grad.data()[i];
    fd[i] = central_diff(
        [&](double v) {
          const double keep = rec.data()[i];
          rec.data()[i] = v;
          const double out = losses::multiscale_mel_loss(ref, rec, scales);
          rec.data()[i] = keep;
          return out;
        },
        rec.data()[i], h);
  }
  report_check("multiscale_mel_loss", worst_gap(an, fd), 1e-4);
}

void grad_check_covariance(Rng& rng) {
  Mat ref(3, 40), rec(3, 40);
  for (Index i = 0; i < ref.size(); ++i) ref.data()[i] = rng.normal();
  for (Index i = 0; i < rec.size(); ++i) rec.data()[i] = rng.normal();
  const auto vg = losses::covariance_loss_grad(ref, rec);
  const double h = 1e-6;
  Arr fd(rec.size()), an(rec.size());
  for (Index i = 0; i < rec.size(); ++i) {
    an[i] = vg.grad.data()[i];
    fd[i] = central_diff(
        [&](double v) {
          const double keep = rec.data()[i];
          rec.data()[i] = v;
          const double out = losses::covariance_loss(ref, rec);
          rec.data()[i] = keep;
          return out;
        },
        rec.data()[i], h);
  }
  report_check("covariance_loss", worst_gap(an, fd), 1e-4);
}

void grad_check_rvq(Rng& rng) {
  nn::ParamStore store;
  Rng init = Rng::derive(7, 0);
  nn::ResidualVQ rvq(store, "rvq", 4, 2, 8, init);
  Mat latents(4, 6);
  for (Index i = 0; i < latents.size(); ++i)
    latents.data()[i] = rng.normal();
  const auto commitment = [&] {
    return rvq.forward(latents, false).commitment_loss;
  };
  rvq.forward(latents, true);
  const Mat grad_latents =
      rvq.backward(Mat::Zero(4, 6), 0.0, 1.0);
  const double h = 1e-6;
  Arr fd(latents.size()), an(latents.size());
  for (Index i = 0; i < latents.size(); ++i) {
    an[i] = grad_latents.data()[i];
    fd[i] = central_diff(
        [&](double v) {
          const double keep = latents.data()[i];
          latents.data()[i] = v;
          const double out = commitment();
          latents.data()[i] = keep;
          return out;
        },
        latents.data()[i], h);
  }
  report_check("rvq_commitment", worst_gap(an, fd), 1e-4);
}

void grad_check_discriminators(Rng& rng) {
  disc::SuiteConfig config;
  config.io_channels = 2;
  config.mpd_periods = {2};
  config.msd_scales = {1};
  config.mrsd_windows = {16};
  config.base_channels = 2;
  config.sample_rate = 8000;
  disc::DiscriminatorSuite suite(config, 11);
  const Index len = 48;
  Mat real(2, len), fake(2, len);
  for (Index i = 0; i < real.size(); ++i) real.data()[i] = rng.normal() * 0.3;
  for (Index i = 0; i < fake.size(); ++i) fake.data()[i] = rng.normal() * 0.3;
  const double w_adv = 0.7;
  const double w_fm = 1.3;
  const auto loss = [&] {
    const auto scores_fake = suite.discriminate(fake);
    const auto scores_real = suite.discriminate(real);
    return w_adv * losses::adversarial_g_loss(scores_fake) +
           w_fm * losses::feature_matching_loss(scores_real, scores_fake);
  };
  const auto pass = suite.generator_pass(real, fake, w_adv, w_fm, 1.0);
  const double h = 1e-5;
  Arr fd(fake.size()), an(fake.size());
  for (Index i = 0; i < fake.size(); ++i) {
    an[i] = pass.grad_fake.data()[i];
    fd[i] = central_diff(
        [&](double v) {
          const double keep = fake.data()[i];
          fake.data()[i] = v;
          const double out = loss();
          fake.data()[i] = keep;
          return out;
        },
        fake.data()[i], h);
  }
  report_check("discriminator_generator_pass", worst_gap(an, fd), 1e-4);
}

int run_grad_check(std::uint64_t seed) {
  std::cout << "command = grad-check\nseed = " << seed << "\n";
  Rng rng = Rng::derive(seed, 77);
  grad_check_conv(rng, false);
  grad_check_conv(rng, true);
  grad_check_snake(rng);
  grad_check_mel(rng);
  grad_check_covariance(rng);
  grad_check_rvq(rng);
  grad_check_discriminators(rng);
  std::cout << "all gradient checks passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale multichannel ambisonics codec"};
  app.require_subcommand(1);

  PrepareArgs prep;
  auto* prepare = app.add_subcommand(
      "prepare", "truncate B-format wavs to one order and split them");
  prepare->add_option("input", prep.input_dir, "directory of B-format wavs");
  prepare->add_option("--order", prep.order, "ambisonics order to keep")
      ->default_val(3);
  prepare->add_option("--seed", prep.seed, "split seed")->default_val(1);
  prepare->add_option("--out", prep.out_dir, "output directory")->required();
  prepare->add_option("--synthesize", prep.synth_count,
                      "generate this many synthetic scenes instead");
  prepare->add_option("--scenes", prep.synth_scenes,
                      "scene groups for synthetic data")
      ->default_val(2);
  prepare->add_option("--seconds", prep.synth_seconds,
                      "synthetic scene length")
      ->default_val(4.0);
  prepare->add_option("--sample-rate", prep.synth_sample_rate,
                      "synthetic scene sample rate")
      ->default_val(44100);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a codec model");
  train_cmd->add_option("--config", tr.config_path, "key=value config file")
      ->required();
  train_cmd->add_option("--manifest", tr.manifest_path, "dataset manifest")
      ->required();
  train_cmd->add_option("--out", tr.out_dir, "output directory")->required();
  train_cmd->add_option("--init", tr.init_path,
                        "checkpoint to warm start from");
  train_cmd->add_option("--transfer-from", tr.transfer_from,
                        "single-channel checkpoint to replicate");
  train_cmd->add_option("--seed", tr.seed, "override the config seed");
  train_cmd->add_option("--steps", tr.steps, "override the config step count");

  CompareArgs cmp;
  auto* compare = app.add_subcommand(
      "compare-inits", "train twice: transfer versus random initialization");
  compare->add_option("--config", cmp.config_path, "key=value config file")
      ->required();
  compare->add_option("--manifest", cmp.manifest_path, "dataset manifest")
      ->required();
  compare->add_option("--mono", cmp.mono_path, "single-channel checkpoint")
      ->required();
  compare->add_option("--out", cmp.out_dir, "output directory")->required();
  compare->add_option("--seed", cmp.seed, "override the config seed");
  compare->add_option("--steps", cmp.steps, "override the config step count");

  CodecArgs enc;
  auto* encode = app.add_subcommand("encode", "compress a wav to a stream");
  encode->add_option("input", enc.input, "input wav")->required();
  encode->add_option("--checkpoint", enc.checkpoint, "model checkpoint")
      ->required();
  encode->add_option("--out", enc.out, "output stream path")->required();

  CodecArgs dec;
  auto* decode = app.add_subcommand("decode", "decompress a stream to a wav");
  decode->add_option("input", dec.input, "input stream")->required();
  decode->add_option("--checkpoint", dec.checkpoint, "model checkpoint")
      ->required();
  decode->add_option("--out", dec.out, "output wav path")->required();
  decode->add_option("--bits", dec.bit_depth, "output bit depth (16 or 24)")
      ->default_val(16);

  EvalArgs ev;
  auto* eval_cmd =
      app.add_subcommand("eval", "objective metrics between two wavs");
  eval_cmd->add_option("reference", ev.reference, "reference wav")->required();
  eval_cmd->add_option("degraded", ev.degraded, "degraded wav")->required();
  eval_cmd->add_option("--out", ev.out, "write the JSON report here");
  eval_cmd->add_option("--lowpass-anchor", ev.anchor_out,
                       "also write the 3.5 kHz anchor of the reference");

  RenderArgs ren;
  auto* render_cmd =
      app.add_subcommand("render", "decode B-format to loudspeaker feeds");
  render_cmd->add_option("input", ren.input, "B-format wav")->required();
  render_cmd->add_option("--layout", ren.layout, "7.1.4, cube8 or stereo")
      ->default_val("7.1.4");
  render_cmd->add_option("--out", ren.out_dir, "output directory")->required();

  std::uint64_t gc_seed = 1;
  auto* grad_check =
      app.add_subcommand("grad-check", "finite-difference self check");
  grad_check->add_option("--seed", gc_seed, "seed for the random instances")
      ->default_val(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*prepare) return run_prepare(prep);
    if (*train_cmd) return run_train(tr);
    if (*compare) return run_compare(cmp);
    if (*encode) return run_encode(enc);
    if (*decode) return run_decode(dec);
    if (*eval_cmd) return run_eval(ev);
    if (*render_cmd) return run_render(ren);
    if (*grad_check) return run_grad_check(gc_seed);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
