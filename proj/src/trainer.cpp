#include "ambicodec/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "ambicodec/ambisonics.hpp"
#include "ambicodec/errors.hpp"

namespace ambicodec::train {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string fmt(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

long long to_int(const std::string& key, const std::string& value) {
  long long out = 0;
  const char* begin = value.data();
  const char* end = begin + value.size();
  const auto res = std::from_chars(begin, end, out);
  if (res.ec != std::errc{} || res.ptr != end)
    throw UsageError("config key " + key + ": bad integer '" + value + "'");
  return out;
}

double to_real(const std::string& key, const std::string& value) {
  double out = 0.0;
  const char* begin = value.data();
  const char* end = begin + value.size();
  const auto res = std::from_chars(begin, end, out);
  if (res.ec != std::errc{} || res.ptr != end)
    throw UsageError("config key " + key + ": bad number '" + value + "'");
  return out;
}

std::vector<int> to_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ','))
    out.push_back(static_cast<int>(to_int(key, trim(item))));
  if (out.empty())
    throw UsageError("config key " + key + ": empty list");
  return out;
}

std::string join(const std::vector<int>& values) {
  std::string out;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

TrainConfig checked(TrainConfig config) {
  config.discriminators.io_channels = config.generator.io_channels;
  config.discriminators.sample_rate = config.generator.sample_rate;
  validate(config);
  return config;
}

}  // namespace

void validate(const TrainConfig& config) {
  if (config.steps < 0) throw UsageError("steps must be >= 0");
  if (config.batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (!(config.excerpt_seconds > 0.0))
    throw UsageError("excerpt_seconds must be positive");
  if (!(config.lr_generator > 0.0) || !(config.lr_discriminator > 0.0))
    throw UsageError("learning rates must be positive");
  if (!(config.adam_beta1 >= 0.0 && config.adam_beta1 < 1.0) ||
      !(config.adam_beta2 >= 0.0 && config.adam_beta2 < 1.0))
    throw UsageError("adam betas must lie in [0, 1)");
  if (!(config.adam_eps > 0.0)) throw UsageError("adam_eps must be positive");
  if (config.weight_decay < 0.0)
    throw UsageError("weight_decay must be >= 0");
  if (!(config.lr_decay > 0.0 && config.lr_decay <= 1.0))
    throw UsageError("lr_decay must lie in (0, 1]");
  if (config.covariance_start_step < 0)
    throw UsageError("covariance_start_step must be >= 0");
  if (config.validation_interval < 1)
    throw UsageError("validation_interval must be >= 1");
  if (config.max_validation_excerpts < 1)
    throw UsageError("max_validation_excerpts must be >= 1");
  nn::validate(config.generator);
  disc::validate(config.discriminators);
  if (config.mel_windows.empty() ||
      config.mel_windows.size() != config.mel_n_mels.size())
    throw UsageError("mel_windows and mel_n_mels must pair up");
  const Index len = excerpt_samples(config);
  for (size_t i = 0; i < config.mel_windows.size(); ++i) {
    const int w = config.mel_windows[i];
    if (w < 4 || w % 4 != 0)
      throw UsageError("mel windows must be positive multiples of 4");
    if (config.mel_n_mels[i] < 1)
      throw UsageError("mel band counts must be >= 1");
    if (w / 2 > len - 1)
      throw UsageError("excerpt too short for mel window " +
                       std::to_string(w));
  }
}

bool operator==(const TrainConfig& a, const TrainConfig& b) {
  const auto& da = a.discriminators;
  const auto& db = b.discriminators;
  const auto& wa = a.weights;
  const auto& wb = b.weights;
  return a.steps == b.steps && a.batch_size == b.batch_size &&
         a.excerpt_seconds == b.excerpt_seconds &&
         a.lr_generator == b.lr_generator &&
         a.lr_discriminator == b.lr_discriminator &&
         a.adam_beta1 == b.adam_beta1 && a.adam_beta2 == b.adam_beta2 &&
         a.adam_eps == b.adam_eps && a.weight_decay == b.weight_decay &&
         a.lr_decay == b.lr_decay &&
         a.covariance_start_step == b.covariance_start_step &&
         a.validation_interval == b.validation_interval &&
         a.max_validation_excerpts == b.max_validation_excerpts &&
         a.seed == b.seed && a.generator == b.generator &&
         da.io_channels == db.io_channels && da.mpd_periods == db.mpd_periods &&
         da.msd_scales == db.msd_scales && da.mrsd_windows == db.mrsd_windows &&
         da.base_channels == db.base_channels &&
         da.shared_across_channels == db.shared_across_channels &&
         da.sample_rate == db.sample_rate && wa.mel == wb.mel &&
         wa.adversarial == wb.adversarial &&
         wa.feature_matching == wb.feature_matching &&
         wa.codebook == wb.codebook && wa.commitment == wb.commitment &&
         wa.covariance == wb.covariance && a.mel_windows == b.mel_windows &&
         a.mel_n_mels == b.mel_n_mels;
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig c;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(line_no) +
                       ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "steps")
      c.steps = static_cast<int>(to_int(key, value));
    else if (key == "batch_size")
      c.batch_size = static_cast<int>(to_int(key, value));
    else if (key == "excerpt_seconds")
      c.excerpt_seconds = to_real(key, value);
    else if (key == "seed")
      c.seed = static_cast<std::uint64_t>(to_int(key, value));
    else if (key == "lr_generator")
      c.lr_generator = to_real(key, value);
    else if (key == "lr_discriminator")
      c.lr_discriminator = to_real(key, value);
    else if (key == "adam_beta1")
      c.adam_beta1 = to_real(key, value);
    else if (key == "adam_beta2")
      c.adam_beta2 = to_real(key, value);
    else if (key == "adam_eps")
      c.adam_eps = to_real(key, value);
    else if (key == "weight_decay")
      c.weight_decay = to_real(key, value);
    else if (key == "lr_decay")
      c.lr_decay = to_real(key, value);
    else if (key == "covariance_start_step")
      c.covariance_start_step = static_cast<int>(to_int(key, value));
    else if (key == "validation_interval")
      c.validation_interval = static_cast<int>(to_int(key, value));
    else if (key == "max_validation_excerpts")
      c.max_validation_excerpts = static_cast<int>(to_int(key, value));
    else if (key == "weight_mel")
      c.weights.mel = to_real(key, value);
    else if (key == "weight_adversarial")
      c.weights.adversarial = to_real(key, value);
    else if (key == "weight_feature_matching")
      c.weights.feature_matching = to_real(key, value);
    else if (key == "weight_codebook")
      c.weights.codebook = to_real(key, value);
    else if (key == "weight_commitment")
      c.weights.commitment = to_real(key, value);
    else if (key == "weight_covariance")
      c.weights.covariance = to_real(key, value);
    else if (key == "io_channels")
      c.generator.io_channels = static_cast<int>(to_int(key, value));
    else if (key == "encoder_dims")
      c.generator.encoder_dims = to_int_list(key, value);
    else if (key == "strides")
      c.generator.strides = to_int_list(key, value);
    else if (key == "latent_dim")
      c.generator.latent_dim = static_cast<int>(to_int(key, value));
    else if (key == "n_codebooks")
      c.generator.n_codebooks = static_cast<int>(to_int(key, value));
    else if (key == "codebook_size")
      c.generator.codebook_size = static_cast<int>(to_int(key, value));
    else if (key == "sample_rate")
      c.generator.sample_rate = static_cast<int>(to_int(key, value));
    else if (key == "mel_windows")
      c.mel_windows = to_int_list(key, value);
    else if (key == "mel_n_mels")
      c.mel_n_mels = to_int_list(key, value);
    else if (key == "mpd_periods")
      c.discriminators.mpd_periods = to_int_list(key, value);
    else if (key == "msd_scales")
      c.discriminators.msd_scales = to_int_list(key, value);
    else if (key == "mrsd_windows")
      c.discriminators.mrsd_windows = to_int_list(key, value);
    else if (key == "disc_channels")
      c.discriminators.base_channels = static_cast<int>(to_int(key, value));
    else if (key == "disc_shared_weights")
      c.discriminators.shared_across_channels = to_int(key, value) != 0;
    else
      throw UsageError("unknown config key: " + key);
  }
  return checked(c);
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read config file " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_train_config(buf.str());
}

std::string serialize_train_config(const TrainConfig& config) {
  std::ostringstream out;
  out << "steps = " << config.steps << "\n";
  out << "batch_size = " << config.batch_size << "\n";
  out << "excerpt_seconds = " << fmt(config.excerpt_seconds) << "\n";
  out << "seed = " << config.seed << "\n";
  out << "lr_generator = " << fmt(config.lr_generator) << "\n";
  out << "lr_discriminator = " << fmt(config.lr_discriminator) << "\n";
  out << "adam_beta1 = " << fmt(config.adam_beta1) << "\n";
  out << "adam_beta2 = " << fmt(config.adam_beta2) << "\n";
  out << "adam_eps = " << fmt(config.adam_eps) << "\n";
  out << "weight_decay = " << fmt(config.weight_decay) << "\n";
  out << "lr_decay = " << fmt(config.lr_decay) << "\n";
  out << "covariance_start_step = " << config.covariance_start_step << "\n";
  out << "validation_interval = " << config.validation_interval << "\n";
  out << "max_validation_excerpts = " << config.max_validation_excerpts
      << "\n";
  out << "weight_mel = " << fmt(config.weights.mel) << "\n";
  out << "weight_adversarial = " << fmt(config.weights.adversarial) << "\n";
  out << "weight_feature_matching = " << fmt(config.weights.feature_matching)
      << "\n";
  out << "weight_codebook = " << fmt(config.weights.codebook) << "\n";
  out << "weight_commitment = " << fmt(config.weights.commitment) << "\n";
  out << "weight_covariance = " << fmt(config.weights.covariance) << "\n";
  out << "io_channels = " << config.generator.io_channels << "\n";
  out << "encoder_dims = " << join(config.generator.encoder_dims) << "\n";
  out << "strides = " << join(config.generator.strides) << "\n";
  out << "latent_dim = " << config.generator.latent_dim << "\n";
  out << "n_codebooks = " << config.generator.n_codebooks << "\n";
  out << "codebook_size = " << config.generator.codebook_size << "\n";
  out << "sample_rate = " << config.generator.sample_rate << "\n";
  out << "mel_windows = " << join(config.mel_windows) << "\n";
  out << "mel_n_mels = " << join(config.mel_n_mels) << "\n";
  out << "mpd_periods = " << join(config.discriminators.mpd_periods) << "\n";
  out << "msd_scales = " << join(config.discriminators.msd_scales) << "\n";
  out << "mrsd_windows = " << join(config.discriminators.mrsd_windows) << "\n";
  out << "disc_channels = " << config.discriminators.base_channels << "\n";
  out << "disc_shared_weights = "
      << (config.discriminators.shared_across_channels ? 1 : 0) << "\n";
  return out.str();
}

std::vector<dsp::SpectrogramConfig> mel_scales(const TrainConfig& config) {
  std::vector<dsp::SpectrogramConfig> scales;
  for (size_t i = 0; i < config.mel_windows.size(); ++i) {
    dsp::SpectrogramConfig s;
    s.window_length = config.mel_windows[i];
    s.hop_length = config.mel_windows[i] / 4;
    s.n_mels = config.mel_n_mels[i];
    s.sample_rate = config.generator.sample_rate;
    scales.push_back(s);
  }
  return scales;
}

Index excerpt_samples(const TrainConfig& config) {
  const auto n = static_cast<Index>(
      std::llround(config.excerpt_seconds * config.generator.sample_rate));
  return std::max<Index>(n, 1);
}

AdamW::AdamW(nn::ParamStore& store, double lr, double beta1, double beta2,
             double eps, double weight_decay, double lr_decay)
    : store_(&store),
      lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      weight_decay_(weight_decay),
      lr_decay_(lr_decay) {
  for (const auto& t : store.entries()) {
    m_.push_back(Arr::Zero(t->size()));
    v_.push_back(Arr::Zero(t->size()));
  }
}

void AdamW::step() {
  if (store_->entries().size() != m_.size())
    throw DataError("parameters were added after the optimizer was built");
  ++t_;
  const double lr_t =
      lr_ * std::pow(lr_decay_, static_cast<double>(t_ - 1));
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < m_.size(); ++i) {
    nn::Tensor& t = *store_->entries()[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * t.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * t.grad.square();
    t.values -= lr_t * ((m_[i] / bc1) / ((v_[i] / bc2).sqrt() + eps_) +
                        weight_decay_ * t.values);
  }
}

double grad_norm(const nn::ParamStore& store) {
  double sum = 0.0;
  for (const auto& t : store.entries()) sum += t->grad.square().sum();
  return std::sqrt(sum);
}

Dataset load_dataset(const std::vector<audio::ManifestEntry>& manifest,
                     const TrainConfig& config) {
  const Index io = config.generator.io_channels;
  const double sr = config.generator.sample_rate;
  const Index len = excerpt_samples(config);
  Dataset data;
  std::vector<Mat> heldout_waves;
  for (const auto& entry : manifest) {
    const audio::Wave wave = audio::read_wav(entry.path);
    if (wave.sample_rate != sr)
      throw DataError(entry.path + ": sample rate " +
                      std::to_string(wave.sample_rate) + " does not match " +
                      std::to_string(sr));
    if (wave.samples.rows() < io)
      throw DataError(entry.path + ": needs at least " + std::to_string(io) +
                      " channels");
    if (wave.samples.cols() < len)
      throw DataError(entry.path + ": shorter than one excerpt");
    Mat x = wave.samples.topRows(io);
    (entry.train ? data.train_waves : heldout_waves).push_back(std::move(x));
  }
  if (data.train_waves.empty())
    throw DataError("manifest has no training files");
  if (heldout_waves.empty())
    throw DataError("manifest has no held-out files");
  // Round-robin over files so the excerpt cap still samples every scene.
  for (Index pos = 0; true; ++pos) {
    bool any = false;
    for (const Mat& wave : heldout_waves) {
      if (static_cast<int>(data.validation.size()) >=
          config.max_validation_excerpts)
        return data;
      if ((pos + 1) * len <= wave.cols()) {
        data.validation.push_back(wave.middleCols(pos * len, len));
        any = true;
      }
    }
    if (!any) break;
  }
  return data;
}

Trainer::Trainer(const TrainConfig& config)
    : config_(checked(config)),
      generator_(config_.generator, Rng::derive(config_.seed, 10).next_u64()),
      discs_(config_.discriminators, Rng::derive(config_.seed, 11).next_u64()),
      opt_g_(generator_.params(), config_.lr_generator, config_.adam_beta1,
             config_.adam_beta2, config_.adam_eps, config_.weight_decay,
             config_.lr_decay),
      opt_d_(discs_.params(), config_.lr_discriminator, config_.adam_beta1,
             config_.adam_beta2, config_.adam_eps, config_.weight_decay,
             config_.lr_decay),
      scales_(mel_scales(config_)),
      batch_rng_(Rng::derive(config_.seed, 12)),
      start_time_(now_seconds()) {}

Trainer::Trainer(const TrainConfig& config, const nn::ModelCheckpoint& init)
    : Trainer(config) {
  nn::load_generator_weights(generator_, init);
}

std::vector<Mat> Trainer::sample_batch(const Dataset& data) {
  if (data.train_waves.empty())
    throw DataError("cannot sample from an empty training set");
  const Index len = excerpt_samples(config_);
  std::vector<Mat> batch;
  batch.reserve(static_cast<size_t>(config_.batch_size));
  for (int b = 0; b < config_.batch_size; ++b) {
    const auto& wave =
        data.train_waves[batch_rng_.uniform_index(data.train_waves.size())];
    const auto start = static_cast<Index>(
        batch_rng_.uniform_index(static_cast<std::uint64_t>(wave.cols() - len + 1)));
    batch.push_back(wave.middleCols(start, len));
  }
  return batch;
}

LossReport Trainer::train_step(const std::vector<Mat>& batch) {
  if (batch.empty()) throw DataError("empty batch");
  for (const Mat& x : batch)
    if (!x.allFinite()) throw DataError("non-finite audio in batch");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  losses::LossWeights eff = config_.weights;
  if (step_ < config_.covariance_start_step) eff.covariance = 0.0;
  const bool use_gan = eff.adversarial != 0.0 || eff.feature_matching != 0.0;
  LossReport report;

  if (use_gan) {
    discs_.zero_grad();
    for (const Mat& x : batch) {
      const auto fake = generator_.forward(x, false);
      report.discriminator +=
          discs_.discriminator_pass(x, fake.reconstruction, inv_b) * inv_b;
    }
    if (!std::isfinite(report.discriminator))
      throw NumericError("non-finite loss term: discriminator");
    report.grad_norm_discriminator = grad_norm(discs_.params());
    opt_d_.step();
    // The generator-side pass below leaves meaningless gradients in the
    // discriminator store; clear them now rather than before the next use.
    discs_.zero_grad();
  }

  generator_.zero_grad();
  for (const Mat& x : batch) {
    const auto fake = generator_.forward(x, true);
    const auto mel =
        losses::multiscale_mel_loss_grad(x, fake.reconstruction, scales_);
    report.terms.mel += mel.value * inv_b;
    Mat grad = (eff.mel * inv_b) * mel.grad;
    if (eff.covariance != 0.0) {
      const auto cov = losses::covariance_loss_grad(x, fake.reconstruction);
      report.terms.covariance += cov.value * inv_b;
      grad += (eff.covariance * inv_b) * cov.grad;
    } else {
      report.terms.covariance +=
          losses::covariance_loss(x, fake.reconstruction) * inv_b;
    }
    if (use_gan) {
      const auto gp = discs_.generator_pass(
          x, fake.reconstruction, eff.adversarial, eff.feature_matching, inv_b);
      report.terms.adversarial += gp.adversarial * inv_b;
      report.terms.feature_matching += gp.feature_matching * inv_b;
      grad += gp.grad_fake;
    }
    report.terms.codebook += fake.codebook_loss * inv_b;
    report.terms.commitment += fake.commitment_loss * inv_b;
    generator_.backward(grad, eff.codebook * inv_b, eff.commitment * inv_b);
  }
  report.total = losses::composite_generator_loss(report.terms, eff);
  report.grad_norm_generator = grad_norm(generator_.params());
  opt_g_.step();
  ++step_;
  return report;
}

ValidationRecord Trainer::validate_on(const std::vector<Mat>& heldout) {
  if (heldout.empty()) throw DataError("validation set is empty");
  ValidationRecord rec;
  rec.step = step_;
  for (const Mat& x : heldout) {
    const auto fake = generator_.forward(x, false);
    rec.mel += losses::multiscale_mel_loss(x, fake.reconstruction, scales_);
    rec.covariance += losses::covariance_loss(x, fake.reconstruction);
  }
  rec.mel /= static_cast<double>(heldout.size());
  rec.covariance /= static_cast<double>(heldout.size());
  rec.wall_time_s = now_seconds() - start_time_;
  return rec;
}

TrainingRun run_training(const TrainConfig& config, const Dataset& data,
                         const nn::ModelCheckpoint* init, std::ostream* log) {
  std::optional<Trainer> trainer;
  if (init != nullptr)
    trainer.emplace(config, *init);
  else
    trainer.emplace(config);
  std::vector<ValidationRecord> curve;
  const auto record = [&] {
    const ValidationRecord r = trainer->validate_on(data.validation);
    curve.push_back(r);
    if (log != nullptr)
      *log << "step " << r.step << "  mel_val " << r.mel << "  cov_val "
           << r.covariance << "\n";
  };
  record();
  for (int s = 1; s <= config.steps; ++s) {
    try {
      trainer->train_step(trainer->sample_batch(data));
    } catch (const NumericError& e) {
      throw NumericError("step " + std::to_string(s) + ": " + e.what());
    }
    if (s % config.validation_interval == 0 || s == config.steps) record();
  }
  TrainingRun run;
  run.curve = std::move(curve);
  run.checkpoint = nn::generator_checkpoint(
      trainer->generator(), serialize_train_config(trainer->config()));
  return run;
}

void save_curve(const std::string& path,
                const std::vector<ValidationRecord>& curve) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write curve file " + path);
  f << "step,mel_val,cov_val,wall_time_s\n";
  for (const auto& r : curve)
    f << r.step << ',' << fmt(r.mel) << ',' << fmt(r.covariance) << ','
      << fmt(r.wall_time_s) << '\n';
  if (!f) throw DataError("failed while writing curve file " + path);
}

std::vector<ValidationRecord> load_curve(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read curve file " + path);
  std::string line;
  if (!std::getline(f, line) || trim(line) != "step,mel_val,cov_val,wall_time_s")
    throw DataError(path + ": missing curve header");
  std::vector<ValidationRecord> curve;
  int line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(trim(field));
    if (fields.size() != 4)
      throw DataError(path + " line " + std::to_string(line_no) +
                      ": expected 4 fields");
    ValidationRecord r;
    r.step = static_cast<int>(to_int("step", fields[0]));
    r.mel = to_real("mel_val", fields[1]);
    r.covariance = to_real("cov_val", fields[2]);
    r.wall_time_s = to_real("wall_time_s", fields[3]);
    if (!curve.empty() && r.step <= curve.back().step)
      throw DataError(path + ": steps are not strictly increasing");
    curve.push_back(r);
  }
  return curve;
}

InitComparison compare_inits(const TrainConfig& config, const Dataset& data,
                             const nn::ModelCheckpoint& mono,
                             std::ostream* log) {
  const nn::ModelCheckpoint warm =
      nn::transfer_from_mono(mono, config.generator.io_channels);
  InitComparison out;
  if (log != nullptr) *log << "transfer initialization\n";
  out.transfer = run_training(config, data, &warm, log);
  if (log != nullptr) *log << "random initialization\n";
  out.random = run_training(config, data, nullptr, log);
  return out;
}

audio::Wave synthesize_scene(int order, double seconds, double sample_rate,
                             Rng& rng) {
  if (order < 0 || seconds <= 0.0 || sample_rate <= 0.0)
    throw UsageError("invalid scene parameters");
  const auto n = std::max<Index>(
      static_cast<Index>(std::llround(seconds * sample_rate)), 1);
  const int n_ch = hoa::channel_count(order);
  const double two_pi = 6.283185307179586;
  Mat scene = Mat::Zero(n_ch, n);

  const int n_sources = 1 + static_cast<int>(rng.uniform_index(3));
  for (int s = 0; s < n_sources; ++s) {
    const double az = rng.uniform(0.0, two_pi);
    const double el = std::asin(rng.uniform(-1.0, 1.0));
    Vec sig = Vec::Zero(n);
    const int n_tones = 2 + static_cast<int>(rng.uniform_index(3));
    for (int k = 0; k < n_tones; ++k) {
      const double f = std::exp(
          rng.uniform(std::log(60.0), std::log(0.35 * sample_rate)));
      const double phase = rng.uniform(0.0, two_pi);
      const double amp = 1.0 / (k + 1);
      for (Index t = 0; t < n; ++t)
        sig[t] += amp * std::sin(two_pi * f * t / sample_rate + phase);
    }
    const double noise_amp = rng.uniform(0.2, 0.8);
    const double mod_freq = rng.uniform(0.5, 6.0);
    const double mod_phase = rng.uniform(0.0, two_pi);
    for (Index t = 0; t < n; ++t)
      sig[t] += noise_amp * rng.normal() *
                (0.5 + 0.5 * std::sin(two_pi * mod_freq * t / sample_rate +
                                      mod_phase));
    const double rms = std::sqrt(sig.squaredNorm() / n);
    sig *= rng.uniform(0.05, 0.15) / std::max(rms, 1e-12);
    scene += hoa::encode_plane_wave(order, az, el, sig, sample_rate).samples;
  }

  // Isotropic bed: independent noise from a golden-angle spiral of
  // directions, scaled to a random level below the sources.
  Mat bed = Mat::Zero(n_ch, n);
  const int n_dirs = 24;
  for (int d = 0; d < n_dirs; ++d) {
    const double z = (2.0 * d + 1.0) / n_dirs - 1.0;
    const double az = d * 2.399963229728653;
    Vec noise(n);
    for (Index t = 0; t < n; ++t) noise[t] = rng.normal();
    bed += hoa::encode_plane_wave(order, az, std::asin(z), noise, sample_rate)
               .samples;
  }
  const double snr_db = rng.uniform(6.0, 18.0);
  const double scene_rms =
      std::sqrt(scene.row(0).squaredNorm() / static_cast<double>(n));
  const double bed_rms =
      std::sqrt(bed.row(0).squaredNorm() / static_cast<double>(n));
  if (bed_rms > 0.0)
    bed *= scene_rms * std::pow(10.0, -snr_db / 20.0) / bed_rms;
  scene += bed;

  const double peak = scene.cwiseAbs().maxCoeff();
  if (peak > 0.0) scene *= 0.25 / peak;
  audio::Wave wave;
  wave.sample_rate = sample_rate;
  wave.samples = std::move(scene);
  return wave;
}

}  // namespace ambicodec::train
