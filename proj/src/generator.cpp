#include "ambicodec/generator.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ambicodec/errors.hpp"

namespace ambicodec::nn {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

using RowMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

// Encoder channel sequence: a[0] = dims[0]; block i maps a[i] to a[i+1].
std::vector<Index> channel_sequence(const GeneratorConfig& c) {
  std::vector<Index> a;
  a.push_back(c.encoder_dims[0]);
  const size_t n = c.strides.size();
  for (size_t i = 0; i < n; ++i)
    a.push_back(i + 1 < c.encoder_dims.size() ? c.encoder_dims[i + 1]
                                              : c.encoder_dims.back());
  return a;
}

template <typename T>
void put_int(std::string& out, T v) {
  for (size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

struct Reader {
  const unsigned char* p;
  size_t left;
  void need(size_t n) const {
    if (n > left) throw DataError("truncated checkpoint");
  }
  template <typename T>
  T get_int() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    p += sizeof(T);
    left -= sizeof(T);
    return static_cast<T>(v);
  }
  std::string get_string(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    left -= n;
    return s;
  }
};

}  // namespace

int total_stride(const GeneratorConfig& config) {
  int s = 1;
  for (int v : config.strides) s *= v;
  return s;
}

void validate(const GeneratorConfig& c) {
  if (c.io_channels < 1) throw DataError("generator needs at least one channel");
  if (c.encoder_dims.empty() || c.encoder_dims.size() != c.strides.size())
    throw DataError("encoder dims and strides must align and be nonempty");
  for (int d : c.encoder_dims)
    if (d < 1) throw DataError("encoder dims must be positive");
  for (int s : c.strides)
    if (s < 1) throw DataError("strides must be positive");
  if (c.latent_dim < 1) throw DataError("latent dim must be positive");
  if (c.n_codebooks < 1) throw DataError("need at least one codebook");
  if (!is_power_of_two(c.codebook_size) || c.codebook_size < 2)
    throw DataError("codebook size must be a power of two, at least 2");
  if (c.sample_rate < 1) throw DataError("sample rate must be positive");
}

bool operator==(const GeneratorConfig& a, const GeneratorConfig& b) {
  return a.io_channels == b.io_channels && a.encoder_dims == b.encoder_dims &&
         a.strides == b.strides && a.latent_dim == b.latent_dim &&
         a.n_codebooks == b.n_codebooks && a.codebook_size == b.codebook_size &&
         a.sample_rate == b.sample_rate;
}

ResidualVQ::ResidualVQ(ParamStore& store, const std::string& name, Index dim,
                       int n_codebooks, Index codebook_size, Rng& rng)
    : dim_(dim), codebook_size_(codebook_size) {
  for (int i = 0; i < n_codebooks; ++i) {
    Tensor* e = store.add(name + ".codebook" + std::to_string(i),
                          {codebook_size, dim});
    const double std = 1.0 / std::sqrt(static_cast<double>(dim));
    for (Index j = 0; j < e->size(); ++j) e->values[j] = rng.normal(0.0, std);
    codebooks_.push_back(e);
  }
}

RvqResult ResidualVQ::quantize(const Mat& latents) const {
  if (latents.rows() != dim_)
    throw DataError("latent dimension does not match the quantizer");
  const Index frames = latents.cols();
  if (frames < 1) throw DataError("nothing to quantize");

  RvqResult r;
  r.codes.resize(static_cast<Index>(codebooks_.size()), frames);
  r.quantized = Mat::Zero(dim_, frames);
  Mat residual = latents;
  double total_sq = 0.0;
  for (size_t i = 0; i < codebooks_.size(); ++i) {
    ConstRowMap entries(codebooks_[i]->values.data(), codebook_size_, dim_);
    const Vec norms = entries.rowwise().squaredNorm();
    const Mat scores = entries * residual;  // [codebook_size x frames]
    for (Index t = 0; t < frames; ++t) {
      Index best = 0;
      double best_d = norms[0] - 2.0 * scores(0, t);
      for (Index j = 1; j < codebook_size_; ++j) {
        const double d = norms[j] - 2.0 * scores(j, t);
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      r.codes(static_cast<Index>(i), t) = static_cast<int>(best);
      r.quantized.col(t) += entries.row(best).transpose();
      residual.col(t) -= entries.row(best).transpose();
      total_sq += residual.col(t).squaredNorm();
    }
  }
  const double denom = static_cast<double>(codebooks_.size()) * dim_ * frames;
  r.codebook_loss = total_sq / denom;
  r.commitment_loss = total_sq / denom;
  return r;
}

Mat ResidualVQ::decode(const MatI& codes) const {
  if (codes.rows() != static_cast<Index>(codebooks_.size()))
    throw DataError("code stream stage count does not match the quantizer");
  Mat out = Mat::Zero(dim_, codes.cols());
  for (Index i = 0; i < codes.rows(); ++i) {
    ConstRowMap entries(codebooks_[static_cast<size_t>(i)]->values.data(),
                        codebook_size_, dim_);
    for (Index t = 0; t < codes.cols(); ++t) {
      const int j = codes(i, t);
      if (j < 0 || j >= codebook_size_)
        throw DataError("code index out of range");
      out.col(t) += entries.row(j).transpose();
    }
  }
  return out;
}

const RvqResult& ResidualVQ::forward(const Mat& latents, bool want_grad) {
  cached_ = quantize(latents);
  cached_residuals_.clear();
  if (want_grad) {
    // residual before each stage, plus the final residual
    cached_residuals_.push_back(latents);
    Mat residual = latents;
    for (size_t i = 0; i < codebooks_.size(); ++i) {
      ConstRowMap entries(codebooks_[i]->values.data(), codebook_size_, dim_);
      for (Index t = 0; t < latents.cols(); ++t)
        residual.col(t) -=
            entries.row(cached_.codes(static_cast<Index>(i), t)).transpose();
      cached_residuals_.push_back(residual);
    }
  }
  return cached_;
}

Mat ResidualVQ::backward(const Mat& grad_quantized, double codebook_weight,
                         double commitment_weight) {
  if (cached_residuals_.empty())
    throw DataError("quantizer backward without a cached forward");
  const Index frames = grad_quantized.cols();
  const double scale =
      2.0 / (static_cast<double>(codebooks_.size()) * dim_ * frames);

  Mat grad = grad_quantized;  // straight-through estimator
  if (commitment_weight != 0.0) {
    // d/dz mean||r_i - sg(e_i)||^2 accumulates the post-stage residuals.
    for (size_t i = 1; i < cached_residuals_.size(); ++i)
      grad += commitment_weight * scale * cached_residuals_[i];
  }
  if (codebook_weight != 0.0) {
    for (size_t i = 0; i < codebooks_.size(); ++i) {
      RowMap grad_entries(codebooks_[i]->grad.data(), codebook_size_, dim_);
      const Mat& post = cached_residuals_[i + 1];  // e_i - r_i = -post
      for (Index t = 0; t < frames; ++t) {
        const int j = cached_.codes(static_cast<Index>(i), t);
        grad_entries.row(j) -=
            codebook_weight * scale * post.col(t).transpose();
      }
    }
  }
  return grad;
}

Generator::Generator(const GeneratorConfig& config, std::uint64_t seed)
    : config_(config) {
  validate(config_);
  Rng rng(seed);
  const std::vector<Index> a = channel_sequence(config_);
  const size_t n = config_.strides.size();
  const Init init = Init::kLecun;

  auto conv = [&](Sequential& seq, const std::string& name, ConvSpec spec) {
    seq.append(name, std::unique_ptr<Layer>(
                         Conv1d::create(params_, name, spec, rng, init)));
  };
  auto snake = [&](Sequential& seq, const std::string& name, Index channels) {
    seq.append(name,
               std::unique_ptr<Layer>(Snake::create(params_, name, channels)));
  };

  conv(encoder_, "encoder.conv_in", {config_.io_channels, a[0], 7, 1, 1, 3});
  for (size_t i = 0; i < n; ++i) {
    const std::string b = "encoder.block" + std::to_string(i);
    encoder_.append(b + ".res", std::make_unique<ResidualUnit>(
                                    params_, b + ".res", a[i], 3, 3, rng, init));
    snake(encoder_, b + ".snake", a[i]);
    const Index s = config_.strides[i];
    const Index pad = (s + 1) / 2;
    conv(encoder_, b + ".down", {a[i], a[i + 1], 2 * s, s, 1, pad});
  }
  snake(encoder_, "encoder.snake_out", a[n]);
  conv(encoder_, "encoder.conv_latent", {a[n], config_.latent_dim, 3, 1, 1, 1});

  rvq_ = std::make_unique<ResidualVQ>(params_, "rvq", config_.latent_dim,
                                      config_.n_codebooks,
                                      config_.codebook_size, rng);

  conv(decoder_, "decoder.conv_in", {config_.latent_dim, a[n], 3, 1, 1, 1});
  for (size_t j = n; j > 0; --j) {
    const size_t i = j - 1;
    const std::string b = "decoder.block" + std::to_string(n - j);
    snake(decoder_, b + ".snake", a[j]);
    const Index s = config_.strides[i];
    const Index pad = (s + 1) / 2;
    ConvSpec up{a[j], a[i], 2 * s, s, 1, pad, 2 * pad - s};
    decoder_.append(b + ".up", std::unique_ptr<Layer>(ConvTranspose1d::create(
                                   params_, b + ".up", up, rng, init)));
    decoder_.append(b + ".res", std::make_unique<ResidualUnit>(
                                    params_, b + ".res", a[i], 3, 1, rng, init));
  }
  snake(decoder_, "decoder.snake_out", a[0]);
  conv(decoder_, "decoder.conv_out", {a[0], config_.io_channels, 7, 1, 1, 3});
}

Generator::ForwardResult Generator::forward(const Mat& audio, bool want_grad) {
  if (audio.rows() != config_.io_channels)
    throw DataError("audio channel count does not match the model");
  if (audio.cols() < 1) throw DataError("empty audio");
  const Index stride = total_stride(config_);
  const Index len = audio.cols();
  const Index padded = (len + stride - 1) / stride * stride;

  Mat x = Mat::Zero(config_.io_channels, padded);
  x.leftCols(len) = audio;
  const Mat latents = encoder_.forward(x, want_grad);
  const RvqResult& q = rvq_->forward(latents, want_grad);
  Mat y = decoder_.forward(q.quantized, want_grad);
  if (y.cols() != padded)
    throw NumericError("decoder did not restore the encoder length");
  cached_len_ = len;

  ForwardResult r;
  r.reconstruction = y.leftCols(len);
  r.codes = q.codes;
  r.codebook_loss = q.codebook_loss;
  r.commitment_loss = q.commitment_loss;
  return r;
}

void Generator::backward(const Mat& grad_reconstruction, double codebook_weight,
                         double commitment_weight) {
  const Index stride = total_stride(config_);
  const Index padded = (cached_len_ + stride - 1) / stride * stride;
  if (grad_reconstruction.rows() != config_.io_channels ||
      grad_reconstruction.cols() != cached_len_)
    throw DataError("reconstruction gradient shape mismatch");
  Mat g = Mat::Zero(config_.io_channels, padded);
  g.leftCols(cached_len_) = grad_reconstruction;
  const Mat grad_quantized = decoder_.backward(g);
  const Mat grad_latents =
      rvq_->backward(grad_quantized, codebook_weight, commitment_weight);
  encoder_.backward(grad_latents);
}

MatI Generator::encode(const Mat& audio) {
  if (audio.rows() != config_.io_channels)
    throw DataError("audio channel count does not match the model");
  if (audio.cols() < 1) throw DataError("empty audio");
  const Index stride = total_stride(config_);
  const Index padded = (audio.cols() + stride - 1) / stride * stride;
  Mat x = Mat::Zero(config_.io_channels, padded);
  x.leftCols(audio.cols()) = audio;
  return rvq_->quantize(encoder_.forward(x, false)).codes;
}

Mat Generator::decode(const MatI& codes, Index n_samples) {
  const Mat y = decoder_.forward(rvq_->decode(codes), false);
  if (n_samples < 1 || n_samples > y.cols())
    throw DataError("requested length does not fit the decoded stream");
  return y.leftCols(n_samples);
}

void save_checkpoint(const std::string& path, const ModelCheckpoint& ckpt) {
  std::string out;
  out += "AMBC";
  put_int<std::uint32_t>(out, ckpt.version);
  put_int<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.config_ints.size()));
  for (std::int64_t v : ckpt.config_ints) put_int<std::int64_t>(out, v);
  put_int<std::uint64_t>(out, ckpt.config_text.size());
  out += ckpt.config_text;
  put_int<std::uint64_t>(out, ckpt.tensors.size());
  for (const auto& [name, tensor] : ckpt.tensors) {
    put_int<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    out.push_back(1);  // dtype: float64
    put_int<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.shape.size()));
    for (Index d : tensor.shape) put_int<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    const size_t bytes = static_cast<size_t>(tensor.size()) * sizeof(double);
    const size_t at = out.size();
    out.resize(at + bytes);
    std::memcpy(out.data() + at, tensor.values.data(), bytes);
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("failed writing checkpoint: " + path);
}

ModelCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  Reader r{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()};
  if (r.get_string(4) != "AMBC") throw DataError("not a checkpoint file");
  ModelCheckpoint ckpt;
  ckpt.version = r.get_int<std::uint32_t>();
  if (ckpt.version != 1) throw DataError("unsupported checkpoint version");
  const std::uint32_t n_ints = r.get_int<std::uint32_t>();
  if (n_ints > 4096) throw DataError("oversized checkpoint config block");
  for (std::uint32_t i = 0; i < n_ints; ++i)
    ckpt.config_ints.push_back(r.get_int<std::int64_t>());
  const std::uint64_t text_len = r.get_int<std::uint64_t>();
  ckpt.config_text = r.get_string(text_len);
  const std::uint64_t n_tensors = r.get_int<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    const std::uint32_t name_len = r.get_int<std::uint32_t>();
    if (name_len > 4096) throw DataError("oversized tensor name");
    const std::string name = r.get_string(name_len);
    const unsigned char dtype = r.get_int<unsigned char>();
    if (dtype != 1) throw DataError("unsupported tensor dtype");
    const std::uint32_t rank = r.get_int<std::uint32_t>();
    if (rank > 8) throw DataError("unsupported tensor rank");
    std::vector<Index> shape;
    std::uint64_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint64_t dim = r.get_int<std::uint64_t>();
      if (dim == 0 || dim > (1ULL << 32)) throw DataError("bad tensor dimension");
      count *= dim;
      if (count > (1ULL << 32)) throw DataError("oversized tensor");
      shape.push_back(static_cast<Index>(dim));
    }
    Tensor t = make_tensor(name, shape);
    r.need(count * sizeof(double));
    std::memcpy(t.values.data(), r.p, count * sizeof(double));
    r.p += count * sizeof(double);
    r.left -= count * sizeof(double);
    ckpt.tensors.emplace_back(name, std::move(t));
  }
  if (r.left != 0) throw DataError("trailing bytes after checkpoint payload");
  return ckpt;
}

std::vector<std::int64_t> generator_config_ints(const GeneratorConfig& c) {
  std::vector<std::int64_t> v;
  v.push_back(c.io_channels);
  v.push_back(static_cast<std::int64_t>(c.encoder_dims.size()));
  for (int d : c.encoder_dims) v.push_back(d);
  v.push_back(static_cast<std::int64_t>(c.strides.size()));
  for (int s : c.strides) v.push_back(s);
  v.push_back(c.latent_dim);
  v.push_back(c.n_codebooks);
  v.push_back(c.codebook_size);
  v.push_back(c.sample_rate);
  return v;
}

GeneratorConfig generator_config_from_ints(const std::vector<std::int64_t>& v) {
  size_t i = 0;
  auto next = [&]() {
    if (i >= v.size()) throw DataError("checkpoint config block too short");
    return v[i++];
  };
  GeneratorConfig c;
  c.io_channels = static_cast<int>(next());
  c.encoder_dims.clear();
  const std::int64_t n_dims = next();
  for (std::int64_t k = 0; k < n_dims; ++k)
    c.encoder_dims.push_back(static_cast<int>(next()));
  c.strides.clear();
  const std::int64_t n_strides = next();
  for (std::int64_t k = 0; k < n_strides; ++k)
    c.strides.push_back(static_cast<int>(next()));
  c.latent_dim = static_cast<int>(next());
  c.n_codebooks = static_cast<int>(next());
  c.codebook_size = static_cast<int>(next());
  c.sample_rate = static_cast<int>(next());
  if (i != v.size()) throw DataError("checkpoint config block too long");
  validate(c);
  return c;
}

ModelCheckpoint generator_checkpoint(const Generator& generator,
                                     const std::string& config_text) {
  ModelCheckpoint ckpt;
  ckpt.config_ints = generator_config_ints(generator.config());
  ckpt.config_text = config_text;
  for (const auto& t : generator.params().entries()) {
    Tensor copy = make_tensor(t->name, t->shape);
    copy.values = t->values;
    ckpt.tensors.emplace_back(t->name, std::move(copy));
  }
  return ckpt;
}

void load_generator_weights(Generator& generator, const ModelCheckpoint& ckpt) {
  const GeneratorConfig c = generator_config_from_ints(ckpt.config_ints);
  if (!(c == generator.config()))
    throw DataError("checkpoint config does not match the generator");
  size_t used = 0;
  for (const auto& owned : generator.params().entries()) {
    const Tensor* src = nullptr;
    for (const auto& [name, t] : ckpt.tensors) {
      if (name == owned->name) {
        src = &t;
        break;
      }
    }
    if (src == nullptr)
      throw DataError("checkpoint is missing tensor " + owned->name);
    if (src->shape != owned->shape)
      throw DataError("checkpoint tensor shape mismatch for " + owned->name);
    owned->values = src->values;
    owned->grad.setZero();
    ++used;
  }
  if (used != ckpt.tensors.size())
    throw DataError("checkpoint carries tensors unknown to the generator");
}

Generator generator_from_checkpoint(const ModelCheckpoint& ckpt,
                                    std::uint64_t seed) {
  Generator g(generator_config_from_ints(ckpt.config_ints), seed);
  load_generator_weights(g, ckpt);
  return g;
}

ModelCheckpoint transfer_from_mono(const ModelCheckpoint& mono,
                                   int io_channels) {
  GeneratorConfig source = generator_config_from_ints(mono.config_ints);
  if (source.io_channels != 1)
    throw DataError("transfer needs a single-channel source checkpoint");
  if (io_channels < 1) throw DataError("bad target channel count");

  GeneratorConfig target_config = source;
  target_config.io_channels = io_channels;
  Generator target(target_config, 0);

  auto find_mono = [&](const std::string& name) -> const Tensor& {
    for (const auto& [n, t] : mono.tensors)
      if (n == name) return t;
    throw DataError("mono checkpoint is missing tensor " + name);
  };

  ModelCheckpoint out;
  out.config_ints = generator_config_ints(target_config);
  out.config_text = mono.config_text;
  for (const auto& owned : target.params().entries()) {
    Tensor t = make_tensor(owned->name, owned->shape);
    if (owned->name == "encoder.conv_in.weight") {
      // {out, C, K} from {out, 1, K}: same kernel for every input channel.
      const Tensor& m = find_mono(owned->name);
      const Index co_n = t.shape[0], ci_n = t.shape[1], k_n = t.shape[2];
      if (m.shape[0] != co_n || m.shape[1] != 1 || m.shape[2] != k_n)
        throw DataError("topology mismatch in the first layer");
      for (Index co = 0; co < co_n; ++co)
        for (Index ci = 0; ci < ci_n; ++ci)
          for (Index k = 0; k < k_n; ++k)
            t.values[(co * ci_n + ci) * k_n + k] = m.values[co * k_n + k];
    } else if (owned->name == "decoder.conv_out.weight") {
      // {C, in, K} from {1, in, K}: same kernel row for every output channel.
      const Tensor& m = find_mono(owned->name);
      const Index co_n = t.shape[0], ci_n = t.shape[1], k_n = t.shape[2];
      if (m.shape[0] != 1 || m.shape[1] != ci_n || m.shape[2] != k_n)
        throw DataError("topology mismatch in the last layer");
      for (Index co = 0; co < co_n; ++co)
        for (Index i = 0; i < ci_n * k_n; ++i)
          t.values[co * ci_n * k_n + i] = m.values[i];
    } else if (owned->name == "decoder.conv_out.bias") {
      const Tensor& m = find_mono(owned->name);
      if (m.size() != 1) throw DataError("topology mismatch in the last layer");
      t.values.setConstant(m.values[0]);
    } else {
      const Tensor& m = find_mono(owned->name);
      if (m.shape != owned->shape)
        throw DataError("topology mismatch beyond the first and last layers: " +
                        owned->name);
      t.values = m.values;
    }
    out.tensors.emplace_back(t.name, std::move(t));
  }
  if (out.tensors.size() != mono.tensors.size())
    throw DataError("mono checkpoint carries unexpected tensors");
  return out;
}

}  // namespace ambicodec::nn
