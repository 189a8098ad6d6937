#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ambicodec/nn.hpp"
#include "ambicodec/types.hpp"

namespace ambicodec::nn {

struct GeneratorConfig {
  int io_channels = 16;
  std::vector<int> encoder_dims = {32, 64, 128};
  std::vector<int> strides = {2, 4, 8};
  int latent_dim = 64;
  int n_codebooks = 4;
  int codebook_size = 256;
  int sample_rate = 44100;
};

int total_stride(const GeneratorConfig& config);
void validate(const GeneratorConfig& config);
bool operator==(const GeneratorConfig& a, const GeneratorConfig& b);

struct RvqResult {
  MatI codes;      // [n_codebooks x frames]
  Mat quantized;   // [dim x frames]
  double codebook_loss = 0.0;    // mean ||sg(residual) - entry||^2
  double commitment_loss = 0.0;  // mean ||residual - sg(entry)||^2
};

// Residual vector quantizer: a cascade of codebooks, each matching the
// running residual to its Euclidean nearest entry.
class ResidualVQ {
 public:
  ResidualVQ(ParamStore& store, const std::string& name, Index dim,
             int n_codebooks, Index codebook_size, Rng& rng);

  RvqResult quantize(const Mat& latents) const;
  Mat decode(const MatI& codes) const;

  // Training path. forward caches the per-stage residuals; backward
  // passes grad_quantized straight through to the latents, adds the
  // weighted commitment gradient, and accumulates the weighted codebook
  // gradients into the codebook tensors.
  const RvqResult& forward(const Mat& latents, bool want_grad);
  Mat backward(const Mat& grad_quantized, double codebook_weight,
               double commitment_weight);

  Index dim() const { return dim_; }
  int n_codebooks() const { return static_cast<int>(codebooks_.size()); }
  Index codebook_size() const { return codebook_size_; }

 private:
  Index dim_;
  Index codebook_size_;
  std::vector<Tensor*> codebooks_;  // each {codebook_size, dim}
  RvqResult cached_;
  std::vector<Mat> cached_residuals_;  // residual before each stage
};

class Generator {
 public:
  Generator(const GeneratorConfig& config, std::uint64_t seed);

  struct ForwardResult {
    Mat reconstruction;  // [io_channels x input length]
    MatI codes;
    double codebook_loss = 0.0;
    double commitment_loss = 0.0;
  };

  // Pads the input to a multiple of the total stride internally and trims
  // the reconstruction back to the input length.
  ForwardResult forward(const Mat& audio, bool want_grad);
  void backward(const Mat& grad_reconstruction, double codebook_weight,
                double commitment_weight);

  MatI encode(const Mat& audio);
  Mat decode(const MatI& codes, Index n_samples);

  const GeneratorConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  void zero_grad() { params_.zero_grad(); }

 private:
  GeneratorConfig config_;
  ParamStore params_;
  Sequential encoder_;
  Sequential decoder_;
  std::unique_ptr<ResidualVQ> rvq_;
  Index cached_len_ = 0;
};

// Checkpoint container shared by generator and discriminator models:
// an architecture block of integers, the raw training configuration
// text, and named tensors.
struct ModelCheckpoint {
  std::uint32_t version = 1;
  std::vector<std::int64_t> config_ints;
  std::string config_text;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_checkpoint(const std::string& path, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::string& path);

std::vector<std::int64_t> generator_config_ints(const GeneratorConfig& config);
GeneratorConfig generator_config_from_ints(const std::vector<std::int64_t>& ints);

ModelCheckpoint generator_checkpoint(const Generator& generator,
                                     const std::string& config_text);
// Builds the generator the checkpoint describes and loads its tensors.
Generator generator_from_checkpoint(const ModelCheckpoint& ckpt,
                                    std::uint64_t seed = 0);
// Loads tensors into an existing generator of matching topology.
void load_generator_weights(Generator& generator, const ModelCheckpoint& ckpt);

// Multichannel warm start from a single-channel model: the first-layer
// kernel is replicated across all input-channel slices, the last-layer
// kernel and bias across all output channels, everything else (including
// codebooks) is copied verbatim. First-layer bias is kept as is.
ModelCheckpoint transfer_from_mono(const ModelCheckpoint& mono,
                                   int io_channels);

}  // namespace ambicodec::nn
