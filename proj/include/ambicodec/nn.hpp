#pragma once

#include <deque>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ambicodec/rng.hpp"
#include "ambicodec/types.hpp"

namespace ambicodec::nn {

// Dense parameter or activation block. values and grad are flat,
// row-major over shape; grad is accumulated by backward passes.
struct Tensor {
  std::string name;
  std::vector<Index> shape;
  Arr values;
  Arr grad;

  Index size() const { return values.size(); }
  void zero_grad() { grad.setZero(); }
};

Tensor make_tensor(std::string name, std::vector<Index> shape);

// Owns the parameters of a model. Layers reference tensors by pointer so
// several layer instances (e.g. the per-phase copies inside a period
// discriminator) can share one set of weights.
class ParamStore {
 public:
  Tensor* add(const std::string& name, std::vector<Index> shape);
  Tensor* find(const std::string& name);
  const std::vector<std::unique_ptr<Tensor>>& entries() const { return tensors_; }
  void zero_grad();
  Index parameter_count() const;

 private:
  std::vector<std::unique_ptr<Tensor>> tensors_;
};

struct ConvSpec {
  Index in_channels = 1;
  Index out_channels = 1;
  Index kernel = 1;
  Index stride = 1;
  Index dilation = 1;
  Index padding = 0;
  Index output_padding = 0;  // transposed convolution only
};

Index conv1d_output_length(Index len, const ConvSpec& spec);
Index conv_transpose1d_output_length(Index len, const ConvSpec& spec);

// Valid cross-correlation per output channel, summed over input channels,
// plus bias: out(c) = bias(c) + sum_k kernel(c, k) * input(k).
// weight shape {out, in, kernel}, bias shape {out}, input [in x L].
Mat conv1d_forward(const ConvSpec& spec, const Tensor& weight,
                   const Tensor& bias, const Mat& input);

// Accumulates into weight.grad and bias.grad, returns dL/dinput.
Mat conv1d_backward(const ConvSpec& spec, Tensor& weight, Tensor& bias,
                    const Mat& input, const Mat& grad_output);

// Transposed convolution; weight shape {in, out, kernel}.
Mat conv_transpose1d_forward(const ConvSpec& spec, const Tensor& weight,
                             const Tensor& bias, const Mat& input);
Mat conv_transpose1d_backward(const ConvSpec& spec, Tensor& weight,
                              Tensor& bias, const Mat& input,
                              const Mat& grad_output);

// Snake activation x + sin^2(alpha x) / alpha with one alpha per channel.
Mat snake_forward(const Mat& input, const Tensor& alpha);
Mat snake_backward(const Mat& input, Tensor& alpha, const Mat& grad_output);

// How freshly created parameters are filled.
enum class Init {
  kLecun,       // weights N(0, 1/fan_in), biases zero
  kNormal002,   // everything N(0, 0.02^2)
};

class Layer {
 public:
  virtual ~Layer() = default;
  // want_grad keeps whatever the backward pass will need.
  virtual Mat forward(const Mat& input, bool want_grad) = 0;
  virtual Mat backward(const Mat& grad_output) = 0;
};

class Conv1d : public Layer {
 public:
  Conv1d(const ConvSpec& spec, Tensor* weight, Tensor* bias);
  static Conv1d* create(ParamStore& store, const std::string& name,
                        const ConvSpec& spec, Rng& rng, Init init);
  Mat forward(const Mat& input, bool want_grad) override;
  Mat backward(const Mat& grad_output) override;
  const ConvSpec& spec() const { return spec_; }

 private:
  ConvSpec spec_;
  Tensor* weight_;
  Tensor* bias_;
  Mat cached_input_;
};

class ConvTranspose1d : public Layer {
 public:
  ConvTranspose1d(const ConvSpec& spec, Tensor* weight, Tensor* bias);
  static ConvTranspose1d* create(ParamStore& store, const std::string& name,
                                 const ConvSpec& spec, Rng& rng, Init init);
  Mat forward(const Mat& input, bool want_grad) override;
  Mat backward(const Mat& grad_output) override;

 private:
  ConvSpec spec_;
  Tensor* weight_;
  Tensor* bias_;
  Mat cached_input_;
};

class Snake : public Layer {
 public:
  explicit Snake(Tensor* alpha) : alpha_(alpha) {}
  static Snake* create(ParamStore& store, const std::string& name,
                       Index channels);
  Mat forward(const Mat& input, bool want_grad) override;
  Mat backward(const Mat& grad_output) override;

 private:
  Tensor* alpha_;
  Mat cached_input_;
};

class LeakyRelu : public Layer {
 public:
  explicit LeakyRelu(double slope = 0.1) : slope_(slope) {}
  Mat forward(const Mat& input, bool want_grad) override;
  Mat backward(const Mat& grad_output) override;

 private:
  double slope_;
  Mat cached_input_;
};

class AvgPool1d : public Layer {
 public:
  explicit AvgPool1d(Index factor) : factor_(factor) {}
  Mat forward(const Mat& input, bool want_grad) override;
  Mat backward(const Mat& grad_output) override;

 private:
  Index factor_;
  Index cached_len_ = 0;
  Index cached_channels_ = 0;
};

// Layer pipeline. Throws NumericError naming the failing layer when an
// activation goes non-finite. Layers flagged as feature taps have their
// outputs copied aside during a tapped forward pass.
class Sequential {
 public:
  Layer* append(const std::string& name, std::unique_ptr<Layer> layer,
                bool feature_tap = false);
  Mat forward(const Mat& input, bool want_grad, bool want_features = false);
  Mat backward(const Mat& grad_output);
  // As backward, but adds grad_features[i] to the gradient flowing out of
  // the i-th tapped layer.
  Mat backward_with_features(const Mat& grad_output,
                             const std::vector<Mat>& grad_features);
  const std::vector<Mat>& features() const { return features_; }
  size_t feature_count() const;

 private:
  struct Entry {
    std::string name;
    std::unique_ptr<Layer> layer;
    bool feature_tap = false;
  };
  std::vector<Entry> entries_;
  std::vector<Mat> features_;
};

// y = x + branch(x) with branch = Snake, dilated conv, Snake, 1x1 conv.
class ResidualUnit : public Layer {
 public:
  ResidualUnit(ParamStore& store, const std::string& name, Index channels,
               Index kernel, Index dilation, Rng& rng, Init init);
  Mat forward(const Mat& input, bool want_grad) override;
  Mat backward(const Mat& grad_output) override;

 private:
  Sequential branch_;
};

}  // namespace ambicodec::nn
