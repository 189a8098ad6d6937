#include "ambicodec/nn.hpp"

#include <cmath>

#include "ambicodec/errors.hpp"

namespace ambicodec::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

// Output columns processed per GEMM, bounds transient patch memory.
constexpr Index kBlock = 4096;

void check_spec(const ConvSpec& s) {
  if (s.in_channels < 1 || s.out_channels < 1 || s.kernel < 1 ||
      s.stride < 1 || s.dilation < 1 || s.padding < 0 || s.output_padding < 0)
    throw DataError("invalid convolution geometry");
}

Index tensor_len(const std::vector<Index>& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

void check_weight(const ConvSpec& s, const Tensor& weight, const Tensor& bias,
                  bool transposed) {
  const Index rows = transposed ? s.in_channels : s.out_channels;
  const Index cols = transposed ? s.out_channels : s.in_channels;
  if (weight.shape.size() != 3 || weight.shape[0] != rows ||
      weight.shape[1] != cols || weight.shape[2] != s.kernel)
    throw DataError("convolution weight shape does not match its spec");
  if (bias.shape.size() != 1 || bias.shape[0] != s.out_channels)
    throw DataError("convolution bias shape does not match its spec");
}

// Patch matrix for conv output columns [t0, t1):
// patches(ci * K + k, t - t0) = padded_input(ci, t * stride + k * dilation).
void gather_patches(const ConvSpec& s, const Mat& input, Index t0, Index t1,
                    Mat& patches) {
  const Index len = input.cols();
  patches.setZero(s.in_channels * s.kernel, t1 - t0);
  for (Index t = t0; t < t1; ++t) {
    for (Index k = 0; k < s.kernel; ++k) {
      const Index pos = t * s.stride + k * s.dilation - s.padding;
      if (pos < 0 || pos >= len) continue;
      for (Index ci = 0; ci < s.in_channels; ++ci)
        patches(ci * s.kernel + k, t - t0) = input(ci, pos);
    }
  }
}

void scatter_patches(const ConvSpec& s, const Mat& patches, Index t0, Index t1,
                     Mat& out) {
  const Index len = out.cols();
  for (Index t = t0; t < t1; ++t) {
    for (Index k = 0; k < s.kernel; ++k) {
      const Index pos = t * s.stride + k * s.dilation - s.padding;
      if (pos < 0 || pos >= len) continue;
      for (Index ci = 0; ci < out.rows(); ++ci)
        out(ci, pos) += patches(ci * s.kernel + k, t - t0);
    }
  }
}

void fill_params(Tensor& weight, Tensor& bias, Index fan_in, Rng& rng,
                 Init init) {
  if (init == Init::kLecun) {
    const double std = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Index i = 0; i < weight.size(); ++i) weight.values[i] = rng.normal(0.0, std);
    bias.values.setZero();
  } else {
    for (Index i = 0; i < weight.size(); ++i) weight.values[i] = rng.normal(0.0, 0.02);
    for (Index i = 0; i < bias.size(); ++i) bias.values[i] = rng.normal(0.0, 0.02);
  }
}

}  // namespace

Tensor make_tensor(std::string name, std::vector<Index> shape) {
  Tensor t;
  t.name = std::move(name);
  t.shape = std::move(shape);
  const Index n = tensor_len(t.shape);
  t.values = Arr::Zero(n);
  t.grad = Arr::Zero(n);
  return t;
}

Tensor* ParamStore::add(const std::string& name, std::vector<Index> shape) {
  if (find(name) != nullptr) throw DataError("duplicate parameter name: " + name);
  tensors_.push_back(std::make_unique<Tensor>(make_tensor(name, std::move(shape))));
  return tensors_.back().get();
}

Tensor* ParamStore::find(const std::string& name) {
  for (auto& t : tensors_)
    if (t->name == name) return t.get();
  return nullptr;
}

void ParamStore::zero_grad() {
  for (auto& t : tensors_) t->zero_grad();
}

Index ParamStore::parameter_count() const {
  Index n = 0;
  for (const auto& t : tensors_) n += t->size();
  return n;
}

Index conv1d_output_length(Index len, const ConvSpec& spec) {
  check_spec(spec);
  const Index span = len + 2 * spec.padding - spec.dilation * (spec.kernel - 1) - 1;
  if (span < 0) throw DataError("input shorter than the receptive field");
  return span / spec.stride + 1;
}

Index conv_transpose1d_output_length(Index len, const ConvSpec& spec) {
  check_spec(spec);
  if (len < 1) throw DataError("transposed convolution needs input");
  const Index out = (len - 1) * spec.stride - 2 * spec.padding +
                    spec.dilation * (spec.kernel - 1) + 1 + spec.output_padding;
  if (out < 1) throw DataError("transposed convolution output is empty");
  return out;
}

Mat conv1d_forward(const ConvSpec& spec, const Tensor& weight,
                   const Tensor& bias, const Mat& input) {
  check_weight(spec, weight, bias, false);
  if (input.rows() != spec.in_channels)
    throw DataError("convolution input channel count mismatch");
  const Index out_len = conv1d_output_length(input.cols(), spec);
  ConstRowMap w(weight.values.data(), spec.out_channels,
                spec.in_channels * spec.kernel);
  Mat out(spec.out_channels, out_len);
  Mat patches;
  for (Index t0 = 0; t0 < out_len; t0 += kBlock) {
    const Index t1 = std::min(out_len, t0 + kBlock);
    gather_patches(spec, input, t0, t1, patches);
    out.middleCols(t0, t1 - t0).noalias() = w * patches;
  }
  out.colwise() += Eigen::Map<const Vec>(bias.values.data(), bias.size());
  return out;
}

Mat conv1d_backward(const ConvSpec& spec, Tensor& weight, Tensor& bias,
                    const Mat& input, const Mat& grad_output) {
  check_weight(spec, weight, bias, false);
  const Index out_len = conv1d_output_length(input.cols(), spec);
  if (grad_output.rows() != spec.out_channels || grad_output.cols() != out_len)
    throw DataError("convolution output gradient shape mismatch");
  ConstRowMap w(weight.values.data(), spec.out_channels,
                spec.in_channels * spec.kernel);
  RowMap gw(weight.grad.data(), spec.out_channels,
            spec.in_channels * spec.kernel);
  Eigen::Map<Vec>(bias.grad.data(), bias.size()) +=
      grad_output.rowwise().sum();

  Mat grad_input = Mat::Zero(spec.in_channels, input.cols());
  Mat patches, cols;
  for (Index t0 = 0; t0 < out_len; t0 += kBlock) {
    const Index t1 = std::min(out_len, t0 + kBlock);
    gather_patches(spec, input, t0, t1, patches);
    gw.noalias() += grad_output.middleCols(t0, t1 - t0) * patches.transpose();
    cols.noalias() = w.transpose() * grad_output.middleCols(t0, t1 - t0);
    scatter_patches(spec, cols, t0, t1, grad_input);
  }
  return grad_input;
}

Mat conv_transpose1d_forward(const ConvSpec& spec, const Tensor& weight,
                             const Tensor& bias, const Mat& input) {
  check_weight(spec, weight, bias, true);
  if (input.rows() != spec.in_channels)
    throw DataError("convolution input channel count mismatch");
  const Index out_len = conv_transpose1d_output_length(input.cols(), spec);
  ConstRowMap w(weight.values.data(), spec.in_channels,
                spec.out_channels * spec.kernel);
  // Scatter: out(co, t*stride + k*dilation - padding) += cols(co*K + k, t).
  // scatter_patches realizes exactly this with a stride-1, padding=p view
  // if we reinterpret its index formula; reuse it with a forward spec whose
  // in_channels stand for out channels.
  ConvSpec scatter_spec = spec;
  scatter_spec.in_channels = spec.out_channels;
  Mat out = Mat::Zero(spec.out_channels, out_len);
  Mat cols;
  for (Index t0 = 0; t0 < input.cols(); t0 += kBlock) {
    const Index t1 = std::min(input.cols(), t0 + kBlock);
    cols.noalias() = w.transpose() * input.middleCols(t0, t1 - t0);
    scatter_patches(scatter_spec, cols, t0, t1, out);
  }
  out.colwise() += Eigen::Map<const Vec>(bias.values.data(), bias.size());
  return out;
}

Mat conv_transpose1d_backward(const ConvSpec& spec, Tensor& weight,
                              Tensor& bias, const Mat& input,
                              const Mat& grad_output) {
  check_weight(spec, weight, bias, true);
  const Index out_len = conv_transpose1d_output_length(input.cols(), spec);
  if (grad_output.rows() != spec.out_channels || grad_output.cols() != out_len)
    throw DataError("convolution output gradient shape mismatch");
  ConstRowMap w(weight.values.data(), spec.in_channels,
                spec.out_channels * spec.kernel);
  RowMap gw(weight.grad.data(), spec.in_channels,
            spec.out_channels * spec.kernel);
  Eigen::Map<Vec>(bias.grad.data(), bias.size()) +=
      grad_output.rowwise().sum();

  ConvSpec gather_spec = spec;
  gather_spec.in_channels = spec.out_channels;
  Mat grad_input(spec.in_channels, input.cols());
  Mat patches;
  for (Index t0 = 0; t0 < input.cols(); t0 += kBlock) {
    const Index t1 = std::min(input.cols(), t0 + kBlock);
    // patches(co*K + k, t) = grad_output(co, t*stride + k*dilation - padding)
    gather_patches(gather_spec, grad_output, t0, t1, patches);
    grad_input.middleCols(t0, t1 - t0).noalias() = w * patches;
    gw.noalias() += input.middleCols(t0, t1 - t0) * patches.transpose();
  }
  return grad_input;
}

Mat snake_forward(const Mat& input, const Tensor& alpha) {
  if (alpha.shape.size() != 1 || alpha.shape[0] != input.rows())
    throw DataError("snake alpha must have one entry per channel");
  Mat out(input.rows(), input.cols());
  for (Index c = 0; c < input.rows(); ++c) {
    const double a = alpha.values[c];
    const double inv = 1.0 / (a + 1e-9);
    for (Index t = 0; t < input.cols(); ++t) {
      const double s = std::sin(a * input(c, t));
      out(c, t) = input(c, t) + s * s * inv;
    }
  }
  return out;
}

Mat snake_backward(const Mat& input, Tensor& alpha, const Mat& grad_output) {
  if (grad_output.rows() != input.rows() || grad_output.cols() != input.cols())
    throw DataError("snake gradient shape mismatch");
  Mat grad_input(input.rows(), input.cols());
  for (Index c = 0; c < input.rows(); ++c) {
    const double a = alpha.values[c];
    const double inv = 1.0 / (a + 1e-9);
    double ga = 0.0;
    for (Index t = 0; t < input.cols(); ++t) {
      const double x = input(c, t);
      const double s = std::sin(a * x);
      const double s2 = std::sin(2.0 * a * x);
      const double g = grad_output(c, t);
      grad_input(c, t) = g * (1.0 + a * inv * s2);
      ga += g * (x * s2 * inv - s * s * inv * inv);
    }
    alpha.grad[c] += ga;
  }
  return grad_input;
}

Conv1d::Conv1d(const ConvSpec& spec, Tensor* weight, Tensor* bias)
    : spec_(spec), weight_(weight), bias_(bias) {
  check_weight(spec_, *weight_, *bias_, false);
}

Conv1d* Conv1d::create(ParamStore& store, const std::string& name,
                       const ConvSpec& spec, Rng& rng, Init init) {
  Tensor* w = store.add(name + ".weight",
                        {spec.out_channels, spec.in_channels, spec.kernel});
  Tensor* b = store.add(name + ".bias", {spec.out_channels});
  fill_params(*w, *b, spec.in_channels * spec.kernel, rng, init);
  return new Conv1d(spec, w, b);
}

Mat Conv1d::forward(const Mat& input, bool want_grad) {
  if (want_grad) cached_input_ = input;
  return conv1d_forward(spec_, *weight_, *bias_, input);
}

Mat Conv1d::backward(const Mat& grad_output) {
  return conv1d_backward(spec_, *weight_, *bias_, cached_input_, grad_output);
}

ConvTranspose1d::ConvTranspose1d(const ConvSpec& spec, Tensor* weight,
                                 Tensor* bias)
    : spec_(spec), weight_(weight), bias_(bias) {
  check_weight(spec_, *weight_, *bias_, true);
}

ConvTranspose1d* ConvTranspose1d::create(ParamStore& store,
                                         const std::string& name,
                                         const ConvSpec& spec, Rng& rng,
                                         Init init) {
  Tensor* w = store.add(name + ".weight",
                        {spec.in_channels, spec.out_channels, spec.kernel});
  Tensor* b = store.add(name + ".bias", {spec.out_channels});
  fill_params(*w, *b, spec.in_channels * spec.kernel, rng, init);
  return new ConvTranspose1d(spec, w, b);
}

Mat ConvTranspose1d::forward(const Mat& input, bool want_grad) {
  if (want_grad) cached_input_ = input;
  return conv_transpose1d_forward(spec_, *weight_, *bias_, input);
}

Mat ConvTranspose1d::backward(const Mat& grad_output) {
  return conv_transpose1d_backward(spec_, *weight_, *bias_, cached_input_,
                                   grad_output);
}

Snake* Snake::create(ParamStore& store, const std::string& name,
                     Index channels) {
  Tensor* a = store.add(name + ".alpha", {channels});
  a->values.setOnes();
  return new Snake(a);
}

Mat Snake::forward(const Mat& input, bool want_grad) {
  if (want_grad) cached_input_ = input;
  return snake_forward(input, *alpha_);
}

Mat Snake::backward(const Mat& grad_output) {
  return snake_backward(cached_input_, *alpha_, grad_output);
}

Mat LeakyRelu::forward(const Mat& input, bool want_grad) {
  if (want_grad) cached_input_ = input;
  return input.unaryExpr(
      [s = slope_](double v) { return v > 0.0 ? v : s * v; });
}

Mat LeakyRelu::backward(const Mat& grad_output) {
  return grad_output.binaryExpr(cached_input_, [s = slope_](double g, double x) {
    return x > 0.0 ? g : s * g;
  });
}

Mat AvgPool1d::forward(const Mat& input, bool want_grad) {
  if (factor_ < 1) throw DataError("pooling factor must be positive");
  cached_len_ = input.cols();
  cached_channels_ = input.rows();
  (void)want_grad;
  if (factor_ == 1) return input;
  const Index out_len = input.cols() / factor_;
  if (out_len < 1) throw DataError("input shorter than the pooling factor");
  Mat out = Mat::Zero(input.rows(), out_len);
  for (Index t = 0; t < out_len; ++t) {
    for (Index k = 0; k < factor_; ++k) out.col(t) += input.col(t * factor_ + k);
  }
  return out / static_cast<double>(factor_);
}

Mat AvgPool1d::backward(const Mat& grad_output) {
  if (factor_ == 1) return grad_output;
  Mat grad = Mat::Zero(cached_channels_, cached_len_);
  const double inv = 1.0 / static_cast<double>(factor_);
  for (Index t = 0; t < grad_output.cols(); ++t)
    for (Index k = 0; k < factor_; ++k)
      grad.col(t * factor_ + k) = grad_output.col(t) * inv;
  return grad;
}

Layer* Sequential::append(const std::string& name,
                          std::unique_ptr<Layer> layer, bool feature_tap) {
  entries_.push_back({name, std::move(layer), feature_tap});
  return entries_.back().layer.get();
}

Mat Sequential::forward(const Mat& input, bool want_grad, bool want_features) {
  features_.clear();
  Mat x = input;
  for (Entry& e : entries_) {
    x = e.layer->forward(x, want_grad);
    if (!x.allFinite())
      throw NumericError("non-finite activations after layer " + e.name);
    if (want_features && e.feature_tap) features_.push_back(x);
  }
  return x;
}

Mat Sequential::backward(const Mat& grad_output) {
  return backward_with_features(grad_output, {});
}

Mat Sequential::backward_with_features(const Mat& grad_output,
                                       const std::vector<Mat>& grad_features) {
  if (!grad_features.empty() && grad_features.size() != feature_count())
    throw DataError("feature gradient count mismatch");
  Mat g = grad_output;
  size_t tap = feature_count();
  for (size_t i = entries_.size(); i > 0; --i) {
    Entry& e = entries_[i - 1];
    if (e.feature_tap && !grad_features.empty()) {
      --tap;
      g += grad_features[tap];
    }
    g = e.layer->backward(g);
  }
  return g;
}

size_t Sequential::feature_count() const {
  size_t n = 0;
  for (const Entry& e : entries_)
    if (e.feature_tap) ++n;
  return n;
}

ResidualUnit::ResidualUnit(ParamStore& store, const std::string& name,
                           Index channels, Index kernel, Index dilation,
                           Rng& rng, Init init) {
  ConvSpec dilated{channels, channels, kernel, 1, dilation,
                   dilation * (kernel - 1) / 2};
  ConvSpec pointwise{channels, channels, 1, 1, 1, 0};
  branch_.append(name + ".snake1",
                 std::unique_ptr<Layer>(Snake::create(store, name + ".snake1", channels)));
  branch_.append(name + ".conv1",
                 std::unique_ptr<Layer>(Conv1d::create(store, name + ".conv1", dilated, rng, init)));
  branch_.append(name + ".snake2",
                 std::unique_ptr<Layer>(Snake::create(store, name + ".snake2", channels)));
  branch_.append(name + ".conv2",
                 std::unique_ptr<Layer>(Conv1d::create(store, name + ".conv2", pointwise, rng, init)));
}

Mat ResidualUnit::forward(const Mat& input, bool want_grad) {
  return input + branch_.forward(input, want_grad);
}

Mat ResidualUnit::backward(const Mat& grad_output) {
  return grad_output + branch_.backward(grad_output);
}

}  // namespace ambicodec::nn
