#pragma once

#include <memory>
#include <string>
#include <vector>

#include "depthpose/core/rng.hpp"
#include "depthpose/nn/tensor.hpp"

namespace depthpose::nn {

// Named view of a learnable tensor (or a running-stats buffer). Gradients are
// allocated lazily on first use so inference-only models stay light.
struct Param {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
};

enum class Init { GlorotUniform, Normal002, Zero };

class Layer {
 public:
  virtual ~Layer() = default;
  // `train` enables dropout masks, batch statistics, and backward caches.
  virtual Tensor forward(const Tensor& x, bool train) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect_params(const std::string& prefix, std::vector<Param>& out) {
    (void)prefix;
    (void)out;
  }
  virtual void collect_buffers(const std::string& prefix, std::vector<Param>& out) {
    (void)prefix;
    (void)out;
  }
  virtual void set_rng(Rng* rng) { (void)rng; }
  virtual std::string kind() const = 0;
};

class Dense : public Layer {
 public:
  Dense(int in_dim, int out_dim, Rng& rng, Init init = Init::GlorotUniform);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(const std::string& prefix, std::vector<Param>& out) override;
  std::string kind() const override { return "dense"; }

  int in_dim() const { return in_; }
  int out_dim() const { return out_; }
  Tensor weight;  // (out, in)
  Tensor bias;    // (out)
  Tensor grad_weight, grad_bias;

 private:
  int in_, out_;
  Tensor cached_input_;
};

// 2D convolution with symmetric-as-possible padding chosen so that
// out = ceil(in / stride); odd leftover padding goes to the bottom/right.
class Conv2d : public Layer {
 public:
  Conv2d(int in_ch, int out_ch, int kernel, int stride, Rng& rng,
         Init init = Init::GlorotUniform);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(const std::string& prefix, std::vector<Param>& out) override;
  std::string kind() const override { return "conv"; }

  static int out_size(int in, int stride) { return (in + stride - 1) / stride; }

  Tensor weight;  // (out_ch, in_ch * k * k)
  Tensor bias;    // (out_ch)
  Tensor grad_weight, grad_bias;

 private:
  int in_ch_, out_ch_, k_, stride_;
  Tensor cached_input_;
  std::vector<double> col_;  // cached during training for backward
  int in_h_ = 0, in_w_ = 0;
};

// Transposed convolution: exact adjoint of the matching Conv2d, so a stride-2
// instance doubles the resolution that the stride-2 Conv2d would halve.
class ConvTranspose2d : public Layer {
 public:
  ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride, Rng& rng,
                  Init init = Init::GlorotUniform);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(const std::string& prefix, std::vector<Param>& out) override;
  std::string kind() const override { return "convT"; }

  Tensor weight;  // (in_ch, out_ch * k * k)
  Tensor bias;    // (out_ch)
  Tensor grad_weight, grad_bias;

 private:
  int in_ch_, out_ch_, k_, stride_;
  Tensor cached_input_;
};

// 2x2 max pooling, stride 2, floor semantics (a trailing odd row/col is dropped).
class MaxPool2x2 : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "maxpool"; }

 private:
  std::vector<int64_t> argmax_;
  std::vector<int> in_shape_;
};

class Flatten : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "flatten"; }

 private:
  std::vector<int> in_shape_;
};

class Tanh : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "tanh"; }

 private:
  Tensor cached_output_;
};

class Relu : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "relu"; }

 private:
  Tensor cached_input_;
};

class LeakyRelu : public Layer {
 public:
  explicit LeakyRelu(double slope = 0.2) : slope_(slope) {}
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "lrelu"; }

 private:
  double slope_;
  Tensor cached_input_;
};

class Sigmoid : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "sigmoid"; }

 private:
  Tensor cached_output_;
};

// Per-channel batch normalization over (N, H, W); running statistics are
// exponential moving averages (momentum on the old value).
class BatchNorm2d : public Layer {
 public:
  explicit BatchNorm2d(int channels, double momentum = 0.9, double eps = 1e-5);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(const std::string& prefix, std::vector<Param>& out) override;
  void collect_buffers(const std::string& prefix, std::vector<Param>& out) override;
  std::string kind() const override { return "bn"; }

  Tensor gamma, beta;
  Tensor grad_gamma, grad_beta;
  Tensor running_mean, running_var;

 private:
  int ch_;
  double momentum_, eps_;
  Tensor cached_xhat_;
  std::vector<double> batch_inv_std_;
  std::vector<int> in_shape_;
};

// Inverted dropout: active only in training, scaled by 1/(1-rate).
class Dropout : public Layer {
 public:
  explicit Dropout(double rate = 0.5) : rate_(rate) {}
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  void set_rng(Rng* rng) override { rng_ = rng; }
  std::string kind() const override { return "dropout"; }

 private:
  double rate_;
  Rng* rng_ = nullptr;
  std::vector<double> mask_;
};

class Sequential : public Layer {
 public:
  Sequential() = default;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  template <typename L, typename... Args>
  L* emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L* raw = layer.get();
    layers_.push_back(std::move(layer));
    return raw;
  }
  void append(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(const std::string& prefix, std::vector<Param>& out) override;
  void collect_buffers(const std::string& prefix, std::vector<Param>& out) override;
  void set_rng(Rng* rng) override;
  std::string kind() const override { return "sequential"; }

  std::vector<Param> params();   // names rooted at this container
  std::vector<Param> buffers();
  std::vector<Param> params_and_buffers();
  size_t layer_count() const { return layers_.size(); }
  Layer* layer(size_t i) { return layers_[i].get(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Total number of scalar learnable parameters.
int64_t param_count(Sequential& model);

// Ensures grad tensors exist and are zero.
void zero_grads(const std::vector<Param>& params);

}  // namespace depthpose::nn
