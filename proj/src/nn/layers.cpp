#include "depthpose/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "depthpose/core/errors.hpp"

namespace depthpose::nn {

namespace {

struct ConvGeom {
  int in_h, in_w, k, stride;
  int out_h, out_w;
  int pad_top, pad_left;
};

ConvGeom make_geom(int in_h, int in_w, int k, int stride) {
  ConvGeom g;
  g.in_h = in_h;
  g.in_w = in_w;
  g.k = k;
  g.stride = stride;
  g.out_h = (in_h + stride - 1) / stride;
  g.out_w = (in_w + stride - 1) / stride;
  const int pad_h = std::max((g.out_h - 1) * stride + k - in_h, 0);
  const int pad_w = std::max((g.out_w - 1) * stride + k - in_w, 0);
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  return g;
}

// col layout: (channels * k * k) rows, (out_h * out_w) columns.
void im2col(const double* src, int channels, const ConvGeom& g, double* col) {
  const int ohw = g.out_h * g.out_w;
  for (int c = 0; c < channels; ++c) {
    const double* plane = src + static_cast<int64_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        double* row = col + (static_cast<int64_t>(c) * g.k * g.k + ky * g.k + kx) * ohw;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int sy = oy * g.stride - g.pad_top + ky;
          if (sy < 0 || sy >= g.in_h) {
            std::fill(row + oy * g.out_w, row + (oy + 1) * g.out_w, 0.0);
            continue;
          }
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int sx = ox * g.stride - g.pad_left + kx;
            row[oy * g.out_w + ox] =
                (sx < 0 || sx >= g.in_w) ? 0.0 : plane[sy * g.in_w + sx];
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, int channels, const ConvGeom& g, double* dst) {
  const int ohw = g.out_h * g.out_w;
  for (int c = 0; c < channels; ++c) {
    double* plane = dst + static_cast<int64_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const double* row =
            col + (static_cast<int64_t>(c) * g.k * g.k + ky * g.k + kx) * ohw;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int sy = oy * g.stride - g.pad_top + ky;
          if (sy < 0 || sy >= g.in_h) continue;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int sx = ox * g.stride - g.pad_left + kx;
            if (sx < 0 || sx >= g.in_w) continue;
            plane[sy * g.in_w + sx] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

void init_tensor(Tensor& t, Rng& rng, Init init, int fan_in, int fan_out) {
  switch (init) {
    case Init::GlorotUniform: {
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (double& x : t.v) x = rng.uniform(-limit, limit);
      break;
    }
    case Init::Normal002:
      for (double& x : t.v) x = rng.normal(0.0, 0.02);
      break;
    case Init::Zero:
      break;
  }
}

void ensure_grad(Tensor& grad, const Tensor& value) {
  if (grad.shape != value.shape) {
    grad.shape = value.shape;
    grad.v.assign(value.v.size(), 0.0);
  }
}

}  // namespace

// ---------------------------------------------------------------- Dense

Dense::Dense(int in_dim, int out_dim, Rng& rng, Init init)
    : weight({out_dim, in_dim}), bias({out_dim}), in_(in_dim), out_(out_dim) {
  init_tensor(weight, rng, init, in_dim, out_dim);
}

Tensor Dense::forward(const Tensor& x, bool train) {
  if (x.rank() != 2 || x.dim(1) != in_)
    throw ShapeMismatch("dense input shape mismatch");
  const int n = x.dim(0);
  Tensor y({n, out_});
  gemm(false, true, n, out_, in_, 1.0, x.data(), in_, weight.data(), in_, 0.0,
       y.data(), out_);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < out_; ++j) y.v[static_cast<size_t>(i) * out_ + j] += bias.v[j];
  if (train) cached_input_ = x;
  return y;
}

Tensor Dense::backward(const Tensor& g) {
  const int n = g.dim(0);
  ensure_grad(grad_weight, weight);
  ensure_grad(grad_bias, bias);
  gemm(true, false, out_, in_, n, 1.0, g.data(), out_, cached_input_.data(), in_,
       1.0, grad_weight.data(), in_);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < out_; ++j) grad_bias.v[j] += g.v[static_cast<size_t>(i) * out_ + j];
  Tensor gx({n, in_});
  gemm(false, false, n, in_, out_, 1.0, g.data(), out_, weight.data(), in_, 0.0,
       gx.data(), in_);
  return gx;
}

void Dense::collect_params(const std::string& prefix, std::vector<Param>& out) {
  out.push_back({prefix + ".weight", &weight, &grad_weight});
  out.push_back({prefix + ".bias", &bias, &grad_bias});
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_ch, int out_ch, int kernel, int stride, Rng& rng, Init init)
    : weight({out_ch, in_ch * kernel * kernel}),
      bias({out_ch}),
      in_ch_(in_ch),
      out_ch_(out_ch),
      k_(kernel),
      stride_(stride) {
  init_tensor(weight, rng, init, in_ch * kernel * kernel, out_ch * kernel * kernel);
}

Tensor Conv2d::forward(const Tensor& x, bool train) {
  if (x.rank() != 4 || x.dim(1) != in_ch_)
    throw ShapeMismatch("conv input shape mismatch");
  const int n = x.dim(0);
  in_h_ = x.dim(2);
  in_w_ = x.dim(3);
  const ConvGeom g = make_geom(in_h_, in_w_, k_, stride_);
  const int ohw = g.out_h * g.out_w;
  const int ckk = in_ch_ * k_ * k_;
  Tensor y({n, out_ch_, g.out_h, g.out_w});

  std::vector<double> scratch;
  std::vector<double>* colbuf = &scratch;
  if (train) {
    col_.resize(static_cast<size_t>(n) * ckk * ohw);
    colbuf = &col_;
  } else {
    scratch.resize(static_cast<size_t>(ckk) * ohw);
  }

  for (int i = 0; i < n; ++i) {
    double* col = train ? colbuf->data() + static_cast<size_t>(i) * ckk * ohw
                        : colbuf->data();
    im2col(x.data() + static_cast<int64_t>(i) * in_ch_ * in_h_ * in_w_, in_ch_, g, col);
    double* out = y.data() + static_cast<int64_t>(i) * out_ch_ * ohw;
    gemm(false, false, out_ch_, ohw, ckk, 1.0, weight.data(), ckk, col, ohw, 0.0,
         out, ohw);
    for (int oc = 0; oc < out_ch_; ++oc) {
      const double b = bias.v[oc];
      double* plane = out + static_cast<int64_t>(oc) * ohw;
      for (int p = 0; p < ohw; ++p) plane[p] += b;
    }
  }
  if (train) cached_input_ = x;
  return y;
}

Tensor Conv2d::backward(const Tensor& gy) {
  const int n = gy.dim(0);
  const ConvGeom g = make_geom(in_h_, in_w_, k_, stride_);
  const int ohw = g.out_h * g.out_w;
  const int ckk = in_ch_ * k_ * k_;
  ensure_grad(grad_weight, weight);
  ensure_grad(grad_bias, bias);
  Tensor gx({n, in_ch_, in_h_, in_w_});
  std::vector<double> gcol(static_cast<size_t>(ckk) * ohw);
  for (int i = 0; i < n; ++i) {
    const double* gout = gy.data() + static_cast<int64_t>(i) * out_ch_ * ohw;
    const double* col = col_.data() + static_cast<size_t>(i) * ckk * ohw;
    gemm(false, true, out_ch_, ckk, ohw, 1.0, gout, ohw, col, ohw, 1.0,
         grad_weight.data(), ckk);
    for (int oc = 0; oc < out_ch_; ++oc) {
      double s = 0.0;
      const double* plane = gout + static_cast<int64_t>(oc) * ohw;
      for (int p = 0; p < ohw; ++p) s += plane[p];
      grad_bias.v[oc] += s;
    }
    gemm(true, false, ckk, ohw, out_ch_, 1.0, weight.data(), ckk, gout, ohw, 0.0,
         gcol.data(), ohw);
    col2im_add(gcol.data(), in_ch_, g,
               gx.data() + static_cast<int64_t>(i) * in_ch_ * in_h_ * in_w_);
  }
  return gx;
}

void Conv2d::collect_params(const std::string& prefix, std::vector<Param>& out) {
  out.push_back({prefix + ".weight", &weight, &grad_weight});
  out.push_back({prefix + ".bias", &bias, &grad_bias});
}

// ------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride,
                                 Rng& rng, Init init)
    : weight({in_ch, out_ch * kernel * kernel}),
      bias({out_ch}),
      in_ch_(in_ch),
      out_ch_(out_ch),
      k_(kernel),
      stride_(stride) {
  init_tensor(weight, rng, init, in_ch * kernel * kernel, out_ch * kernel * kernel);
}

Tensor ConvTranspose2d::forward(const Tensor& x, bool train) {
  if (x.rank() != 4 || x.dim(1) != in_ch_)
    throw ShapeMismatch("convT input shape mismatch");
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int oh = h * stride_, ow = w * stride_;
  const ConvGeom g = make_geom(oh, ow, k_, stride_);  // adjoint of (oh,ow)->(h,w)
  const int hw = h * w;
  const int okk = out_ch_ * k_ * k_;
  Tensor y({n, out_ch_, oh, ow});
  std::vector<double> colg(static_cast<size_t>(okk) * hw);
  for (int i = 0; i < n; ++i) {
    const double* xin = x.data() + static_cast<int64_t>(i) * in_ch_ * hw;
    gemm(true, false, okk, hw, in_ch_, 1.0, weight.data(), okk, xin, hw, 0.0,
         colg.data(), hw);
    double* out = y.data() + static_cast<int64_t>(i) * out_ch_ * oh * ow;
    col2im_add(colg.data(), out_ch_, g, out);
    for (int oc = 0; oc < out_ch_; ++oc) {
      const double b = bias.v[oc];
      double* plane = out + static_cast<int64_t>(oc) * oh * ow;
      for (int p = 0; p < oh * ow; ++p) plane[p] += b;
    }
  }
  if (train) cached_input_ = x;
  return y;
}

Tensor ConvTranspose2d::backward(const Tensor& gy) {
  const int n = gy.dim(0);
  const int oh = gy.dim(2), ow = gy.dim(3);
  const int h = oh / stride_, w = ow / stride_;
  const ConvGeom g = make_geom(oh, ow, k_, stride_);
  const int hw = h * w;
  const int okk = out_ch_ * k_ * k_;
  ensure_grad(grad_weight, weight);
  ensure_grad(grad_bias, bias);
  Tensor gx({n, in_ch_, h, w});
  std::vector<double> gcol(static_cast<size_t>(okk) * hw);
  for (int i = 0; i < n; ++i) {
    const double* gout = gy.data() + static_cast<int64_t>(i) * out_ch_ * oh * ow;
    im2col(gout, out_ch_, g, gcol.data());
    const double* xin = cached_input_.data() + static_cast<int64_t>(i) * in_ch_ * hw;
    gemm(false, true, in_ch_, okk, hw, 1.0, xin, hw, gcol.data(), hw, 1.0,
         grad_weight.data(), okk);
    gemm(false, false, in_ch_, hw, okk, 1.0, weight.data(), okk, gcol.data(), hw,
         0.0, gx.data() + static_cast<int64_t>(i) * in_ch_ * hw, hw);
    for (int oc = 0; oc < out_ch_; ++oc) {
      double s = 0.0;
      const double* plane = gout + static_cast<int64_t>(oc) * oh * ow;
      for (int p = 0; p < oh * ow; ++p) s += plane[p];
      grad_bias.v[oc] += s;
    }
  }
  return gx;
}

void ConvTranspose2d::collect_params(const std::string& prefix,
                                     std::vector<Param>& out) {
  out.push_back({prefix + ".weight", &weight, &grad_weight});
  out.push_back({prefix + ".bias", &bias, &grad_bias});
}

// ------------------------------------------------------------- MaxPool2x2

Tensor MaxPool2x2::forward(const Tensor& x, bool) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = h / 2, ow = w / 2;
  in_shape_ = x.shape;
  Tensor y({n, c, oh, ow});
  argmax_.assign(y.v.size(), 0);
  for (int i = 0; i < n * c; ++i) {
    const double* src = x.data() + static_cast<int64_t>(i) * h * w;
    double* dst = y.data() + static_cast<int64_t>(i) * oh * ow;
    int64_t* amax = argmax_.data() + static_cast<int64_t>(i) * oh * ow;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        int64_t best_idx = (2 * oy) * w + 2 * ox;
        double best = src[best_idx];
        for (int ky = 0; ky < 2; ++ky)
          for (int kx = 0; kx < 2; ++kx) {
            const int64_t idx = (2 * oy + ky) * w + 2 * ox + kx;
            if (src[idx] > best) {
              best = src[idx];
              best_idx = idx;
            }
          }
        dst[oy * ow + ox] = best;
        amax[oy * ow + ox] = best_idx;
      }
  }
  return y;
}

Tensor MaxPool2x2::backward(const Tensor& gy) {
  Tensor gx(in_shape_);
  const int h = in_shape_[2], w = in_shape_[3];
  const int oh = gy.dim(2), ow = gy.dim(3);
  const int planes = gy.dim(0) * gy.dim(1);
  for (int i = 0; i < planes; ++i) {
    const double* g = gy.data() + static_cast<int64_t>(i) * oh * ow;
    const int64_t* amax = argmax_.data() + static_cast<int64_t>(i) * oh * ow;
    double* dst = gx.data() + static_cast<int64_t>(i) * h * w;
    for (int p = 0; p < oh * ow; ++p) dst[amax[p]] += g[p];
  }
  return gx;
}

// ---------------------------------------------------------------- Flatten

Tensor Flatten::forward(const Tensor& x, bool) {
  in_shape_ = x.shape;
  Tensor y = x;
  const int n = x.dim(0);
  y.shape = {n, static_cast<int>(x.numel() / n)};
  return y;
}

Tensor Flatten::backward(const Tensor& gy) {
  Tensor gx = gy;
  gx.shape = in_shape_;
  return gx;
}

// ------------------------------------------------------------ activations

Tensor Tanh::forward(const Tensor& x, bool train) {
  Tensor y = x;
  for (double& v : y.v) v = std::tanh(v);
  if (train) cached_output_ = y;
  return y;
}

Tensor Tanh::backward(const Tensor& gy) {
  Tensor gx = gy;
  for (size_t i = 0; i < gx.v.size(); ++i)
    gx.v[i] *= 1.0 - cached_output_.v[i] * cached_output_.v[i];
  return gx;
}

Tensor Relu::forward(const Tensor& x, bool train) {
  Tensor y = x;
  for (double& v : y.v) v = v > 0.0 ? v : 0.0;
  if (train) cached_input_ = x;
  return y;
}

Tensor Relu::backward(const Tensor& gy) {
  Tensor gx = gy;
  for (size_t i = 0; i < gx.v.size(); ++i)
    if (cached_input_.v[i] <= 0.0) gx.v[i] = 0.0;
  return gx;
}

Tensor LeakyRelu::forward(const Tensor& x, bool train) {
  Tensor y = x;
  for (double& v : y.v) v = v > 0.0 ? v : slope_ * v;
  if (train) cached_input_ = x;
  return y;
}

Tensor LeakyRelu::backward(const Tensor& gy) {
  Tensor gx = gy;
  for (size_t i = 0; i < gx.v.size(); ++i)
    if (cached_input_.v[i] <= 0.0) gx.v[i] *= slope_;
  return gx;
}

Tensor Sigmoid::forward(const Tensor& x, bool train) {
  Tensor y = x;
  for (double& v : y.v) v = 1.0 / (1.0 + std::exp(-v));
  if (train) cached_output_ = y;
  return y;
}

Tensor Sigmoid::backward(const Tensor& gy) {
  Tensor gx = gy;
  for (size_t i = 0; i < gx.v.size(); ++i)
    gx.v[i] *= cached_output_.v[i] * (1.0 - cached_output_.v[i]);
  return gx;
}

// ------------------------------------------------------------ BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels, double momentum, double eps)
    : gamma({channels}),
      beta({channels}),
      running_mean({channels}),
      running_var({channels}),
      ch_(channels),
      momentum_(momentum),
      eps_(eps) {
  std::fill(gamma.v.begin(), gamma.v.end(), 1.0);
  std::fill(running_var.v.begin(), running_var.v.end(), 1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool train) {
  if (x.rank() != 4 || x.dim(1) != ch_) throw ShapeMismatch("bn shape mismatch");
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int64_t m = static_cast<int64_t>(n) * h * w;
  in_shape_ = x.shape;
  Tensor y(x.shape);
  batch_inv_std_.assign(ch_, 0.0);
  if (train) cached_xhat_ = Tensor(x.shape);
  for (int c = 0; c < ch_; ++c) {
    double mean, var;
    if (train) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        const double* plane = x.data() + ((static_cast<int64_t>(i) * ch_ + c) * h * w);
        for (int p = 0; p < h * w; ++p) s += plane[p];
      }
      mean = s / static_cast<double>(m);
      double sv = 0.0;
      for (int i = 0; i < n; ++i) {
        const double* plane = x.data() + ((static_cast<int64_t>(i) * ch_ + c) * h * w);
        for (int p = 0; p < h * w; ++p) {
          const double d = plane[p] - mean;
          sv += d * d;
        }
      }
      var = sv / static_cast<double>(m);
      running_mean.v[c] = momentum_ * running_mean.v[c] + (1.0 - momentum_) * mean;
      running_var.v[c] = momentum_ * running_var.v[c] + (1.0 - momentum_) * var;
    } else {
      mean = running_mean.v[c];
      var = running_var.v[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + eps_);
    batch_inv_std_[c] = inv_std;
    const double g = gamma.v[c], b = beta.v[c];
    for (int i = 0; i < n; ++i) {
      const int64_t off = (static_cast<int64_t>(i) * ch_ + c) * h * w;
      const double* src = x.data() + off;
      double* dst = y.data() + off;
      for (int p = 0; p < h * w; ++p) {
        const double xh = (src[p] - mean) * inv_std;
        if (train) cached_xhat_.v[off + p] = xh;
        dst[p] = g * xh + b;
      }
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& gy) {
  const int n = in_shape_[0], h = in_shape_[2], w = in_shape_[3];
  const double m = static_cast<double>(static_cast<int64_t>(n) * h * w);
  ensure_grad(grad_gamma, gamma);
  ensure_grad(grad_beta, beta);
  Tensor gx(in_shape_);
  for (int c = 0; c < ch_; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (int i = 0; i < n; ++i) {
      const int64_t off = (static_cast<int64_t>(i) * ch_ + c) * h * w;
      for (int p = 0; p < h * w; ++p) {
        sum_g += gy.v[off + p];
        sum_gx += gy.v[off + p] * cached_xhat_.v[off + p];
      }
    }
    grad_gamma.v[c] += sum_gx;
    grad_beta.v[c] += sum_g;
    const double scale = gamma.v[c] * batch_inv_std_[c];
    const double mean_g = sum_g / m;
    const double mean_gx = sum_gx / m;
    for (int i = 0; i < n; ++i) {
      const int64_t off = (static_cast<int64_t>(i) * ch_ + c) * h * w;
      for (int p = 0; p < h * w; ++p)
        gx.v[off + p] =
            scale * (gy.v[off + p] - mean_g - cached_xhat_.v[off + p] * mean_gx);
    }
  }
  return gx;
}

void BatchNorm2d::collect_params(const std::string& prefix, std::vector<Param>& out) {
  out.push_back({prefix + ".gamma", &gamma, &grad_gamma});
  out.push_back({prefix + ".beta", &beta, &grad_beta});
}

void BatchNorm2d::collect_buffers(const std::string& prefix, std::vector<Param>& out) {
  out.push_back({prefix + ".running_mean", &running_mean, nullptr});
  out.push_back({prefix + ".running_var", &running_var, nullptr});
}

// ---------------------------------------------------------------- Dropout

Tensor Dropout::forward(const Tensor& x, bool train) {
  if (!train || rate_ <= 0.0) {
    mask_.clear();
    return x;
  }
  if (rng_ == nullptr) throw ConfigError("dropout used in training without an rng");
  Tensor y = x;
  mask_.resize(x.v.size());
  const double keep = 1.0 - rate_;
  const double scale = 1.0 / keep;
  for (size_t i = 0; i < y.v.size(); ++i) {
    mask_[i] = rng_->uniform() < keep ? scale : 0.0;
    y.v[i] *= mask_[i];
  }
  return y;
}

Tensor Dropout::backward(const Tensor& gy) {
  if (mask_.empty()) return gy;
  Tensor gx = gy;
  for (size_t i = 0; i < gx.v.size(); ++i) gx.v[i] *= mask_[i];
  return gx;
}

// ------------------------------------------------------------- Sequential

Tensor Sequential::forward(const Tensor& x, bool train) {
  Tensor cur = x;
  for (auto& l : layers_) cur = l->forward(cur, train);
  return cur;
}

Tensor Sequential::backward(const Tensor& gy) {
  Tensor cur = gy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
    cur = (*it)->backward(cur);
  return cur;
}

void Sequential::collect_params(const std::string& prefix, std::vector<Param>& out) {
  for (size_t i = 0; i < layers_.size(); ++i) {
    const std::string p = prefix.empty() ? std::to_string(i) : prefix + "." + std::to_string(i);
    layers_[i]->collect_params(p, out);
  }
}

void Sequential::collect_buffers(const std::string& prefix, std::vector<Param>& out) {
  for (size_t i = 0; i < layers_.size(); ++i) {
    const std::string p = prefix.empty() ? std::to_string(i) : prefix + "." + std::to_string(i);
    layers_[i]->collect_buffers(p, out);
  }
}

void Sequential::set_rng(Rng* rng) {
  for (auto& l : layers_) l->set_rng(rng);
}

std::vector<Param> Sequential::params() {
  std::vector<Param> out;
  collect_params("", out);
  return out;
}

std::vector<Param> Sequential::buffers() {
  std::vector<Param> out;
  collect_buffers("", out);
  return out;
}

std::vector<Param> Sequential::params_and_buffers() {
  std::vector<Param> out;
  collect_params("", out);
  collect_buffers("", out);
  return out;
}

int64_t param_count(Sequential& model) {
  int64_t n = 0;
  for (const Param& p : model.params()) n += p.value->numel();
  return n;
}

void zero_grads(const std::vector<Param>& params) {
  for (const Param& p : params) {
    if (p.grad == nullptr) continue;
    if (p.grad->shape != p.value->shape) {
      p.grad->shape = p.value->shape;
      p.grad->v.assign(p.value->v.size(), 0.0);
    } else {
      std::fill(p.grad->v.begin(), p.grad->v.end(), 0.0);
    }
  }
}

}  // namespace depthpose::nn
