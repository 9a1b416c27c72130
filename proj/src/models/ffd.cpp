#include "depthpose/models/ffd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <utility>

#include "depthpose/core/errors.hpp"
#include "depthpose/dataio/preprocess.hpp"
#include "depthpose/nn/optim.hpp"
#include "depthpose/nn/tensor.hpp"

namespace depthpose::models {





using nn::Tensor;

namespace {

bool power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

double clamp_prob(double p) {
  return std::min(1.0 - 1e-7, std::max(1e-7, p));
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.shape.size() != 4 || b.shape.size() != 4 || a.shape[0] != b.shape[0] ||
      a.shape[2] != b.shape[2] || a.shape[3] != b.shape[3])
    throw ShapeMismatch("channel concat needs matching batch and spatial dims");
  const int n = a.shape[0];
  const size_t plane = static_cast<size_t>(a.shape[2]) * a.shape[3];
  const size_t ca = static_cast<size_t>(a.shape[1]) * plane;
  const size_t cb = static_cast<size_t>(b.shape[1]) * plane;
  Tensor out({n, a.shape[1] + b.shape[1], a.shape[2], a.shape[3]});
  for (int i = 0; i < n; ++i) {
    std::copy_n(a.v.begin() + i * ca, ca, out.v.begin() + i * (ca + cb));
    std::copy_n(b.v.begin() + i * cb, cb, out.v.begin() + i * (ca + cb) + ca);
  }
  return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& x, int ch_a) {
  const int n = x.shape[0], ch_b = x.shape[1] - ch_a;
  const size_t plane = static_cast<size_t>(x.shape[2]) * x.shape[3];
  const size_t ca = static_cast<size_t>(ch_a) * plane;
  const size_t cb = static_cast<size_t>(ch_b) * plane;
  Tensor a({n, ch_a, x.shape[2], x.shape[3]});
  Tensor b({n, ch_b, x.shape[2], x.shape[3]});
  for (int i = 0; i < n; ++i) {
    std::copy_n(x.v.begin() + i * (ca + cb), ca, a.v.begin() + i * ca);
    std::copy_n(x.v.begin() + i * (ca + cb) + ca, cb, b.v.begin() + i * cb);
  }
  return {std::move(a), std::move(b)};
}

// Real-side and fake-side gradients are independent, which lets the training
// loop run backward right after each discriminator forward.
Tensor d_real_grad(const Tensor& d_real, double smooth) {
  Tensor g = d_real;
  const double n = static_cast<double>(d_real.v.size());
  for (size_t i = 0; i < g.v.size(); ++i)
    g.v[i] = -smooth / (n * clamp_prob(d_real.v[i]));
  return g;
}

Tensor d_fake_grad(const Tensor& d_fake) {
  Tensor g = d_fake;
  const double n = static_cast<double>(d_fake.v.size());
  for (size_t i = 0; i < g.v.size(); ++i)
    g.v[i] = 1.0 / (n * (1.0 - clamp_prob(d_fake.v[i])));
  return g;
}

}  // namespace

GeneratorConfig desk_generator_config() {
  GeneratorConfig cfg;
  cfg.encoder_filters = {8, 16, 32, 64};
  cfg.decoder_filters = {32, 16, 8, 8};
  cfg.convs_per_stage = 1;
  return cfg;
}

DiscriminatorConfig desk_discriminator_config() {
  DiscriminatorConfig cfg;
  cfg.filters = {8, 16, 32, 64};
  return cfg;
}

Generator::Generator(const GeneratorConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (!power_of_two(cfg.input_size))
    throw ConfigError("generator input size must be a power of two");
  if (cfg.encoder_filters.empty() ||
      cfg.encoder_filters.size() != cfg.decoder_filters.size())
    throw ConfigError("encoder and decoder must have the same nonzero stage count");
  const int stages = static_cast<int>(cfg.encoder_filters.size());
  if (cfg.input_size >> stages < 1)
    throw ConfigError("input size too small for the number of stages");
  if (cfg.kernel < 1 || cfg.convs_per_stage < 0)
    throw ConfigError("kernel and convs_per_stage must be positive");

  int ch = 1;
  for (int i = 0; i < stages; ++i) {
    const int f = cfg.encoder_filters[i];
    nn::Sequential s;
    int cur = ch;
    for (int c = 0; c < cfg.convs_per_stage; ++c) {
      s.emplace<nn::Conv2d>(cur, f, cfg.kernel, 1, rng);
      s.emplace<nn::BatchNorm2d>(f);
      s.emplace<nn::LeakyRelu>(0.2);
      cur = f;
    }
    s.emplace<nn::Conv2d>(cur, f, cfg.kernel, 2, rng);
    s.emplace<nn::BatchNorm2d>(f);
    s.emplace<nn::LeakyRelu>(0.2);
    enc_.push_back(std::move(s));
    ch = f;
  }
  for (int j = 0; j < stages; ++j) {
    const int f = cfg.decoder_filters[j];
    int cur = ch;
    if (cfg.unet_skips && j >= 1) cur += cfg.encoder_filters[stages - 1 - j];
    nn::Sequential s;
    for (int c = 0; c < cfg.convs_per_stage; ++c) {
      s.emplace<nn::Conv2d>(cur, f, cfg.kernel, 1, rng);
      s.emplace<nn::BatchNorm2d>(f);
      s.emplace<nn::Relu>();
      cur = f;
    }
    s.emplace<nn::ConvTranspose2d>(cur, f, cfg.kernel, 2, rng);
    s.emplace<nn::BatchNorm2d>(f);
    s.emplace<nn::Relu>();
    dec_.push_back(std::move(s));
    ch = f;
  }
  out_.emplace<nn::Conv2d>(ch, 1, cfg.kernel, 1, rng);
  out_.emplace<nn::Tanh>();
}

Tensor Generator::forward(const Tensor& x, bool train) {
  if (x.shape.size() != 4 || x.shape[1] != 1 || x.shape[2] != cfg_.input_size ||
      x.shape[3] != cfg_.input_size)
    throw ShapeMismatch("generator expects (N, 1, S, S) input");
  enc_outs_.clear();
  Tensor cur = x;
  for (auto& s : enc_) {
    cur = s.forward(cur, train);
    enc_outs_.push_back(cur);
  }
  const int last = static_cast<int>(enc_.size()) - 1;
  for (int j = 0; j < static_cast<int>(dec_.size()); ++j) {
    if (cfg_.unet_skips && j >= 1) cur = concat_channels(cur, enc_outs_[last - j]);
    cur = dec_[j].forward(cur, train);
  }
  return out_.forward(cur, train);
}

Tensor Generator::backward(const Tensor& grad_out) {
  Tensor g = out_.backward(grad_out);
  const int last = static_cast<int>(enc_.size()) - 1;
  std::vector<Tensor> skip_grads(enc_.size());
  for (int j = static_cast<int>(dec_.size()) - 1; j >= 0; --j) {
    g = dec_[j].backward(g);
    if (cfg_.unet_skips && j >= 1) {
      auto [prev, skip] = split_channels(g, cfg_.decoder_filters[j - 1]);
      skip_grads[last - j] = std::move(skip);
      g = std::move(prev);
    }
  }
  for (int i = last; i >= 0; --i) {
    if (!skip_grads[i].v.empty())
      for (size_t t = 0; t < g.v.size(); ++t) g.v[t] += skip_grads[i].v[t];
    g = enc_[i].backward(g);
  }
  return g;
}

std::vector<nn::Param> Generator::params() {
  std::vector<nn::Param> out;
  for (size_t i = 0; i < enc_.size(); ++i)
    enc_[i].collect_params("enc" + std::to_string(i), out);
  for (size_t j = 0; j < dec_.size(); ++j)
    dec_[j].collect_params("dec" + std::to_string(j), out);
  out_.collect_params("out", out);
  return out;
}

std::vector<nn::Param> Generator::buffers() {
  std::vector<nn::Param> out;
  for (size_t i = 0; i < enc_.size(); ++i)
    enc_[i].collect_buffers("enc" + std::to_string(i), out);
  for (size_t j = 0; j < dec_.size(); ++j)
    dec_[j].collect_buffers("dec" + std::to_string(j), out);
  out_.collect_buffers("out", out);
  return out;
}

std::vector<nn::Param> Generator::params_and_buffers() {
  auto out = params();
  auto bufs = buffers();
  out.insert(out.end(), bufs.begin(), bufs.end());
  return out;
}

void Generator::set_rng(Rng* rng) {
  for (auto& s : enc_) s.set_rng(rng);
  for (auto& s : dec_) s.set_rng(rng);
  out_.set_rng(rng);
}

nn::Sequential build_discriminator(const DiscriminatorConfig& cfg, Rng& rng) {
  if (!power_of_two(cfg.input_size))
    throw ConfigError("discriminator input size must be a power of two");
  if (cfg.filters.empty()) throw ConfigError("discriminator needs at least one stage");
  if (cfg.input_size >> cfg.filters.size() < 1)
    throw ConfigError("input size too small for the number of stages");
  nn::Sequential d;
  int ch = 1, sz = cfg.input_size;
  for (size_t i = 0; i < cfg.filters.size(); ++i) {
    d.emplace<nn::Conv2d>(ch, cfg.filters[i], cfg.kernel, 2, rng);
    if (i > 0) d.emplace<nn::BatchNorm2d>(cfg.filters[i]);
    d.emplace<nn::LeakyRelu>(0.2);
    ch = cfg.filters[i];
    sz /= 2;
  }
  d.emplace<nn::Flatten>();
  d.emplace<nn::Dense>(ch * sz * sz, 1, rng);
  d.emplace<nn::Sigmoid>();
  return d;
}

double d_loss(const Tensor& d_real, const Tensor& d_fake, double smooth) {
  if (d_real.v.size() != d_fake.v.size() || d_real.v.empty())
    throw ShapeMismatch("real/fake probability batches must match");
  double acc = 0.0;
  for (size_t i = 0; i < d_real.v.size(); ++i)
    acc -= smooth * std::log(clamp_prob(d_real.v[i])) +
           std::log(1.0 - clamp_prob(d_fake.v[i]));
  return acc / static_cast<double>(d_real.v.size());
}

std::pair<Tensor, Tensor> d_loss_grads(const Tensor& d_real, const Tensor& d_fake,
                                       double smooth) {
  if (d_real.v.size() != d_fake.v.size() || d_real.v.empty())
    throw ShapeMismatch("real/fake probability batches must match");
  return {d_real_grad(d_real, smooth), d_fake_grad(d_fake)};
}

GLossParts g_loss_parts(const Tensor& d_fake, const Tensor& generated,
                        const Tensor& target, const GanHyper& hyper) {
  if (generated.shape != target.shape || generated.shape.size() != 4)
    throw ShapeMismatch("generated/target must be matching (N, C, H, W)");
  const int n = generated.shape[0];
  if (static_cast<int>(d_fake.v.size()) != n)
    throw ShapeMismatch("d_fake batch must match generated batch");
  GLossParts parts;
  for (double p : d_fake.v) parts.adv -= std::log(clamp_prob(p));
  parts.adv /= n;
  const Tensor pg = nn::avgpool(generated, hyper.sse_pool);
  const Tensor pt = nn::avgpool(target, hyper.sse_pool);
  for (size_t i = 0; i < pg.v.size(); ++i) {
    const double d = pg.v[i] - pt.v[i];
    parts.sse += d * d;
  }
  parts.sse /= n;
  parts.total = parts.adv + hyper.lambda_content * parts.sse;
  return parts;
}

double g_loss(const Tensor& d_fake, const Tensor& generated, const Tensor& target,
              const GanHyper& hyper) {
  return g_loss_parts(d_fake, generated, target, hyper).total;
}

std::pair<Tensor, Tensor> g_loss_grads(const Tensor& d_fake, const Tensor& generated,
                                       const Tensor& target, const GanHyper& hyper) {
  if (generated.shape != target.shape || generated.shape.size() != 4)
    throw ShapeMismatch("generated/target must be matching (N, C, H, W)");
  const int n = generated.shape[0];
  if (static_cast<int>(d_fake.v.size()) != n)
    throw ShapeMismatch("d_fake batch must match generated batch");
  Tensor gd = d_fake;
  for (size_t i = 0; i < gd.v.size(); ++i)
    gd.v[i] = -1.0 / (n * clamp_prob(d_fake.v[i]));
  Tensor diff = nn::avgpool(generated, hyper.sse_pool);
  const Tensor pt = nn::avgpool(target, hyper.sse_pool);
  for (size_t i = 0; i < diff.v.size(); ++i)
    diff.v[i] = hyper.lambda_content * 2.0 * (diff.v[i] - pt.v[i]) / n;
  return {std::move(gd), nn::avgpool_adjoint(diff, hyper.sse_pool)};
}

Image legacy_ffd_mask(int rows, int cols) {
  Image w(rows, cols);
  const double alpha = 3.5, beta = 2.5;
  const double mr = rows / 2.0, mc = cols / 2.0;
  for (int i = 0; i < rows; ++i) {
    const double di = alpha * (i - mr) / mr;
    for (int j = 0; j < cols; ++j) {
      const double dj = beta * (j - mc) / mc;
      w.at(i, j) = std::exp(-0.5 * (di * di + dj * dj));
    }
  }
  return w;
}

double legacy_ffd_loss(const Image& pred, const Image& target) {
  if (pred.height != target.height || pred.width != target.width)
    throw ShapeMismatch("pred/target sizes must match");
  const Image w = legacy_ffd_mask(pred.height, pred.width);
  double acc = 0.0;
  for (size_t i = 0; i < pred.v.size(); ++i) {
    const double d = pred.v[i] - target.v[i];
    acc += d * d * w.v[i];
  }
  return acc / (static_cast<double>(pred.height) * pred.width);
}

Image legacy_ffd_grad(const Image& pred, const Image& target) {
  if (pred.height != target.height || pred.width != target.width)
    throw ShapeMismatch("pred/target sizes must match");
  const Image w = legacy_ffd_mask(pred.height, pred.width);
  Image g(pred.height, pred.width);
  const double scale = static_cast<double>(pred.height) * pred.width;
  for (size_t i = 0; i < pred.v.size(); ++i)
    g.v[i] = 2.0 * (pred.v[i] - target.v[i]) * w.v[i] / scale;
  return g;
}

Image ffd_prepare_depth(const Image& depth, int size) {
  return dataio::resized_normalized(depth, size, size);
}

Image ffd_prepare_gray(const Image& gray, int size) {
  Image r = resize_bilinear(gray, size, size);
  for (double& x : r.v) x = 2.0 * x - 1.0;
  return r;
}

std::vector<FfdStep> train_ffd(Generator& gen, nn::Sequential& disc,
                               const std::vector<FfdPair>& pairs,
                               const GanHyper& hyper, Rng& rng) {
  if (pairs.empty()) throw MissingPairs("no depth/gray pairs to train on");
  if (hyper.batch_size < 1 || hyper.k_disc < 1 || hyper.steps < 0)
    throw ConfigError("batch_size and k_disc must be at least 1");
  if (hyper.lambda_content < 0.0 || hyper.label_smooth <= 0.0 ||
      hyper.label_smooth > 1.0)
    throw ConfigError("lambda_content must be >= 0 and label_smooth in (0, 1]");

  const int size = gen.config().input_size;
  const int n = static_cast<int>(pairs.size());
  std::vector<Image> xs, ys;
  xs.reserve(pairs.size());
  ys.reserve(pairs.size());
  for (const auto& p : pairs) {
    xs.push_back(ffd_prepare_depth(p.depth, size));
    ys.push_back(ffd_prepare_gray(p.gray, size));
  }

  auto g_params = gen.params();
  auto d_params = disc.params();
  nn::Adam g_opt(g_params, hyper.lr_g, hyper.adam_beta1);
  nn::Adam d_opt(d_params, hyper.lr_d, hyper.adam_beta1);

  const bool full = hyper.batch_size >= n;
  const int batch = std::min(hyper.batch_size, n);
  const size_t plane = static_cast<size_t>(size) * size;

  std::vector<FfdStep> history;
  history.reserve(hyper.steps);
  for (int s = 0; s < hyper.steps; ++s) {
    Tensor xb({batch, 1, size, size}), yb({batch, 1, size, size});
    for (int b = 0; b < batch; ++b) {
      const int i = full ? b : rng.uniform_int(0, n - 1);
      std::copy(xs[i].v.begin(), xs[i].v.end(), xb.v.begin() + b * plane);
      std::copy(ys[i].v.begin(), ys[i].v.end(), yb.v.begin() + b * plane);
    }

    Tensor fake = gen.forward(xb, true);

    double dl = 0.0;
    for (int k = 0; k < hyper.k_disc; ++k) {
      nn::zero_grads(d_params);
      Tensor dr = disc.forward(yb, true);
      disc.backward(d_real_grad(dr, hyper.label_smooth));
      Tensor df = disc.forward(fake, true);
      disc.backward(d_fake_grad(df));
      dl = d_loss(dr, df, hyper.label_smooth);
      d_opt.step();
    }

    nn::zero_grads(g_params);
    Tensor df = disc.forward(fake, true);
    const GLossParts parts = g_loss_parts(df, fake, yb, hyper);
    auto [grad_df, grad_content] = g_loss_grads(df, fake, yb, hyper);
    Tensor grad_fake = disc.backward(grad_df);
    for (size_t t = 0; t < grad_fake.v.size(); ++t)
      grad_fake.v[t] += grad_content.v[t];
    gen.backward(grad_fake);
    g_opt.step();

    history.push_back({s + 1, dl, parts.adv, parts.sse});
  }
  return history;
}

void save_ffd_history(const std::string& path, const std::vector<FfdStep>& history) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open for writing: " + path);
  std::fputs("step,d_loss,g_adv,g_sse\n", f);
  for (const auto& h : history)
    std::fprintf(f, "%d,%.17g,%.17g,%.17g\n", h.step, h.d_loss, h.g_adv, h.g_sse);
  std::fclose(f);
}

Image ffd_infer(Generator& gen, const Image& depth_crop) {
  const int size = gen.config().input_size;
  const Image prep = ffd_prepare_depth(depth_crop, size);
  Tensor x({1, 1, size, size});
  std::copy(prep.v.begin(), prep.v.end(), x.v.begin());
  const Tensor y = gen.forward(x, false);
  Image out(size, size);
  std::copy(y.v.begin(), y.v.end(), out.v.begin());
  return out;
}

}  // namespace depthpose::models
