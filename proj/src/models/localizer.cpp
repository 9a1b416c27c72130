#include "depthpose/models/localizer.hpp"

#include <cmath>

#include "depthpose/core/errors.hpp"
#include "depthpose/dataio/preprocess.hpp"
#include "depthpose/nn/optim.hpp"

namespace depthpose::models {

nn::Sequential build_localizer(const LocalizerConfig& cfg, Rng& rng) {
  if (cfg.input_width <= 0 || cfg.input_height <= 0)
    throw ConfigError("localizer input size must be positive");
  if (cfg.conv_specs.size() < 4)
    throw ConfigError("localizer needs at least four conv stages (all pooled)");
  if (cfg.fc_sizes.empty() || cfg.fc_sizes.back() != 2)
    throw ConfigError("localizer head must end in 2 outputs");

  nn::Sequential seq;
  int ch = 1, h = cfg.input_height, w = cfg.input_width;
  for (size_t i = 0; i < cfg.conv_specs.size(); ++i) {
    const ConvSpec& cs = cfg.conv_specs[i];
    if (cs.kernel <= 0 || cs.filters <= 0 || cs.stride <= 0)
      throw ConfigError("bad conv spec");
    seq.emplace<nn::Conv2d>(ch, cs.filters, cs.kernel, cs.stride, rng);
    seq.emplace<nn::Tanh>();
    ch = cs.filters;
    h = nn::Conv2d::out_size(h, cs.stride);
    w = nn::Conv2d::out_size(w, cs.stride);
    if (i < 4) {
      seq.emplace<nn::MaxPool2x2>();
      h /= 2;
      w /= 2;
    }
    if (h < 1 || w < 1) throw ConfigError("conv stack collapses the input");
  }
  seq.emplace<nn::Flatten>();
  int dim = ch * h * w;
  for (size_t i = 0; i < cfg.fc_sizes.size(); ++i) {
    seq.emplace<nn::Dense>(dim, cfg.fc_sizes[i], rng);
    seq.emplace<nn::Tanh>();
    if (i + 1 < cfg.fc_sizes.size()) seq.emplace<nn::Dropout>(cfg.dropout);
    dim = cfg.fc_sizes[i];
  }
  return seq;
}

PixelPoint decode_center(double raw_x, double raw_y, int width, int height) {
  return {(raw_x + 1.0) / 2.0 * width, (raw_y + 1.0) / 2.0 * height};
}

std::pair<double, double> encode_center(const PixelPoint& p, int width, int height) {
  return {2.0 * p.x / width - 1.0, 2.0 * p.y / height - 1.0};
}

namespace {

nn::Tensor batch_of(const std::vector<nn::Tensor>& inputs,
                    const std::vector<size_t>& idx, size_t lo, size_t hi) {
  const auto& s0 = inputs[idx[lo]].shape;
  nn::Tensor out;
  out.shape = {static_cast<int>(hi - lo), s0[1], s0[2], s0[3]};
  out.v.resize(static_cast<size_t>(out.numel_of(out.shape)));
  const size_t per = inputs[idx[lo]].v.size();
  for (size_t b = lo; b < hi; ++b)
    std::copy(inputs[idx[b]].v.begin(), inputs[idx[b]].v.end(),
              out.v.begin() + static_cast<long>((b - lo) * per));
  return out;
}

}  // namespace

std::vector<double> train_localizer(nn::Sequential& model,
                                    const std::vector<dataio::FrameRecord>& recs,
                                    const LocalizerConfig& cfg,
                                    const LocalizerHyper& hyper, Rng& rng) {
  if (recs.empty()) throw InvalidSpec("empty training set");
  for (const auto& r : recs)
    if (!r.head_center_2d)
      throw MissingAnnotation("record without head center: " + r.subject_id + "/" +
                              r.sequence_id);

  const size_t n = recs.size();
  std::vector<nn::Tensor> xs(n);
  std::vector<std::pair<double, double>> ys(n);
  for (size_t i = 0; i < n; ++i) {
    const Image norm = dataio::resized_normalized(recs[i].depth.mm,
                                                  cfg.input_height, cfg.input_width);
    xs[i].shape = {1, 1, norm.height, norm.width};
    xs[i].v = norm.v;
    ys[i] = encode_center(*recs[i].head_center_2d, recs[i].depth.mm.width,
                          recs[i].depth.mm.height);
  }

  model.set_rng(&rng);
  auto params = model.params();
  nn::Sgd opt(params, hyper.lr, hyper.momentum);

  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  std::vector<double> history;

  // whole-set loss with the model in inference mode
  auto eval_loss = [&]() {
    nn::Tensor xb = batch_of(xs, idx, 0, n);
    // batch_of follows idx order; order does not affect the mean
    const nn::Tensor out = model.forward(xb, false);
    double sse = 0.0;
    for (size_t b = 0; b < n; ++b) {
      const size_t src = idx[b];
      const double ex = out.v[b * 2] - ys[src].first;
      const double ey = out.v[b * 2 + 1] - ys[src].second;
      sse += ex * ex + ey * ey;
    }
    return sse / (static_cast<double>(n) * 2.0);
  };

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    opt.set_lr(nn::scheduled_lr(hyper.lr, epoch, hyper.halve_every));
    rng.shuffle(idx);
    for (size_t lo = 0; lo < n; lo += static_cast<size_t>(hyper.batch_size)) {
      const size_t hi = std::min(n, lo + static_cast<size_t>(hyper.batch_size));
      nn::Tensor xb = batch_of(xs, idx, lo, hi);
      const nn::Tensor out = model.forward(xb, true);
      nn::Tensor grad;
      grad.shape = out.shape;
      grad.v.resize(out.v.size());
      const double inv_b = 1.0 / static_cast<double>(hi - lo);
      for (size_t b = lo; b < hi; ++b) {
        const size_t src = idx[b];
        grad.v[(b - lo) * 2] = (out.v[(b - lo) * 2] - ys[src].first) * inv_b;
        grad.v[(b - lo) * 2 + 1] = (out.v[(b - lo) * 2 + 1] - ys[src].second) * inv_b;
      }
      nn::zero_grads(params);
      model.backward(grad);
      opt.step();
    }
    history.push_back(eval_loss());
  }
  return history;
}

PixelPoint localize(nn::Sequential& model, const LocalizerConfig& cfg,
                    const Image& depth) {
  const Image norm =
      dataio::resized_normalized(depth, cfg.input_height, cfg.input_width);
  nn::Tensor x;
  x.shape = {1, 1, norm.height, norm.width};
  x.v = norm.v;
  const nn::Tensor out = model.forward(x, false);
  return decode_center(out.v[0], out.v[1], depth.width, depth.height);
}

}  // namespace depthpose::models
