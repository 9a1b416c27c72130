#include "depthpose/models/posenet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <utility>

#include "depthpose/core/errors.hpp"
#include "depthpose/nn/optim.hpp"

namespace depthpose::models {

namespace {

// Row-wise concat / split of (N, d) feature tensors.
nn::Tensor concat_rows(const nn::Tensor& a, const nn::Tensor& b) {
  const int n = a.shape[0], da = a.shape[1], db = b.shape[1];
  nn::Tensor out;
  out.shape = {n, da + db};
  out.v.resize(static_cast<size_t>(n) * (da + db));
  for (int i = 0; i < n; ++i) {
    std::copy(a.v.begin() + static_cast<long>(i) * da,
              a.v.begin() + static_cast<long>(i + 1) * da,
              out.v.begin() + static_cast<long>(i) * (da + db));
    std::copy(b.v.begin() + static_cast<long>(i) * db,
              b.v.begin() + static_cast<long>(i + 1) * db,
              out.v.begin() + static_cast<long>(i) * (da + db) + da);
  }
  return out;
}

std::pair<nn::Tensor, nn::Tensor> split_rows(const nn::Tensor& x, int da) {
  const int n = x.shape[0], d = x.shape[1], db = d - da;
  nn::Tensor a, b;
  a.shape = {n, da};
  b.shape = {n, db};
  a.v.resize(static_cast<size_t>(n) * da);
  b.v.resize(static_cast<size_t>(n) * db);
  for (int i = 0; i < n; ++i) {
    std::copy(x.v.begin() + static_cast<long>(i) * d,
              x.v.begin() + static_cast<long>(i) * d + da,
              a.v.begin() + static_cast<long>(i) * da);
    std::copy(x.v.begin() + static_cast<long>(i) * d + da,
              x.v.begin() + static_cast<long>(i + 1) * d,
              b.v.begin() + static_cast<long>(i) * db);
  }
  return {std::move(a), std::move(b)};
}

void check_features(const nn::Tensor& a, const nn::Tensor& b, int da, int db) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeMismatch("fusion inputs must be (N, d)");
  if (a.shape[0] != b.shape[0]) throw ShapeMismatch("fusion batch sizes differ");
  if (a.shape[1] != da || b.shape[1] != db)
    throw ShapeMismatch("fusion feature widths differ from construction");
}

nn::Tensor image_batch(const std::vector<const Image*>& planes, int n_samples,
                       int per_sample) {
  // planes laid out sample-major: planes[s * per_sample + c]
  const Image* first = planes[0];
  nn::Tensor out;
  out.shape = {n_samples, per_sample, first->height, first->width};
  out.v.resize(static_cast<size_t>(out.numel_of(out.shape)));
  size_t off = 0;
  for (const Image* p : planes) {
    if (p->height != first->height || p->width != first->width)
      throw ShapeMismatch("input planes disagree on size");
    std::copy(p->v.begin(), p->v.end(), out.v.begin() + static_cast<long>(off));
    off += p->v.size();
  }
  return out;
}

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

nn::Tensor rows_batch(const nn::Tensor& all, const std::vector<size_t>& idx,
                      size_t lo, size_t hi) {
  const int d = all.shape[1];
  nn::Tensor out;
  out.shape = {static_cast<int>(hi - lo), d};
  out.v.resize((hi - lo) * static_cast<size_t>(d));
  for (size_t b = lo; b < hi; ++b)
    std::copy(all.v.begin() + static_cast<long>(idx[b]) * d,
              all.v.begin() + static_cast<long>(idx[b] + 1) * d,
              out.v.begin() + static_cast<long>(b - lo) * d);
  return out;
}

}  // namespace

std::vector<nn::Param> Branch::params() {
  std::vector<nn::Param> out;
  trunk.collect_params("trunk", out);
  top.collect_params("top", out);
  return out;
}

std::vector<nn::Param> Branch::buffers() {
  std::vector<nn::Param> out;
  trunk.collect_buffers("trunk", out);
  top.collect_buffers("top", out);
  return out;
}

std::vector<nn::Param> Branch::params_and_buffers() {
  auto out = params();
  auto buf = buffers();
  out.insert(out.end(), buf.begin(), buf.end());
  return out;
}

Branch build_branch(const BranchConfig& cfg, Rng& rng) {
  if (cfg.input_size < 8) throw ConfigError("branch input must be at least 8 px");
  if (cfg.in_channels < 1) throw ConfigError("branch needs at least one input channel");
  if (cfg.conv_kernels.size() != 5 || cfg.conv_filters.size() != 5)
    throw ConfigError("branch trunk is exactly five conv layers");
  if (cfg.head_fc.size() < 2 || cfg.head_fc.back() != 3)
    throw ConfigError("branch head must end in 3 outputs");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0)
    throw ConfigError("dropout rate must be in [0, 1)");

  Branch br;
  int ch = cfg.in_channels, sz = cfg.input_size;
  for (int i = 0; i < 5; ++i) {
    if (cfg.conv_kernels[i] <= 0 || cfg.conv_filters[i] <= 0)
      throw ConfigError("bad conv spec");
    br.trunk.emplace<nn::Conv2d>(ch, cfg.conv_filters[i], cfg.conv_kernels[i], 1, rng);
    br.trunk.emplace<nn::Tanh>();
    ch = cfg.conv_filters[i];
    if (i < 3) {
      br.trunk.emplace<nn::MaxPool2x2>();
      sz /= 2;
    }
  }
  br.trunk.emplace<nn::Flatten>();
  int dim = ch * sz * sz;
  const size_t hidden = cfg.head_fc.size() - 1;  // final layer lives in `top`
  for (size_t i = 0; i < hidden; ++i) {
    if (cfg.head_fc[i] <= 0) throw ConfigError("bad head layer width");
    br.trunk.emplace<nn::Dense>(dim, cfg.head_fc[i], rng);
    br.trunk.emplace<nn::Tanh>();
    if (i + 1 < hidden) br.trunk.emplace<nn::Dropout>(cfg.dropout);
    dim = cfg.head_fc[i];
  }
  br.top.emplace<nn::Dropout>(cfg.dropout);
  br.top.emplace<nn::Dense>(dim, cfg.head_fc.back(), rng);
  br.top.emplace<nn::Tanh>();
  br.tap = dim;
  br.input_size = cfg.input_size;
  br.in_channels = cfg.in_channels;
  return br;
}

nn::Tensor fuse(const nn::Tensor& a, const nn::Tensor& b, const FusionSpec& spec) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeMismatch("fusion inputs must be (N, d)");
  if (a.shape[0] != b.shape[0]) throw ShapeMismatch("fusion batch sizes differ");
  switch (spec.method) {
    case FusionMethod::Multiplication: {
      if (a.shape[1] != b.shape[1])
        throw ShapeMismatch("multiplicative fusion needs equal widths");
      nn::Tensor out = a;
      for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b.v[i];
      return out;
    }
    case FusionMethod::Concatenation:
      return concat_rows(a, b);
    default:
      throw ConfigError("convolutional fusion carries weights; use FusionOp");
  }
}

FusionOp::FusionOp(FusionMethod method, int d_a, int d_b, Rng& rng)
    : method_(method), da_(d_a), db_(d_b) {
  if (d_a < 1 || d_b < 1) throw ConfigError("fusion widths must be positive");
  switch (method_) {
    case FusionMethod::Multiplication:
      if (d_a != d_b) throw ConfigError("multiplicative fusion needs equal widths");
      out_dim_ = d_a;
      break;
    case FusionMethod::Concatenation:
      out_dim_ = d_a + d_b;
      break;
    case FusionMethod::Convolution:
      if ((d_a + d_b) % 2 != 0)
        throw ConfigError("convolutional fusion halves an even concat width");
      out_dim_ = (d_a + d_b) / 2;
      mix_ = std::make_unique<nn::Dense>(d_a + d_b, out_dim_, rng);
      break;
    case FusionMethod::ConvThenConcat:
      throw ConfigError("the composite method is wired at the trident level");
  }
}

nn::Tensor FusionOp::fuse(const nn::Tensor& a, const nn::Tensor& b, bool train) {
  check_features(a, b, da_, db_);
  switch (method_) {
    case FusionMethod::Multiplication: {
      if (train) {
        cached_a_ = a;
        cached_b_ = b;
      }
      nn::Tensor out = a;
      for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b.v[i];
      return out;
    }
    case FusionMethod::Concatenation:
      return concat_rows(a, b);
    default:
      return mix_->forward(concat_rows(a, b), train);
  }
}

std::pair<nn::Tensor, nn::Tensor> FusionOp::backward(const nn::Tensor& grad) {
  if (grad.rank() != 2 || grad.shape[1] != out_dim_)
    throw ShapeMismatch("fusion gradient width mismatch");
  switch (method_) {
    case FusionMethod::Multiplication: {
      nn::Tensor ga = grad, gb = grad;
      for (size_t i = 0; i < grad.v.size(); ++i) {
        ga.v[i] = grad.v[i] * cached_b_.v[i];
        gb.v[i] = grad.v[i] * cached_a_.v[i];
      }
      return {std::move(ga), std::move(gb)};
    }
    case FusionMethod::Concatenation:
      return split_rows(grad, da_);
    default:
      return split_rows(mix_->backward(grad), da_);
  }
}

void FusionOp::collect_params(const std::string& prefix, std::vector<nn::Param>& out) {
  if (mix_) mix_->collect_params(prefix + ".mix", out);
}

double weighted_l2_loss(const nn::Tensor& pred, const nn::Tensor& gt,
                        const LossWeights& w) {
  if (pred.shape != gt.shape || pred.rank() != 2 || pred.shape[1] != 3)
    throw ShapeMismatch("pose loss expects matching (N, 3) tensors");
  const int n = pred.shape[0];
  const double ws[3] = {w.pitch, w.roll, w.yaw};
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j)
      total += std::abs(ws[j] * (gt.v[i * 3 + j] - pred.v[i * 3 + j]));
  return total / n;
}

nn::Tensor weighted_l2_grad(const nn::Tensor& pred, const nn::Tensor& gt,
                            const LossWeights& w) {
  if (pred.shape != gt.shape || pred.rank() != 2 || pred.shape[1] != 3)
    throw ShapeMismatch("pose loss expects matching (N, 3) tensors");
  const int n = pred.shape[0];
  const double ws[3] = {w.pitch, w.roll, w.yaw};
  nn::Tensor grad;
  grad.shape = pred.shape;
  grad.v.assign(pred.v.size(), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) {
      const double e = pred.v[i * 3 + j] - gt.v[i * 3 + j];
      if (e > 0.0)
        grad.v[i * 3 + j] = std::abs(ws[j]) / n;
      else if (e < 0.0)
        grad.v[i * 3 + j] = -std::abs(ws[j]) / n;
    }
  return grad;
}

std::array<double, 3> normalize_angles(const geo::PoseAngles& a) {
  return {a.pitch / 180.0, a.roll / 180.0, a.yaw / 180.0};
}

geo::PoseAngles denormalize_angles(const std::array<double, 3>& raw) {
  return {raw[0] * 180.0, raw[1] * 180.0, raw[2] * 180.0};
}

Trident::Trident(Branch&& depth, Branch&& ffd, Branch&& motion,
                 const TridentConfig& cfg, Rng& rng)
    : cfg_(cfg), bd_(std::move(depth)), bf_(std::move(ffd)), bm_(std::move(motion)) {
  if (bd_.tap != bf_.tap || bd_.tap != bm_.tap)
    throw ShapeMismatch("branch taps must share one width");
  if (cfg_.head_fc.empty() || cfg_.head_fc.back() != 3)
    throw ConfigError("trident head must end in 3 outputs");
  if (cfg_.dropout < 0.0 || cfg_.dropout >= 1.0)
    throw ConfigError("dropout rate must be in [0, 1)");

  const int t = bd_.tap;
  if (cfg_.fusion.method == FusionMethod::ConvThenConcat) {
    ops_.emplace_back(FusionMethod::Convolution, t, t, rng);  // (depth, ffd)
    ops_.emplace_back(FusionMethod::Convolution, t, t, rng);  // (depth, motion)
    concat_a_dim_ = ops_[0].out_dim();
    fused_dim_ = ops_[0].out_dim() + ops_[1].out_dim();
  } else {
    ops_.emplace_back(cfg_.fusion.method, t, t, rng);
    ops_.emplace_back(cfg_.fusion.method, ops_[0].out_dim(), t, rng);
    fused_dim_ = ops_[1].out_dim();
  }

  int dim = fused_dim_;
  const size_t L = cfg_.head_fc.size();
  for (size_t i = 0; i < L; ++i) {
    if (cfg_.head_fc[i] <= 0) throw ConfigError("bad head layer width");
    head_.emplace<nn::Dense>(dim, cfg_.head_fc[i], rng);
    head_.emplace<nn::Tanh>();
    if (i + 1 < L) head_.emplace<nn::Dropout>(cfg_.dropout);
    dim = cfg_.head_fc[i];
  }
}

nn::Tensor Trident::forward(const nn::Tensor& xd, const nn::Tensor& xf,
                            const nn::Tensor& xm, bool train) {
  const nn::Tensor td = bd_.tap_forward(xd, train);
  const nn::Tensor tf = bf_.tap_forward(xf, train);
  const nn::Tensor tm = bm_.tap_forward(xm, train);
  return head_.forward(fuse_taps(td, tf, tm, train), train);
}

nn::Tensor Trident::fuse_taps(const nn::Tensor& td, const nn::Tensor& tf,
                              const nn::Tensor& tm, bool train) {
  if (cfg_.fusion.method == FusionMethod::ConvThenConcat) {
    const nn::Tensor a = ops_[0].fuse(td, tf, train);
    const nn::Tensor b = ops_[1].fuse(td, tm, train);
    return concat_rows(a, b);
  }
  const nn::Tensor f = ops_[0].fuse(td, tf, train);
  return ops_[1].fuse(f, tm, train);
}

std::array<nn::Tensor, 3> Trident::fusion_backward(const nn::Tensor& grad_fused) {
  if (cfg_.fusion.method == FusionMethod::ConvThenConcat) {
    auto [ga, gb] = split_rows(grad_fused, concat_a_dim_);
    auto [gd1, gf] = ops_[0].backward(ga);
    auto [gd2, gm] = ops_[1].backward(gb);
    for (size_t i = 0; i < gd1.v.size(); ++i) gd1.v[i] += gd2.v[i];
    return {std::move(gd1), std::move(gf), std::move(gm)};
  }
  auto [g1, gm] = ops_[1].backward(grad_fused);
  auto [gd, gf] = ops_[0].backward(g1);
  return {std::move(gd), std::move(gf), std::move(gm)};
}

Branch& Trident::branch(int i) {
  switch (i) {
    case 0: return bd_;
    case 1: return bf_;
    default: return bm_;
  }
}

std::vector<nn::Param> Trident::branch_params() {
  std::vector<nn::Param> out;
  bd_.trunk.collect_params("depth.trunk", out);
  bd_.top.collect_params("depth.top", out);
  bf_.trunk.collect_params("ffd.trunk", out);
  bf_.top.collect_params("ffd.top", out);
  bm_.trunk.collect_params("motion.trunk", out);
  bm_.top.collect_params("motion.top", out);
  return out;
}

std::vector<nn::Param> Trident::head_and_fusion_params() {
  std::vector<nn::Param> out;
  ops_[0].collect_params("fuse0", out);
  ops_[1].collect_params("fuse1", out);
  head_.collect_params("head", out);
  return out;
}

std::vector<nn::Param> Trident::params() {
  auto out = branch_params();
  auto hf = head_and_fusion_params();
  out.insert(out.end(), hf.begin(), hf.end());
  return out;
}

std::vector<nn::Param> Trident::params_and_buffers() {
  auto out = params();
  std::vector<nn::Param> buf;
  bd_.trunk.collect_buffers("depth.trunk", buf);
  bf_.trunk.collect_buffers("ffd.trunk", buf);
  bm_.trunk.collect_buffers("motion.trunk", buf);
  head_.collect_buffers("head", buf);
  out.insert(out.end(), buf.begin(), buf.end());
  return out;
}

void Trident::set_rng(Rng* rng) {
  bd_.set_rng(rng);
  bf_.set_rng(rng);
  bm_.set_rng(rng);
  head_.set_rng(rng);
}

Trident build_trident(Branch&& depth, Branch&& ffd, Branch&& motion,
                      const TridentConfig& cfg, Rng& rng) {
  return Trident(std::move(depth), std::move(ffd), std::move(motion), cfg, rng);
}

std::vector<double> train_pose_branch(Branch& net, const std::vector<PoseSample>& data,
                                      const PoseHyper& hyper, Rng& rng) {
  if (data.empty()) throw InvalidSpec("empty training set");
  if (hyper.batch_size < 1) throw ConfigError("batch size must be positive");
  if (hyper.halve_every < 1) throw ConfigError("halving period must be positive");
  const size_t per_sample = data[0].planes.size();
  for (size_t i = 0; i < data.size(); ++i) {
    if (!data[i].pose)
      throw MissingAnnotation("sample without pose at index " + std::to_string(i));
    if (data[i].planes.size() != per_sample)
      throw ShapeMismatch("samples disagree on plane count");
  }
  if (per_sample == 0) throw ShapeMismatch("samples carry no image planes");

  const size_t n = data.size();
  std::vector<nn::Tensor> xs(n);
  nn::Tensor ys;
  ys.shape = {static_cast<int>(n), 3};
  ys.v.resize(n * 3);
  for (size_t i = 0; i < n; ++i) {
    std::vector<const Image*> planes;
    for (const Image& p : data[i].planes) planes.push_back(&p);
    xs[i] = image_batch(planes, 1, static_cast<int>(per_sample));
    const auto y = normalize_angles(*data[i].pose);
    std::copy(y.begin(), y.end(), ys.v.begin() + static_cast<long>(i) * 3);
  }

  net.set_rng(&rng);
  auto params = net.params();
  nn::Sgd opt(params, hyper.lr, hyper.momentum);

  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  const std::vector<size_t> ident = idx;
  std::vector<double> history;

  // whole-set loss in dataset order, with the net in inference mode
  auto eval_loss = [&]() {
    nn::Tensor xb = batch_of(xs, ident, 0, n);
    const nn::Tensor out = net.forward(xb, false);
    return weighted_l2_loss(out, ys, hyper.weights);
  };

  for (int epoch = 0; epoch < hyper.epochs_phase1; ++epoch) {
    opt.set_lr(nn::scheduled_lr(hyper.lr, epoch, hyper.halve_every));
    rng.shuffle(idx);
    for (size_t lo = 0; lo < n; lo += static_cast<size_t>(hyper.batch_size)) {
      const size_t hi = std::min(n, lo + static_cast<size_t>(hyper.batch_size));
      nn::Tensor xb = batch_of(xs, idx, lo, hi);
      const nn::Tensor out = net.forward(xb, true);
      const nn::Tensor yb = rows_batch(ys, idx, lo, hi);
      const nn::Tensor grad = weighted_l2_grad(out, yb, hyper.weights);
      nn::zero_grads(params);
      net.backward(grad);
      opt.step();
    }
    history.push_back(eval_loss());
  }
  return history;
}

TwoPhaseHistory train_two_phase(Trident& trident,
                                const std::vector<TridentSample>& data,
                                const PoseHyper& hyper, Rng& rng) {
  if (data.empty()) throw InvalidSpec("empty training set");
  for (size_t i = 0; i < data.size(); ++i)
    if (!data[i].pose)
      throw MissingAnnotation("sample without pose at index " + std::to_string(i));

  TwoPhaseHistory hist;

  // phase 1: per-stream training with each branch's own detachable head
  std::array<std::vector<PoseSample>, 3> streams;
  for (const TridentSample& s : data) {
    streams[0].push_back({{s.depth}, s.pose});
    streams[1].push_back({{s.ffd}, s.pose});
    streams[2].push_back({{s.motion.dx, s.motion.dy}, s.pose});
  }
  for (int i = 0; i < 3; ++i) {
    Rng fork = rng.fork(static_cast<uint64_t>(i + 1));
    hist.phase1[i] = train_pose_branch(trident.branch(i), streams[i], hyper, fork);
  }

  // phase 2: freeze the branches and train fusion + head on cached taps
  auto frozen = trident.branch_params();
  std::vector<std::vector<double>> snapshot(frozen.size());
  for (size_t i = 0; i < frozen.size(); ++i) snapshot[i] = frozen[i].value->v;

  const size_t n = data.size();
  std::array<nn::Tensor, 3> taps;
  for (int s = 0; s < 3; ++s) {
    std::vector<const Image*> planes;
    for (const TridentSample& d : data) {
      if (s == 0) planes.push_back(&d.depth);
      if (s == 1) planes.push_back(&d.ffd);
      if (s == 2) {
        planes.push_back(&d.motion.dx);
        planes.push_back(&d.motion.dy);
      }
    }
    const int per = s == 2 ? 2 : 1;
    nn::Tensor xb = image_batch(planes, static_cast<int>(n), per);
    taps[s] = trident.branch(s).tap_forward(xb, false);
  }

  nn::Tensor ys;
  ys.shape = {static_cast<int>(n), 3};
  ys.v.resize(n * 3);
  for (size_t i = 0; i < n; ++i) {
    const auto y = normalize_angles(*data[i].pose);
    std::copy(y.begin(), y.end(), ys.v.begin() + static_cast<long>(i) * 3);
  }

  Rng fork = rng.fork(4);
  trident.set_rng(&fork);
  auto params = trident.head_and_fusion_params();
  nn::Sgd opt(params, hyper.lr, hyper.momentum);

  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;

  auto eval_loss = [&]() {
    const nn::Tensor fused = trident.fuse_taps(taps[0], taps[1], taps[2], false);
    const nn::Tensor out = trident.head().forward(fused, false);
    return weighted_l2_loss(out, ys, hyper.weights);
  };

  for (int epoch = 0; epoch < hyper.epochs_phase2; ++epoch) {
    opt.set_lr(nn::scheduled_lr(hyper.lr, epoch, hyper.halve_every));
    fork.shuffle(idx);
    for (size_t lo = 0; lo < n; lo += static_cast<size_t>(hyper.batch_size)) {
      const size_t hi = std::min(n, lo + static_cast<size_t>(hyper.batch_size));
      const nn::Tensor td = rows_batch(taps[0], idx, lo, hi);
      const nn::Tensor tf = rows_batch(taps[1], idx, lo, hi);
      const nn::Tensor tm = rows_batch(taps[2], idx, lo, hi);
      const nn::Tensor fused = trident.fuse_taps(td, tf, tm, true);
      const nn::Tensor out = trident.head().forward(fused, true);
      const nn::Tensor yb = rows_batch(ys, idx, lo, hi);
      const nn::Tensor grad = weighted_l2_grad(out, yb, hyper.weights);
      nn::zero_grads(params);
      trident.fusion_backward(trident.head().backward(grad));
      opt.step();
    }
    hist.phase2.push_back(eval_loss());
  }

  hist.branches_frozen = true;
  for (size_t i = 0; i < frozen.size(); ++i)
    if (frozen[i].value->v != snapshot[i]) hist.branches_frozen = false;

  trident.set_rng(&rng);  // the phase forks die with this frame
  return hist;
}

void save_pose_history(const std::string& path, const TwoPhaseHistory& history) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot write " + path);
  std::fputs("phase,stream,epoch,loss\n", f);
  const char* names[3] = {"depth", "ffd", "motion"};
  for (int s = 0; s < 3; ++s)
    for (size_t e = 0; e < history.phase1[s].size(); ++e)
      std::fprintf(f, "1,%s,%zu,%.17g\n", names[s], e, history.phase1[s][e]);
  for (size_t e = 0; e < history.phase2.size(); ++e)
    std::fprintf(f, "2,head,%zu,%.17g\n", e, history.phase2[e]);
  std::fclose(f);
}

namespace {

nn::Tensor single_input(const std::vector<const Image*>& planes, const Branch& br,
                        const char* what) {
  for (const Image* p : planes)
    if (p->height != br.input_size || p->width != br.input_size)
      throw ShapeMismatch(std::string(what) + " must be " +
                          std::to_string(br.input_size) + "x" +
                          std::to_string(br.input_size));
  if (static_cast<int>(planes.size()) != br.in_channels)
    throw ShapeMismatch(std::string(what) + " channel count mismatch");
  return image_batch(planes, 1, static_cast<int>(planes.size()));
}

}  // namespace

geo::PoseAngles predict_pose(Trident& trident, const Image& depth, const Image& ffd,
                        const motion::MotionImage& motion) {
  nn::Tensor xd = single_input({&depth}, trident.branch(0), "depth crop");
  nn::Tensor xf = single_input({&ffd}, trident.branch(1), "ffd image");
  nn::Tensor xm =
      single_input({&motion.dx, &motion.dy}, trident.branch(2), "motion image");
  const nn::Tensor out = trident.forward(xd, xf, xm, false);
  return denormalize_angles({out.v[0], out.v[1], out.v[2]});
}

Branch build_shoulder_net(const BranchConfig& cfg, Rng& rng) {
  return build_branch(cfg, rng);
}

std::vector<double> train_shoulder_net(Branch& net,
                                       const std::vector<PoseSample>& data,
                                       const PoseHyper& hyper, Rng& rng) {
  return train_pose_branch(net, data, hyper, rng);
}

geo::PoseAngles predict_shoulder_pose(Branch& net, const Image& crop) {
  nn::Tensor x = single_input({&crop}, net, "shoulder crop");
  const nn::Tensor out = net.forward(x, false);
  return denormalize_angles({out.v[0], out.v[1], out.v[2]});
}

}  // namespace depthpose::models
