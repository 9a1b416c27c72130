#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "depthpose/core/errors.hpp"
#include "depthpose/core/rng.hpp"
#include "depthpose/nn/checkpoint.hpp"
#include "depthpose/nn/layers.hpp"
#include "depthpose/nn/optim.hpp"
#include "depthpose/nn/tensor.hpp"

using namespace depthpose;
using namespace depthpose::nn;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.v) v = rng.uniform(-scale, scale);
  return t;
}

// L = sum_i coef_i * out_i; returns analytic dL/dx and fills param grads.
double linear_loss_forward(Sequential& model, const Tensor& x,
                           const std::vector<double>& coef, Tensor* grad_x) {
  Tensor y = model.forward(x, true);
  REQUIRE(static_cast<size_t>(y.numel()) == coef.size());
  double loss = 0.0;
  Tensor gy = y;
  for (size_t i = 0; i < coef.size(); ++i) {
    loss += coef[i] * y.v[i];
    gy.v[i] = coef[i];
  }
  Tensor gx = model.backward(gy);
  if (grad_x != nullptr) *grad_x = gx;
  return loss;
}

double loss_only(Sequential& model, const Tensor& x, const std::vector<double>& coef) {
  Tensor y = model.forward(x, true);
  double loss = 0.0;
  for (size_t i = 0; i < coef.size(); ++i) loss += coef[i] * y.v[i];
  return loss;
}

void check_gradients(Sequential& model, Tensor x, double tol = 1e-4) {
  Rng rng(314);
  Tensor probe = model.forward(x, true);
  std::vector<double> coef(static_cast<size_t>(probe.numel()));
  for (double& c : coef) c = rng.uniform(-1.0, 1.0);

  zero_grads(model.params());
  Tensor grad_x;
  linear_loss_forward(model, x, coef, &grad_x);

  const double eps = 1e-5;
  auto rel_err = [](double a, double b) {
    return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
  };

  for (const Param& p : model.params()) {
    for (size_t j = 0; j < p.value->v.size(); ++j) {
      const double keep = p.value->v[j];
      p.value->v[j] = keep + eps;
      const double lp = loss_only(model, x, coef);
      p.value->v[j] = keep - eps;
      const double lm = loss_only(model, x, coef);
      p.value->v[j] = keep;
      const double fd = (lp - lm) / (2.0 * eps);
      const double an = p.grad->v[j];
      if (std::abs(fd) < 1e-9 && std::abs(an) < 1e-9) continue;
      INFO(p.name << "[" << j << "] analytic=" << an << " fd=" << fd);
      CHECK(rel_err(an, fd) < tol);
    }
  }

  for (size_t j = 0; j < x.v.size(); ++j) {
    const double keep = x.v[j];
    x.v[j] = keep + eps;
    const double lp = loss_only(model, x, coef);
    x.v[j] = keep - eps;
    const double lm = loss_only(model, x, coef);
    x.v[j] = keep;
    const double fd = (lp - lm) / (2.0 * eps);
    const double an = grad_x.v[j];
    if (std::abs(fd) < 1e-9 && std::abs(an) < 1e-9) continue;
    INFO("input[" << j << "] analytic=" << an << " fd=" << fd);
    CHECK(rel_err(an, fd) < tol);
  }
}

}  // namespace

TEST_CASE("conv output size is ceil(in/stride)") {
  CHECK(Conv2d::out_size(64, 1) == 64);
  CHECK(Conv2d::out_size(64, 2) == 32);
  CHECK(Conv2d::out_size(33, 2) == 17);
  CHECK(Conv2d::out_size(5, 2) == 3);
}

TEST_CASE("conv known values with all-ones kernel") {
  Rng rng(1);
  Conv2d conv(1, 1, 3, 1, rng, Init::Zero);
  std::fill(conv.weight.v.begin(), conv.weight.v.end(), 1.0);
  Tensor x({1, 1, 3, 3});
  for (int i = 0; i < 9; ++i) x.v[i] = i + 1;
  Tensor y = conv.forward(x, false);
  REQUIRE(y.shape == std::vector<int>{1, 1, 3, 3});
  CHECK(y.v[0] == doctest::Approx(12.0));   // 1+2+4+5
  CHECK(y.v[4] == doctest::Approx(45.0));   // all nine
  CHECK(y.v[8] == doctest::Approx(28.0));   // 5+6+8+9
}

TEST_CASE("even kernel pads more on the bottom-right") {
  Rng rng(1);
  Conv2d conv(1, 1, 2, 1, rng, Init::Zero);
  std::fill(conv.weight.v.begin(), conv.weight.v.end(), 1.0);
  Tensor x({1, 1, 3, 3});
  for (int i = 0; i < 9; ++i) x.v[i] = i + 1;
  Tensor y = conv.forward(x, false);
  REQUIRE(y.shape == std::vector<int>{1, 1, 3, 3});
  CHECK(y.v[0] == doctest::Approx(1.0 + 2 + 4 + 5));
  CHECK(y.v[8] == doctest::Approx(9.0));  // window hangs off bottom-right
}

TEST_CASE("maxpool uses floor semantics on odd sizes") {
  MaxPool2x2 pool;
  Tensor x({1, 1, 33, 33});
  for (size_t i = 0; i < x.v.size(); ++i) x.v[i] = static_cast<double>(i);
  Tensor y = pool.forward(x, false);
  REQUIRE(y.shape == std::vector<int>{1, 1, 16, 16});
  CHECK(y.v[0] == doctest::Approx(34.0));  // max of {0,1,33,34}
}

TEST_CASE("transposed conv is the exact adjoint of the matching conv") {
  Rng rng(5);
  const int cin = 3, cout = 2, k = 5, s = 2, h = 6, w = 8;
  ConvTranspose2d up(cin, cout, k, s, rng);
  Conv2d down(cout, cin, k, s, rng, Init::Zero);
  REQUIRE(down.weight.shape == up.weight.shape);
  down.weight.v = up.weight.v;

  Tensor x = random_tensor({1, cin, h, w}, rng);
  Tensor u = random_tensor({1, cout, h * s, w * s}, rng);
  Tensor ax = up.forward(x, false);       // A^T x
  Tensor au = down.forward(u, false);     // A u
  REQUIRE(ax.shape == u.shape);
  REQUIRE(au.shape == x.shape);
  double lhs = 0.0, rhs = 0.0;
  for (size_t i = 0; i < ax.v.size(); ++i) lhs += ax.v[i] * u.v[i];
  for (size_t i = 0; i < au.v.size(); ++i) rhs += au.v[i] * x.v[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("transposed conv doubles resolution at stride 2") {
  Rng rng(9);
  ConvTranspose2d up(4, 2, 5, 2, rng);
  Tensor x = random_tensor({2, 4, 8, 8}, rng);
  Tensor y = up.forward(x, false);
  CHECK(y.shape == std::vector<int>{2, 2, 16, 16});
  ConvTranspose2d same(4, 2, 5, 1, rng);
  Tensor y1 = same.forward(x, false);
  CHECK(y1.shape == std::vector<int>{2, 2, 8, 8});
}

TEST_CASE("gradients of a dense stack match finite differences") {
  Rng rng(11);
  Sequential model;
  model.emplace<Flatten>();
  model.emplace<Dense>(12, 7, rng);
  model.emplace<Tanh>();
  model.emplace<Dense>(7, 3, rng);
  Tensor x = random_tensor({2, 3, 2, 2}, rng);
  check_gradients(model, x);
}

TEST_CASE("gradients of a conv net match finite differences") {
  Rng rng(12);
  Sequential model;
  model.emplace<Conv2d>(2, 3, 3, 1, rng);
  model.emplace<LeakyRelu>(0.2);
  model.emplace<MaxPool2x2>();
  model.emplace<Flatten>();
  model.emplace<Dense>(3 * 3 * 3, 4, rng);
  model.emplace<Sigmoid>();
  Tensor x = random_tensor({2, 2, 6, 6}, rng);
  check_gradients(model, x);
}

TEST_CASE("gradients through strided conv and transposed conv match") {
  Rng rng(13);
  Sequential model;
  model.emplace<Conv2d>(1, 2, 3, 2, rng);
  model.emplace<Relu>();
  model.emplace<ConvTranspose2d>(2, 2, 3, 2, rng);
  model.emplace<Tanh>();
  Tensor x = random_tensor({2, 1, 6, 6}, rng);
  check_gradients(model, x);
}

TEST_CASE("gradients through batch norm match") {
  Rng rng(14);
  Sequential model;
  model.emplace<Conv2d>(1, 3, 3, 1, rng);
  model.emplace<BatchNorm2d>(3);
  model.emplace<Relu>();
  model.emplace<Flatten>();
  model.emplace<Dense>(3 * 4 * 4, 2, rng);
  Tensor x = random_tensor({3, 1, 4, 4}, rng);
  check_gradients(model, x, 2e-4);
}

TEST_CASE("batch norm normalizes in training and tracks running stats") {
  Rng rng(15);
  BatchNorm2d bn(2);
  Tensor x = random_tensor({4, 2, 5, 5}, rng, 3.0);
  for (size_t i = 0; i < x.v.size(); ++i) x.v[i] += 1.5;  // nonzero mean
  Tensor y = bn.forward(x, true);
  for (int c = 0; c < 2; ++c) {
    double s = 0.0, s2 = 0.0;
    int cnt = 0;
    for (int i = 0; i < 4; ++i)
      for (int p = 0; p < 25; ++p) {
        const double v = y.v[(static_cast<size_t>(i) * 2 + c) * 25 + p];
        s += v;
        s2 += v * v;
        ++cnt;
      }
    const double mean = s / cnt;
    const double var = s2 / cnt - mean * mean;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }
  // One update moves the running stats a tenth of the way.
  CHECK(bn.running_mean.v[0] != 0.0);
  CHECK(bn.running_var.v[0] != 1.0);

  // Eval mode reads only the running stats: repeated calls are bit-identical
  // and do not advance them.
  Tensor a = random_tensor({1, 2, 5, 5}, rng);
  Tensor ya = bn.forward(a, false);
  const std::vector<double> rm = bn.running_mean.v;
  Tensor yb = bn.forward(a, false);
  CHECK(ya.v == yb.v);
  CHECK(bn.running_mean.v == rm);
}

TEST_CASE("dropout is identity in eval and a scaled mask in train") {
  Rng rng(16);
  Dropout drop(0.5);
  drop.set_rng(&rng);
  Tensor x({1, 100});
  for (auto& v : x.v) v = 1.0;
  Tensor eval_y = drop.forward(x, false);
  CHECK(eval_y.v == x.v);
  Tensor train_y = drop.forward(x, true);
  int zeros = 0, scaled = 0;
  for (double v : train_y.v) {
    if (v == 0.0)
      ++zeros;
    else if (v == doctest::Approx(2.0))
      ++scaled;
  }
  CHECK(zeros + scaled == 100);
  CHECK(zeros > 20);
  CHECK(zeros < 80);

  Rng rng_a(77), rng_b(77);
  Dropout da(0.5), db(0.5);
  da.set_rng(&rng_a);
  db.set_rng(&rng_b);
  CHECK(da.forward(x, true).v == db.forward(x, true).v);
}

TEST_CASE("sgd with momentum and adam both descend a quadratic") {
  for (int which = 0; which < 2; ++which) {
    Tensor w({1});
    Tensor g({1});
    w.v[0] = 5.0;
    std::vector<Param> ps{{"w", &w, &g}};
    Sgd sgd(ps, 0.1);
    Adam adam(ps, 0.1, 0.5);
    for (int it = 0; it < 100; ++it) {
      g.shape = w.shape;
      g.v = {w.v[0]};
      if (which == 0)
        sgd.step();
      else
        adam.step();
    }
    CHECK(std::abs(w.v[0]) < 0.5);
  }
}

TEST_CASE("learning-rate schedule halves every fifteen epochs") {
  CHECK(scheduled_lr(0.1, 0) == doctest::Approx(0.1));
  CHECK(scheduled_lr(0.1, 14) == doctest::Approx(0.1));
  CHECK(scheduled_lr(0.1, 15) == doctest::Approx(0.05));
  CHECK(scheduled_lr(0.1, 31) == doctest::Approx(0.025));
}

TEST_CASE("parameter count of a dense layer") {
  Rng rng(17);
  Sequential m;
  m.emplace<Dense>(10, 5, rng);
  CHECK(param_count(m) == 55);
}

TEST_CASE("checkpoint round-trips values, names, and config") {
  Rng rng(18);
  Sequential m;
  m.emplace<Conv2d>(1, 2, 3, 1, rng);
  m.emplace<BatchNorm2d>(2);
  m.emplace<Flatten>();
  m.emplace<Dense>(2 * 4 * 4, 3, rng);
  Tensor x = random_tensor({2, 1, 4, 4}, rng);
  (void)m.forward(x, true);  // move running stats off their init values

  const std::string path = (std::filesystem::temp_directory_path() / "dp_ckpt_test.bin").string();
  nlohmann::json cfg{{"kind", "unit-test"}, {"epochs", 3}};
  save_checkpoint(path, m.params_and_buffers(), cfg);

  std::vector<double> saved;
  for (const Param& p : m.params_and_buffers())
    for (double v : p.value->v) saved.push_back(static_cast<double>(static_cast<float>(v)));

  for (const Param& p : m.params_and_buffers())
    for (double& v : p.value->v) v += 1.0;

  Checkpoint ck = load_checkpoint(path);
  CHECK(ck.config["kind"] == "unit-test");
  apply_checkpoint(ck, m.params_and_buffers());

  std::vector<double> restored;
  for (const Param& p : m.params_and_buffers())
    for (double v : p.value->v) restored.push_back(v);
  CHECK(restored == saved);
  std::remove(path.c_str());
}

TEST_CASE("corrupt checkpoint magic is rejected") {
  const std::string path = (std::filesystem::temp_directory_path() / "dp_ckpt_bad.bin").string();
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOTMAGIC, and some trailing bytes to get past the header reads";
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("avgpool averages blocks and its adjoint spreads uniformly") {
  Tensor x({1, 1, 4, 4});
  for (int i = 0; i < 16; ++i) x.v[i] = i;
  Tensor y = avgpool(x, 2);
  REQUIRE(y.shape == std::vector<int>{1, 1, 2, 2});
  CHECK(y.v[0] == doctest::Approx((0 + 1 + 4 + 5) / 4.0));
  CHECK(y.v[3] == doctest::Approx((10 + 11 + 14 + 15) / 4.0));

  Tensor g({1, 1, 2, 2});
  g.v = {4.0, 8.0, 12.0, 16.0};
  Tensor gx = avgpool_adjoint(g, 2);
  REQUIRE(gx.shape == x.shape);
  CHECK(gx.v[0] == doctest::Approx(1.0));
  CHECK(gx.v[1] == doctest::Approx(1.0));
  CHECK(gx.v[2] == doctest::Approx(2.0));
  CHECK(gx.v[15] == doctest::Approx(4.0));
}

TEST_CASE("sequential parameter names are hierarchical and stable") {
  Rng rng(19);
  Sequential m;
  m.emplace<Conv2d>(1, 2, 3, 1, rng);
  m.emplace<Tanh>();
  m.emplace<BatchNorm2d>(2);
  auto ps = m.params();
  REQUIRE(ps.size() == 4);
  CHECK(ps[0].name == "0.weight");
  CHECK(ps[1].name == "0.bias");
  CHECK(ps[2].name == "2.gamma");
  CHECK(ps[3].name == "2.beta");
  auto bufs = m.buffers();
  REQUIRE(bufs.size() == 2);
  CHECK(bufs[0].name == "2.running_mean");
  CHECK(bufs[1].name == "2.running_var");
}
