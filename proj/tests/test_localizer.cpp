#include <doctest.h>

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "depthpose/core/errors.hpp"
#include "depthpose/core/rng.hpp"
#include "depthpose/dataio/preprocess.hpp"
#include "depthpose/dataio/synth.hpp"
#include "depthpose/models/localizer.hpp"
#include "depthpose/nn/optim.hpp"

using namespace depthpose;
using namespace depthpose::models;

namespace {

// Small stand-in for training-behavior tests; the default config is exercised
// separately where its exact size matters.
LocalizerConfig tiny_config() {
  LocalizerConfig cfg;
  cfg.input_width = 40;
  cfg.input_height = 33;
  cfg.conv_specs = {{3, 4, 1}, {3, 4, 1}, {3, 6, 1}, {3, 6, 1}};
  cfg.fc_sizes = {16, 2};
  return cfg;
}

std::vector<dataio::FrameRecord> tiny_set(int frames) {
  dataio::SynthConfig sc;
  sc.n_subjects = 1;
  sc.frames_per_subject = frames;
  sc.seed = 5;
  return dataio::synth_records(sc);
}

}  // namespace

TEST_CASE("default localizer matches the recorded parameter count") {
  Rng rng(0);
  nn::Sequential model = build_localizer(LocalizerConfig{}, rng);
  std::ifstream golden(std::string(TEST_SOURCE_DIR) + "/golden/localizer_params.txt");
  REQUIRE(golden.good());
  size_t expect = 0;
  golden >> expect;
  CHECK(nn::param_count(model) == expect);
  CHECK(expect < 5'000'000);
}

TEST_CASE("localizer output is a pair inside the activation range") {
  Rng rng(1);
  nn::Sequential model = build_localizer(LocalizerConfig{}, rng);
  nn::Tensor x;
  x.shape = {1, 1, 132, 160};
  x.v.assign(132 * 160, 0.0);
  const nn::Tensor out = model.forward(x, false);
  REQUIRE(out.shape == std::vector<int>{1, 2});
  for (double v : out.v) {
    CHECK(std::isfinite(v));
    CHECK(v > -1.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("localizer handles batched input") {
  Rng rng(2);
  LocalizerConfig cfg = tiny_config();
  nn::Sequential model = build_localizer(cfg, rng);
  nn::Tensor x;
  x.shape = {8, 1, cfg.input_height, cfg.input_width};
  x.v.assign(static_cast<size_t>(nn::Tensor::numel_of(x.shape)), 0.25);
  const nn::Tensor out = model.forward(x, false);
  CHECK(out.shape == std::vector<int>{8, 2});
}

TEST_CASE("bad localizer configs are rejected") {
  Rng rng(0);
  LocalizerConfig three_stages = tiny_config();
  three_stages.conv_specs.resize(3);
  CHECK_THROWS_AS(build_localizer(three_stages, rng), ConfigError);

  LocalizerConfig wrong_head = tiny_config();
  wrong_head.fc_sizes = {16, 3};
  CHECK_THROWS_AS(build_localizer(wrong_head, rng), ConfigError);

  LocalizerConfig collapsed = tiny_config();
  collapsed.input_width = 8;
  collapsed.input_height = 8;
  collapsed.conv_specs = {{3, 4, 2}, {3, 4, 2}, {3, 4, 2}, {3, 4, 2}};
  CHECK_THROWS_AS(build_localizer(collapsed, rng), ConfigError);
}

TEST_CASE("center decode maps the activation range onto the frame") {
  const PixelPoint mid = decode_center(0.0, 0.0, 160, 132);
  CHECK(mid.x == 80.0);
  CHECK(mid.y == 66.0);
  const PixelPoint corner = decode_center(-1.0, -1.0, 160, 132);
  CHECK(corner.x == 0.0);
  CHECK(corner.y == 0.0);
  const PixelPoint q = decode_center(0.5, 0.0, 160, 132);
  CHECK(q.x == 120.0);
  CHECK(q.y == 66.0);
}

TEST_CASE("encode then decode returns every in-frame point") {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const PixelPoint p{rng.uniform(0.0, 160.0), rng.uniform(0.0, 132.0)};
    const auto [rx, ry] = encode_center(p, 160, 132);
    CHECK(rx >= -1.0);
    CHECK(rx <= 1.0);
    const PixelPoint back = decode_center(rx, ry, 160, 132);
    CHECK(std::abs(back.x - p.x) < 0.5);
    CHECK(std::abs(back.y - p.y) < 0.5);
  }
}

TEST_CASE("training without center annotations is rejected") {
  auto recs = tiny_set(4);
  for (auto& r : recs) r.head_center_2d.reset();
  Rng rng(0);
  LocalizerConfig cfg = tiny_config();
  nn::Sequential model = build_localizer(cfg, rng);
  LocalizerHyper hyper;
  hyper.epochs = 1;
  CHECK_THROWS_AS(train_localizer(model, recs, cfg, hyper, rng), MissingAnnotation);
}

TEST_CASE("zero learning rate leaves the loss history flat") {
  const auto recs = tiny_set(6);
  Rng rng(3);
  LocalizerConfig cfg = tiny_config();
  nn::Sequential model = build_localizer(cfg, rng);
  LocalizerHyper hyper;
  hyper.epochs = 4;
  hyper.lr = 0.0;
  const auto hist = train_localizer(model, recs, cfg, hyper, rng);
  REQUIRE(hist.size() == 4);
  for (double h : hist) CHECK(h == hist[0]);
}

TEST_CASE("training is deterministic given the seed") {
  const auto recs = tiny_set(6);
  LocalizerConfig cfg = tiny_config();
  LocalizerHyper hyper;
  hyper.epochs = 3;

  auto run = [&]() {
    Rng rng(11);
    nn::Sequential model = build_localizer(cfg, rng);
    return train_localizer(model, recs, cfg, hyper, rng);
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("training reduces the loss on a small set") {
  const auto recs = tiny_set(6);
  Rng rng(4);
  LocalizerConfig cfg = tiny_config();
  nn::Sequential model = build_localizer(cfg, rng);
  LocalizerHyper hyper;
  hyper.epochs = 30;
  hyper.lr = 0.05;
  const auto hist = train_localizer(model, recs, cfg, hyper, rng);
  CHECK(hist.back() < hist.front());
}

TEST_CASE("analytic loss gradient matches finite differences at the head") {
  const auto recs = tiny_set(2);
  Rng rng(6);
  LocalizerConfig cfg = tiny_config();
  cfg.dropout = 0.0;  // keep the train-mode forward equal to the eval forward
  nn::Sequential model = build_localizer(cfg, rng);
  model.set_rng(&rng);

  nn::Tensor x;
  x.shape = {2, 1, cfg.input_height, cfg.input_width};
  x.v.resize(static_cast<size_t>(nn::Tensor::numel_of(x.shape)));
  std::vector<std::pair<double, double>> ys(2);
  for (size_t i = 0; i < 2; ++i) {
    const Image norm = dataio::resized_normalized(recs[i].depth.mm,
                                                  cfg.input_height, cfg.input_width);
    std::copy(norm.v.begin(), norm.v.end(),
              x.v.begin() + static_cast<long>(i * norm.v.size()));
    ys[i] = encode_center(*recs[i].head_center_2d, recs[i].depth.mm.width,
                          recs[i].depth.mm.height);
  }

  auto loss_of = [&]() {
    const nn::Tensor out = model.forward(x, false);
    double sse = 0.0;
    for (size_t b = 0; b < 2; ++b) {
      const double ex = out.v[b * 2] - ys[b].first;
      const double ey = out.v[b * 2 + 1] - ys[b].second;
      sse += ex * ex + ey * ey;
    }
    return sse / 4.0;
  };

  auto params = model.params();
  nn::zero_grads(params);
  const nn::Tensor out = model.forward(x, true);
  nn::Tensor grad;
  grad.shape = out.shape;
  grad.v.resize(out.v.size());
  for (size_t b = 0; b < 2; ++b) {
    grad.v[b * 2] = (out.v[b * 2] - ys[b].first) / 2.0;
    grad.v[b * 2 + 1] = (out.v[b * 2 + 1] - ys[b].second) / 2.0;
  }
  model.backward(grad);

  // final dense layer = last weight-bearing params in the list
  nn::Param* weight = nullptr;
  for (auto& p : params)
    if (p.name.size() >= 6 && p.name.substr(p.name.size() - 6) == "weight")
      weight = &p;
  REQUIRE(weight != nullptr);
  const double eps = 1e-5;
  for (size_t i = 0; i < weight->value->v.size(); i += 7) {
    const double orig = weight->value->v[i];
    weight->value->v[i] = orig + eps;
    const double up = loss_of();
    weight->value->v[i] = orig - eps;
    const double dn = loss_of();
    weight->value->v[i] = orig;
    const double fd = (up - dn) / (2.0 * eps);
    const double an = weight->grad->v[i];
    CHECK(std::abs(fd - an) <=
          1e-3 * std::max({1e-8, std::abs(fd), std::abs(an)}));
  }
}

TEST_CASE("localize returns coordinates on the source frame") {
  Rng rng(8);
  LocalizerConfig cfg = tiny_config();
  nn::Sequential model = build_localizer(cfg, rng);
  dataio::SynthConfig sc;
  sc.n_subjects = 1;
  sc.frames_per_subject = 1;
  const auto recs = dataio::synth_records(sc);
  const PixelPoint p = localize(model, cfg, recs[0].depth.mm);
  CHECK(p.x >= 0.0);
  CHECK(p.x <= recs[0].depth.mm.width);
  CHECK(p.y >= 0.0);
  CHECK(p.y <= recs[0].depth.mm.height);
}
