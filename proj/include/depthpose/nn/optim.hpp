#pragma once

#include <cmath>
#include <vector>

#include "depthpose/nn/layers.hpp"

namespace depthpose::nn {

// Heavy-ball SGD: v = momentum*v + g; w -= lr*v.
class Sgd {
 public:
  explicit Sgd(std::vector<Param> params, double lr, double momentum = 0.9)
      : params_(std::move(params)), lr_(lr), momentum_(momentum) {
    velocity_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i)
      velocity_[i].assign(params_[i].value->v.size(), 0.0);
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  void zero_grad() { zero_grads(params_); }
  void step();

 private:
  std::vector<Param> params_;
  double lr_, momentum_;
  std::vector<std::vector<double>> velocity_;
};

class Adam {
 public:
  explicit Adam(std::vector<Param> params, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].value->v.size(), 0.0);
      v_[i].assign(params_[i].value->v.size(), 0.0);
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  void zero_grad() { zero_grads(params_); }
  void step();

 private:
  std::vector<Param> params_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Initial rate halved every `halve_every` epochs (0-based epoch index).
inline double scheduled_lr(double lr0, int epoch, int halve_every = 15) {
  return lr0 * std::pow(0.5, epoch / halve_every);
}

}  // namespace depthpose::nn
