#include "depthpose/nn/optim.hpp"

namespace depthpose::nn {

void Sgd::step() {
  for (size_t i = 0; i < params_.size(); ++i) {
    Param& p = params_[i];
    if (p.grad == nullptr || p.grad->empty()) continue;
    std::vector<double>& vel = velocity_[i];
    for (size_t j = 0; j < p.value->v.size(); ++j) {
      vel[j] = momentum_ * vel[j] + p.grad->v[j];
      p.value->v[j] -= lr_ * vel[j];
    }
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Param& p = params_[i];
    if (p.grad == nullptr || p.grad->empty()) continue;
    std::vector<double>& m = m_[i];
    std::vector<double>& v = v_[i];
    for (size_t j = 0; j < p.value->v.size(); ++j) {
      const double g = p.grad->v[j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p.value->v[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace depthpose::nn
