#pragma once

#include <cstdint>
#include <vector>

namespace depthpose::nn {

// Dense row-major tensor of doubles. Conv layers use (N, C, H, W); dense
// layers use (N, D).
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(static_cast<size_t>(numel_of(shape)), 0.0);
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }
  bool empty() const { return v.empty(); }

  double* data() { return v.data(); }
  const double* data() const { return v.data(); }
};

// C = alpha * op(A) * op(B) + beta * C, row-major.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc);

// Non-overlapping average pooling of (N, C, H, W) by an integer factor.
Tensor avgpool(const Tensor& x, int factor);
// Adjoint: spreads each pooled-cell gradient uniformly over its window.
Tensor avgpool_adjoint(const Tensor& grad_pooled, int factor);

}  // namespace depthpose::nn
