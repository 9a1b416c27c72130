#include "depthpose/nn/tensor.hpp"

#include <cblas.h>

#include <stdexcept>

#include "depthpose/core/errors.hpp"

extern "C" void openblas_set_num_threads(int);

namespace depthpose::nn {

namespace {
struct BlasInit {
  BlasInit() { openblas_set_num_threads(1); }
};
const BlasInit blas_init;
}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

Tensor avgpool(const Tensor& x, int factor) {
  if (x.rank() != 4) throw ShapeMismatch("avgpool expects a 4D tensor");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % factor != 0 || w % factor != 0)
    throw ShapeMismatch("avgpool size not divisible by factor");
  const int oh = h / factor, ow = w / factor;
  Tensor out({n, c, oh, ow});
  const double inv = 1.0 / (factor * factor);
  for (int i = 0; i < n * c; ++i) {
    const double* src = x.data() + static_cast<int64_t>(i) * h * w;
    double* dst = out.data() + static_cast<int64_t>(i) * oh * ow;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double s = 0.0;
        for (int ky = 0; ky < factor; ++ky)
          for (int kx = 0; kx < factor; ++kx)
            s += src[(oy * factor + ky) * w + ox * factor + kx];
        dst[oy * ow + ox] = s * inv;
      }
  }
  return out;
}

Tensor avgpool_adjoint(const Tensor& grad_pooled, int factor) {
  if (grad_pooled.rank() != 4) throw ShapeMismatch("avgpool_adjoint expects 4D");
  const int n = grad_pooled.dim(0), c = grad_pooled.dim(1);
  const int oh = grad_pooled.dim(2), ow = grad_pooled.dim(3);
  const int h = oh * factor, w = ow * factor;
  Tensor out({n, c, h, w});
  const double inv = 1.0 / (factor * factor);
  for (int i = 0; i < n * c; ++i) {
    const double* src = grad_pooled.data() + static_cast<int64_t>(i) * oh * ow;
    double* dst = out.data() + static_cast<int64_t>(i) * h * w;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const double g = src[oy * ow + ox] * inv;
        for (int ky = 0; ky < factor; ++ky)
          for (int kx = 0; kx < factor; ++kx)
            dst[(oy * factor + ky) * w + ox * factor + kx] = g;
      }
  }
  return out;
}

}  // namespace depthpose::nn
