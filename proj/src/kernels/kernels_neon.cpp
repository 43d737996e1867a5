#include "scenerag/kernels.hpp"

#include <stdexcept>

#if defined(__aarch64__)
#include <arm_neon.h>
#endif

namespace scenerag::kernels::neon {

#if defined(__aarch64__)

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double out = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) out += a[i] * b[i];
  return out;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

#else

double dot(const double*, const double*, std::size_t) {
  throw std::logic_error("NEON kernels not compiled for this target");
}

void axpy(double, const double*, double*, std::size_t) {
  throw std::logic_error("NEON kernels not compiled for this target");
}

#endif

}  // namespace scenerag::kernels::neon
