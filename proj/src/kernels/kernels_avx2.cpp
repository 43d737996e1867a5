#include "scenerag/kernels.hpp"

#include <stdexcept>

#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
#include <immintrin.h>
#define SCENERAG_HAVE_AVX2_KERNELS 1
#endif

namespace scenerag::kernels::avx2 {

#ifdef SCENERAG_HAVE_AVX2_KERNELS

__attribute__((target("avx2,fma")))
double dot(const double* a, const double* b, std::size_t n) {
  // two accumulators, 8 doubles per iteration
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  __m256d acc = _mm256_add_pd(acc0, acc1);
  __m128d lo = _mm256_castpd256_pd128(acc);
  __m128d hi = _mm256_extractf128_pd(acc, 1);
  __m128d sum = _mm_add_pd(lo, hi);
  sum = _mm_add_sd(sum, _mm_unpackhi_pd(sum, sum));
  double out = _mm_cvtsd_f64(sum);
  for (; i < n; ++i) out += a[i] * b[i];
  return out;
}

__attribute__((target("avx2,fma")))
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

#else

double dot(const double*, const double*, std::size_t) {
  throw std::logic_error("AVX2 kernels not compiled for this target");
}

void axpy(double, const double*, double*, std::size_t) {
  throw std::logic_error("AVX2 kernels not compiled for this target");
}

#endif

}  // namespace scenerag::kernels::avx2
