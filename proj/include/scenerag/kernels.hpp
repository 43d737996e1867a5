#pragma once
// Dense double-precision kernels used by the towers and the index scan.
//
// Each kernel has a scalar reference implementation and vectorized variants
// (AVX2+FMA on x86-64, NEON on aarch64). The variant is picked once at first
// use from the running CPU; tests can pin a backend to compare against the
// scalar reference.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace scenerag::kernels {

enum class Backend { Scalar, Avx2, Neon };

std::string_view backend_name(Backend b);

/// Backends usable on this CPU, scalar first.
std::vector<Backend> available_backends();

/// Backend currently used by the dispatched entry points.
Backend active_backend();

/// Pins the dispatched entry points to `b`. Throws if `b` is unavailable.
void set_backend(Backend b);

/// Restores automatic selection (best available).
void reset_backend();

// Raw per-backend entry points. Lengths must match.
namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace scalar

namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace avx2

namespace neon {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace neon

// Dispatched kernels.
double dot(std::span<const double> a, std::span<const double> b);

/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

double norm(std::span<const double> a);

/// y = W x + bias, W row-major rows x cols.
void gemv(std::span<const double> w, std::size_t rows, std::size_t cols,
          std::span<const double> x, std::span<const double> bias,
          std::span<double> y);

/// out += W^T v, W row-major rows x cols.
void gemv_t_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                std::span<const double> v, std::span<double> out);

/// W += alpha * u x^T, W row-major u.size() x x.size().
void ger(double alpha, std::span<const double> u, std::span<const double> x,
         std::span<double> w);

}  // namespace scenerag::kernels
