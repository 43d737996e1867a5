#include "scenerag/kernels.hpp"

#include <atomic>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <string>

namespace scenerag::kernels {
namespace {

struct Table {
  Backend backend;
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
};

constexpr Table kScalar{Backend::Scalar, &scalar::dot, &scalar::axpy};
constexpr Table kAvx2{Backend::Avx2, &avx2::dot, &avx2::axpy};
constexpr Table kNeon{Backend::Neon, &neon::dot, &neon::axpy};

bool cpu_has(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return true;
    case Backend::Avx2:
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::Neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const Table* table_for(Backend b) {
  switch (b) {
    case Backend::Scalar: return &kScalar;
    case Backend::Avx2: return &kAvx2;
    case Backend::Neon: return &kNeon;
  }
  return &kScalar;
}

const Table* best() {
  if (cpu_has(Backend::Avx2)) return &kAvx2;
  if (cpu_has(Backend::Neon)) return &kNeon;
  return &kScalar;
}

std::atomic<const Table*> g_table{nullptr};

const Table& active() {
  const Table* t = g_table.load(std::memory_order_acquire);
  if (t == nullptr) {
    t = best();
    g_table.store(t, std::memory_order_release);
  }
  return *t;
}

}  // namespace

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
    case Backend::Neon: return "neon";
  }
  return "unknown";
}

std::vector<Backend> available_backends() {
  std::vector<Backend> out;
  for (Backend b : {Backend::Scalar, Backend::Avx2, Backend::Neon}) {
    if (cpu_has(b)) out.push_back(b);
  }
  return out;
}

Backend active_backend() { return active().backend; }

void set_backend(Backend b) {
  if (!cpu_has(b)) {
    throw std::invalid_argument("kernel backend not available: " + std::string(backend_name(b)));
  }
  g_table.store(table_for(b), std::memory_order_release);
}

void reset_backend() { g_table.store(best(), std::memory_order_release); }

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return active().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  active().axpy(alpha, x.data(), y.data(), x.size());
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void gemv(std::span<const double> w, std::size_t rows, std::size_t cols,
          std::span<const double> x, std::span<const double> bias,
          std::span<double> y) {
  assert(w.size() == rows * cols && x.size() == cols && bias.size() == rows && y.size() == rows);
  const Table& t = active();
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] = bias[r] + t.dot(w.data() + r * cols, x.data(), cols);
  }
}

void gemv_t_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                std::span<const double> v, std::span<double> out) {
  assert(w.size() == rows * cols && v.size() == rows && out.size() == cols);
  const Table& t = active();
  for (std::size_t r = 0; r < rows; ++r) {
    if (v[r] != 0.0) t.axpy(v[r], w.data() + r * cols, out.data(), cols);
  }
}

void ger(double alpha, std::span<const double> u, std::span<const double> x,
         std::span<double> w) {
  assert(w.size() == u.size() * x.size());
  const Table& t = active();
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < u.size(); ++r) {
    const double a = alpha * u[r];
    if (a != 0.0) t.axpy(a, x.data(), w.data() + r * cols, cols);
  }
}

}  // namespace scenerag::kernels
