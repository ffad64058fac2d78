#include "prophet/kernels.hpp"

namespace prophet::kernels {

namespace {

bool worth_parallel(std::size_t m, std::size_t k, std::size_t n) {
  return m > 1 && m * k * n >= kParallelThreshold;
}

}  // namespace

void matmul_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  const auto rows = static_cast<long>(m);
  // i-p-j order: per output entry the terms are added in increasing p, the
  // same sequence as the serial reference.
#pragma omp parallel for schedule(static) if (worth_parallel(m, k, n))
  for (long i = 0; i < rows; ++i) {
    double* crow = pc + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void matmul_acc_nt_serial(std::span<const double> g, std::span<const double> b,
                          std::span<double> ga, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * b[p * n + j];
      ga[i * k + p] += acc;
    }
  }
}

void matmul_acc_nt(std::span<const double> g, std::span<const double> b, std::span<double> ga,
                   std::size_t m, std::size_t k, std::size_t n) {
  const double* pg = g.data();
  const double* pb = b.data();
  double* pga = ga.data();
  const auto rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (worth_parallel(m, k, n))
  for (long i = 0; i < rows; ++i) {
    const double* grow = pg + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = pb + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      pga[i * k + p] += acc;
    }
  }
}

void matmul_acc_tn_serial(std::span<const double> a, std::span<const double> g,
                          std::span<double> gb, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += a[i * k + p] * g[i * n + j];
      gb[p * n + j] += acc;
    }
  }
}

void matmul_acc_tn(std::span<const double> a, std::span<const double> g, std::span<double> gb,
                   std::size_t m, std::size_t k, std::size_t n) {
  const double* pa = a.data();
  const double* pg = g.data();
  double* pgb = gb.data();
  const auto inner = static_cast<long>(k);
  // Parallel over rows of GB; each entry still sums over i in increasing order.
#pragma omp parallel for schedule(static) if (worth_parallel(k, m, n))
  for (long p = 0; p < inner; ++p) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += pa[i * k + p] * pg[i * n + j];
      pgb[p * n + j] += acc;
    }
  }
}

}  // namespace prophet::kernels
