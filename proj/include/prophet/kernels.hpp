#pragma once

// Dense matrix kernels. Each kernel has an OpenMP-parallel version used by the
// library and a serial reference kept for testing and benchmarking. Both sum
// over the inner dimension in the same order, so results are bitwise equal.

#include <cstddef>
#include <span>

namespace prophet::kernels {

// Work (m * k * n) below which the parallel kernels run serially.
inline constexpr std::size_t kParallelThreshold = 1u << 16;

// C (m x n) = A (m x k) * B (k x n)
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);

// GA (m x k) += G (m x n) * B^T, with B (k x n)
void matmul_acc_nt(std::span<const double> g, std::span<const double> b, std::span<double> ga,
                   std::size_t m, std::size_t k, std::size_t n);
void matmul_acc_nt_serial(std::span<const double> g, std::span<const double> b,
                          std::span<double> ga, std::size_t m, std::size_t k, std::size_t n);

// GB (k x n) += A^T * G, with A (m x k), G (m x n)
void matmul_acc_tn(std::span<const double> a, std::span<const double> g, std::span<double> gb,
                   std::size_t m, std::size_t k, std::size_t n);
void matmul_acc_tn_serial(std::span<const double> a, std::span<const double> g,
                          std::span<double> gb, std::size_t m, std::size_t k, std::size_t n);

}  // namespace prophet::kernels
