#pragma once

#include <cstddef>

#include "mpa/parallel.hpp"

// Dense kernels. Each has a serial reference and an OpenMP version; the two
// accumulate every output element in the same order and agree bit for bit.
namespace mpa::nn::kernels {

// C[m x n] (+)= op(A) * op(B), row-major, no leading-dimension padding.
// op(A) is m x k: A is stored m x k, or k x m when trans_a.
// op(B) is k x n: B is stored k x n, or n x k when trans_b.
// Each C element sums its k products in ascending k.
struct Gemm {
  bool trans_a = false;
  bool trans_b = false;
  std::size_t m = 0, n = 0, k = 0;
  bool accumulate = false;
};

namespace serial {
void gemm(const Gemm& g, const float* a, const float* b, float* c);
}
namespace omp {
void gemm(const Gemm& g, const float* a, const float* b, float* c);
}

void gemm(Exec exec, const Gemm& g, const float* a, const float* b, float* c);

// Process-wide default used by the autograd ops.
Exec default_exec();
void set_default_exec(Exec exec);

}  // namespace mpa::nn::kernels
