#include "mpa/nn/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <vector>

namespace mpa::nn::kernels {

namespace {

std::atomic<Exec> g_default_exec{Exec::Parallel};

// Returns B in k x n layout, transposing into `scratch` when needed.
const float* normal_b(const Gemm& g, const float* b, std::vector<float>& scratch) {
  if (!g.trans_b) return b;
  scratch.resize(g.k * g.n);
  for (std::size_t j = 0; j < g.n; ++j) {
    const float* src = b + j * g.k;
    for (std::size_t kk = 0; kk < g.k; ++kk) scratch[kk * g.n + j] = src[kk];
  }
  return scratch.data();
}

inline float a_at(const Gemm& g, const float* a, std::size_t i, std::size_t kk) {
  return g.trans_a ? a[kk * g.m + i] : a[i * g.k + kk];
}

// Rows [i0, i1) of C, four at a time so each B row is loaded once per block.
void gemm_rows(const Gemm& g, const float* a, const float* bn, float* c, std::size_t i0,
               std::size_t i1) {
  const std::size_t n = g.n;
  if (!g.accumulate) std::memset(c + i0 * n, 0, (i1 - i0) * n * sizeof(float));
  std::size_t i = i0;
  for (; i + 4 <= i1; i += 4) {
    float* c0 = c + i * n;
    float* c1 = c0 + n;
    float* c2 = c1 + n;
    float* c3 = c2 + n;
    for (std::size_t kk = 0; kk < g.k; ++kk) {
      const float a0 = a_at(g, a, i, kk);
      const float a1 = a_at(g, a, i + 1, kk);
      const float a2 = a_at(g, a, i + 2, kk);
      const float a3 = a_at(g, a, i + 3, kk);
      const float* brow = bn + kk * n;
      for (std::size_t j = 0; j < n; ++j) {
        const float bv = brow[j];
        c0[j] += a0 * bv;
        c1[j] += a1 * bv;
        c2[j] += a2 * bv;
        c3[j] += a3 * bv;
      }
    }
  }
  for (; i < i1; ++i) {
    float* crow = c + i * n;
    for (std::size_t kk = 0; kk < g.k; ++kk) {
      const float av = a_at(g, a, i, kk);
      const float* brow = bn + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

constexpr std::size_t kRowBlock = 16;

}  // namespace

namespace serial {

void gemm(const Gemm& g, const float* a, const float* b, float* c) {
  if (g.m == 0 || g.n == 0) return;
  std::vector<float> scratch;
  const float* bn = normal_b(g, b, scratch);
  gemm_rows(g, a, bn, c, 0, g.m);
}

}  // namespace serial

namespace omp {

void gemm(const Gemm& g, const float* a, const float* b, float* c) {
  if (g.m == 0 || g.n == 0) return;
  std::vector<float> scratch;
  const float* bn = normal_b(g, b, scratch);
  const auto blocks = static_cast<std::ptrdiff_t>((g.m + kRowBlock - 1) / kRowBlock);
  // Small products are not worth a parallel region.
  if (blocks == 1 || g.m * g.n * g.k < (1u << 15)) {
    gemm_rows(g, a, bn, c, 0, g.m);
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = static_cast<std::size_t>(blk) * kRowBlock;
    gemm_rows(g, a, bn, c, i0, std::min(g.m, i0 + kRowBlock));
  }
}

}  // namespace omp

void gemm(Exec exec, const Gemm& g, const float* a, const float* b, float* c) {
  if (exec == Exec::Serial) {
    serial::gemm(g, a, b, c);
  } else {
    omp::gemm(g, a, b, c);
  }
}

Exec default_exec() { return g_default_exec.load(std::memory_order_relaxed); }
void set_default_exec(Exec exec) { g_default_exec.store(exec, std::memory_order_relaxed); }

}  // namespace mpa::nn::kernels
