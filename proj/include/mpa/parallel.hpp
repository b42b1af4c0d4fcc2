#pragma once

#include <cstddef>
#include <exception>

namespace mpa {

// Selects between the OpenMP kernel and its serial reference. Both paths
// produce bit-identical results; the serial one exists for testing and
// benchmarking.
enum class Exec { Serial, Parallel };

// body(i) for i in [0, n). Iterations must be independent. The first
// exception thrown inside the parallel region is rethrown afterwards.
template <class F>
void parallel_for(std::size_t n, Exec exec, F&& body) {
  if (exec == Exec::Serial) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(mpa_parallel_for_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace mpa
