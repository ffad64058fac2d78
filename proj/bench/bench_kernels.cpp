// Serial reference vs OpenMP kernels: dense matmul and whole-split decoding.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <vector>

#include "prophet/captioner.hpp"
#include "prophet/grounding.hpp"
#include "prophet/kernels.hpp"
#include "prophet/rng.hpp"
#include "prophet/synthdata.hpp"

namespace {

template <class F>
double time_ms(F&& f, int reps) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) f();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main() {
  using namespace prophet;
  std::printf("threads %d\n", omp_get_max_threads());

  Rng rng(3);
  for (std::size_t n : {32, 128, 256, 512}) {
    std::vector<double> a(n * n), b(n * n), c(n * n);
    for (auto& v : a) v = rng.uniform(-1, 1);
    for (auto& v : b) v = rng.uniform(-1, 1);
    const int reps = n <= 128 ? 50 : 3;
    const double serial = time_ms([&] { kernels::matmul_serial(a, b, c, n, n, n); }, reps);
    const double parallel = time_ms([&] { kernels::matmul(a, b, c, n, n, n); }, reps);
    std::printf("matmul %4zu  serial %9.3f ms  omp %9.3f ms  speedup %.2f\n", n, serial, parallel,
                serial / parallel);
  }

  const auto& catalog = Catalog::standard();
  const Split split = make_split(11, catalog, {0, 0, 400});
  ModelDims dims;
  dims.vocab = catalog.vocab_size();
  const ModelParams params = init_params(dims, 5);
  const double serial = time_ms([&] { decode_dataset_serial(split.test, params, 16); }, 3);
  const double parallel = time_ms([&] { decode_dataset(split.test, params, 16); }, 3);
  std::printf("decode 400  serial %9.3f ms  omp %9.3f ms  speedup %.2f\n", serial, parallel,
              serial / parallel);
  return 0;
}
