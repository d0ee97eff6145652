// Compares the omp kernels against the serial reference on the shapes that
// dominate training.  Run with OMP_NUM_THREADS set to see scaling.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "nodetab/num/kernels.hpp"
#include "nodetab/num/rng.hpp"

using namespace nodetab::num;
using clk = std::chrono::steady_clock;

namespace {

double bench(double flops, double budget_s, const std::function<void()>& fn) {
  fn();
  int reps = 1;
  for (;;) {
    auto t0 = clk::now();
    for (int i = 0; i < reps; ++i) fn();
    double dt = std::chrono::duration<double>(clk::now() - t0).count();
    if (dt > budget_s || reps >= 1 << 20) return flops * reps / dt;
    reps *= 4;
  }
}

}  // namespace

int main() {
  RngStream rng(123, 1);
  struct Shape {
    int m, n, k;
    bool ta, tb;
  };
  std::vector<Shape> shapes = {
      {500, 256, 129, false, false},  {500, 1024, 257, false, false}, {500, 2048, 1024, false, false},
      {500, 1024, 2048, false, false}, {1024, 2048, 500, true, false}, {500, 1024, 2048, false, true},
  };
  printf("%28s %12s %12s %8s\n", "gemm shape", "omp GF/s", "serial GF/s", "maxerr");
  for (auto s : shapes) {
    Matrix A = rng.normal_matrix(s.ta ? s.k : s.m, s.ta ? s.m : s.k);
    Matrix B = rng.normal_matrix(s.tb ? s.n : s.k, s.tb ? s.k : s.n);
    Matrix C(s.m, s.n), Cref(s.m, s.n);
    double flops = 2.0 * s.m * s.n * s.k;
    double gf = bench(flops, 0.5, [&] {
      kern::gemm(s.ta, s.tb, s.m, s.n, s.k, A.data(), A.cols(), B.data(), B.cols(), C.mut_data(),
                 s.n, false);
    });
    auto t0 = clk::now();
    kern::serial::gemm(s.ta, s.tb, s.m, s.n, s.k, A.data(), A.cols(), B.data(), B.cols(),
                       Cref.mut_data(), s.n, false);
    double serial_gf = flops / std::chrono::duration<double>(clk::now() - t0).count();
    double err = 0;
    for (int i = 0; i < s.m; ++i)
      for (int j = 0; j < s.n; ++j) err = std::max(err, std::fabs(C(i, j) - Cref(i, j)));
    char label[64];
    snprintf(label, sizeof label, "m=%d n=%d k=%d ta=%d tb=%d", s.m, s.n, s.k, s.ta, s.tb);
    printf("%28s %12.2f %12.2f %8.1e\n", label, gf / 1e9, serial_gf / 1e9, err);
  }

  size_t n = 1 << 22;
  Matrix x = rng.normal_matrix(1 << 11, 1 << 11);
  Matrix y(1 << 11, 1 << 11);
  double gb = bench(double(n) * 8 * 2, 0.3, [&] { kern::relu(x.data(), y.mut_data(), n); });
  printf("\nrelu %zu elems: %.2f GB/s\n", n, gb / 1e9);
  double red = bench(double(n) * 8, 0.3, [&] { kern::sum_all(x.data(), n); });
  printf("sum_all %zu elems: %.2f GB/s\n", n, red / 1e9);
  return 0;
}
