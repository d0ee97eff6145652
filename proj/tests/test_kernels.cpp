#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <omp.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "nodetab/num/kernels.hpp"
#include "nodetab/num/rng.hpp"

using namespace nodetab::num;

namespace {

Matrix rand_mat(RngStream& rng, int r, int c) { return rng.normal_matrix(r, c); }

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST_CASE("gemm matches serial reference across shapes and transposes") {
  RngStream rng(42, 1);
  struct Shape {
    int m, n, k;
  };
  for (Shape s : std::vector<Shape>{{1, 1, 1}, {3, 5, 7}, {17, 9, 33}, {64, 64, 64}, {130, 70, 300}})
    for (int ta = 0; ta < 2; ++ta)
      for (int tb = 0; tb < 2; ++tb)
        for (int acc = 0; acc < 2; ++acc) {
          Matrix A = rand_mat(rng, ta ? s.k : s.m, ta ? s.m : s.k);
          Matrix B = rand_mat(rng, tb ? s.n : s.k, tb ? s.k : s.n);
          Matrix C = rand_mat(rng, s.m, s.n);
          Matrix Cref = C.clone();
          kern::gemm(ta, tb, s.m, s.n, s.k, A.data(), A.cols(), B.data(), B.cols(), C.mut_data(),
                     s.n, acc);
          kern::serial::gemm(ta, tb, s.m, s.n, s.k, A.data(), A.cols(), B.data(), B.cols(),
                             Cref.mut_data(), s.n, acc);
          CHECK(max_abs_diff(C, Cref) < 1e-10 * s.k);
        }
}

TEST_CASE("gemm is bitwise deterministic across thread counts") {
  RngStream rng(7, 2);
  Matrix A = rand_mat(rng, 150, 700);
  Matrix B = rand_mat(rng, 700, 90);
  Matrix C1(150, 90), C2(150, 90);
  int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  kern::gemm(false, false, 150, 90, 700, A.data(), 700, B.data(), 90, C1.mut_data(), 90, false);
  omp_set_num_threads(4);
  kern::gemm(false, false, 150, 90, 700, A.data(), 700, B.data(), 90, C2.mut_data(), 90, false);
  omp_set_num_threads(saved);
  CHECK(std::memcmp(C1.data(), C2.data(), C1.size() * sizeof(double)) == 0);
}

TEST_CASE("reductions are bitwise deterministic across thread counts") {
  RngStream rng(9, 3);
  Matrix A = rand_mat(rng, 333, 77);
  int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  double s1 = kern::sum_all(A.data(), A.size());
  Matrix c1(1, 77), r1(333, 1);
  kern::col_sum(A.data(), c1.mut_data(), 333, 77);
  kern::row_sum(A.data(), r1.mut_data(), 333, 77);
  omp_set_num_threads(4);
  double s2 = kern::sum_all(A.data(), A.size());
  Matrix c2(1, 77), r2(333, 1);
  kern::col_sum(A.data(), c2.mut_data(), 333, 77);
  kern::row_sum(A.data(), r2.mut_data(), 333, 77);
  omp_set_num_threads(saved);
  CHECK(s1 == s2);
  CHECK(std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(r1.data(), r2.data(), r1.size() * sizeof(double)) == 0);
}

TEST_CASE("reductions match serial reference") {
  RngStream rng(11, 4);
  Matrix A = rand_mat(rng, 211, 53);
  double s = kern::sum_all(A.data(), A.size());
  double sref = kern::serial::sum_all(A.data(), A.size());
  CHECK(std::fabs(s - sref) < 1e-9);
  Matrix c(1, 53), cref(1, 53);
  kern::col_sum(A.data(), c.mut_data(), 211, 53);
  kern::serial::col_sum(A.data(), cref.mut_data(), 211, 53);
  CHECK(max_abs_diff(c, cref) < 1e-11);
}

TEST_CASE("elementwise kernels") {
  RngStream rng(13, 5);
  Matrix A = rand_mat(rng, 10, 10);
  Matrix B = rand_mat(rng, 10, 10);
  Matrix out(10, 10);
  kern::add(A.data(), B.data(), out.mut_data(), 100);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) CHECK(out(i, j) == A(i, j) + B(i, j));
  kern::leaky(A.data(), 0.2, out.mut_data(), 100);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) CHECK(out(i, j) == (A(i, j) > 0 ? A(i, j) : 0.2 * A(i, j)));
  kern::scale_add(A.data(), 2.0, -1.0, out.mut_data(), 100);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) CHECK(out(i, j) == 2.0 * A(i, j) - 1.0);
}

TEST_CASE("softmax rows sums to one and matches serial") {
  RngStream rng(17, 6);
  Matrix A = rand_mat(rng, 40, 9);
  Matrix out(40, 9), ref(40, 9);
  kern::softmax_rows(A.data(), out.mut_data(), 40, 9);
  kern::serial::softmax_rows(A.data(), ref.mut_data(), 40, 9);
  CHECK(max_abs_diff(out, ref) < 1e-14);
  for (int i = 0; i < 40; ++i) {
    double s = 0;
    for (int j = 0; j < 9; ++j) {
      CHECK(out(i, j) > 0.0);
      s += out(i, j);
    }
    CHECK(std::fabs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("onehot argmax picks lowest index on ties") {
  Matrix A(2, 3);
  A.at(0, 0) = 1.0;
  A.at(0, 1) = 1.0;
  A.at(0, 2) = 0.0;
  A.at(1, 0) = 0.0;
  A.at(1, 1) = 2.0;
  A.at(1, 2) = 2.0;
  Matrix out(2, 3);
  kern::onehot_argmax_rows(A.data(), out.mut_data(), 2, 3);
  CHECK(out(0, 0) == 1.0);
  CHECK(out(0, 1) == 0.0);
  CHECK(out(1, 1) == 1.0);
  CHECK(out(1, 2) == 0.0);
}
