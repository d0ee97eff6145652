#include "nodetab/num/rng.hpp"

#include <cmath>

#include "nodetab/num/error.hpp"

namespace nodetab::num {

namespace {

constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ull;

inline uint64_t mix64(uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

}  // namespace

RngStream::RngStream(uint64_t seed, uint64_t stream) : key_(mix64(seed ^ mix64(stream * kGolden + 1))) {}

uint64_t RngStream::next_u64() { return mix64(key_ + ++counter_ * kGolden); }

double RngStream::uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::uniform_oo() { return (double(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

double RngStream::normal() {
  double u1 = uniform_oo();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

double RngStream::gumbel() { return -std::log(-std::log(uniform_oo())); }

int RngStream::categorical(const double* w, int k) {
  double total = 0.0;
  for (int i = 0; i < k; ++i) total += w[i];
  if (!(total > 0.0)) fail(errc::numeric, "categorical weights must have positive sum");
  double u = uniform() * total;
  double acc = 0.0;
  for (int i = 0; i < k; ++i) {
    acc += w[i];
    if (u < acc) return i;
  }
  return k - 1;
}

uint64_t RngStream::uniform_below(uint64_t bound) {
  uint64_t threshold = -bound % bound;
  for (;;) {
    uint64_t r = next_u64();
    if (r >= threshold) return r % bound;
  }
}

void RngStream::fill_uniform(Matrix& m) {
  double* p = m.mut_data();
  for (size_t i = 0; i < m.size(); ++i) p[i] = uniform();
}

void RngStream::fill_normal(Matrix& m) {
  double* p = m.mut_data();
  for (size_t i = 0; i < m.size(); ++i) p[i] = normal();
}

Matrix RngStream::normal_matrix(int r, int c) {
  Matrix m(r, c);
  fill_normal(m);
  return m;
}

}  // namespace nodetab::num
