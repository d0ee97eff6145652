#pragma once

#include <cstdint>
#include <vector>

#include "nodetab/num/matrix.hpp"

namespace nodetab::num {

// Counter-based stream: draw i of stream s under seed k is a fixed hash of
// (k, s, i).  Streams never overlap and any draw can be replayed by counter,
// which keeps every consumer reproducible regardless of evaluation order.
class RngStream {
public:
  RngStream(uint64_t seed, uint64_t stream);

  uint64_t next_u64();
  double uniform();     // [0, 1)
  double uniform_oo();  // (0, 1)
  double normal();
  double gumbel();
  // Index in [0, k) proportional to non-negative weights.
  int categorical(const double* w, int k);
  uint64_t uniform_below(uint64_t bound);

  void fill_uniform(Matrix& m);
  void fill_normal(Matrix& m);
  Matrix normal_matrix(int r, int c);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = uniform_below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  uint64_t counter() const { return counter_; }
  void seek(uint64_t counter) { counter_ = counter; }

private:
  uint64_t key_;
  uint64_t counter_ = 0;
};

// Stream ids used across the project.
namespace stream {
constexpr uint64_t init = 1;
constexpr uint64_t shuffle = 2;
constexpr uint64_t z = 3;
constexpr uint64_t cond = 4;
constexpr uint64_t gumbel = 5;
constexpr uint64_t dropout = 6;
constexpr uint64_t encode = 7;
constexpr uint64_t mix = 8;
constexpr uint64_t sim = 9;
constexpr uint64_t fit = 10;
constexpr uint64_t eval = 11;
}  // namespace stream

}  // namespace nodetab::num
