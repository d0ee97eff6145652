#pragma once

#include <vector>

#include "nodetab/num/matrix.hpp"
#include "nodetab/num/rng.hpp"
#include "nodetab/prep/table.hpp"

namespace nodetab::gan {

// Layout of the condition vector: one block per discrete column, in schema
// order.  Width 0 when the schema has no discrete columns.
struct CondLayout {
  std::vector<int> cols;    // schema indices of the discrete columns
  std::vector<int> offset;  // block offsets
  std::vector<int> size;    // block widths
  int width = 0;

  static CondLayout from(const prep::TableSchema& schema);
  int blocks() const { return static_cast<int>(cols.size()); }
};

// One draw: block index into CondLayout::cols plus a category within it.
// block = -1 means the empty condition.
struct CondSample {
  int block = -1;
  int category = -1;
};

struct CondBatch {
  num::Matrix c;  // n x width one-hot rows; empty matrix when width == 0
  std::vector<CondSample> picks;
  int rows() const { return static_cast<int>(picks.size()); }
};

CondSample sample_condvec(const CondLayout& lay, num::RngStream& rng);
CondBatch cond_batch(const CondLayout& lay, int n, num::RngStream& rng);
// Every row carries the same condition.
CondBatch fixed_cond_batch(const CondLayout& lay, int n, CondSample pick);

}  // namespace nodetab::gan
