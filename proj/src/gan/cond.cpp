#include "nodetab/gan/cond.hpp"

#include "nodetab/num/error.hpp"

namespace nodetab::gan {

CondLayout CondLayout::from(const prep::TableSchema& schema) {
  CondLayout lay;
  for (size_t i = 0; i < schema.columns.size(); ++i) {
    const auto& col = schema.columns[i];
    if (col.kind != prep::ColumnKind::discrete) continue;
    lay.cols.push_back(static_cast<int>(i));
    lay.offset.push_back(lay.width);
    lay.size.push_back(static_cast<int>(col.categories.size()));
    lay.width += static_cast<int>(col.categories.size());
  }
  return lay;
}

CondSample sample_condvec(const CondLayout& lay, num::RngStream& rng) {
  if (lay.blocks() == 0) return {};
  CondSample s;
  s.block = static_cast<int>(rng.uniform_below(lay.blocks()));
  s.category = static_cast<int>(rng.uniform_below(lay.size[s.block]));
  return s;
}

static CondBatch assemble(const CondLayout& lay, std::vector<CondSample> picks) {
  CondBatch b;
  int n = static_cast<int>(picks.size());
  if (lay.width > 0) {
    b.c = num::Matrix(n, lay.width);
    double* p = b.c.mut_data();
    for (int i = 0; i < n; ++i)
      p[size_t(i) * lay.width + lay.offset[picks[i].block] + picks[i].category] = 1.0;
  }
  b.picks = std::move(picks);
  return b;
}

CondBatch cond_batch(const CondLayout& lay, int n, num::RngStream& rng) {
  std::vector<CondSample> picks(n);
  for (int i = 0; i < n; ++i) picks[i] = sample_condvec(lay, rng);
  return assemble(lay, std::move(picks));
}

CondBatch fixed_cond_batch(const CondLayout& lay, int n, CondSample pick) {
  if (lay.blocks() > 0) {
    if (pick.block < 0 || pick.block >= lay.blocks() || pick.category < 0 ||
        pick.category >= lay.size[pick.block])
      fail(errc::config, "fixed_cond_batch: pick out of range");
  }
  std::vector<CondSample> picks(n, lay.blocks() ? pick : CondSample{});
  return assemble(lay, std::move(picks));
}

}  // namespace nodetab::gan
