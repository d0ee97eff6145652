#include "nodetab/num/matrix.hpp"

#include <cmath>
#include <string>

namespace nodetab::num {

bool Matrix::all_finite() const {
  const double* p = data();
  for (size_t i = 0; i < size(); ++i)
    if (!std::isfinite(p[i])) return false;
  return true;
}

void Matrix::check_finite(const char* where) const {
  if (!all_finite()) fail(errc::numeric, std::string("non-finite value in ") + where);
}

}  // namespace nodetab::num
