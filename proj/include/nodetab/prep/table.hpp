#pragma once

#include <string>
#include <vector>

#include "nodetab/num/matrix.hpp"

namespace nodetab::prep {

enum class ColumnKind { continuous, discrete };

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  std::vector<std::string> categories;  // discrete columns only
};

struct TableSchema {
  std::vector<ColumnSpec> columns;

  void validate() const;
  int n_continuous() const;
  int n_discrete() const;
  int find(const std::string& name) const;  // -1 when absent

  std::string to_json() const;
  static TableSchema from_json(const std::string& text);
};

// Cells are doubles; discrete cells hold the category index.
struct Table {
  TableSchema schema;
  num::Matrix values;

  int rows() const { return values.rows(); }
};

}  // namespace nodetab::prep
