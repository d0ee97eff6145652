#pragma once

#include <cstdint>
#include <string>

#include "nodetab/prep/table.hpp"

namespace nodetab::io {

// Provenance stamp embedded as a leading "# config=<hash> seed=<n>" comment.
struct CsvMeta {
  std::string config_hash;
  uint64_t seed = 0;
  bool present = false;
};

// Header row of column names, '.' decimal point, categories verbatim.
// Fields containing the delimiter, quotes, or line breaks are quoted in the
// usual doubled-quote style; numbers use the shortest round-trip form so
// read(write(t)) reproduces every cell bitwise.
void write_csv(const std::string& path, const prep::Table& t, const CsvMeta* meta = nullptr,
               char delim = ',');

// Schema inferred from content: a column whose every cell parses as a number
// is continuous, anything else is discrete with categories in order of first
// appearance.
prep::Table read_csv(const std::string& path, char delim = ',');

// Schema enforced: header names must match, discrete cells must be known
// categories.
prep::Table read_csv(const std::string& path, const prep::TableSchema& schema, char delim = ',');

CsvMeta read_csv_meta(const std::string& path);

}  // namespace nodetab::io
