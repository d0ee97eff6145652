#pragma once

#include <string>
#include <vector>

#include "nodetab/num/matrix.hpp"
#include "nodetab/num/rng.hpp"
#include "nodetab/prep/table.hpp"

namespace nodetab::prep {

struct ColumnMixture {
  std::vector<double> w, mu, sigma;
  int modes() const { return static_cast<int>(w.size()); }
};

constexpr double kSigmaFloor = 1e-4;
constexpr double kWeightPrune = 0.005;

// Mixture fit with automatic component count: EM at each k up to max_modes,
// the best k chosen by BIC, then a final prune of anything below
// kWeightPrune.  Components come back sorted by mean.
ColumnMixture fit_mixture_1d(const std::vector<double>& x, int max_modes, num::RngStream& rng);

// Responsibilities Pr(k | c) into out[0..modes).
void posterior(const ColumnMixture& m, double c, double* out);

// Row layout, in schema order: continuous columns contribute [alpha | beta
// one-hot over modes], discrete columns a category one-hot.
class Transformer {
public:
  struct Span {
    int column;  // schema index
    ColumnKind kind;
    int offset;
    int width;  // 1 + modes for continuous, |categories| for discrete
  };

  Transformer() = default;
  Transformer(TableSchema schema, std::vector<ColumnMixture> mixtures);

  static Transformer fit(const Table& t, int max_modes, num::RngStream& rng);

  int width() const { return width_; }
  const TableSchema& schema() const { return schema_; }
  const std::vector<ColumnMixture>& mixtures() const { return mix_; }
  const std::vector<Span>& spans() const { return spans_; }

  void encode_row(const double* row, num::RngStream& rng, double* out,
                  long* clips = nullptr) const;
  num::Matrix encode(const Table& t, num::RngStream& rng, long* clips = nullptr) const;
  void decode_row(const double* enc, double* row) const;
  Table decode(const num::Matrix& enc) const;

  std::string to_json() const;
  static Transformer from_json(const std::string& text);

private:
  TableSchema schema_;
  std::vector<ColumnMixture> mix_;  // one per continuous column, schema order
  std::vector<Span> spans_;
  int width_ = 0;

  void build_spans();
};

}  // namespace nodetab::prep
