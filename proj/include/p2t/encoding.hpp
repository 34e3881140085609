#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "p2t/dataset.hpp"

namespace p2t {

using Vector = std::vector<double>;
using Matrix = std::vector<Vector>;

// One-hot for categorical columns, min-max for numeric ones, with statistics
// taken from the fit rows. Missing cells encode as zeros in their slots. The
// target column is never encoded.
class FeatureEncoder {
 public:
  struct Block {
    std::size_t column = 0;
    ColumnKind kind = ColumnKind::kNumeric;
    std::size_t offset = 0;
    std::size_t width = 1;
    double min = 0.0;
    double max = 0.0;
    bool seen = false;  // at least one non-missing fit value
    std::vector<std::string> codes;
  };

  FeatureEncoder() = default;

  static FeatureEncoder fit(const DatasetSchema& schema, std::span<const Row> fit_rows);

  std::size_t width() const { return width_; }
  const std::vector<Block>& blocks() const { return blocks_; }

  Vector encode(const Row& row) const;
  Matrix encode(std::span<const Row> rows) const;

 private:
  std::vector<Block> blocks_;
  std::size_t width_ = 0;
};

struct EncodedTable {
  FeatureEncoder encoder;
  Matrix matrix;  // one vector per dataset row
};

// Fits on `fit_rows` (must be nonempty) and encodes every row of `ds`.
EncodedTable encode_for_baselines(const TableDataset& ds, std::span<const Row> fit_rows);

struct MergedTable {
  DatasetSchema schema;
  std::vector<Row> target_rows;
  std::vector<Row> source_rows;
};

// Column union of two schemas. The target dataset's label column is kept,
// the source's label column is dropped. Cells a side lacks become Missing,
// which encodes as zero padding. Conflicting kinds for a shared column name
// throw SchemaMismatch.
MergedTable zero_pad_union(std::span<const Row> target_rows, std::span<const Row> source_rows,
                           const DatasetSchema& target_schema,
                           const DatasetSchema& source_schema);

}  // namespace p2t
