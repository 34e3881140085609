#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "p2t/dataset.hpp"
#include "p2t/encoding.hpp"

namespace p2t {

struct TransferSplit {
  std::vector<Row> labeled_shots;   // class order, then draw order
  std::vector<Row> unlabeled_pool;  // target cell removed
  std::vector<Row> test_set;        // labels retained for scoring
  std::uint64_t seed = 0;
};

inline constexpr double kDefaultTestFraction = 0.2;

// Holds out ceil(test_fraction * N) rows for testing, then draws `shots` rows
// per class (a flat count for regression) from the rest. Everything else goes
// to the unlabeled pool with its label stripped. Rows whose target is missing
// can only land in the pool.
TransferSplit make_transfer_split(const TableDataset& ds, std::size_t shots,
                                  double test_fraction = kDefaultTestFraction,
                                  std::uint64_t seed = 0);

struct NeighborResult {
  std::vector<std::size_t> indices;  // into the pool, ascending by distance
  bool truncated = false;            // k exceeded the pool size
};

// k pool rows closest to `anchor` in encoded space (target excluded).
// Ties go to the lower pool index.
NeighborResult nearest_unlabeled(const Row& anchor, std::span<const Row> pool, std::size_t k,
                                 const FeatureEncoder& encoder);

// Uniform draw of n rows without replacement. The selected rows are returned
// in pool order, so n >= |pool| yields the pool unchanged.
std::vector<Row> sample_source_rows(std::span<const Row> pool, std::size_t n,
                                    std::uint64_t seed);

// Replaces floor(fraction * (d - 1)) non-target cells with Missing.
Row mask_features(const Row& row, const DatasetSchema& schema, double fraction,
                  std::uint64_t seed);

}  // namespace p2t
