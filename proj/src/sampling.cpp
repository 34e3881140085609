#include "p2t/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <utility>

#include "p2t/errors.hpp"
#include "p2t/random.hpp"

namespace p2t {
namespace {

std::size_t floor_count(double fraction, std::size_t n) {
  // The epsilon absorbs products like 0.7 * 10 = 7.000000000000001.
  const double exact = fraction * static_cast<double>(n);
  return static_cast<std::size_t>(std::floor(exact + 1e-9));
}

double squared_distance(const Vector& a, const Vector& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

}  // namespace

TransferSplit make_transfer_split(const TableDataset& ds, std::size_t shots,
                                  double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in [0, 1)");
  }
  const DatasetSchema& schema = ds.schema;
  const std::size_t target = schema.target_index();
  const bool classification = schema.task_kind == TaskKind::kClassification;

  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled_only;
  for (std::size_t i = 0; i < ds.rows.size(); ++i) {
    const bool has_label = classification ? row_class(ds.rows[i], schema).has_value()
                                          : !is_missing(ds.rows[i].cells[target]);
    (has_label ? labeled : unlabeled_only).push_back(i);
  }

  Rng rng(seed);
  rng.shuffle(labeled);

  const double wanted = test_fraction * static_cast<double>(labeled.size());
  const auto n_test = static_cast<std::size_t>(std::ceil(wanted - 1e-9));

  TransferSplit split;
  split.seed = seed;
  for (std::size_t i = 0; i < n_test; ++i) split.test_set.push_back(ds.rows[labeled[i]]);

  std::vector<std::size_t> rest(labeled.begin() + static_cast<std::ptrdiff_t>(n_test),
                                labeled.end());
  std::vector<bool> taken(rest.size(), false);
  if (classification) {
    for (std::size_t cls = 0; cls < schema.class_labels.size(); ++cls) {
      std::size_t got = 0;
      for (std::size_t j = 0; j < rest.size() && got < shots; ++j) {
        if (row_class(ds.rows[rest[j]], schema) == cls) {
          split.labeled_shots.push_back(ds.rows[rest[j]]);
          taken[j] = true;
          ++got;
        }
      }
      if (got < shots) {
        throw InsufficientClassRows("class '" + schema.class_labels[cls].token + "' has " +
                                    std::to_string(got) + " training rows, " +
                                    std::to_string(shots) + " shots requested");
      }
    }
  } else {
    if (rest.size() < shots) {
      throw InsufficientClassRows("only " + std::to_string(rest.size()) +
                                  " training rows for " + std::to_string(shots) + " shots");
    }
    for (std::size_t j = 0; j < shots; ++j) {
      split.labeled_shots.push_back(ds.rows[rest[j]]);
      taken[j] = true;
    }
  }

  auto strip = [&](const Row& row) {
    Row out = row;
    out.cells[target] = Missing{};
    return out;
  };
  for (std::size_t j = 0; j < rest.size(); ++j) {
    if (!taken[j]) split.unlabeled_pool.push_back(strip(ds.rows[rest[j]]));
  }
  for (std::size_t i : unlabeled_only) split.unlabeled_pool.push_back(strip(ds.rows[i]));
  std::sort(split.unlabeled_pool.begin(), split.unlabeled_pool.end(),
            [](const Row& a, const Row& b) { return a.id < b.id; });
  return split;
}

NeighborResult nearest_unlabeled(const Row& anchor, std::span<const Row> pool, std::size_t k,
                                 const FeatureEncoder& encoder) {
  NeighborResult result;
  result.truncated = k > pool.size();
  k = std::min(k, pool.size());
  if (k == 0) return result;

  const Vector query = encoder.encode(anchor);
  // Max-heap on (distance, index) holding the k best seen so far.
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry> heap;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const Entry entry{squared_distance(query, encoder.encode(pool[i])), i};
    if (heap.size() < k) {
      heap.push(entry);
    } else if (entry < heap.top()) {
      heap.pop();
      heap.push(entry);
    }
  }
  result.indices.resize(heap.size());
  for (std::size_t i = heap.size(); i-- > 0;) {
    result.indices[i] = heap.top().second;
    heap.pop();
  }
  return result;
}

std::vector<Row> sample_source_rows(std::span<const Row> pool, std::size_t n,
                                    std::uint64_t seed) {
  Rng rng(seed);
  auto picked = rng.choose(pool.size(), n);
  std::sort(picked.begin(), picked.end());
  std::vector<Row> out;
  out.reserve(picked.size());
  for (std::size_t i : picked) out.push_back(pool[i]);
  return out;
}

Row mask_features(const Row& row, const DatasetSchema& schema, double fraction,
                  std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("mask fraction must lie in [0, 1]");
  const auto features = schema.feature_indices();
  Rng rng(seed);
  Row out = row;
  for (std::size_t pick : rng.choose(features.size(), floor_count(fraction, features.size()))) {
    out.cells[features[pick]] = Missing{};
  }
  return out;
}

}  // namespace p2t
