#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "p2t/errors.hpp"
#include "p2t/pipeline.hpp"

namespace p2t {
namespace {

// Paired observations of one feature against the target, missing pairs dropped.
struct Pairs {
  std::vector<double> x;            // numeric feature values
  std::vector<std::string> codes;   // categorical feature values
  std::vector<std::size_t> cls;     // class target
  std::vector<double> y;            // numeric target
};

Pairs collect(std::span<const Row> rows, const DatasetSchema& schema, std::size_t column) {
  Pairs p;
  const bool classification = schema.task_kind == TaskKind::kClassification;
  const std::size_t target = schema.target_index();
  const bool numeric = schema.columns[column].kind == ColumnKind::kNumeric;
  for (const Row& row : rows) {
    const Cell& cell = row.cells.at(column);
    if (is_missing(cell)) continue;
    if (classification) {
      auto c = row_class(row, schema);
      if (!c) continue;
      p.cls.push_back(*c);
    } else {
      auto v = row_number(row, target);
      if (!v) continue;
      p.y.push_back(*v);
    }
    if (numeric) {
      p.x.push_back(std::get<Numeric>(cell).value);
    } else {
      p.codes.push_back(std::get<Category>(cell).code);
    }
  }
  return p;
}

// sqrt(SS_between / SS_total) of `values` grouped by `group`.
template <typename Key>
std::optional<double> correlation_ratio(const std::vector<double>& values,
                                        const std::vector<Key>& group) {
  if (values.size() < 2) return std::nullopt;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  std::map<Key, std::pair<double, double>> sums;  // sum, count
  double ss_total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto& s = sums[group[i]];
    s.first += values[i];
    s.second += 1.0;
    ss_total += (values[i] - mean) * (values[i] - mean);
  }
  if (sums.size() < 2 || ss_total <= 0.0) return std::nullopt;
  double ss_between = 0.0;
  for (const auto& [key, s] : sums) {
    const double gm = s.first / s.second;
    ss_between += s.second * (gm - mean) * (gm - mean);
  }
  return std::min(1.0, std::sqrt(ss_between / ss_total));
}

std::optional<double> abs_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2) return std::nullopt;
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
  return std::min(1.0, std::fabs(sab) / std::sqrt(saa * sbb));
}

std::optional<double> cramers_v(const std::vector<std::string>& codes,
                                const std::vector<std::size_t>& cls) {
  if (codes.size() < 2) return std::nullopt;
  std::map<std::string, std::size_t> row_index;
  std::map<std::size_t, std::size_t> col_index;
  for (const auto& c : codes) row_index.emplace(c, row_index.size());
  for (auto k : cls) col_index.emplace(k, col_index.size());
  const std::size_t r = row_index.size(), c = col_index.size();
  if (std::min(r, c) < 2) return std::nullopt;

  std::vector<double> table(r * c, 0.0), rsum(r, 0.0), csum(c, 0.0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const std::size_t a = row_index[codes[i]], b = col_index[cls[i]];
    table[a * c + b] += 1.0;
    rsum[a] += 1.0;
    csum[b] += 1.0;
  }
  const double n = static_cast<double>(codes.size());
  double chi2 = 0.0;
  for (std::size_t a = 0; a < r; ++a) {
    for (std::size_t b = 0; b < c; ++b) {
      const double expected = rsum[a] * csum[b] / n;
      const double d = table[a * c + b] - expected;
      chi2 += d * d / expected;
    }
  }
  return std::min(1.0, std::sqrt(chi2 / (n * static_cast<double>(std::min(r, c) - 1))));
}

std::size_t majority_count(const std::map<std::size_t, std::size_t>& counts) {
  std::size_t best = 0;
  for (const auto& [k, v] : counts) best = std::max(best, v);
  return best;
}

// Training accuracy of the best one-split stump (classification) or its
// explained-variance fraction (regression).
double stump_quality(const Pairs& p, bool numeric, bool classification) {
  const std::size_t n = numeric ? p.x.size() : p.codes.size();
  if (n == 0) return 0.0;
  if (!classification) {
    if (numeric) {
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](auto a, auto b) { return p.x[a] < p.x[b]; });
      double total = 0.0, total_sq = 0.0;
      for (double v : p.y) total += v, total_sq += v * v;
      const double sst = total_sq - total * total / static_cast<double>(n);
      if (sst <= 0.0) return 0.0;
      double left = 0.0, left_sq = 0.0, best = sst;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const double v = p.y[order[i]];
        left += v;
        left_sq += v * v;
        if (p.x[order[i]] == p.x[order[i + 1]]) continue;
        const double nl = static_cast<double>(i + 1), nr = static_cast<double>(n - i - 1);
        const double sse = (left_sq - left * left / nl) +
                           ((total_sq - left_sq) - (total - left) * (total - left) / nr);
        best = std::min(best, sse);
      }
      return 1.0 - best / sst;
    }
    auto eta = correlation_ratio(p.y, p.codes);
    return eta ? *eta * *eta : 0.0;
  }

  if (!numeric) {
    std::map<std::string, std::map<std::size_t, std::size_t>> by_code;
    for (std::size_t i = 0; i < n; ++i) ++by_code[p.codes[i]][p.cls[i]];
    std::size_t correct = 0;
    for (const auto& [code, counts] : by_code) correct += majority_count(counts);
    return static_cast<double>(correct) / static_cast<double>(n);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return p.x[a] < p.x[b]; });
  std::map<std::size_t, std::size_t> left, right;
  for (auto k : p.cls) ++right[k];
  std::size_t best = majority_count(right);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::size_t k = p.cls[order[i]];
    ++left[k];
    if (--right[k] == 0) right.erase(k);
    if (p.x[order[i]] == p.x[order[i + 1]]) continue;
    best = std::max(best, majority_count(left) + majority_count(right));
  }
  return static_cast<double>(best) / static_cast<double>(n);
}

}  // namespace

std::vector<FeatureScore> rank_features(std::span<const Row> labeled, const DatasetSchema& schema,
                                        std::span<const std::string> candidates) {
  const bool classification = schema.task_kind == TaskKind::kClassification;
  std::vector<FeatureScore> scores;
  for (const auto& name : candidates) {
    FeatureScore fs{name, std::nullopt, 0.0};
    const auto column = schema.find(name);
    if (column && *column != schema.target_index()) {
      const bool numeric = schema.columns[*column].kind == ColumnKind::kNumeric;
      const Pairs p = collect(labeled, schema, *column);
      if (classification) {
        fs.score = numeric ? correlation_ratio(p.x, p.cls) : cramers_v(p.codes, p.cls);
      } else {
        fs.score = numeric ? abs_pearson(p.x, p.y) : correlation_ratio(p.y, p.codes);
      }
      fs.stump_accuracy = stump_quality(p, numeric, classification);
    }
    scores.push_back(std::move(fs));
  }
  std::stable_sort(scores.begin(), scores.end(), [](const FeatureScore& a, const FeatureScore& b) {
    if (a.score.has_value() != b.score.has_value()) return a.score.has_value();
    if (!a.score) return false;
    if (*a.score != *b.score) return *a.score > *b.score;
    return a.stump_accuracy > b.stump_accuracy;
  });
  return scores;
}

std::string conventional_identify(std::span<const Row> labeled, const DatasetSchema& schema,
                                  std::span<const std::string> candidates) {
  if (candidates.empty()) throw NoCandidateFeatures("no candidate features to rank");
  const auto ranked = rank_features(labeled, schema, candidates);
  if (!ranked.front().score) return candidates.front();
  return ranked.front().name;
}

}  // namespace p2t
