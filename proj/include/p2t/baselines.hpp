#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "p2t/dataset.hpp"
#include "p2t/encoding.hpp"

namespace p2t {

using Labels = std::vector<std::size_t>;

// Majority vote over the k nearest training vectors (Euclidean). Distance
// ties go to the lower training index, vote ties to the smaller class index.
Labels knn_fit_predict(const Matrix& train, const Labels& labels, const Matrix& queries,
                       std::size_t k);

// Mean target of the k nearest training vectors.
std::vector<double> knn_regress(const Matrix& train, std::span<const double> targets,
                                const Matrix& queries, std::size_t k);

struct LogisticParams {
  double l2 = 1e-4;
  double learning_rate = 0.1;
  std::size_t epochs = 500;
};

// Multinomial logistic regression. weights[c] holds class c's coefficients.
struct LogisticModel {
  std::size_t num_classes = 0;
  Matrix weights;
  Vector bias;
  std::optional<std::size_t> constant_class;  // single-class training data
  std::vector<double> loss_history;           // loss before each epoch, then final

  std::size_t predict(const Vector& x) const;
  Labels predict(const Matrix& xs) const;
  Vector probabilities(const Vector& x) const;
};

// Mean softmax cross-entropy + l2 * ||W||^2 / 2 (bias unregularized), and its
// gradient with respect to (weights, bias). Exposed for gradient checking.
struct LossAndGradient {
  double loss = 0.0;
  Matrix grad_weights;
  Vector grad_bias;
};
LossAndGradient logistic_loss_and_gradient(const Matrix& weights, const Vector& bias,
                                           const Matrix& xs, const Labels& ys, double l2);

// Full-batch gradient descent from zero initialization.
LogisticModel logistic_fit(const Matrix& xs, const Labels& ys, std::size_t num_classes,
                           const LogisticParams& params = {});

// Ridge-penalized least squares by the same gradient descent (regression arm).
struct LinearModel {
  Vector weights;
  double bias = 0.0;
  double predict(const Vector& x) const;
};
LinearModel linear_fit(const Matrix& xs, std::span<const double> ys,
                       const LogisticParams& params = {});

enum class BaselineKind { kKnn, kLogistic };

// What source rows contribute in the zero-padded baseline. kExclude only pads
// the target shots and queries; kMapLabels fits on source rows whose label
// code appears in `label_map` (source code -> target class code).
struct SourceLabelPolicy {
  enum class Kind { kExclude, kMapLabels } kind = Kind::kExclude;
  std::map<std::string, std::string> label_map;
};

struct HeterogeneousResult {
  Labels predictions;
  std::size_t encoded_width = 0;
  DatasetSchema merged_schema;
};

// Zero-pads both tables onto the union schema, then fits and predicts.
// `knn_k` of 0 means one neighbour per shot per class.
HeterogeneousResult heterogeneous_baseline(std::span<const Row> target_shots,
                                           std::span<const Row> source_rows,
                                           const DatasetSchema& target_schema,
                                           const DatasetSchema& source_schema,
                                           std::span<const Row> queries, BaselineKind kind,
                                           const SourceLabelPolicy& policy = {},
                                           std::size_t knn_k = 0,
                                           const LogisticParams& params = {});

// Plain (target-only) baseline on encoded rows; the encoder is fit on
// `fit_rows` (shots plus whatever unlabeled rows the caller allows).
Labels plain_baseline(std::span<const Row> shots, std::span<const Row> fit_rows,
                      const DatasetSchema& schema, std::span<const Row> queries,
                      BaselineKind kind, std::size_t knn_k = 0, const LogisticParams& params = {});

}  // namespace p2t
