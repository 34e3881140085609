#include "p2t/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <utility>

#include "p2t/errors.hpp"

namespace p2t {
namespace {

double squared_distance(const Vector& a, const Vector& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

std::vector<std::size_t> k_nearest(const Matrix& train, const Vector& query, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> dist(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) dist[i] = {squared_distance(train[i], query), i};
  k = std::min(k, dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = dist[i].second;
  return out;
}

Vector logits(const Matrix& weights, const Vector& bias, const Vector& x) {
  Vector z(bias);
  for (std::size_t c = 0; c < weights.size(); ++c) {
    for (std::size_t j = 0; j < x.size(); ++j) z[c] += weights[c][j] * x[j];
  }
  return z;
}

void softmax_inplace(Vector& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

std::size_t shots_per_class(std::span<const Row> shots, const DatasetSchema& schema) {
  std::vector<std::size_t> counts(schema.class_labels.size(), 0);
  for (const Row& r : shots) {
    if (auto c = row_class(r, schema)) ++counts[*c];
  }
  const auto it = std::max_element(counts.begin(), counts.end());
  return it == counts.end() ? 1 : std::max<std::size_t>(*it, 1);
}

Labels fit_predict(const Matrix& train, const Labels& ys, const Matrix& queries,
                   std::size_t num_classes, BaselineKind kind, std::size_t knn_k,
                   const LogisticParams& params) {
  if (kind == BaselineKind::kKnn) return knn_fit_predict(train, ys, queries, knn_k);
  return logistic_fit(train, ys, num_classes, params).predict(queries);
}

}  // namespace

Labels knn_fit_predict(const Matrix& train, const Labels& labels, const Matrix& queries,
                       std::size_t k) {
  if (train.empty()) throw Error("kNN needs at least one training vector");
  if (labels.size() != train.size()) throw Error("kNN label count mismatch");
  if (k == 0) k = 1;
  const std::size_t num_classes = *std::max_element(labels.begin(), labels.end()) + 1;
  Labels out;
  out.reserve(queries.size());
  for (const Vector& q : queries) {
    std::vector<std::size_t> votes(num_classes, 0);
    for (std::size_t i : k_nearest(train, q, k)) ++votes[labels[i]];
    // max_element returns the first maximum, i.e. the smallest class index.
    out.push_back(static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin()));
  }
  return out;
}

std::vector<double> knn_regress(const Matrix& train, std::span<const double> targets,
                                const Matrix& queries, std::size_t k) {
  if (train.empty()) throw Error("kNN needs at least one training vector");
  if (k == 0) k = 1;
  std::vector<double> out;
  out.reserve(queries.size());
  for (const Vector& q : queries) {
    const auto nn = k_nearest(train, q, k);
    double sum = 0.0;
    for (std::size_t i : nn) sum += targets[i];
    out.push_back(sum / static_cast<double>(nn.size()));
  }
  return out;
}

Vector LogisticModel::probabilities(const Vector& x) const {
  if (constant_class) {
    Vector p(num_classes, 0.0);
    p[*constant_class] = 1.0;
    return p;
  }
  Vector z = logits(weights, bias, x);
  softmax_inplace(z);
  return z;
}

std::size_t LogisticModel::predict(const Vector& x) const {
  if (constant_class) return *constant_class;
  const Vector z = logits(weights, bias, x);
  return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

Labels LogisticModel::predict(const Matrix& xs) const {
  Labels out;
  out.reserve(xs.size());
  for (const Vector& x : xs) out.push_back(predict(x));
  return out;
}

LossAndGradient logistic_loss_and_gradient(const Matrix& weights, const Vector& bias,
                                           const Matrix& xs, const Labels& ys, double l2) {
  const std::size_t classes = weights.size();
  const std::size_t dim = classes ? weights[0].size() : 0;
  LossAndGradient out;
  out.grad_weights.assign(classes, Vector(dim, 0.0));
  out.grad_bias.assign(classes, 0.0);
  const double inv_n = 1.0 / static_cast<double>(xs.size());

  for (std::size_t i = 0; i < xs.size(); ++i) {
    Vector p = logits(weights, bias, xs[i]);
    const double m = *std::max_element(p.begin(), p.end());
    double sum = 0.0;
    for (double v : p) sum += std::exp(v - m);
    out.loss -= (p[ys[i]] - m - std::log(sum)) * inv_n;
    softmax_inplace(p);
    for (std::size_t c = 0; c < classes; ++c) {
      const double residual = (p[c] - (c == ys[i] ? 1.0 : 0.0)) * inv_n;
      out.grad_bias[c] += residual;
      for (std::size_t j = 0; j < dim; ++j) out.grad_weights[c][j] += residual * xs[i][j];
    }
  }
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t j = 0; j < dim; ++j) {
      out.loss += 0.5 * l2 * weights[c][j] * weights[c][j];
      out.grad_weights[c][j] += l2 * weights[c][j];
    }
  }
  return out;
}

LogisticModel logistic_fit(const Matrix& xs, const Labels& ys, std::size_t num_classes,
                           const LogisticParams& params) {
  if (xs.empty() || xs.size() != ys.size()) throw Error("logistic_fit needs matching nonempty data");
  LogisticModel model;
  model.num_classes = num_classes;
  const std::set<std::size_t> present(ys.begin(), ys.end());
  if (present.size() == 1) {
    model.constant_class = *present.begin();
    return model;
  }
  const std::size_t dim = xs[0].size();
  model.weights.assign(num_classes, Vector(dim, 0.0));
  model.bias.assign(num_classes, 0.0);
  for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
    const auto lg = logistic_loss_and_gradient(model.weights, model.bias, xs, ys, params.l2);
    model.loss_history.push_back(lg.loss);
    for (std::size_t c = 0; c < num_classes; ++c) {
      model.bias[c] -= params.learning_rate * lg.grad_bias[c];
      for (std::size_t j = 0; j < dim; ++j) {
        model.weights[c][j] -= params.learning_rate * lg.grad_weights[c][j];
      }
    }
  }
  model.loss_history.push_back(
      logistic_loss_and_gradient(model.weights, model.bias, xs, ys, params.l2).loss);
  return model;
}

double LinearModel::predict(const Vector& x) const {
  double y = bias;
  for (std::size_t j = 0; j < x.size(); ++j) y += weights[j] * x[j];
  return y;
}

LinearModel linear_fit(const Matrix& xs, std::span<const double> ys, const LogisticParams& params) {
  if (xs.empty() || xs.size() != ys.size()) throw Error("linear_fit needs matching nonempty data");
  const std::size_t dim = xs[0].size();
  const double inv_n = 1.0 / static_cast<double>(xs.size());
  // Fit on a centred, scaled target so the step size is scale-free.
  const double mean = std::accumulate(ys.begin(), ys.end(), 0.0) * inv_n;
  double var = 0.0;
  for (double y : ys) var += (y - mean) * (y - mean);
  const double scale = var > 0 ? std::sqrt(var * inv_n) : 1.0;

  Vector w(dim, 0.0);
  double b = 0.0;
  for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
    Vector gw(dim, 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      double pred = b;
      for (std::size_t j = 0; j < dim; ++j) pred += w[j] * xs[i][j];
      const double r = (pred - (ys[i] - mean) / scale) * inv_n;
      gb += r;
      for (std::size_t j = 0; j < dim; ++j) gw[j] += r * xs[i][j];
    }
    b -= params.learning_rate * gb;
    for (std::size_t j = 0; j < dim; ++j) w[j] -= params.learning_rate * (gw[j] + params.l2 * w[j]);
  }
  LinearModel model;
  model.weights = std::move(w);
  for (double& v : model.weights) v *= scale;
  model.bias = b * scale + mean;
  return model;
}

Labels plain_baseline(std::span<const Row> shots, std::span<const Row> fit_rows,
                      const DatasetSchema& schema, std::span<const Row> queries,
                      BaselineKind kind, std::size_t knn_k, const LogisticParams& params) {
  if (shots.empty()) throw Error("baseline needs labeled shots");
  const auto encoder = FeatureEncoder::fit(schema, fit_rows.empty() ? shots : fit_rows);
  Labels ys;
  for (const Row& r : shots) {
    auto c = row_class(r, schema);
    if (!c) throw Error("baseline shot row " + std::to_string(r.id) + " lacks a class label");
    ys.push_back(*c);
  }
  if (knn_k == 0) knn_k = shots_per_class(shots, schema);
  return fit_predict(encoder.encode(shots), ys, encoder.encode(queries),
                     schema.class_labels.size(), kind, knn_k, params);
}

HeterogeneousResult heterogeneous_baseline(std::span<const Row> target_shots,
                                           std::span<const Row> source_rows,
                                           const DatasetSchema& target_schema,
                                           const DatasetSchema& source_schema,
                                           std::span<const Row> queries, BaselineKind kind,
                                           const SourceLabelPolicy& policy, std::size_t knn_k,
                                           const LogisticParams& params) {
  if (target_shots.empty()) throw Error("baseline needs labeled shots");
  MergedTable merged = zero_pad_union(target_shots, source_rows, target_schema, source_schema);
  const MergedTable merged_queries = zero_pad_union(queries, {}, target_schema, source_schema);
  const DatasetSchema& schema = merged.schema;
  const std::size_t merged_target = schema.target_index();

  std::vector<Row> train = merged.target_rows;
  if (policy.kind == SourceLabelPolicy::Kind::kMapLabels) {
    const std::size_t source_label = source_schema.target_index();
    for (std::size_t i = 0; i < source_rows.size(); ++i) {
      const auto* code = std::get_if<Category>(&source_rows[i].cells.at(source_label));
      if (!code) continue;
      const auto it = policy.label_map.find(code->code);
      if (it == policy.label_map.end()) continue;
      Row row = merged.source_rows[i];
      row.cells[merged_target] = Category{it->second};
      train.push_back(std::move(row));
    }
  }

  // Min-max statistics come from every row that carries features.
  std::vector<Row> fit_rows = merged.target_rows;
  fit_rows.insert(fit_rows.end(), merged.source_rows.begin(), merged.source_rows.end());
  const auto encoder = FeatureEncoder::fit(schema, fit_rows);

  Labels ys;
  for (const Row& r : train) {
    auto c = row_class(r, schema);
    if (!c) throw Error("training row " + std::to_string(r.id) + " lacks a class label");
    ys.push_back(*c);
  }
  if (knn_k == 0) knn_k = shots_per_class(target_shots, target_schema);

  HeterogeneousResult result;
  result.encoded_width = encoder.width();
  result.predictions = fit_predict(encoder.encode(train), ys, encoder.encode(merged_queries.target_rows),
                                   schema.class_labels.size(), kind, knn_k, params);
  result.merged_schema = schema;
  return result;
}

}  // namespace p2t
