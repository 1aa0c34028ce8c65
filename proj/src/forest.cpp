// SPDX-License-Identifier: Apache-2.0
#include "tuna/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tuna/error.hpp"
#include "tuna/random.hpp"

namespace tuna {

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  Matrix m;
  for (const auto& r : rows) m.append_row(r);
  return m;
}

void Matrix::append_row(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  if (values.size() != cols_) throw ValidationError("row width mismatch");
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

// ---------------------------------------------------------------------------
// Standardizer

Standardizer Standardizer::fit(const Matrix& x) {
  Standardizer s;
  const std::size_t n = x.rows(), d = x.cols();
  s.mean_.assign(d, 0.0);
  s.stddev_.assign(d, 0.0);
  if (n == 0) return s;
  for (std::size_t c = 0; c < d; ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < n; ++r) sum += x(r, c);
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t r = 0; r < n; ++r) ss += (x(r, c) - mean) * (x(r, c) - mean);
    s.mean_[c] = mean;
    s.stddev_[c] = std::sqrt(ss / static_cast<double>(n));
  }
  return s;
}

void Standardizer::transform_in_place(std::span<double> row) const {
  if (row.size() != mean_.size()) throw ValidationError("standardizer width mismatch");
  for (std::size_t c = 0; c < row.size(); ++c)
    row[c] = stddev_[c] > 0.0 ? (row[c] - mean_[c]) / stddev_[c] : 0.0;
}

std::vector<double> Standardizer::transform(std::span<const double> row) const {
  std::vector<double> out(row.begin(), row.end());
  transform_in_place(out);
  return out;
}

Matrix Standardizer::transform(const Matrix& x) const {
  Matrix out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) transform_in_place(out.row(r));
  return out;
}

std::vector<double> Standardizer::inverse_transform(std::span<const double> row) const {
  if (row.size() != mean_.size()) throw ValidationError("standardizer width mismatch");
  std::vector<double> out(row.size());
  for (std::size_t c = 0; c < row.size(); ++c) out[c] = stddev_[c] > 0.0 ? row[c] * stddev_[c] + mean_[c] : mean_[c];
  return out;
}

// ---------------------------------------------------------------------------
// Tree construction

double RegressionTree::predict(std::span<const double> x) const {
  std::int32_t i = 0;
  while (nodes_[static_cast<std::size_t>(i)].feature >= 0) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return nodes_[static_cast<std::size_t>(i)].value;
}

namespace {

struct SplitCandidate {
  std::int32_t feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, std::span<const double> y, const ForestParams& params, Rng& rng)
      : x_(x), y_(y), params_(params), rng_(rng) {
    const std::size_t d = x.cols();
    features_per_split_ = params.max_features == 0
                              ? static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))))
                              : std::min(params.max_features, d);
    features_per_split_ = std::max<std::size_t>(features_per_split_, 1);
    feature_order_.resize(d);
  }

  RegressionTree build(std::vector<std::size_t> samples) {
    std::vector<RegressionTree::Node> nodes;
    samples_ = std::move(samples);
    grow(nodes, 0, samples_.size(), 0);
    return RegressionTree(std::move(nodes));
  }

 private:
  std::int32_t grow(std::vector<RegressionTree::Node>& nodes, std::size_t begin, std::size_t end, std::size_t depth) {
    const auto node_index = static_cast<std::int32_t>(nodes.size());
    nodes.emplace_back();

    double sum = 0.0;
    double lo = y_[samples_[begin]], hi = lo;
    for (std::size_t i = begin; i < end; ++i) {
      const double v = y_[samples_[i]];
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const std::size_t n = end - begin;
    nodes[static_cast<std::size_t>(node_index)].value =
        lo == hi ? lo : std::clamp(sum / static_cast<double>(n), lo, hi);

    const bool depth_exhausted = params_.max_depth != 0 && depth >= params_.max_depth;
    if (n < 2 * params_.min_leaf || lo == hi || depth_exhausted) return node_index;

    const SplitCandidate split = best_split(begin, end, sum);
    if (split.feature < 0) return node_index;

    const auto f = static_cast<std::size_t>(split.feature);
    const auto mid = std::stable_partition(samples_.begin() + static_cast<std::ptrdiff_t>(begin),
                                           samples_.begin() + static_cast<std::ptrdiff_t>(end),
                                           [&](std::size_t s) { return x_(s, f) <= split.threshold; });
    const auto middle = static_cast<std::size_t>(mid - samples_.begin());

    const std::int32_t left = grow(nodes, begin, middle, depth + 1);
    const std::int32_t right = grow(nodes, middle, end, depth + 1);
    auto& node = nodes[static_cast<std::size_t>(node_index)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = left;
    node.right = right;
    return node_index;
  }

  SplitCandidate best_split(std::size_t begin, std::size_t end, double total) {
    const std::size_t d = x_.cols();
    std::iota(feature_order_.begin(), feature_order_.end(), std::size_t{0});
    for (std::size_t i = d; i > 1; --i) std::swap(feature_order_[i - 1], feature_order_[rng_.index(i)]);

    const std::size_t n = end - begin;
    const double parent = total * total / static_cast<double>(n);
    SplitCandidate best;
    // Scan the sampled features; keep going past the quota only while no valid split exists.
    for (std::size_t k = 0; k < d; ++k) {
      if (k >= features_per_split_ && best.feature >= 0) break;
      const std::size_t f = feature_order_[k];
      column_.clear();
      for (std::size_t i = begin; i < end; ++i) column_.emplace_back(x_(samples_[i], f), y_[samples_[i]]);
      std::sort(column_.begin(), column_.end());
      if (column_.front().first == column_.back().first) continue;

      double left_sum = 0.0;
      for (std::size_t j = 1; j < n; ++j) {
        left_sum += column_[j - 1].second;
        if (j < params_.min_leaf || n - j < params_.min_leaf) continue;
        if (!(column_[j - 1].first < column_[j].first)) continue;
        const double right_sum = total - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(j) +
                            right_sum * right_sum / static_cast<double>(n - j) - parent;
        if (gain > best.gain) {
          best.gain = gain;
          best.feature = static_cast<std::int32_t>(f);
          double t = 0.5 * (column_[j - 1].first + column_[j].first);
          if (!(t < column_[j].first)) t = column_[j - 1].first;
          best.threshold = t;
        }
      }
    }
    return best;
  }

  const Matrix& x_;
  std::span<const double> y_;
  const ForestParams& params_;
  Rng& rng_;
  std::size_t features_per_split_ = 1;
  std::vector<std::size_t> feature_order_;
  std::vector<std::size_t> samples_;
  std::vector<std::pair<double, double>> column_;
};

}  // namespace

// ---------------------------------------------------------------------------
// ForestModel

ForestModel ForestModel::fit(const Matrix& x_in, std::span<const double> y_in, const ForestParams& params,
                             std::uint64_t seed, std::span<const std::uint64_t> row_ids) {
  if (x_in.rows() != y_in.size()) throw ValidationError("forest fit: X rows and y length differ");
  if (y_in.empty()) throw DomainError("forest fit: no training rows");
  if (params.tree_count == 0) throw ValidationError("forest fit: tree_count must be >= 1");
  if (params.min_leaf == 0) throw ValidationError("forest fit: min_leaf must be >= 1");
  if (!row_ids.empty() && row_ids.size() != y_in.size()) throw ValidationError("forest fit: row_ids length");
  for (std::size_t r = 0; r < x_in.rows(); ++r) {
    if (!std::isfinite(y_in[r])) throw ValidationError("forest fit: non-finite target");
    for (double v : x_in.row(r))
      if (!std::isfinite(v)) throw ValidationError("forest fit: non-finite feature");
  }

  // Canonical order: by row id when supplied, otherwise as given.
  std::vector<std::size_t> order(y_in.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (!row_ids.empty())
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row_ids[a] < row_ids[b]; });
  Matrix x(x_in.rows(), x_in.cols());
  std::vector<double> y(y_in.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    std::copy(x_in.row(order[i]).begin(), x_in.row(order[i]).end(), x.row(i).begin());
    y[i] = y_in[order[i]];
  }

  ForestModel model;
  model.params_ = params;
  model.width_ = x.cols();
  model.trees_.reserve(params.tree_count);
  const std::size_t n = y.size();
  for (std::size_t t = 0; t < params.tree_count; ++t) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(t)}));
    std::vector<std::size_t> samples(n);
    if (params.bootstrap) {
      for (auto& s : samples) s = static_cast<std::size_t>(rng.index(n));
      std::sort(samples.begin(), samples.end());
    } else {
      std::iota(samples.begin(), samples.end(), std::size_t{0});
    }
    TreeBuilder builder(x, y, params, rng);
    model.trees_.push_back(builder.build(std::move(samples)));
  }
  return model;
}

ForestModel ForestModel::from_trees(std::vector<RegressionTree> trees, std::size_t width) {
  if (trees.empty()) throw DomainError("forest needs at least one tree");
  ForestModel m;
  m.trees_ = std::move(trees);
  m.width_ = width;
  m.params_.tree_count = m.trees_.size();
  return m;
}

RegressionTree ForestModel::constant_tree(double value) {
  RegressionTree t;
  t.nodes_.push_back(RegressionTree::Node{-1, 0.0, -1, -1, value});
  return t;
}

void ForestModel::check_width(std::span<const double> x) const {
  if (trees_.empty()) throw StateError("forest is not fitted");
  if (x.size() != width_) throw ValidationError("forest predict: feature width mismatch");
}

std::vector<double> ForestModel::tree_predictions(std::span<const double> x) const {
  check_width(x);
  std::vector<double> out;
  out.reserve(trees_.size());
  for (const auto& t : trees_) out.push_back(t.predict(x));
  return out;
}

namespace {

// Mean clamped to the range of its inputs, exact when all inputs agree.
double bounded_mean(std::span<const double> v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (*lo == *hi) return *lo;
  return std::clamp(std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()), *lo, *hi);
}

}  // namespace

double ForestModel::predict(std::span<const double> x) const {
  check_width(x);
  double sum = 0.0, lo = 0.0, hi = 0.0;
  for (std::size_t i = 0; i < trees_.size(); ++i) {
    const double p = trees_[i].predict(x);
    sum += p;
    lo = i == 0 ? p : std::min(lo, p);
    hi = i == 0 ? p : std::max(hi, p);
  }
  if (lo == hi) return lo;
  return std::clamp(sum / static_cast<double>(trees_.size()), lo, hi);
}

std::pair<double, double> ForestModel::predict_with_uncertainty(std::span<const double> x) const {
  const auto preds = tree_predictions(x);
  const double n = static_cast<double>(preds.size());
  const double mean = bounded_mean(preds);
  double ss = 0.0;
  for (double p : preds) ss += (p - mean) * (p - mean);
  return {mean, std::sqrt(ss / n)};
}

ForestModel fit(const Matrix& x, std::span<const double> y, const ForestParams& params, std::uint64_t seed) {
  return ForestModel::fit(x, y, params, seed);
}

double predict(const ForestModel& model, std::span<const double> x) { return model.predict(x); }

std::pair<double, double> predict_with_uncertainty(const ForestModel& model, std::span<const double> x) {
  return model.predict_with_uncertainty(x);
}

}  // namespace tuna
