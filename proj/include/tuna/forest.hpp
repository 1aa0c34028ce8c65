// SPDX-License-Identifier: Apache-2.0
//
// Regression-tree ensemble with input standardization.
//
// Trees use axis-aligned splits chosen by variance reduction, candidate
// thresholds at midpoints between consecutive distinct feature values, and a
// random feature subset per split. Everything is deterministic in the seed:
// tree t draws from its own stream derived from (seed, t).
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace tuna {

/// Dense row-major matrix; just enough for model inputs.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  void append_row(std::span<const double> values);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Per-feature z-scoring. Zero-variance features map to 0.
class Standardizer {
 public:
  Standardizer() = default;
  static Standardizer fit(const Matrix& x);

  std::vector<double> transform(std::span<const double> row) const;
  void transform_in_place(std::span<double> row) const;
  Matrix transform(const Matrix& x) const;
  std::vector<double> inverse_transform(std::span<const double> row) const;

  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& stddev() const { return stddev_; }

 private:
  std::vector<double> mean_;
  std::vector<double> stddev_;
};

struct ForestParams {
  std::size_t tree_count = 100;
  std::size_t min_leaf = 3;
  /// Features tried per split; 0 means ceil(sqrt(d)).
  std::size_t max_features = 0;
  bool bootstrap = true;
  /// 0 means unlimited.
  std::size_t max_depth = 0;
};

class RegressionTree {
 public:
  struct Node {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;     // go left when x[feature] <= threshold
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;
  };

  RegressionTree() = default;
  explicit RegressionTree(std::vector<Node> nodes) : nodes_(std::move(nodes)) {}

  double predict(std::span<const double> x) const;
  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  friend class ForestModel;
  std::vector<Node> nodes_;
};

class ForestModel {
 public:
  ForestModel() = default;

  /// Fits on (x, y). row_ids, when given, define a canonical row order so the
  /// fit does not depend on how the caller ordered the rows.
  static ForestModel fit(const Matrix& x, std::span<const double> y, const ForestParams& params,
                         std::uint64_t seed, std::span<const std::uint64_t> row_ids = {});

  double predict(std::span<const double> x) const;
  /// Mean and population stddev of the per-tree predictions.
  std::pair<double, double> predict_with_uncertainty(std::span<const double> x) const;
  std::vector<double> tree_predictions(std::span<const double> x) const;

  std::size_t width() const { return width_; }
  std::size_t tree_count() const { return trees_.size(); }
  const ForestParams& params() const { return params_; }
  const std::vector<RegressionTree>& trees() const { return trees_; }

  /// Assembles a model from already-built trees (tests use this to pin tree outputs).
  static ForestModel from_trees(std::vector<RegressionTree> trees, std::size_t width);
  static RegressionTree constant_tree(double value);

 private:
  void check_width(std::span<const double> x) const;

  std::vector<RegressionTree> trees_;
  ForestParams params_;
  std::size_t width_ = 0;
};

ForestModel fit(const Matrix& x, std::span<const double> y, const ForestParams& params, std::uint64_t seed);
double predict(const ForestModel& model, std::span<const double> x);
std::pair<double, double> predict_with_uncertainty(const ForestModel& model, std::span<const double> x);

}  // namespace tuna
