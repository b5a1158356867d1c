#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "scihier/common.hpp"

namespace scihier {

/// Dense row-major point set; every row has the same dimension.
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  /// Throws InvalidArgument on ragged input.
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  /// Appends a row; the first row fixes the dimension.
  void push_row(std::span<const double> values);

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double squared_distance(std::span<const double> a, std::span<const double> b);

class ClusteringError : public Error {
public:
  using Error::Error;
};

struct ClusteringResult {
  std::vector<std::size_t> assignments;  // item -> cluster in [0, k)
  Matrix centroids;                      // k rows
  double inertia = 0.0;
  std::size_t iterations = 0;
  std::size_t restart = 0;               // which restart won
  /// Inertia after each Lloyd iteration of the winning restart.
  std::vector<double> inertia_trace;

  std::size_t k() const noexcept { return centroids.rows(); }
  std::vector<std::size_t> cluster_sizes() const;
  nlohmann::ordered_json centroids_json() const;
};

struct KMeansOptions {
  std::size_t k = 2;
  std::uint64_t seed = 0;
  std::size_t restarts = 8;
  std::size_t max_iter = 100;
  /// Restarts run on up to this many threads; the result does not depend on it.
  std::size_t threads = 1;
};

/// Lloyd's algorithm from k-means++ seeding, best inertia over restarts
/// (ties: lowest restart index). Distance ties go to the lowest cluster
/// index. Empty clusters are reseeded at the point farthest from its
/// centroid, so every returned cluster is non-empty.
/// Throws ClusteringError if k is outside [1, rows] or the points are
/// zero-dimensional.
ClusteringResult kmeans(const Matrix& points, const KMeansOptions& options);

/// Sum of squared distances from each point to its cluster's mean.
double partition_inertia(const Matrix& points, std::span<const std::size_t> assignments, std::size_t k);

/// Clusterer seam used by hierarchy construction.
class Clusterer {
public:
  virtual ~Clusterer() = default;
  virtual ClusteringResult cluster(const Matrix& points, std::size_t k, std::uint64_t seed) = 0;
};

class KMeansClusterer : public Clusterer {
public:
  explicit KMeansClusterer(KMeansOptions defaults = {}) : defaults_(defaults) {}
  ClusteringResult cluster(const Matrix& points, std::size_t k, std::uint64_t seed) override;

private:
  KMeansOptions defaults_;
};

/// Splits total_k across parents in proportion to their sizes by
/// largest-remainder rounding (remainder ties: larger parent, then lower
/// index), with every parent receiving at least one. Sums to total_k.
/// Throws InvalidArgument if total_k < parents or a size is 0.
std::vector<std::size_t> allocate_subclusters(std::span<const std::size_t> parent_sizes, std::size_t total_k);

/// As above, additionally never giving a parent more than caps[i].
/// Throws InvalidArgument if total_k exceeds the sum of caps.
std::vector<std::size_t> allocate_subclusters(std::span<const std::size_t> parent_sizes, std::size_t total_k,
                                              std::span<const std::size_t> caps);

}  // namespace scihier
