#include "scihier/clustering.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace scihier {

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  Matrix m;
  for (const auto& r : rows) m.push_row(r);
  return m;
}

void Matrix::push_row(std::span<const double> values) {
  if (rows_ == 0 && data_.empty()) {
    cols_ = values.size();
  } else if (values.size() != cols_) {
    throw InvalidArgument("row of dimension " + std::to_string(values.size()) + " in a matrix of dimension " +
                          std::to_string(cols_));
  }
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::vector<std::size_t> ClusteringResult::cluster_sizes() const {
  std::vector<std::size_t> sizes(k(), 0);
  for (auto a : assignments) ++sizes[a];
  return sizes;
}

nlohmann::ordered_json ClusteringResult::centroids_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    auto r = centroids.row(c);
    j.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return j;
}

namespace {

void compute_means(const Matrix& points, const std::vector<std::size_t>& assign, Matrix& centroids) {
  const std::size_t k = centroids.rows(), d = points.cols();
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t c = 0; c < k; ++c) std::fill(centroids.row(c).begin(), centroids.row(c).end(), 0.0);
  // Fixed accumulation order (point index) keeps sums reproducible.
  for (std::size_t i = 0; i < points.rows(); ++i) {
    auto dst = centroids.row(assign[i]);
    auto src = points.row(i);
    for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    ++counts[assign[i]];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;
    const double inv = 1.0 / double(counts[c]);
    for (double& x : centroids.row(c)) x *= inv;
  }
}

Matrix seed_plus_plus(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  Matrix centroids;
  std::vector<bool> chosen(n, false);
  std::size_t first = static_cast<std::size_t>(rng.below(n));
  centroids.push_row(points.row(first));
  chosen[first] = true;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points.row(i), points.row(first));
  while (centroids.rows() < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = rng.uniform01() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (d2[i] > 0.0 && acc > target) {
          pick = i;
          break;
        }
      }
      if (pick == n)  // rounding at the top end
        for (std::size_t i = n; i-- > 0;)
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
    } else {
      // Every point coincides with a centre: take an unused index.
      std::vector<std::size_t> unused;
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) unused.push_back(i);
      pick = unused[static_cast<std::size_t>(rng.below(unused.size()))];
    }
    chosen[pick] = true;
    centroids.push_row(points.row(pick));
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], squared_distance(points.row(i), points.row(pick)));
  }
  return centroids;
}

ClusteringResult lloyd(const Matrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iter) {
  const std::size_t n = points.rows();
  Rng rng(seed);
  ClusteringResult res;
  res.centroids = seed_plus_plus(points, k, rng);
  res.assignments.assign(n, k);  // k = "unassigned", forces a change on the first pass
  std::vector<double> dist(n, 0.0);

  for (std::size_t iter = 0; iter < std::max<std::size_t>(1, max_iter); ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(points.row(i), res.centroids.row(c));
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (best != res.assignments[i]) changed = true;
      res.assignments[i] = best;
      dist[i] = best_d;
    }

    // Empty-cluster repair.
    std::vector<std::size_t> sizes(k, 0);
    for (auto a : res.assignments) ++sizes[a];
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] != 0) continue;
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i)
        if (sizes[res.assignments[i]] > 1 && dist[i] > far_d) {
          far_d = dist[i];
          far = i;
        }
      --sizes[res.assignments[far]];
      res.assignments[far] = c;
      ++sizes[c];
      dist[far] = 0.0;
      changed = true;
    }

    compute_means(points, res.assignments, res.centroids);
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      inertia += squared_distance(points.row(i), res.centroids.row(res.assignments[i]));
    res.inertia = inertia;
    res.inertia_trace.push_back(inertia);
    res.iterations = iter + 1;
    if (!changed) break;
  }
  return res;
}

}  // namespace

ClusteringResult kmeans(const Matrix& points, const KMeansOptions& options) {
  if (points.rows() == 0) throw ClusteringError("k-means on an empty point set");
  if (points.cols() == 0) throw ClusteringError("k-means on zero-dimensional points");
  if (options.k < 1 || options.k > points.rows())
    throw ClusteringError("k=" + std::to_string(options.k) + " outside [1, " + std::to_string(points.rows()) + "]");
  const std::size_t restarts = std::max<std::size_t>(1, options.restarts);
  std::vector<ClusteringResult> runs(restarts);
  parallel_for(restarts, options.threads, [&](std::size_t r) {
    runs[r] = lloyd(points, options.k, combine_seed(options.seed, r), options.max_iter);
    runs[r].restart = r;
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < restarts; ++r)
    if (runs[r].inertia < runs[best].inertia) best = r;
  return std::move(runs[best]);
}

double partition_inertia(const Matrix& points, std::span<const std::size_t> assignments, std::size_t k) {
  Matrix centroids(k, points.cols());
  std::vector<std::size_t> assign(assignments.begin(), assignments.end());
  compute_means(points, assign, centroids);
  double s = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) s += squared_distance(points.row(i), centroids.row(assign[i]));
  return s;
}

ClusteringResult KMeansClusterer::cluster(const Matrix& points, std::size_t k, std::uint64_t seed) {
  KMeansOptions o = defaults_;
  o.k = k;
  o.seed = seed;
  return kmeans(points, o);
}

std::vector<std::size_t> allocate_subclusters(std::span<const std::size_t> parent_sizes, std::size_t total_k) {
  std::vector<std::size_t> caps(parent_sizes.size(), std::numeric_limits<std::size_t>::max());
  return allocate_subclusters(parent_sizes, total_k, caps);
}

std::vector<std::size_t> allocate_subclusters(std::span<const std::size_t> parent_sizes, std::size_t total_k,
                                              std::span<const std::size_t> caps) {
  const std::size_t p = parent_sizes.size();
  if (p == 0) throw InvalidArgument("no parents to allocate to");
  if (caps.size() != p) throw InvalidArgument("caps must match parents");
  if (total_k < p)
    throw InvalidArgument("total_k=" + std::to_string(total_k) + " is less than the " + std::to_string(p) +
                          " parents");
  unsigned __int128 cap_sum = 0;
  for (std::size_t i = 0; i < p; ++i) {
    if (parent_sizes[i] == 0) throw InvalidArgument("parent sizes must be >= 1");
    if (caps[i] == 0) throw InvalidArgument("caps must be >= 1");
    cap_sum += caps[i];
  }
  if (cap_sum < total_k) throw InvalidArgument("total_k exceeds the capacity of the parents");

  using wide = unsigned __int128;
  wide n = 0;
  for (auto s : parent_sizes) n += s;
  // Exact share total_k * size / n as quotient + remainder / n.
  std::vector<std::size_t> alloc(p);
  std::vector<wide> rem(p);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < p; ++i) {
    const wide num = wide(total_k) * parent_sizes[i];
    alloc[i] = static_cast<std::size_t>(num / n);
    rem[i] = num % n;
    assigned += alloc[i];
  }
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rem[a] != rem[b]) return rem[a] > rem[b];
    return parent_sizes[a] > parent_sizes[b];
  });
  for (std::size_t j = 0; assigned < total_k; ++j, ++assigned) ++alloc[order[j % p]];

  // Signed deviation from the exact share, scaled by n.
  auto over = [&](std::size_t i) {
    return static_cast<__int128>(wide(alloc[i]) * n) - static_cast<__int128>(wide(total_k) * parent_sizes[i]);
  };
  auto take_from_most_over = [&](auto eligible) {
    std::size_t pick = p;
    for (std::size_t i = 0; i < p; ++i)
      if (eligible(i) && (pick == p || over(i) > over(pick))) pick = i;
    return pick;
  };
  auto give_to_most_under = [&](auto eligible) {
    std::size_t pick = p;
    for (std::size_t i = 0; i < p; ++i)
      if (eligible(i) && (pick == p || over(i) < over(pick))) pick = i;
    return pick;
  };

  // Floor of one per parent.
  for (std::size_t i = 0; i < p; ++i) {
    if (alloc[i] != 0) continue;
    const std::size_t donor = take_from_most_over([&](std::size_t j) { return alloc[j] > 1; });
    --alloc[donor];
    alloc[i] = 1;
  }
  // Caps.
  for (std::size_t i = 0; i < p; ++i) {
    while (alloc[i] > caps[i]) {
      const std::size_t taker = give_to_most_under([&](std::size_t j) { return j != i && alloc[j] < caps[j]; });
      --alloc[i];
      ++alloc[taker];
    }
  }
  return alloc;
}

}  // namespace scihier
