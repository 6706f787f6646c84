#include "cpl/kmeans.hpp"

#include <limits>
#include <stdexcept>

namespace cpl {

double squared_distance(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

Mat kmeans_pp_init(const std::vector<Vec>& points, std::size_t k, Rng& rng) {
  if (k == 0) throw std::invalid_argument("k must be at least 1");
  if (points.size() < k) throw std::invalid_argument("fewer points than clusters");
  const std::size_t d = points[0].size();
  Mat centroids(k, d);
  const std::size_t first = static_cast<std::size_t>(rng.uniform(points.size()));
  std::copy(points[first].begin(), points[first].end(), centroids.row(0));

  std::vector<double> dist2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    dist2[i] = squared_distance(points[i].data(), centroids.row(0), d);
  }
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : dist2) total += v;
    std::size_t chosen;
    if (total <= 0.0) {
      chosen = static_cast<std::size_t>(rng.uniform(points.size()));
    } else {
      const double target = rng.uniform_real() * total;
      double cum = 0.0;
      chosen = points.size() - 1;
      for (std::size_t i = 0; i < points.size(); ++i) {
        cum += dist2[i];
        if (cum > target) {
          chosen = i;
          break;
        }
      }
    }
    std::copy(points[chosen].begin(), points[chosen].end(), centroids.row(c));
    for (std::size_t i = 0; i < points.size(); ++i) {
      dist2[i] = std::min(dist2[i], squared_distance(points[i].data(), centroids.row(c), d));
    }
  }
  return centroids;
}

namespace {

std::size_t assign_point(const Mat& centroids, const Vec& p, std::size_t current,
                         bool has_current) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d2 = squared_distance(p.data(), centroids.row(c), centroids.cols());
    if (d2 < best_d) {
      best_d = d2;
      best = c;
    }
  }
  if (has_current && current != best) {
    const double cur_d = squared_distance(p.data(), centroids.row(current), centroids.cols());
    if (cur_d <= best_d) return current;  // tie: stay put
  }
  return best;
}

}  // namespace

KMeansResult kmeans_lloyd(const std::vector<Vec>& points, Mat centroids, std::size_t max_iters) {
  const std::size_t k = centroids.rows();
  const std::size_t d = centroids.cols();
  if (points.size() < k) throw std::invalid_argument("fewer points than clusters");

  KMeansResult result;
  result.assignments.assign(points.size(), 0);
  bool has_assignment = false;

  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const std::size_t a =
          assign_point(centroids, points[i], result.assignments[i], has_assignment);
      if (!has_assignment || a != result.assignments[i]) changed = true;
      result.assignments[i] = a;
    }
    result.iterations = iter + 1;
    if (has_assignment && !changed) break;
    has_assignment = true;

    // reseed empty clusters with the point farthest from its centroid
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t a : result.assignments) ++counts[a];
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      std::size_t far_i = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (counts[result.assignments[i]] <= 1) continue;
        const double d2 = squared_distance(
            points[i].data(), centroids.row(result.assignments[i]), d);
        if (d2 > far_d) {
          far_d = d2;
          far_i = i;
        }
      }
      --counts[result.assignments[far_i]];
      result.assignments[far_i] = c;
      counts[c] = 1;
      changed = true;
    }

    Mat sums(k, d);
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      double* row = sums.row(result.assignments[i]);
      for (std::size_t c = 0; c < d; ++c) row[c] += points[i][c];
      ++sizes[result.assignments[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      const double inv = 1.0 / static_cast<double>(sizes[c]);
      double* row = centroids.row(c);
      for (std::size_t col = 0; col < d; ++col) row[col] = sums.at(c, col) * inv;
    }
  }

  result.inertia = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    result.inertia +=
        squared_distance(points[i].data(), centroids.row(result.assignments[i]), d);
  }
  result.centroids = std::move(centroids);
  return result;
}

KMeansResult kmeans(const std::vector<Vec>& points, std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  return kmeans_lloyd(points, kmeans_pp_init(points, k, rng));
}

std::size_t nearest_centroid(const Mat& centroids, const Vec& point) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d2 = squared_distance(point.data(), centroids.row(c), centroids.cols());
    if (d2 < best_d) {
      best_d = d2;
      best = c;
    }
  }
  return best;
}

}  // namespace cpl
