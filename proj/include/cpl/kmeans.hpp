#pragma once

#include <cstdint>
#include <vector>

#include "cpl/linalg.hpp"
#include "cpl/rng.hpp"

namespace cpl {

struct KMeansResult {
  Mat centroids;                         // k x d
  std::vector<std::size_t> assignments;  // point -> cluster
  double inertia = 0.0;                  // sum of squared distances
  std::size_t iterations = 0;
};

/// k-means++ seeding: first centroid uniform, then each next centroid drawn
/// with probability proportional to the squared distance to the nearest
/// centroid chosen so far (uniform fallback when all distances are zero).
Mat kmeans_pp_init(const std::vector<Vec>& points, std::size_t k, Rng& rng);

/// Lloyd's iterations from the given centroids until the assignment fixpoint
/// or max_iters. Assignment ties keep the current cluster when still optimal,
/// otherwise go to the lowest cluster index; an emptied cluster is reseeded
/// with the point farthest from its assigned centroid.
KMeansResult kmeans_lloyd(const std::vector<Vec>& points, Mat centroids,
                          std::size_t max_iters = 100);

/// kmeans_pp_init followed by kmeans_lloyd. Fewer points than k is an error.
KMeansResult kmeans(const std::vector<Vec>& points, std::size_t k, std::uint64_t seed);

/// Index of the closest centroid (squared euclidean, ties to lowest index).
std::size_t nearest_centroid(const Mat& centroids, const Vec& point);

double squared_distance(const double* a, const double* b, std::size_t n);

}  // namespace cpl
