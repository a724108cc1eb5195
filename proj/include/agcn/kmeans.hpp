#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "agcn/dense_matrix.hpp"

namespace agcn {

struct KmeansResult {
  DenseMatrix centroids;           // k x d
  std::vector<std::size_t> labels; // n entries in [0, k)
  double inertia = 0.0;            // sum of squared distances to assigned centroids
  std::size_t iterations = 0;
  std::vector<double> inertia_history;  // after each assignment step
};

// Lloyd's algorithm from k-means++ seeding. Stops at the first iteration whose
// assignment equals the previous one, or after `max_iters`. A cluster that
// goes empty is re-seeded with the point farthest from its current centroid.
KmeansResult kmeans(const DenseMatrix& x, std::size_t k, std::uint64_t seed,
                    std::size_t max_iters = 300);

}  // namespace agcn
