#pragma once

#include <cstddef>
#include <string>

#include "agcn/dense_matrix.hpp"
#include "agcn/sparse_adjacency.hpp"

namespace agcn {

enum class DistanceMetric { kEuclidean, kCosine };

DistanceMetric parse_distance_metric(const std::string& name);
const char* to_string(DistanceMetric metric);

struct KnnConfig {
  std::size_t k_prime = 3;
  DistanceMetric metric = DistanceMetric::kEuclidean;
};

// Undirected k'-nearest-neighbour graph over the rows of `x`. Each node picks
// its k' closest other nodes (ties go to the lower index) and the selections
// are symmetrized by union, so every node ends up with degree >= k'.
SparseAdjacency build_knn_graph(const DenseMatrix& x, const KnnConfig& cfg);

}  // namespace agcn
