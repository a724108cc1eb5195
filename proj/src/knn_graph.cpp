#include "agcn/knn_graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "agcn/error.hpp"

namespace agcn {

DistanceMetric parse_distance_metric(const std::string& name) {
  if (name == "euclidean") return DistanceMetric::kEuclidean;
  if (name == "cosine") return DistanceMetric::kCosine;
  throw ArgumentError("unknown distance metric '" + name + "' (expected euclidean or cosine)");
}

const char* to_string(DistanceMetric metric) {
  return metric == DistanceMetric::kCosine ? "cosine" : "euclidean";
}

SparseAdjacency build_knn_graph(const DenseMatrix& x, const KnnConfig& cfg) {
  const std::size_t n = x.rows();
  if (cfg.k_prime < 1) throw ArgumentError("k' must be at least 1");
  if (n < cfg.k_prime + 1) {
    throw ArgumentError("k'=" + std::to_string(cfg.k_prime) + " needs at least " +
                        std::to_string(cfg.k_prime + 1) + " points, got " + std::to_string(n));
  }
  if (!x.all_finite()) throw ValidationError("features contain non-finite values");

  std::vector<double> norms;
  if (cfg.metric == DistanceMetric::kCosine) {
    norms.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      double sq = 0.0;
      for (double v : x.row(i)) sq += v * v;
      norms[i] = std::sqrt(sq);
    }
  }
  auto distance = [&](std::size_t i, std::size_t j) {
    if (cfg.metric == DistanceMetric::kEuclidean) return squared_distance(x.row(i), x.row(j));
    double dot = 0.0;
    auto a = x.row(i), b = x.row(j);
    for (std::size_t c = 0; c < a.size(); ++c) dot += a[c] * b[c];
    const double denom = norms[i] * norms[j];
    // A zero vector is treated as maximally dissimilar to everything.
    return denom > 0.0 ? 1.0 - dot / denom : 2.0;
  };

  std::vector<Edge> edges;
  edges.reserve(n * cfg.k_prime);
  std::vector<std::pair<double, std::size_t>> candidates(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t w = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) candidates[w++] = {distance(i, j), j};
    std::partial_sort(candidates.begin(),
                      candidates.begin() + static_cast<std::ptrdiff_t>(cfg.k_prime),
                      candidates.end());
    for (std::size_t t = 0; t < cfg.k_prime; ++t) edges.emplace_back(i, candidates[t].second);
  }
  return SparseAdjacency::from_edges(n, edges);
}

}  // namespace agcn
