#include "agcn/kmeans.hpp"

#include <limits>
#include <random>

#include "agcn/error.hpp"

namespace agcn {

namespace {

DenseMatrix seed_plus_plus(const DenseMatrix& x, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = x.rows();
  DenseMatrix centers(k, x.cols());
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::size_t pick = first(rng);
  std::copy(x.row(pick).begin(), x.row(pick).end(), centers.row(0).begin());

  std::vector<double> closest(n);
  for (std::size_t i = 0; i < n; ++i) closest[i] = squared_distance(x.row(i), centers.row(0));

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double d : closest) total += d;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double running = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        running += closest[i];
        if (running > target && closest[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      // Every point coincides with a chosen center; any choice is optimal.
      pick = c % n;
    }
    std::copy(x.row(pick).begin(), x.row(pick).end(), centers.row(c).begin());
    for (std::size_t i = 0; i < n; ++i)
      closest[i] = std::min(closest[i], squared_distance(x.row(i), centers.row(c)));
  }
  return centers;
}

// Returns inertia.
double assign(const DenseMatrix& x, const DenseMatrix& centers,
              std::vector<std::size_t>& labels) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < centers.rows(); ++c) {
      const double d = squared_distance(x.row(i), centers.row(c));
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    labels[i] = arg;
    inertia += best;
  }
  return inertia;
}

void update_centers(const DenseMatrix& x, const std::vector<std::size_t>& labels,
                    DenseMatrix& centers) {
  const std::size_t k = centers.rows();
  std::vector<std::size_t> counts(k, 0);
  DenseMatrix sums(k, x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    ++counts[labels[i]];
    auto dst = sums.row(labels[i]);
    auto src = x.row(i);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;
    const double inv = 1.0 / static_cast<double>(counts[c]);
    for (std::size_t j = 0; j < x.cols(); ++j) centers(c, j) = sums(c, j) * inv;
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] != 0) continue;
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      if (counts[labels[i]] <= 1) continue;
      const double d = squared_distance(x.row(i), centers.row(labels[i]));
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    if (far_d < 0.0) continue;
    --counts[labels[far]];
    std::copy(x.row(far).begin(), x.row(far).end(), centers.row(c).begin());
    counts[c] = 1;
  }
}

}  // namespace

KmeansResult kmeans(const DenseMatrix& x, std::size_t k, std::uint64_t seed,
                    std::size_t max_iters) {
  const std::size_t n = x.rows();
  if (k == 0) throw ArgumentError("kmeans needs k >= 1");
  if (k > n) {
    throw ArgumentError("kmeans needs k <= n, got k=" + std::to_string(k) +
                        " n=" + std::to_string(n));
  }
  if (max_iters == 0) throw ArgumentError("kmeans needs max_iters >= 1");

  std::mt19937_64 rng(seed);
  KmeansResult result;
  result.centroids = seed_plus_plus(x, k, rng);
  result.labels.assign(n, 0);
  result.inertia = assign(x, result.centroids, result.labels);
  result.inertia_history.push_back(result.inertia);

  std::vector<std::size_t> next(n);
  for (std::size_t it = 0; it < max_iters; ++it) {
    update_centers(x, result.labels, result.centroids);
    const double inertia = assign(x, result.centroids, next);
    ++result.iterations;
    const bool fixpoint = next == result.labels;
    result.labels.swap(next);
    result.inertia = inertia;
    result.inertia_history.push_back(inertia);
    if (fixpoint) break;
  }
  return result;
}

}  // namespace agcn
