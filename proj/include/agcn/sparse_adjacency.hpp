#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "agcn/dense_matrix.hpp"
#include "agcn/tape.hpp"

namespace agcn {

using Edge = std::pair<std::size_t, std::size_t>;

// Symmetric adjacency in compressed sparse row form. Column indices are sorted
// within each row, there are no duplicate entries and all values are
// nonnegative. Immutable once built.
class SparseAdjacency {
 public:
  SparseAdjacency() = default;

  // Validates the CSR arrays (shape, ordering, nonnegativity, symmetry).
  SparseAdjacency(std::size_t n, std::vector<std::size_t> row_offsets,
                  std::vector<std::size_t> col_indices, std::vector<double> values);

  // Undirected binary graph from an edge list; each edge may be listed once
  // or in both directions. Self-loops and out-of-range ids are rejected.
  static SparseAdjacency from_edges(std::size_t n, std::span<const Edge> edges);

  // Symmetric dense matrix with nonnegative entries; zeros are not stored.
  static SparseAdjacency from_dense(const DenseMatrix& dense);

  std::size_t n() const { return n_; }
  std::size_t nnz() const { return col_indices_.size(); }
  const std::vector<std::size_t>& row_offsets() const { return row_offsets_; }
  const std::vector<std::size_t>& col_indices() const { return col_indices_; }
  const std::vector<double>& values() const { return values_; }

  std::size_t degree(std::size_t node) const {
    return row_offsets_[node + 1] - row_offsets_[node];
  }

  // Each undirected edge once, as (u, v) with u < v, in row-major order.
  std::vector<Edge> upper_edges() const;

  DenseMatrix to_dense() const;

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> row_offsets_{0};
  std::vector<std::size_t> col_indices_;
  std::vector<double> values_;
};

// D^{-1/2} (A + I) D^{-1/2}, with D the degree matrix of A + I. The input must
// not carry self-loops; they are added here.
SparseAdjacency normalize_adjacency(const SparseAdjacency& a);

// s · x without the tape.
DenseMatrix spmm(const SparseAdjacency& s, const DenseMatrix& x);

namespace ad {
// Differentiable s · x. The backward pass uses sᵀ·g, which equals s·g because
// adjacency matrices are symmetric. `s` must outlive the tape.
Var spmm(const SparseAdjacency& s, Var x);
}  // namespace ad

// Number of (stored nonzero, output column) multiply-adds performed by spmm
// since the last reset. Always zero when built without AGCN_OP_COUNTERS.
std::uint64_t spmm_touch_count();
void reset_spmm_touch_count();
bool spmm_counters_enabled();

}  // namespace agcn
