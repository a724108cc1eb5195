#include "agcn/sparse_adjacency.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

#include "agcn/error.hpp"

namespace agcn {

namespace {

#ifdef AGCN_OP_COUNTERS
std::atomic<std::uint64_t> g_spmm_touches{0};
#endif

// Value stored at (r, c), or -1 when absent.
double lookup(const std::vector<std::size_t>& offsets, const std::vector<std::size_t>& cols,
              const std::vector<double>& vals, std::size_t r, std::size_t c) {
  auto begin = cols.begin() + static_cast<std::ptrdiff_t>(offsets[r]);
  auto end = cols.begin() + static_cast<std::ptrdiff_t>(offsets[r + 1]);
  auto it = std::lower_bound(begin, end, c);
  if (it == end || *it != c) return -1.0;
  return vals[static_cast<std::size_t>(it - cols.begin())];
}

}  // namespace

SparseAdjacency::SparseAdjacency(std::size_t n, std::vector<std::size_t> row_offsets,
                                 std::vector<std::size_t> col_indices,
                                 std::vector<double> values)
    : n_(n),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
  if (row_offsets_.size() != n_ + 1 || row_offsets_.front() != 0 ||
      row_offsets_.back() != col_indices_.size() || col_indices_.size() != values_.size()) {
    throw ValidationError("inconsistent CSR arrays for a graph with " + std::to_string(n_) +
                          " nodes");
  }
  for (std::size_t r = 0; r < n_; ++r) {
    if (row_offsets_[r] > row_offsets_[r + 1]) throw ValidationError("row offsets decrease");
    for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      if (col_indices_[k] >= n_) {
        throw ValidationError("column index " + std::to_string(col_indices_[k]) +
                              " out of range in row " + std::to_string(r));
      }
      if (k > row_offsets_[r] && col_indices_[k] <= col_indices_[k - 1]) {
        throw ValidationError("row " + std::to_string(r) +
                              " has unsorted or duplicate column indices");
      }
      if (!(values_[k] >= 0.0) || !std::isfinite(values_[k])) {
        throw ValidationError("adjacency values must be finite and nonnegative");
      }
    }
  }
  for (std::size_t r = 0; r < n_; ++r) {
    for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      const double mirror = lookup(row_offsets_, col_indices_, values_, col_indices_[k], r);
      if (mirror != values_[k]) {
        throw ValidationError("adjacency is not symmetric at (" + std::to_string(r) + ", " +
                              std::to_string(col_indices_[k]) + ")");
      }
    }
  }
}

SparseAdjacency SparseAdjacency::from_edges(std::size_t n, std::span<const Edge> edges) {
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& [u, v] : edges) {
    if (u >= n || v >= n) {
      throw ValidationError("edge (" + std::to_string(u) + ", " + std::to_string(v) +
                            ") references a node outside [0, " + std::to_string(n) + ")");
    }
    if (u == v) throw ValidationError("self-loop on node " + std::to_string(u));
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> cols;
  for (auto& row : adj) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    cols.insert(cols.end(), row.begin(), row.end());
    offsets.push_back(cols.size());
  }
  std::vector<double> vals(cols.size(), 1.0);
  return SparseAdjacency(n, std::move(offsets), std::move(cols), std::move(vals));
}

SparseAdjacency SparseAdjacency::from_dense(const DenseMatrix& dense) {
  if (dense.rows() != dense.cols()) {
    throw ValidationError("adjacency must be square, got " + dense.shape_string());
  }
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> cols;
  std::vector<double> vals;
  for (std::size_t r = 0; r < dense.rows(); ++r) {
    for (std::size_t c = 0; c < dense.cols(); ++c) {
      if (dense(r, c) != 0.0) {
        cols.push_back(c);
        vals.push_back(dense(r, c));
      }
    }
    offsets.push_back(cols.size());
  }
  return SparseAdjacency(dense.rows(), std::move(offsets), std::move(cols), std::move(vals));
}

std::vector<Edge> SparseAdjacency::upper_edges() const {
  std::vector<Edge> out;
  for (std::size_t r = 0; r < n_; ++r)
    for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k)
      if (col_indices_[k] > r) out.emplace_back(r, col_indices_[k]);
  return out;
}

DenseMatrix SparseAdjacency::to_dense() const {
  DenseMatrix out(n_, n_);
  for (std::size_t r = 0; r < n_; ++r)
    for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k)
      out(r, col_indices_[k]) = values_[k];
  return out;
}

SparseAdjacency normalize_adjacency(const SparseAdjacency& a) {
  const std::size_t n = a.n();
  const auto& offsets = a.row_offsets();
  const auto& cols = a.col_indices();
  const auto& vals = a.values();

  std::vector<double> degree(n, 1.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k) {
      if (cols[k] == r) {
        throw ValidationError("input adjacency already has a self-loop on node " +
                              std::to_string(r));
      }
      degree[r] += vals[k];
    }
  }
  std::vector<std::size_t> out_offsets{0};
  std::vector<std::size_t> out_cols;
  std::vector<double> out_vals;
  out_cols.reserve(a.nnz() + n);
  out_vals.reserve(a.nnz() + n);
  for (std::size_t r = 0; r < n; ++r) {
    bool diagonal_done = false;
    for (std::size_t k = offsets[r]; k <= offsets[r + 1]; ++k) {
      const bool at_end = k == offsets[r + 1];
      if (!diagonal_done && (at_end || cols[k] > r)) {
        out_cols.push_back(r);
        out_vals.push_back(1.0 / degree[r]);
        diagonal_done = true;
      }
      if (at_end) break;
      out_cols.push_back(cols[k]);
      out_vals.push_back(vals[k] / std::sqrt(degree[r] * degree[cols[k]]));
    }
    out_offsets.push_back(out_cols.size());
  }
  return SparseAdjacency(n, std::move(out_offsets), std::move(out_cols), std::move(out_vals));
}

DenseMatrix spmm(const SparseAdjacency& s, const DenseMatrix& x) {
  if (s.n() != x.rows()) {
    throw DimensionError("spmm dimension mismatch: graph has " + std::to_string(s.n()) +
                         " nodes, dense operand is " + x.shape_string());
  }
  const auto& offsets = s.row_offsets();
  const auto& cols = s.col_indices();
  const auto& vals = s.values();
  const std::size_t width = x.cols();
  DenseMatrix out(s.n(), width);
#ifdef AGCN_OP_COUNTERS
  std::uint64_t touches = 0;
#endif
  for (std::size_t r = 0; r < s.n(); ++r) {
    double* dst = out.row(r).data();
    for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k) {
      const double w = vals[k];
      const double* src = x.row(cols[k]).data();
      for (std::size_t c = 0; c < width; ++c) {
        dst[c] += w * src[c];
#ifdef AGCN_OP_COUNTERS
        ++touches;
#endif
      }
    }
  }
#ifdef AGCN_OP_COUNTERS
  g_spmm_touches.fetch_add(touches, std::memory_order_relaxed);
#endif
  return out;
}

namespace ad {

Var spmm(const SparseAdjacency& s, Var x) {
  DenseMatrix out = agcn::spmm(s, x.value());
  const Var in[] = {x};
  const SparseAdjacency* sp = &s;
  return x.tape->record(OpKind::kSpMM, in, std::move(out),
                        [sp, x](Tape& t, const DenseMatrix& g) {
                          t.accumulate(x, agcn::spmm(*sp, g));
                        });
}

}  // namespace ad

std::uint64_t spmm_touch_count() {
#ifdef AGCN_OP_COUNTERS
  return g_spmm_touches.load(std::memory_order_relaxed);
#else
  return 0;
#endif
}

void reset_spmm_touch_count() {
#ifdef AGCN_OP_COUNTERS
  g_spmm_touches.store(0, std::memory_order_relaxed);
#endif
}

bool spmm_counters_enabled() {
#ifdef AGCN_OP_COUNTERS
  return true;
#else
  return false;
#endif
}

}  // namespace agcn
