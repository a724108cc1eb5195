#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "agcn/dense_matrix.hpp"
#include "agcn/metrics.hpp"
#include "agcn/sparse_adjacency.hpp"

namespace agcn {

// Attributed graph G = (V, E, X) with optional ground truth.
struct Dataset {
  std::string name;
  DenseMatrix features;
  std::optional<SparseAdjacency> adjacency;
  std::optional<Labels> labels;

  void validate() const;
};

// Text formats:
//   matrix   first line "n d", then n lines of d whitespace-separated decimals
//   labels   one integer per line
//   edges    one "u v" pair of 0-based ids per line, each undirected edge once
// Blank lines are ignored in label and edge files. `source` names the stream in
// error messages.
DenseMatrix read_matrix(std::istream& in, const std::string& source = "matrix");
void write_matrix(std::ostream& out, const DenseMatrix& m);
Labels read_labels(std::istream& in, const std::string& source = "labels");
void write_labels(std::ostream& out, const Labels& labels);
std::vector<Edge> read_edges(std::istream& in, const std::string& source = "edges");
void write_edges(std::ostream& out, const SparseAdjacency& a);

DenseMatrix read_matrix_file(const std::filesystem::path& path);
void write_matrix_file(const std::filesystem::path& path, const DenseMatrix& m);
Labels read_labels_file(const std::filesystem::path& path);
void write_labels_file(const std::filesystem::path& path, const Labels& labels);
SparseAdjacency read_graph_file(const std::filesystem::path& path, std::size_t n);
void write_graph_file(const std::filesystem::path& path, const SparseAdjacency& a);

Dataset load_dataset(const std::filesystem::path& feature_path,
                     const std::optional<std::filesystem::path>& graph_path = std::nullopt,
                     const std::optional<std::filesystem::path>& label_path = std::nullopt);

struct DatasetPaths {
  std::filesystem::path features, graph, labels;
};
// Writes <dir>/<stem>.features, .graph and .labels (the latter two when present).
DatasetPaths save_dataset(const Dataset& ds, const std::filesystem::path& dir,
                          const std::string& stem);

struct SyntheticSpec {
  std::size_t blocks = 2;
  std::size_t per_block = 30;
  double p_in = 0.5;
  double p_out = 0.02;
  std::size_t feat_dim = 2;
  double sep = 10.0;  // distance between block means, in units of the per-feature std
  std::uint64_t seed = 0;
};

// Stochastic block model graph with Gaussian block features. Nodes are laid out
// block by block; labels are block ids.
Dataset generate_synthetic(const SyntheticSpec& spec);

// FNV-1a over the exact bytes of features, edges and labels, as 16 hex digits.
std::string fingerprint(const Dataset& ds);

}  // namespace agcn
