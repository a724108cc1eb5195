#include "agcn/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "agcn/error.hpp"

namespace agcn {

namespace fs = std::filesystem;

void Dataset::validate() const {
  if (adjacency && adjacency->n() != features.rows()) {
    throw ValidationError("graph has " + std::to_string(adjacency->n()) +
                          " nodes but the feature matrix has " +
                          std::to_string(features.rows()) + " rows");
  }
  if (labels && labels->size() != features.rows()) {
    throw ValidationError("label file has " + std::to_string(labels->size()) +
                          " entries but the feature matrix has " +
                          std::to_string(features.rows()) + " rows");
  }
}

namespace {

[[noreturn]] void malformed(const std::string& source, std::size_t line, const std::string& why) {
  throw ValidationError(source + ":" + std::to_string(line) + ": " + why);
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r") == std::string::npos; }

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

}  // namespace

DenseMatrix read_matrix(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!blank(line)) break;
  }
  if (lineno == 0 || blank(line)) malformed(source, lineno, "missing 'n d' header");
  std::istringstream header(line);
  long long n = -1, d = -1;
  std::string extra;
  if (!(header >> n >> d) || (header >> extra) || n < 0 || d < 0) {
    malformed(source, lineno, "expected header 'n d'");
  }
  DenseMatrix m(static_cast<std::size_t>(n), static_cast<std::size_t>(d));
  std::size_t row = 0;
  while (row < m.rows() && std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    std::istringstream fields(line);
    for (std::size_t c = 0; c < m.cols(); ++c) {
      std::string tok;
      if (!(fields >> tok)) {
        malformed(source, lineno, "expected " + std::to_string(d) + " values");
      }
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0' || !std::isfinite(v)) {
        malformed(source, lineno, "invalid number '" + tok + "'");
      }
      m(row, c) = v;
    }
    if (fields >> extra) malformed(source, lineno, "more than " + std::to_string(d) + " values");
    ++row;
  }
  if (row != m.rows()) {
    malformed(source, lineno, "expected " + std::to_string(n) + " rows, found " +
                                  std::to_string(row));
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (!blank(line)) malformed(source, lineno, "unexpected data after the last row");
  }
  return m;
}

void write_matrix(std::ostream& out, const DenseMatrix& m) {
  out << m.rows() << ' ' << m.cols() << '\n';
  char buf[32];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
      if (c) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

Labels read_labels(std::istream& in, const std::string& source) {
  Labels labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    std::istringstream fields(line);
    long long v = 0;
    std::string extra;
    if (!(fields >> v) || (fields >> extra)) malformed(source, lineno, "expected one integer");
    labels.push_back(static_cast<int>(v));
  }
  return labels;
}

void write_labels(std::ostream& out, const Labels& labels) {
  for (int v : labels) out << v << '\n';
}

std::vector<Edge> read_edges(std::istream& in, const std::string& source) {
  std::vector<Edge> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    std::istringstream fields(line);
    long long u = -1, v = -1;
    std::string extra;
    if (!(fields >> u >> v) || (fields >> extra) || u < 0 || v < 0) {
      malformed(source, lineno, "expected 'u v' with nonnegative integer ids");
    }
    edges.emplace_back(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
  }
  return edges;
}

void write_edges(std::ostream& out, const SparseAdjacency& a) {
  for (const auto& [u, v] : a.upper_edges()) out << u << ' ' << v << '\n';
}

DenseMatrix read_matrix_file(const fs::path& path) {
  auto in = open_in(path);
  return read_matrix(in, path.string());
}

void write_matrix_file(const fs::path& path, const DenseMatrix& m) {
  auto out = open_out(path);
  write_matrix(out, m);
}

Labels read_labels_file(const fs::path& path) {
  auto in = open_in(path);
  return read_labels(in, path.string());
}

void write_labels_file(const fs::path& path, const Labels& labels) {
  auto out = open_out(path);
  write_labels(out, labels);
}

SparseAdjacency read_graph_file(const fs::path& path, std::size_t n) {
  auto in = open_in(path);
  const auto edges = read_edges(in, path.string());
  try {
    return SparseAdjacency::from_edges(n, edges);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_graph_file(const fs::path& path, const SparseAdjacency& a) {
  auto out = open_out(path);
  write_edges(out, a);
}

Dataset load_dataset(const fs::path& feature_path, const std::optional<fs::path>& graph_path,
                     const std::optional<fs::path>& label_path) {
  Dataset ds;
  ds.name = feature_path.stem().string();
  ds.features = read_matrix_file(feature_path);
  if (label_path) ds.labels = read_labels_file(*label_path);
  if (graph_path) ds.adjacency = read_graph_file(*graph_path, ds.features.rows());
  ds.validate();
  return ds;
}

DatasetPaths save_dataset(const Dataset& ds, const fs::path& dir, const std::string& stem) {
  ds.validate();
  fs::create_directories(dir);
  DatasetPaths paths;
  paths.features = dir / (stem + ".features");
  write_matrix_file(paths.features, ds.features);
  if (ds.adjacency) {
    paths.graph = dir / (stem + ".graph");
    write_graph_file(paths.graph, *ds.adjacency);
  }
  if (ds.labels) {
    paths.labels = dir / (stem + ".labels");
    write_labels_file(paths.labels, *ds.labels);
  }
  return paths;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.blocks < 1 || spec.per_block < 1 || spec.feat_dim < 1) {
    throw ArgumentError("synthetic data needs at least one block, node and feature");
  }
  if (!(spec.p_out >= 0.0) || !(spec.p_in <= 1.0) || !(spec.p_out <= spec.p_in)) {
    throw ArgumentError("synthetic data needs 0 <= p_out <= p_in <= 1");
  }
  if (!(spec.sep >= 0.0)) throw ArgumentError("mean separation must be nonnegative");

  const std::size_t n = spec.blocks * spec.per_block;
  std::mt19937_64 rng(spec.seed);
  Dataset ds;
  ds.name = "sbm";
  ds.labels = Labels(n);
  for (std::size_t i = 0; i < n; ++i) (*ds.labels)[i] = static_cast<int>(i / spec.per_block);

  // Means on scaled unit axes are pairwise `sep` apart; with fewer dimensions
  // than blocks they are strung along the first axis instead.
  DenseMatrix means(spec.blocks, spec.feat_dim);
  for (std::size_t b = 0; b < spec.blocks; ++b) {
    if (spec.feat_dim >= spec.blocks) {
      means(b, b) = spec.sep / std::sqrt(2.0);
    } else {
      means(b, 0) = spec.sep * static_cast<double>(b);
    }
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  ds.features = DenseMatrix(n, spec.feat_dim);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t b = i / spec.per_block;
    for (std::size_t c = 0; c < spec.feat_dim; ++c) ds.features(i, c) = means(b, c) + noise(rng);
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = (i / spec.per_block == j / spec.per_block) ? spec.p_in : spec.p_out;
      if (unit(rng) < p) edges.emplace_back(i, j);
    }
  ds.adjacency = SparseAdjacency::from_edges(n, edges);
  return ds;
}

namespace {

struct Fnv1a {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void bytes(const void* p, std::size_t len) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
};

}  // namespace

std::string fingerprint(const Dataset& ds) {
  Fnv1a f;
  f.u64(ds.features.rows());
  f.u64(ds.features.cols());
  f.bytes(ds.features.data().data(), ds.features.size() * sizeof(double));
  if (ds.adjacency) {
    f.u64(1);
    for (const auto& [u, v] : ds.adjacency->upper_edges()) {
      f.u64(u);
      f.u64(v);
    }
  } else {
    f.u64(0);
  }
  if (ds.labels) {
    f.u64(ds.labels->size());
    for (int v : *ds.labels) f.u64(static_cast<std::uint64_t>(static_cast<std::int64_t>(v)));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(f.h));
  return buf;
}

}  // namespace agcn
