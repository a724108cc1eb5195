#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "agcn/dense_matrix.hpp"

namespace agcn {

using Labels = std::vector<int>;

// Rows are ground-truth classes, columns are predicted clusters, both in the
// order of their first sorted label value.
struct ContingencyTable {
  std::vector<int> true_labels;
  std::vector<int> pred_labels;
  std::vector<std::vector<long long>> counts;
  long long n = 0;

  static ContingencyTable build(const Labels& y_true, const Labels& y_pred);
};

// Minimum-cost perfect matching on a square cost matrix (Kuhn-Munkres).
// Returns perm with perm[row] = assigned column. Among equally optimal
// permutations the lexicographically smallest one is returned.
std::vector<std::size_t> hungarian_assignment(const DenseMatrix& cost);

double accuracy(const Labels& y_true, const Labels& y_pred);
// Normalized by the arithmetic mean of the two entropies.
double nmi(const Labels& y_true, const Labels& y_pred);
double ari(const Labels& y_true, const Labels& y_pred);
double macro_f1(const Labels& y_true, const Labels& y_pred);

struct MetricValues {
  double acc = 0.0;
  double nmi = 0.0;
  double ari = 0.0;
  double f1 = 0.0;
};

MetricValues evaluate(const Labels& y_true, const Labels& y_pred);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::vector<double> runs;

  // "81.00±1.00"
  std::string formatted() const;
};

struct ClusteringReport {
  MetricSummary acc, nmi, ari, f1;
};

MetricSummary summarize(const std::vector<double>& values);
// Per-metric mean and population std over runs, in percent.
ClusteringReport aggregate(const std::vector<MetricValues>& runs);

// Name of the NMI normalization, recorded alongside reports.
inline constexpr const char* kNmiNormalizer = "arithmetic";

}  // namespace agcn
