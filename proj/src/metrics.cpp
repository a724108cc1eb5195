#include "agcn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "agcn/error.hpp"

namespace agcn {

namespace {

void require_comparable(const Labels& y_true, const Labels& y_pred) {
  if (y_true.size() != y_pred.size()) {
    throw ArgumentError("label length mismatch: " + std::to_string(y_true.size()) + " true vs " +
                        std::to_string(y_pred.size()) + " predicted");
  }
  if (y_true.empty()) throw ArgumentError("cannot score an empty labeling");
}

// Optimal assignment cost and permutation for the sub-problem made of `rows`
// and `cols` (same length), using the O(m^3) potential-based Hungarian method.
double solve_assignment(const DenseMatrix& cost, const std::vector<std::size_t>& rows,
                        const std::vector<std::size_t>& cols, std::vector<std::size_t>& match) {
  const std::size_t m = rows.size();
  match.assign(m, 0);
  if (m == 0) return 0.0;
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; p[j] is the row matched to column j, 0 meaning none.
  std::vector<double> u(m + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);
  for (std::size_t i = 1; i <= m; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(rows[i0 - 1], cols[j - 1]) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= m; ++j) {
    match[p[j] - 1] = j - 1;
    total += cost(rows[p[j] - 1], cols[j - 1]);
  }
  return total;
}

}  // namespace

std::vector<std::size_t> hungarian_assignment(const DenseMatrix& cost) {
  if (cost.rows() != cost.cols()) {
    throw ArgumentError("assignment needs a square cost matrix, got " + cost.shape_string());
  }
  if (!cost.all_finite()) throw ArgumentError("assignment costs must be finite");
  const std::size_t m = cost.rows();
  std::vector<std::size_t> all(m);
  for (std::size_t i = 0; i < m; ++i) all[i] = i;
  std::vector<std::size_t> local;
  const double best = solve_assignment(cost, all, all, local);
  std::vector<std::size_t> perm = local;

  double scale = 1.0;
  for (double c : cost.data()) scale = std::max(scale, std::abs(c));
  const double tol = 1e-9 * scale * static_cast<double>(std::max<std::size_t>(m, 1));

  // Fix rows one at a time to the smallest column that still admits an
  // optimal completion.
  std::vector<char> taken(m, 0);
  double fixed_cost = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    std::vector<std::size_t> rest_rows;
    for (std::size_t i = r + 1; i < m; ++i) rest_rows.push_back(i);
    for (std::size_t c = 0; c < perm[r]; ++c) {
      if (taken[c]) continue;
      std::vector<std::size_t> rest_cols;
      for (std::size_t j = 0; j < m; ++j)
        if (!taken[j] && j != c) rest_cols.push_back(j);
      const double total =
          fixed_cost + cost(r, c) + solve_assignment(cost, rest_rows, rest_cols, local);
      if (total <= best + tol) {
        perm[r] = c;
        for (std::size_t i = 0; i < rest_rows.size(); ++i)
          perm[rest_rows[i]] = rest_cols[local[i]];
        break;
      }
    }
    taken[perm[r]] = 1;
    fixed_cost += cost(r, perm[r]);
  }
  return perm;
}

ContingencyTable ContingencyTable::build(const Labels& y_true, const Labels& y_pred) {
  require_comparable(y_true, y_pred);
  ContingencyTable t;
  std::map<int, std::size_t> ti, pi;
  for (int v : y_true) ti.emplace(v, 0);
  for (int v : y_pred) pi.emplace(v, 0);
  for (auto& [label, idx] : ti) {
    idx = t.true_labels.size();
    t.true_labels.push_back(label);
  }
  for (auto& [label, idx] : pi) {
    idx = t.pred_labels.size();
    t.pred_labels.push_back(label);
  }
  t.counts.assign(t.true_labels.size(), std::vector<long long>(t.pred_labels.size(), 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) ++t.counts[ti[y_true[i]]][pi[y_pred[i]]];
  t.n = static_cast<long long>(y_true.size());
  return t;
}

namespace {

// perm[class] = matched cluster column; columns >= pred count are padding.
std::vector<std::size_t> best_mapping(const ContingencyTable& t) {
  const std::size_t m = std::max(t.true_labels.size(), t.pred_labels.size());
  DenseMatrix cost(m, m);
  for (std::size_t r = 0; r < t.true_labels.size(); ++r)
    for (std::size_t c = 0; c < t.pred_labels.size(); ++c)
      cost(r, c) = -static_cast<double>(t.counts[r][c]);
  return hungarian_assignment(cost);
}

double entropy(const std::vector<long long>& counts, double n) {
  double h = 0.0;
  for (long long c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

double choose2(long long x) { return 0.5 * static_cast<double>(x) * static_cast<double>(x - 1); }

bool same_partition(const ContingencyTable& t) {
  if (t.true_labels.size() != t.pred_labels.size()) return false;
  for (const auto& row : t.counts) {
    std::size_t nonzero = 0;
    for (long long c : row) nonzero += c != 0;
    if (nonzero != 1) return false;
  }
  return true;
}

}  // namespace

double accuracy(const Labels& y_true, const Labels& y_pred) {
  const ContingencyTable t = ContingencyTable::build(y_true, y_pred);
  const auto perm = best_mapping(t);
  long long matched = 0;
  for (std::size_t r = 0; r < t.true_labels.size(); ++r)
    if (perm[r] < t.pred_labels.size()) matched += t.counts[r][perm[r]];
  return static_cast<double>(matched) / static_cast<double>(t.n);
}

double nmi(const Labels& y_true, const Labels& y_pred) {
  const ContingencyTable t = ContingencyTable::build(y_true, y_pred);
  const double n = static_cast<double>(t.n);
  std::vector<long long> row_sums(t.true_labels.size(), 0), col_sums(t.pred_labels.size(), 0);
  for (std::size_t r = 0; r < row_sums.size(); ++r)
    for (std::size_t c = 0; c < col_sums.size(); ++c) {
      row_sums[r] += t.counts[r][c];
      col_sums[c] += t.counts[r][c];
    }
  const double ht = entropy(row_sums, n);
  const double hp = entropy(col_sums, n);
  if (ht == 0.0 || hp == 0.0) return (ht == 0.0 && hp == 0.0) ? 1.0 : 0.0;
  double mi = 0.0;
  for (std::size_t r = 0; r < row_sums.size(); ++r)
    for (std::size_t c = 0; c < col_sums.size(); ++c) {
      const long long nij = t.counts[r][c];
      if (nij == 0) continue;
      const double pij = static_cast<double>(nij) / n;
      mi += pij * std::log(static_cast<double>(nij) * n /
                           (static_cast<double>(row_sums[r]) * static_cast<double>(col_sums[c])));
    }
  return mi / (0.5 * (ht + hp));
}

double ari(const Labels& y_true, const Labels& y_pred) {
  const ContingencyTable t = ContingencyTable::build(y_true, y_pred);
  double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  std::vector<long long> col_sums(t.pred_labels.size(), 0);
  for (const auto& row : t.counts) {
    long long rs = 0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      index += choose2(row[c]);
      rs += row[c];
      col_sums[c] += row[c];
    }
    sum_rows += choose2(rs);
  }
  for (long long cs : col_sums) sum_cols += choose2(cs);
  const double total_pairs = choose2(t.n);
  const double expected = total_pairs > 0.0 ? sum_rows * sum_cols / total_pairs : 0.0;
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return same_partition(t) ? 1.0 : 0.0;
  return (index - expected) / (max_index - expected);
}

double macro_f1(const Labels& y_true, const Labels& y_pred) {
  const ContingencyTable t = ContingencyTable::build(y_true, y_pred);
  const std::size_t kt = t.true_labels.size(), kp = t.pred_labels.size();
  std::vector<long long> actual(kt, 0), predicted(kp, 0);
  for (std::size_t r = 0; r < kt; ++r)
    for (std::size_t c = 0; c < kp; ++c) {
      actual[r] += t.counts[r][c];
      predicted[c] += t.counts[r][c];
    }
  // F1 of class r against cluster c is 2 tp / (|class| + |cluster|).
  DenseMatrix f1(kt, kp);
  for (std::size_t r = 0; r < kt; ++r)
    for (std::size_t c = 0; c < kp; ++c)
      f1(r, c) = 2.0 * static_cast<double>(t.counts[r][c]) /
                 static_cast<double>(actual[r] + predicted[c]);

  // Several mappings can reach the optimal accuracy. The F1 sum (< kt) is added
  // below the unit resolution of the match counts, so the matching first
  // maximizes accuracy and then F1, independent of how clusters are named.
  const std::size_t m = std::max(kt, kp);
  const double tie_weight = 1.0 / static_cast<double>(kt + 1);
  DenseMatrix cost(m, m);
  for (std::size_t r = 0; r < kt; ++r)
    for (std::size_t c = 0; c < kp; ++c)
      cost(r, c) = -(static_cast<double>(t.counts[r][c]) + tie_weight * f1(r, c));
  const auto perm = hungarian_assignment(cost);

  double total = 0.0;
  for (std::size_t r = 0; r < kt; ++r)
    if (perm[r] < kp) total += f1(r, perm[r]);
  return total / static_cast<double>(kt);
}

MetricValues evaluate(const Labels& y_true, const Labels& y_pred) {
  return {accuracy(y_true, y_pred), nmi(y_true, y_pred), ari(y_true, y_pred),
          macro_f1(y_true, y_pred)};
}

std::string MetricSummary::formatted() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f±%.2f", mean, std);
  return buf;
}

MetricSummary summarize(const std::vector<double>& values) {
  if (values.empty()) throw ArgumentError("cannot aggregate an empty list of runs");
  MetricSummary s;
  s.runs = values;
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / static_cast<double>(values.size()));
  return s;
}

ClusteringReport aggregate(const std::vector<MetricValues>& runs) {
  if (runs.empty()) throw ArgumentError("cannot aggregate an empty list of runs");
  std::vector<double> acc, n, a, f;
  for (const auto& r : runs) {
    acc.push_back(100.0 * r.acc);
    n.push_back(100.0 * r.nmi);
    a.push_back(100.0 * r.ari);
    f.push_back(100.0 * r.f1);
  }
  return {summarize(acc), summarize(n), summarize(a), summarize(f)};
}

}  // namespace agcn
