#include "agcn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "agcn/error.hpp"

namespace agcn::ad {

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParameter: return "parameter";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kScale: return "scale";
    case OpKind::kAddRowBias: return "add_row_bias";
    case OpKind::kHadamard: return "hadamard";
    case OpKind::kScaleRows: return "scale_rows";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kSliceCols: return "slice_cols";
    case OpKind::kLeakyRelu: return "leaky_relu";
    case OpKind::kRelu: return "relu";
    case OpKind::kSoftmaxRows: return "softmax_rows";
    case OpKind::kL2NormalizeRows: return "l2_normalize_rows";
    case OpKind::kFrobeniusSqLoss: return "frobenius_sq_loss";
    case OpKind::kSum: return "sum";
    case OpKind::kSquaredDistances: return "squared_distances";
    case OpKind::kStudentT: return "student_t_kernel";
    case OpKind::kNormalizeRowSums: return "normalize_row_sums";
    case OpKind::kKlDivergence: return "kl_divergence";
    case OpKind::kSpMM: return "spmm";
  }
  return "unknown";
}

const DenseMatrix& Var::value() const { return tape->value(*this); }

Var Tape::push(TapeNode node) {
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(DenseMatrix value) {
  TapeNode node;
  node.op = OpKind::kConstant;
  node.value = std::move(value);
  return push(std::move(node));
}

Var Tape::parameter(DenseMatrix value, std::string name) {
  TapeNode node;
  node.op = OpKind::kParameter;
  node.value = std::move(value);
  node.requires_grad = true;
  node.is_parameter = true;
  node.name = std::move(name);
  return push(std::move(node));
}

Var Tape::record(OpKind op, std::span<const Var> inputs, DenseMatrix value,
                 BackwardFn backward) {
  TapeNode node;
  node.op = op;
  node.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape != this || in.id >= nodes_.size()) {
      throw ArgumentError(std::string("input of ") + op_name(op) + " is not on this tape");
    }
    node.inputs.push_back(in.id);
    node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  return push(std::move(node));
}

void Tape::accumulate(Var target, const DenseMatrix& g) {
  TapeNode& node = nodes_.at(target.id);
  if (!node.requires_grad) return;
  if (!g.same_shape(node.value)) {
    throw DimensionError(std::string("gradient shape ") + g.shape_string() +
                         " does not match " + op_name(node.op) + " output " +
                         node.value.shape_string());
  }
  if (node.grad.empty()) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ArgumentError("loss is not on this tape");
  const DenseMatrix& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw DimensionError("backward requires a scalar loss, got " + lv.shape_string());
  }
  for (TapeNode& node : nodes_) node.grad = DenseMatrix();
  if (!nodes_[loss.id].requires_grad) return;
  nodes_[loss.id].grad = DenseMatrix(1, 1, 1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    TapeNode& node = nodes_[i];
    if (node.grad.empty() || node.is_parameter) continue;
    if (node.backward) node.backward(*this, node.grad);
    node.grad = DenseMatrix();
  }
}

DenseMatrix Tape::grad(Var parameter) const {
  const TapeNode& node = nodes_.at(parameter.id);
  if (!node.is_parameter) throw ArgumentError("gradients are only retained for parameters");
  if (node.grad.empty()) return DenseMatrix(node.value.rows(), node.value.cols());
  return node.grad;
}

std::vector<Var> Tape::parameters() {
  std::vector<Var> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].is_parameter) out.push_back(Var{this, i});
  return out;
}

namespace {

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw ArgumentError("variable is not attached to a tape");
  return *a.tape;
}

void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw ArgumentError("operands live on different tapes");
}

void require_same_shape(const char* op, const DenseMatrix& a, const DenseMatrix& b) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + " shape mismatch: " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

DenseMatrix scalar(double v) { return DenseMatrix(1, 1, v); }

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = tape_of(a);
  DenseMatrix out = agcn::matmul(a.value(), b.value());
  const Var in[] = {a, b};
  return t.record(OpKind::kMatMul, in, std::move(out), [a, b](Tape& t, const DenseMatrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, matmul_transpose_b(g, b.value()));
    if (t.requires_grad(b)) t.accumulate(b, matmul_transpose_a(a.value(), g));
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape("add", a.value(), b.value());
  DenseMatrix out = a.value();
  out += b.value();
  const Var in[] = {a, b};
  return tape_of(a).record(OpKind::kAdd, in, std::move(out),
                           [a, b](Tape& t, const DenseMatrix& g) {
                             t.accumulate(a, g);
                             t.accumulate(b, g);
                           });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape("sub", a.value(), b.value());
  DenseMatrix out = a.value();
  const auto& bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= bv[i];
  const Var in[] = {a, b};
  return tape_of(a).record(OpKind::kSub, in, std::move(out),
                           [a, b](Tape& t, const DenseMatrix& g) {
                             t.accumulate(a, g);
                             DenseMatrix neg = g;
                             neg *= -1.0;
                             t.accumulate(b, neg);
                           });
}

Var scale(Var x, double factor) {
  DenseMatrix out = x.value();
  out *= factor;
  const Var in[] = {x};
  return tape_of(x).record(OpKind::kScale, in, std::move(out),
                           [x, factor](Tape& t, const DenseMatrix& g) {
                             DenseMatrix gx = g;
                             gx *= factor;
                             t.accumulate(x, gx);
                           });
}

Var add_row_bias(Var x, Var bias) {
  require_same_tape(x, bias);
  const DenseMatrix& xv = x.value();
  const DenseMatrix& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw DimensionError("add_row_bias shape mismatch: " + xv.shape_string() + " + bias " +
                         bv.shape_string());
  }
  DenseMatrix out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv(0, c);
  const Var in[] = {x, bias};
  return tape_of(x).record(OpKind::kAddRowBias, in, std::move(out),
                           [x, bias](Tape& t, const DenseMatrix& g) {
                             t.accumulate(x, g);
                             if (!t.requires_grad(bias)) return;
                             DenseMatrix gb(1, g.cols());
                             for (std::size_t r = 0; r < g.rows(); ++r)
                               for (std::size_t c = 0; c < g.cols(); ++c) gb(0, c) += g(r, c);
                             t.accumulate(bias, gb);
                           });
}

Var hadamard(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape("hadamard", a.value(), b.value());
  DenseMatrix out = a.value();
  const auto& bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= bv[i];
  const Var in[] = {a, b};
  return tape_of(a).record(OpKind::kHadamard, in, std::move(out),
                           [a, b](Tape& t, const DenseMatrix& g) {
                             if (t.requires_grad(a)) {
                               DenseMatrix ga = g;
                               const auto& bv = b.value().data();
                               for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] *= bv[i];
                               t.accumulate(a, ga);
                             }
                             if (t.requires_grad(b)) {
                               DenseMatrix gb = g;
                               const auto& av = a.value().data();
                               for (std::size_t i = 0; i < gb.size(); ++i) gb.data()[i] *= av[i];
                               t.accumulate(b, gb);
                             }
                           });
}

Var scale_rows(Var x, Var weights) {
  require_same_tape(x, weights);
  const DenseMatrix& xv = x.value();
  const DenseMatrix& wv = weights.value();
  if (wv.cols() != 1 || wv.rows() != xv.rows()) {
    throw DimensionError("scale_rows shape mismatch: " + xv.shape_string() + " with weights " +
                         wv.shape_string());
  }
  DenseMatrix out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (double& v : out.row(r)) v *= wv(r, 0);
  const Var in[] = {x, weights};
  return tape_of(x).record(OpKind::kScaleRows, in, std::move(out),
                           [x, weights](Tape& t, const DenseMatrix& g) {
                             const DenseMatrix& xv = x.value();
                             const DenseMatrix& wv = weights.value();
                             if (t.requires_grad(x)) {
                               DenseMatrix gx = g;
                               for (std::size_t r = 0; r < gx.rows(); ++r)
                                 for (double& v : gx.row(r)) v *= wv(r, 0);
                               t.accumulate(x, gx);
                             }
                             if (t.requires_grad(weights)) {
                               DenseMatrix gw(wv.rows(), 1);
                               for (std::size_t r = 0; r < xv.rows(); ++r) {
                                 double acc = 0.0;
                                 for (std::size_t c = 0; c < xv.cols(); ++c)
                                   acc += g(r, c) * xv(r, c);
                                 gw(r, 0) = acc;
                               }
                               t.accumulate(weights, gw);
                             }
                           });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("concat_cols needs at least one part");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p);
    if (p.rows() != rows) {
      throw DimensionError("concat_cols row mismatch: " + parts.front().value().shape_string() +
                           " vs " + p.value().shape_string());
    }
    cols += p.cols();
  }
  DenseMatrix out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const DenseMatrix& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(pv.row(r).begin(), pv.row(r).end(), out.row(r).begin() + offset);
    offset += pv.cols();
  }
  std::vector<Var> captured(parts.begin(), parts.end());
  return tape_of(parts.front())
      .record(OpKind::kConcatCols, parts, std::move(out),
              [captured](Tape& t, const DenseMatrix& g) {
                std::size_t offset = 0;
                for (const Var& p : captured) {
                  const std::size_t w = p.cols();
                  if (t.requires_grad(p)) {
                    DenseMatrix gp(g.rows(), w);
                    for (std::size_t r = 0; r < g.rows(); ++r) {
                      auto src = g.row(r).subspan(offset, w);
                      std::copy(src.begin(), src.end(), gp.row(r).begin());
                    }
                    t.accumulate(p, gp);
                  }
                  offset += w;
                }
              });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  const DenseMatrix& xv = x.value();
  if (begin > end || end > xv.cols()) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + xv.shape_string());
  }
  DenseMatrix out(xv.rows(), end - begin);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto src = xv.row(r).subspan(begin, end - begin);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  const Var in[] = {x};
  return tape_of(x).record(OpKind::kSliceCols, in, std::move(out),
                           [x, begin](Tape& t, const DenseMatrix& g) {
                             DenseMatrix gx(x.rows(), x.cols());
                             for (std::size_t r = 0; r < g.rows(); ++r)
                               std::copy(g.row(r).begin(), g.row(r).end(),
                                         gx.row(r).begin() + begin);
                             t.accumulate(x, gx);
                           });
}

Var leaky_relu(Var x, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) throw ArgumentError("leaky_relu slope must lie in (0,1)");
  DenseMatrix out = x.value();
  for (double& v : out.data()) v = v > 0.0 ? v : slope * v;
  const Var in[] = {x};
  return tape_of(x).record(OpKind::kLeakyRelu, in, std::move(out),
                           [x, slope](Tape& t, const DenseMatrix& g) {
                             DenseMatrix gx = g;
                             const auto& xv = x.value().data();
                             for (std::size_t i = 0; i < gx.size(); ++i)
                               if (!(xv[i] > 0.0)) gx.data()[i] *= slope;
                             t.accumulate(x, gx);
                           });
}

Var relu(Var x) {
  DenseMatrix out = x.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  const Var in[] = {x};
  return tape_of(x).record(OpKind::kRelu, in, std::move(out),
                           [x](Tape& t, const DenseMatrix& g) {
                             DenseMatrix gx = g;
                             const auto& xv = x.value().data();
                             for (std::size_t i = 0; i < gx.size(); ++i)
                               if (!(xv[i] > 0.0)) gx.data()[i] = 0.0;
                             t.accumulate(x, gx);
                           });
}

Var softmax_rows(Var x) {
  DenseMatrix out = x.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    if (row.empty()) continue;
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      total += v;
    }
    for (double& v : row) v /= total;
  }
  const Var in[] = {x};
  Tape& t = tape_of(x);
  const std::size_t self = t.size();
  return t.record(OpKind::kSoftmaxRows, in, std::move(out),
                  [x, self](Tape& t, const DenseMatrix& g) {
                    const DenseMatrix& y = t.node(self).value;
                    DenseMatrix gx(y.rows(), y.cols());
                    for (std::size_t r = 0; r < y.rows(); ++r) {
                      double dot = 0.0;
                      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
                      for (std::size_t c = 0; c < y.cols(); ++c)
                        gx(r, c) = y(r, c) * (g(r, c) - dot);
                    }
                    t.accumulate(x, gx);
                  });
}

Var l2_normalize_rows(Var x) {
  const DenseMatrix& xv = x.value();
  DenseMatrix out = xv;
  std::vector<double> norms(xv.rows());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double sq = 0.0;
    for (double v : xv.row(r)) sq += v * v;
    norms[r] = std::sqrt(sq);
    if (!(norms[r] > 0.0)) {
      throw NumericalError("l2_normalize_rows: row " + std::to_string(r) + " has zero norm");
    }
    for (double& v : out.row(r)) v /= norms[r];
  }
  const Var in[] = {x};
  Tape& t = tape_of(x);
  const std::size_t self = t.size();
  return t.record(OpKind::kL2NormalizeRows, in, std::move(out),
                  [x, self, norms = std::move(norms)](Tape& t, const DenseMatrix& g) {
                    const DenseMatrix& y = t.node(self).value;
                    DenseMatrix gx(y.rows(), y.cols());
                    for (std::size_t r = 0; r < y.rows(); ++r) {
                      double dot = 0.0;
                      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
                      for (std::size_t c = 0; c < y.cols(); ++c)
                        gx(r, c) = (g(r, c) - y(r, c) * dot) / norms[r];
                    }
                    t.accumulate(x, gx);
                  });
}

Var frobenius_sq_loss(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape("frobenius_sq_loss", a.value(), b.value());
  const auto& av = a.value().data();
  const auto& bv = b.value().data();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += (av[i] - bv[i]) * (av[i] - bv[i]);
  const Var in[] = {a, b};
  return tape_of(a).record(OpKind::kFrobeniusSqLoss, in, scalar(acc),
                           [a, b](Tape& t, const DenseMatrix& g) {
                             const double s = 2.0 * g(0, 0);
                             const DenseMatrix& av = a.value();
                             const auto& bv = b.value().data();
                             DenseMatrix diff = av;
                             for (std::size_t i = 0; i < diff.size(); ++i)
                               diff.data()[i] = s * (diff.data()[i] - bv[i]);
                             if (t.requires_grad(a)) t.accumulate(a, diff);
                             if (t.requires_grad(b)) {
                               diff *= -1.0;
                               t.accumulate(b, diff);
                             }
                           });
}

Var sum(Var x) {
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  const Var in[] = {x};
  return tape_of(x).record(OpKind::kSum, in, scalar(acc), [x](Tape& t, const DenseMatrix& g) {
    t.accumulate(x, DenseMatrix(x.rows(), x.cols(), g(0, 0)));
  });
}

Var squared_distances(Var points, Var centers) {
  require_same_tape(points, centers);
  const DenseMatrix& pv = points.value();
  const DenseMatrix& cv = centers.value();
  if (pv.cols() != cv.cols()) {
    throw DimensionError("squared_distances dimension mismatch: " + pv.shape_string() + " vs " +
                         cv.shape_string());
  }
  DenseMatrix out(pv.rows(), cv.rows());
  for (std::size_t i = 0; i < pv.rows(); ++i)
    for (std::size_t j = 0; j < cv.rows(); ++j) out(i, j) = squared_distance(pv.row(i), cv.row(j));
  const Var in[] = {points, centers};
  return tape_of(points).record(
      OpKind::kSquaredDistances, in, std::move(out),
      [points, centers](Tape& t, const DenseMatrix& g) {
        const DenseMatrix& pv = points.value();
        const DenseMatrix& cv = centers.value();
        DenseMatrix gp(pv.rows(), pv.cols());
        DenseMatrix gc(cv.rows(), cv.cols());
        for (std::size_t i = 0; i < pv.rows(); ++i) {
          for (std::size_t j = 0; j < cv.rows(); ++j) {
            const double w = 2.0 * g(i, j);
            for (std::size_t c = 0; c < pv.cols(); ++c) {
              const double d = w * (pv(i, c) - cv(j, c));
              gp(i, c) += d;
              gc(j, c) -= d;
            }
          }
        }
        if (t.requires_grad(points)) t.accumulate(points, gp);
        if (t.requires_grad(centers)) t.accumulate(centers, gc);
      });
}

Var student_t_kernel(Var sq_dist, double alpha) {
  if (!(alpha > 0.0)) throw ArgumentError("student_t_kernel alpha must be positive");
  const double exponent = -(alpha + 1.0) / 2.0;
  DenseMatrix out = sq_dist.value();
  for (double& v : out.data()) v = std::pow(1.0 + v / alpha, exponent);
  const Var in[] = {sq_dist};
  Tape& t = tape_of(sq_dist);
  const std::size_t self = t.size();
  return t.record(OpKind::kStudentT, in, std::move(out),
                  [sq_dist, self, alpha, exponent](Tape& t, const DenseMatrix& g) {
                    const DenseMatrix& y = t.node(self).value;
                    const auto& d = sq_dist.value().data();
                    DenseMatrix gd = g;
                    for (std::size_t i = 0; i < gd.size(); ++i)
                      gd.data()[i] *= exponent * y.data()[i] / (alpha + d[i]);
                    t.accumulate(sq_dist, gd);
                  });
}

Var normalize_row_sums(Var x) {
  const DenseMatrix& xv = x.value();
  DenseMatrix out = xv;
  std::vector<double> sums(xv.rows());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double s = 0.0;
    for (double v : xv.row(r)) s += v;
    if (!(s > 0.0)) {
      throw NumericalError("normalize_row_sums: row " + std::to_string(r) +
                           " has nonpositive sum");
    }
    sums[r] = s;
    for (double& v : out.row(r)) v /= s;
  }
  const Var in[] = {x};
  Tape& t = tape_of(x);
  const std::size_t self = t.size();
  return t.record(OpKind::kNormalizeRowSums, in, std::move(out),
                  [x, self, sums = std::move(sums)](Tape& t, const DenseMatrix& g) {
                    const DenseMatrix& y = t.node(self).value;
                    DenseMatrix gx(y.rows(), y.cols());
                    for (std::size_t r = 0; r < y.rows(); ++r) {
                      double dot = 0.0;
                      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
                      for (std::size_t c = 0; c < y.cols(); ++c)
                        gx(r, c) = (g(r, c) - dot) / sums[r];
                    }
                    t.accumulate(x, gx);
                  });
}

Var kl_divergence(const DenseMatrix& target, Var q) {
  const DenseMatrix& qv = q.value();
  require_same_shape("kl_divergence", target, qv);
  double acc = 0.0;
  for (std::size_t i = 0; i < qv.size(); ++i) {
    const double p = target.data()[i];
    if (p == 0.0) continue;
    const double qi = qv.data()[i];
    if (!(qi > 0.0)) {
      throw NumericalError("kl_divergence: nonpositive probability " + std::to_string(qi) +
                           " where target is " + std::to_string(p));
    }
    acc += p * std::log(p / qi);
  }
  const Var in[] = {q};
  return tape_of(q).record(OpKind::kKlDivergence, in, scalar(acc),
                           [q, target](Tape& t, const DenseMatrix& g) {
                             const auto& qv = q.value().data();
                             DenseMatrix gq(target.rows(), target.cols());
                             for (std::size_t i = 0; i < gq.size(); ++i) {
                               const double p = target.data()[i];
                               if (p != 0.0) gq.data()[i] = -g(0, 0) * p / qv[i];
                             }
                             t.accumulate(q, gq);
                           });
}

}  // namespace agcn::ad
