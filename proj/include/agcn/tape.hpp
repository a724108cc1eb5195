#pragma once

// Reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every operation of one forward evaluation in topological
// order. Each node keeps its output value plus a backward closure that owns
// whatever the local derivative needs. `Tape::backward` walks the nodes in
// strict reverse order and accumulates gradients by summation; gradients of
// intermediate nodes are released as soon as they have been propagated, so
// only trainable parameters hold a gradient afterwards.
//
// Tapes are rebuilt for every training iteration; nothing is retained between
// evaluations.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "agcn/dense_matrix.hpp"

namespace agcn::ad {

enum class OpKind {
  kConstant,
  kParameter,
  kMatMul,
  kAdd,
  kSub,
  kScale,
  kAddRowBias,
  kHadamard,
  kScaleRows,
  kConcatCols,
  kSliceCols,
  kLeakyRelu,
  kRelu,
  kSoftmaxRows,
  kL2NormalizeRows,
  kFrobeniusSqLoss,
  kSum,
  kSquaredDistances,
  kStudentT,
  kNormalizeRowSums,
  kKlDivergence,
  kSpMM,
};

const char* op_name(OpKind op);

class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while its tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const DenseMatrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

class Tape;
using BackwardFn = std::function<void(Tape&, const DenseMatrix& out_grad)>;

struct TapeNode {
  OpKind op = OpKind::kConstant;
  std::vector<std::size_t> inputs;
  DenseMatrix value;
  DenseMatrix grad;  // empty until something flows into it
  BackwardFn backward;
  bool requires_grad = false;
  bool is_parameter = false;
  std::string name;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(DenseMatrix value);
  Var parameter(DenseMatrix value, std::string name);

  // Appends an op node. Inputs must already live on this tape. `backward` is
  // only kept (and later invoked) when at least one input requires a gradient.
  Var record(OpKind op, std::span<const Var> inputs, DenseMatrix value, BackwardFn backward);

  const DenseMatrix& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Adds `g` into the gradient of `target`; ignored for nodes that do not
  // require a gradient.
  void accumulate(Var target, const DenseMatrix& g);

  // Runs the reverse sweep from a 1x1 loss node. Any previous gradients are
  // cleared first, so calling twice yields identical results.
  void backward(Var loss);

  // Gradient of a parameter after `backward`. Unused parameters report zeros.
  DenseMatrix grad(Var parameter) const;

  std::vector<Var> parameters();
  std::size_t size() const { return nodes_.size(); }
  const TapeNode& node(std::size_t id) const { return nodes_.at(id); }

 private:
  Var push(TapeNode node);

  std::vector<TapeNode> nodes_;
};

// Differentiable ops. Shape mismatches throw agcn::DimensionError.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var x, double factor);
Var add_row_bias(Var x, Var bias);  // bias is 1 x cols, broadcast over rows
Var hadamard(Var a, Var b);
Var scale_rows(Var x, Var weights);  // weights is rows x 1
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var x, std::size_t begin, std::size_t end);
Var leaky_relu(Var x, double slope);
Var relu(Var x);
Var softmax_rows(Var x);
Var l2_normalize_rows(Var x);
Var frobenius_sq_loss(Var a, Var b);  // ||a - b||_F^2, not averaged
Var sum(Var x);
Var squared_distances(Var points, Var centers);  // n x k of ||p_i - c_j||^2
Var student_t_kernel(Var sq_dist, double alpha);  // (1 + d/alpha)^(-(alpha+1)/2)
Var normalize_row_sums(Var x);
// sum_ij p_ij log(p_ij / q_ij) with 0 log 0 = 0; `target` is a constant.
Var kl_divergence(const DenseMatrix& target, Var q);

}  // namespace agcn::ad
