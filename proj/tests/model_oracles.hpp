#pragma once

#include <string>
#include <utility>
#include <vector>

#include "agcn/model.hpp"
#include "agcn/sparse_adjacency.hpp"
#include "test_support.hpp"

namespace agcn::testing {

struct ParamError {
  std::string name;
  double rel_error;
};

inline double model_loss(AgcnParams& params, const DenseMatrix& x, const SparseAdjacency& a_norm,
                         const AgcnConfig& cfg, const DenseMatrix* target) {
  ad::Tape tape;
  const ParamVars vars = bind_parameters(tape, params);
  return forward(vars, tape.constant(x), a_norm, cfg, target).loss_total.value()(0, 0);
}

// Tape gradient of the total loss against central differences for every
// parameter tensor. P is held at its value for the unperturbed parameters,
// matching its role as a constant target.
inline std::vector<ParamError> model_gradient_errors(AgcnParams params, const DenseMatrix& x,
                                                     const SparseAdjacency& a_norm,
                                                     const AgcnConfig& cfg, double h = 1e-5) {
  std::vector<DenseMatrix> analytic;
  DenseMatrix target;
  {
    ad::Tape tape;
    const ParamVars vars = bind_parameters(tape, params);
    const ForwardGraph g = forward(vars, tape.constant(x), a_norm, cfg);
    target = g.p;
    tape.backward(g.loss_total);
    for (const auto& [ptr, var] : vars.bindings) analytic.push_back(tape.grad(var));
  }
  const DenseMatrix* fixed = target.empty() ? nullptr : &target;
  std::vector<ParamError> out;
  auto named = params.named();
  for (std::size_t t = 0; t < named.size(); ++t) {
    DenseMatrix& m = *named[t].value;
    DenseMatrix numeric(m.rows(), m.cols());
    for (std::size_t e = 0; e < m.size(); ++e) {
      const double saved = m.data()[e];
      m.data()[e] = saved + h;
      const double up = model_loss(params, x, a_norm, cfg, fixed);
      m.data()[e] = saved - h;
      const double down = model_loss(params, x, a_norm, cfg, fixed);
      m.data()[e] = saved;
      numeric.data()[e] = (up - down) / (2.0 * h);
    }
    DenseMatrix diff = analytic[t];
    diff += (DenseMatrix(numeric) *= -1.0);
    const double scale = std::max({frobenius(analytic[t]), frobenius(numeric), 1e-10});
    out.push_back({named[t].name, frobenius(diff) / scale});
  }
  return out;
}

// Six nodes in two triangles joined by one edge, l = 2, k = 2.
struct ToyInstance {
  DenseMatrix x;
  SparseAdjacency a_norm;
  AgcnConfig cfg;
  AgcnParams params;
};

inline ToyInstance toy_instance(std::uint64_t seed = 5) {
  ToyInstance t;
  std::mt19937_64 rng(seed);
  t.x = random_matrix(6, 4, rng);
  const std::vector<Edge> edges{{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}, {2, 3}};
  t.a_norm = normalize_adjacency(SparseAdjacency::from_edges(6, edges));
  t.cfg.layer_dims = {4, 5, 3};
  t.cfg.k = 2;
  t.cfg.lambda1 = 0.7;
  t.cfg.lambda2 = 0.4;
  t.params = AgcnParams::initialize(t.cfg, seed);
  t.params.centroids = random_matrix(2, 3, rng);
  return t;
}

}  // namespace agcn::testing
