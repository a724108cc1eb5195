#include "agcn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "agcn/error.hpp"

namespace agcn {

void TrainConfig::validate() const {
  if (pretrain_batch < 1 || max_iters < 1 || eval_every < 1 || kmeans_max_iters < 1) {
    throw ArgumentError("training counts must be at least 1");
  }
  if (!(pretrain_lr > 0.0) || !(joint_lr > 0.0)) {
    throw ArgumentError("learning rates must be positive");
  }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined words.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void adam_step(std::span<const NamedMatrix> params, std::span<const DenseMatrix> grads,
               AdamState& state, double lr) {
  if (params.size() != grads.size()) {
    throw ArgumentError("adam_step got " + std::to_string(grads.size()) + " gradients for " +
                        std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].same_shape(*params[i].value)) {
      throw DimensionError("gradient for " + params[i].name + " has shape " +
                           grads[i].shape_string() + ", expected " +
                           params[i].value->shape_string());
    }
    if (!grads[i].all_finite()) {
      throw NumericalError("non-finite gradient for parameter " + params[i].name);
    }
  }
  if (state.first_moment.size() != params.size()) {
    state.first_moment.clear();
    state.second_moment.clear();
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.value->rows(), p.value->cols());
      state.second_moment.emplace_back(p.value->rows(), p.value->cols());
    }
    state.step = 0;
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(kAdamBeta1, t);
  const double correction2 = 1.0 - std::pow(kAdamBeta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& value = params[i].value->data();
    auto& m = state.first_moment[i].data();
    auto& v = state.second_moment[i].data();
    const auto& g = grads[i].data();
    for (std::size_t j = 0; j < value.size(); ++j) {
      m[j] = kAdamBeta1 * m[j] + (1.0 - kAdamBeta1) * g[j];
      v[j] = kAdamBeta2 * v[j] + (1.0 - kAdamBeta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      value[j] -= lr * m_hat / (std::sqrt(v_hat) + kAdamEpsilon);
    }
  }
}

namespace {

double reconstruction_loss(const DenseMatrix& x, AgcnParams& params) {
  ad::Tape tape;
  const ParamVars vars = bind_autoencoder(tape, params);
  const AeOutputs ae = ae_forward(tape.constant(x), vars);
  return ad::frobenius_sq_loss(ae.x_hat, tape.constant(x)).value()(0, 0);
}

std::vector<DenseMatrix> collect_grads(const ad::Tape& tape, const ParamVars& vars) {
  std::vector<DenseMatrix> grads;
  grads.reserve(vars.bindings.size());
  for (const auto& [ptr, var] : vars.bindings) grads.push_back(tape.grad(var));
  return grads;
}

std::vector<NamedMatrix> named_from(const ad::Tape& tape, const ParamVars& vars) {
  std::vector<NamedMatrix> out;
  for (const auto& [ptr, var] : vars.bindings) out.push_back({tape.node(var.id).name, ptr});
  return out;
}

}  // namespace

PretrainResult pretrain_ae(const DenseMatrix& x, AgcnParams& params, const AgcnConfig& model_cfg,
                           const TrainConfig& cfg) {
  cfg.validate();
  if (x.cols() != model_cfg.layer_dims.front()) {
    throw DimensionError("features have " + std::to_string(x.cols()) +
                         " columns but layer_dims[0] is " +
                         std::to_string(model_cfg.layer_dims.front()));
  }
  PretrainResult result;
  result.initial_loss = reconstruction_loss(x, params);
  std::mt19937_64 rng(derive_seed(cfg.seed, 11));
  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), 0);
  AdamState state;
  for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.pretrain_batch) {
      const std::size_t stop = std::min(order.size(), start + cfg.pretrain_batch);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      ad::Tape tape;
      const ParamVars vars = bind_autoencoder(tape, params);
      const ad::Var xb = tape.constant(gather_rows(x, idx));
      const AeOutputs ae = ae_forward(xb, vars);
      const ad::Var loss = ad::frobenius_sq_loss(ae.x_hat, xb);
      if (!std::isfinite(loss.value()(0, 0))) {
        throw NumericalError("pretraining diverged in epoch " + std::to_string(epoch + 1));
      }
      tape.backward(loss);
      const auto grads = collect_grads(tape, vars);
      const auto named = named_from(tape, vars);
      adam_step(named, grads, state, cfg.pretrain_lr);
    }
    const double loss = reconstruction_loss(x, params);
    if (!std::isfinite(loss)) {
      throw NumericalError("pretraining diverged in epoch " + std::to_string(epoch + 1));
    }
    result.epoch_losses.push_back(loss);
  }
  return result;
}

void TrainTrace::write_csv(std::ostream& out) const {
  out << "iter,loss_total,loss_rec,loss_kl,acc,nmi,ari,f1\n";
  char buf[512];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g", r.iter, r.loss_total, r.loss_rec,
                  r.loss_kl);
    out << buf;
    if (r.metrics) {
      std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g", r.metrics->acc, r.metrics->nmi,
                    r.metrics->ari, r.metrics->f1);
      out << buf << '\n';
    } else {
      out << ",,,,\n";
    }
  }
}

std::optional<IterationRecord> TrainTrace::best() const {
  std::optional<IterationRecord> best;
  for (const auto& r : records)
    if (r.metrics && (!best || r.metrics->acc > best->metrics->acc)) best = r;
  return best;
}

std::optional<std::string> check_distribution_invariants(const ForwardOutputs& out, double tol) {
  auto unit_rows = [&](const DenseMatrix& m, const std::string& name) -> std::optional<std::string> {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      double sq = 0.0;
      for (double v : m.row(r)) {
        if (!(v > 0.0)) return name + " has a nonpositive entry in row " + std::to_string(r);
        sq += v * v;
      }
      if (std::abs(std::sqrt(sq) - 1.0) > tol) {
        return name + " row " + std::to_string(r) + " has norm " + std::to_string(std::sqrt(sq));
      }
    }
    return std::nullopt;
  };
  auto stochastic_rows = [&](const DenseMatrix& m,
                             const std::string& name) -> std::optional<std::string> {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      double s = 0.0;
      for (double v : m.row(r)) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
          return name + " has an invalid entry in row " + std::to_string(r);
        }
        s += v;
      }
      if (std::abs(s - 1.0) > tol) {
        return name + " row " + std::to_string(r) + " sums to " + std::to_string(s);
      }
    }
    return std::nullopt;
  };
  for (std::size_t i = 0; i < out.m.size(); ++i)
    if (auto e = unit_rows(out.m[i], "M[" + std::to_string(i + 1) + "]")) return e;
  if (!out.u.empty())
    if (auto e = unit_rows(out.u, "U")) return e;
  if (auto e = stochastic_rows(out.z_pred, "Z")) return e;
  if (!out.q.empty())
    if (auto e = stochastic_rows(out.q, "Q")) return e;
  if (!out.p.empty())
    if (auto e = stochastic_rows(out.p, "P")) return e;
  return std::nullopt;
}

TrainResult train(const DenseMatrix& x, const SparseAdjacency& a, const TrainConfig& cfg,
                  AgcnConfig model_cfg, const Labels* labels, const AgcnParams* pretrained,
                  const IterationObserver& observer) {
  cfg.validate();
  if (model_cfg.layer_dims.empty()) throw ArgumentError("layer_dims must not be empty");
  if (model_cfg.layer_dims.front() == 0) model_cfg.layer_dims.front() = x.cols();
  model_cfg.validate();
  if (a.n() != x.rows()) {
    throw ValidationError("graph has " + std::to_string(a.n()) + " nodes but features have " +
                          std::to_string(x.rows()) + " rows");
  }
  if (labels && labels->size() != x.rows()) {
    throw ValidationError("got " + std::to_string(labels->size()) + " labels for " +
                          std::to_string(x.rows()) + " samples");
  }
  if (model_cfg.k > x.rows()) throw ArgumentError("more clusters than samples");

  const SparseAdjacency a_norm = normalize_adjacency(a);
  TrainResult result;
  if (pretrained) {
    result.params = *pretrained;
  } else {
    result.params = AgcnParams::initialize(model_cfg, derive_seed(cfg.seed, 1));
    result.pretrain = pretrain_ae(x, result.params, model_cfg, cfg);
  }

  {
    ad::Tape tape;
    const ParamVars vars = bind_autoencoder(tape, result.params);
    const AeOutputs ae = ae_forward(tape.constant(x), vars);
    result.centroid_init = kmeans(ae.h.back().value(), model_cfg.k, derive_seed(cfg.seed, 2),
                                  cfg.kmeans_max_iters);
    result.params.centroids = result.centroid_init.centroids;
  }

  AdamState state;
  for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
    ad::Tape tape;
    const ParamVars vars = bind_parameters(tape, result.params);
    const ad::Var xv = tape.constant(x);
    const ForwardGraph graph = forward(vars, xv, a_norm, model_cfg);

    IterationRecord rec;
    rec.iter = iter;
    rec.loss_total = graph.loss_total.value()(0, 0);
    rec.loss_rec = graph.loss_rec.value()(0, 0);
    rec.loss_kl = graph.loss_kl ? graph.loss_kl->value()(0, 0) : 0.0;
    if (!std::isfinite(rec.loss_total)) {
      throw NumericalError("loss became non-finite at iteration " + std::to_string(iter));
    }
    if (cfg.check_invariants || observer) {
      const ForwardOutputs out = snapshot(graph);
      if (cfg.check_invariants) {
        if (auto violation = check_distribution_invariants(out)) {
          throw NumericalError("iteration " + std::to_string(iter) + ": " + *violation);
        }
      }
      if (observer) observer(iter, out);
    }
    const Labels predicted = predict_labels(graph.z_pred.value());
    if (labels && (iter % cfg.eval_every == 0 || iter == cfg.max_iters)) {
      rec.metrics = evaluate(*labels, predicted);
    }
    result.trace.records.push_back(rec);
    if (iter == cfg.max_iters) {
      result.labels = predicted;
      result.embedding = graph.ae.h.back().value();
      result.prediction = graph.z_pred.value();
    }

    tape.backward(graph.loss_total);
    try {
      adam_step(named_from(tape, vars), collect_grads(tape, vars), state, cfg.joint_lr);
    } catch (const NumericalError& e) {
      throw NumericalError("iteration " + std::to_string(iter) + ": " + e.what());
    }
  }
  return result;
}

}  // namespace agcn
