#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "agcn/dense_matrix.hpp"
#include "agcn/kmeans.hpp"
#include "agcn/metrics.hpp"
#include "agcn/model.hpp"
#include "agcn/sparse_adjacency.hpp"

namespace agcn {

struct TrainConfig {
  std::size_t pretrain_epochs = 30;
  double pretrain_lr = 1e-3;
  std::size_t pretrain_batch = 256;
  double joint_lr = 1e-3;
  std::size_t max_iters = 200;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;
  std::size_t kmeans_max_iters = 300;
  // Verify distribution invariants of every iteration (rows of M, U unit
  // length; rows of Q, P, Z summing to one) and abort on violation.
  bool check_invariants = false;

  void validate() const;
};

struct AdamState {
  std::vector<DenseMatrix> first_moment;
  std::vector<DenseMatrix> second_moment;
  std::size_t step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

// One bias-corrected Adam update. Every gradient is checked before anything is
// modified; a non-finite entry raises NumericalError naming the parameter.
void adam_step(std::span<const NamedMatrix> params, std::span<const DenseMatrix> grads,
               AdamState& state, double lr);

struct PretrainResult {
  double initial_loss = 0.0;
  std::vector<double> epoch_losses;  // full-data reconstruction loss after each epoch
};

// Mini-batch Adam on the reconstruction loss. Only the auto-encoder part of
// `params` is touched.
PretrainResult pretrain_ae(const DenseMatrix& x, AgcnParams& params, const AgcnConfig& model_cfg,
                           const TrainConfig& cfg);

struct IterationRecord {
  std::size_t iter = 0;
  double loss_total = 0.0;
  double loss_rec = 0.0;
  double loss_kl = 0.0;
  std::optional<MetricValues> metrics;
};

struct TrainTrace {
  std::vector<IterationRecord> records;

  // Header: iter,loss_total,loss_rec,loss_kl,acc,nmi,ari,f1
  void write_csv(std::ostream& out) const;
  // Record with the highest ACC, if any record was evaluated.
  std::optional<IterationRecord> best() const;
};

struct TrainResult {
  AgcnParams params;
  TrainTrace trace;
  Labels labels;           // argmax of Z at the final iteration
  DenseMatrix embedding;   // H_l at the final iteration
  DenseMatrix prediction;  // Z at the final iteration
  PretrainResult pretrain;
  KmeansResult centroid_init;
};

using IterationObserver = std::function<void(std::size_t iter, const ForwardOutputs&)>;

// Auto-encoder pretraining (skipped when `pretrained` is given), k-means
// centroid initialization on H_l, then `max_iters` full-batch joint updates.
TrainResult train(const DenseMatrix& x, const SparseAdjacency& a, const TrainConfig& cfg,
                  AgcnConfig model_cfg, const Labels* labels = nullptr,
                  const AgcnParams* pretrained = nullptr, const IterationObserver& observer = {});

// Empty when all distribution invariants hold within `tol`, otherwise a
// description of the first violation.
std::optional<std::string> check_distribution_invariants(const ForwardOutputs& out,
                                                         double tol = 1e-9);

// Deterministic sub-seed for an independent random stream of a run.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace agcn
