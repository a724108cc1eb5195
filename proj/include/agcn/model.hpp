#pragma once

// Attention-driven graph clustering network: an auto-encoder and a GCN stack
// whose per-layer features are fused by learned attention (heterogeneity-wise),
// followed by an attention-weighted concatenation of all layer outputs
// (scale-wise) that feeds a graph prediction layer. Training aligns the
// prediction Z and the Student-t soft assignment Q of the AE bottleneck with a
// sharpened target P.
//
// Data layout is row-major samples: a linear layer computes H·W + b with W of
// shape (in x out).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "agcn/dense_matrix.hpp"
#include "agcn/metrics.hpp"
#include "agcn/sparse_adjacency.hpp"
#include "agcn/tape.hpp"

namespace agcn {

struct AgcnConfig {
  // [d, d_1, ..., d_l]; layer_dims[0] must equal the feature dimension.
  std::vector<std::size_t> layer_dims{0, 500, 500, 2000, 10};
  std::size_t k = 2;
  double alpha = 1.0;
  double lambda1 = 0.1;
  double lambda2 = 0.01;
  bool use_agcnh = true;
  bool use_agcns_concat = true;
  bool use_agcns_attention = true;
  double leaky_slope = 0.2;

  std::size_t depth() const { return layer_dims.empty() ? 0 : layer_dims.size() - 1; }
  // Width of the scale-wise concatenation [Z_1 | ... | Z_l | H_l].
  std::size_t concat_width() const;
  void validate() const;
};

// The four ablation settings, from plain fixed fusion to full attention.
struct AblationSetting {
  std::string name;
  bool use_agcnh;
  bool use_agcns_concat;
  bool use_agcns_attention;
};
std::vector<AblationSetting> ablation_settings();
void apply(const AblationSetting& setting, AgcnConfig& cfg);

struct NamedMatrix {
  std::string name;
  DenseMatrix* value;
};

struct AgcnParams {
  // Index i holds layer i+1.
  std::vector<DenseMatrix> enc_w, enc_b;
  // Decoder layer i maps d_{l-i} -> d_{l-i-1}.
  std::vector<DenseMatrix> dec_w, dec_b;
  // gcn_w[0] maps X to Z_1, gcn_w[i] maps Z'_i to Z_{i+1}.
  std::vector<DenseMatrix> gcn_w;
  // attn_h_w[i] is (2 d_{i+1} x 2). The last one only feeds the prediction
  // layer when the scale-wise concatenation is disabled.
  std::vector<DenseMatrix> attn_h_w;
  DenseMatrix attn_s_w;  // (concat_width x (l+1)); empty unless scale attention is on
  DenseMatrix pred_w;    // (concat_width or d_l) x k
  DenseMatrix centroids; // k x d_l; empty until initialized

  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static AgcnParams initialize(const AgcnConfig& cfg, std::uint64_t seed);
  // Same shapes as `initialize`, all zeros.
  static AgcnParams zeros(const AgcnConfig& cfg);

  // Every non-empty trainable tensor in a fixed order.
  std::vector<NamedMatrix> named();
  std::vector<NamedMatrix> named_autoencoder();

  bool has_centroids() const { return !centroids.empty(); }
};

// Parameters registered on a tape, mirroring AgcnParams.
struct ParamVars {
  std::vector<ad::Var> enc_w, enc_b, dec_w, dec_b, gcn_w, attn_h_w;
  std::optional<ad::Var> attn_s_w, pred_w, centroids;
  std::vector<std::pair<DenseMatrix*, ad::Var>> bindings;
};

ParamVars bind_parameters(ad::Tape& tape, AgcnParams& params);
ParamVars bind_autoencoder(ad::Tape& tape, AgcnParams& params);

struct AeOutputs {
  std::vector<ad::Var> h;  // H_1..H_l
  ad::Var x_hat;
};

AeOutputs ae_forward(ad::Var x, const ParamVars& params);

// l2(softmax(leaky_relu([z | h] · w_a))) per row; n x 2.
ad::Var attention_h(ad::Var z, ad::Var h, ad::Var w_a, double slope);
// (m_1 1) ⊙ z + (m_2 1) ⊙ h.
ad::Var fuse_h(ad::Var z, ad::Var h, ad::Var m);
// leaky_relu((Â · input) · w).
ad::Var gcn_layer(const SparseAdjacency& a_norm, ad::Var input, ad::Var w, double slope);
// l2(softmax(leaky_relu([Z_1 | ... | Z_{l+1}] · w_s))) per row; n x (l+1).
ad::Var attention_s(std::span<const ad::Var> features, ad::Var w_s, double slope);
// [(u_1 1) ⊙ Z_1 | ... ]; plain concatenation when `u` is absent.
ad::Var fuse_s(std::span<const ad::Var> features, std::optional<ad::Var> u);
// softmax(Â · input · w).
ad::Var predict_layer(const SparseAdjacency& a_norm, ad::Var input, ad::Var w);
// Student-t similarity of each embedding to each centroid, rows normalized.
ad::Var soft_assignment(ad::Var h, ad::Var centroids, double alpha);

// p_ij ∝ q_ij^2 / f_j with f_j = sum_i q_ij.
DenseMatrix target_distribution(const DenseMatrix& q);

// λ1 KL(P||Z) + λ2 KL(P||Q).
double kl_loss(const DenseMatrix& p, const DenseMatrix& z, const DenseMatrix& q, double lambda1,
               double lambda2);
ad::Var kl_loss(const DenseMatrix& p, ad::Var z, ad::Var q, double lambda1, double lambda2);
ad::Var total_loss(ad::Var rec, ad::Var kl);

// Row-wise argmax, lowest index on ties.
Labels predict_labels(const DenseMatrix& z);

// Tape handles for one full evaluation of the network and its objective.
struct ForwardGraph {
  AeOutputs ae;
  std::vector<ad::Var> z;  // Z_1..Z_l
  std::vector<ad::Var> m;  // attention pairs actually used
  std::optional<ad::Var> u;
  ad::Var z_fused;
  ad::Var z_pred;
  std::optional<ad::Var> q;
  DenseMatrix p;  // constant target; empty without centroids
  ad::Var loss_rec;
  std::optional<ad::Var> loss_kl;
  ad::Var loss_total;
};

// Runs the whole network. When `fixed_target` is given it replaces the P
// derived from the current Q (used to hold P fixed in finite differences).
ForwardGraph forward(const ParamVars& params, ad::Var x,
                     const SparseAdjacency& a_norm, const AgcnConfig& cfg,
                     const DenseMatrix* fixed_target = nullptr);

// Value snapshot of a forward evaluation.
struct ForwardOutputs {
  std::vector<DenseMatrix> h;
  DenseMatrix x_hat;
  std::vector<DenseMatrix> z;
  std::vector<DenseMatrix> m;
  DenseMatrix u;
  DenseMatrix z_fused;
  DenseMatrix z_pred;
  DenseMatrix q;
  DenseMatrix p;
  double loss_rec = 0.0;
  double loss_kl = 0.0;
  double loss_total = 0.0;
};

ForwardOutputs snapshot(const ForwardGraph& graph);

}  // namespace agcn
