#include "agcn/model.hpp"

#include <cmath>
#include <random>

#include "agcn/error.hpp"

namespace agcn {

using ad::Var;

std::size_t AgcnConfig::concat_width() const {
  std::size_t w = 0;
  for (std::size_t i = 1; i < layer_dims.size(); ++i) w += layer_dims[i];
  return w + layer_dims.back();
}

void AgcnConfig::validate() const {
  if (layer_dims.size() < 3) {
    throw ArgumentError("layer_dims needs the input dimension plus at least two layers");
  }
  for (std::size_t d : layer_dims)
    if (d == 0) throw ArgumentError("layer dimensions must be positive");
  if (k < 1) throw ArgumentError("cluster count k must be at least 1");
  if (!(alpha > 0.0)) throw ArgumentError("alpha must be positive");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) {
    throw ArgumentError("lambda1 and lambda2 must be nonnegative");
  }
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) {
    throw ArgumentError("leaky_slope must lie in (0,1)");
  }
}

std::vector<AblationSetting> ablation_settings() {
  return {
      {"baseline", false, false, false},
      {"AGCN-H", true, false, false},
      {"AGCN-H+AGCN-S[S]", true, true, false},
      {"AGCN-H+AGCN-S[S]+AGCN-S[A]", true, true, true},
  };
}

void apply(const AblationSetting& setting, AgcnConfig& cfg) {
  cfg.use_agcnh = setting.use_agcnh;
  cfg.use_agcns_concat = setting.use_agcns_concat;
  cfg.use_agcns_attention = setting.use_agcns_attention;
}

namespace {

DenseMatrix uniform_matrix(std::size_t rows, std::size_t cols, std::size_t fan_in,
                           std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  DenseMatrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

AgcnParams shaped(const AgcnConfig& cfg, std::mt19937_64* rng) {
  cfg.validate();
  const auto& dims = cfg.layer_dims;
  const std::size_t l = cfg.depth();
  auto make = [&](std::size_t rows, std::size_t cols, std::size_t fan_in) {
    return rng ? uniform_matrix(rows, cols, fan_in, *rng) : DenseMatrix(rows, cols);
  };
  AgcnParams p;
  for (std::size_t i = 0; i < l; ++i) {
    p.enc_w.push_back(make(dims[i], dims[i + 1], dims[i]));
    p.enc_b.push_back(make(1, dims[i + 1], dims[i]));
  }
  for (std::size_t i = 0; i < l; ++i) {
    const std::size_t in = dims[l - i], out = dims[l - i - 1];
    p.dec_w.push_back(make(in, out, in));
    p.dec_b.push_back(make(1, out, in));
  }
  for (std::size_t i = 0; i < l; ++i) p.gcn_w.push_back(make(dims[i], dims[i + 1], dims[i]));
  for (std::size_t i = 1; i <= l; ++i) p.attn_h_w.push_back(make(2 * dims[i], 2, 2 * dims[i]));
  const std::size_t width = cfg.concat_width();
  if (cfg.use_agcns_concat && cfg.use_agcns_attention) p.attn_s_w = make(width, l + 1, width);
  const std::size_t pred_in = cfg.use_agcns_concat ? width : dims[l];
  p.pred_w = make(pred_in, cfg.k, pred_in);
  return p;
}

}  // namespace

AgcnParams AgcnParams::initialize(const AgcnConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return shaped(cfg, &rng);
}

AgcnParams AgcnParams::zeros(const AgcnConfig& cfg) { return shaped(cfg, nullptr); }

std::vector<NamedMatrix> AgcnParams::named_autoencoder() {
  std::vector<NamedMatrix> out;
  auto push_list = [&](const char* name, std::vector<DenseMatrix>& list) {
    for (std::size_t i = 0; i < list.size(); ++i)
      out.push_back({std::string(name) + "[" + std::to_string(i + 1) + "]", &list[i]});
  };
  push_list("enc_w", enc_w);
  push_list("enc_b", enc_b);
  push_list("dec_w", dec_w);
  push_list("dec_b", dec_b);
  return out;
}

std::vector<NamedMatrix> AgcnParams::named() {
  std::vector<NamedMatrix> out = named_autoencoder();
  for (std::size_t i = 0; i < gcn_w.size(); ++i)
    out.push_back({"gcn_w[" + std::to_string(i) + "]", &gcn_w[i]});
  for (std::size_t i = 0; i < attn_h_w.size(); ++i)
    out.push_back({"attn_h_w[" + std::to_string(i + 1) + "]", &attn_h_w[i]});
  if (!attn_s_w.empty()) out.push_back({"attn_s_w", &attn_s_w});
  if (!pred_w.empty()) out.push_back({"pred_w", &pred_w});
  if (!centroids.empty()) out.push_back({"centroids", &centroids});
  return out;
}

namespace {

ParamVars bind_list(ad::Tape& tape, std::vector<NamedMatrix> named, AgcnParams& params) {
  ParamVars vars;
  for (auto& nm : named) {
    const Var v = tape.parameter(*nm.value, nm.name);
    vars.bindings.emplace_back(nm.value, v);
    const DenseMatrix* ptr = nm.value;
    auto in_list = [&](std::vector<DenseMatrix>& list, std::vector<Var>& dst) {
      if (!list.empty() && ptr >= &list.front() && ptr <= &list.back()) {
        dst.push_back(v);
        return true;
      }
      return false;
    };
    if (in_list(params.enc_w, vars.enc_w) || in_list(params.enc_b, vars.enc_b) ||
        in_list(params.dec_w, vars.dec_w) || in_list(params.dec_b, vars.dec_b) ||
        in_list(params.gcn_w, vars.gcn_w) || in_list(params.attn_h_w, vars.attn_h_w)) {
      continue;
    }
    if (ptr == &params.attn_s_w) vars.attn_s_w = v;
    if (ptr == &params.pred_w) vars.pred_w = v;
    if (ptr == &params.centroids) vars.centroids = v;
  }
  return vars;
}

}  // namespace

ParamVars bind_parameters(ad::Tape& tape, AgcnParams& params) {
  return bind_list(tape, params.named(), params);
}

ParamVars bind_autoencoder(ad::Tape& tape, AgcnParams& params) {
  return bind_list(tape, params.named_autoencoder(), params);
}

AeOutputs ae_forward(Var x, const ParamVars& params) {
  const std::size_t l = params.enc_w.size();
  if (l == 0 || params.dec_w.size() != l) throw ArgumentError("auto-encoder is not bound");
  AeOutputs out;
  Var cur = x;
  for (std::size_t i = 0; i < l; ++i) {
    cur = ad::add_row_bias(ad::matmul(cur, params.enc_w[i]), params.enc_b[i]);
    if (i + 1 < l) cur = ad::relu(cur);
    out.h.push_back(cur);
  }
  for (std::size_t i = 0; i < l; ++i) {
    cur = ad::add_row_bias(ad::matmul(cur, params.dec_w[i]), params.dec_b[i]);
    if (i + 1 < l) cur = ad::relu(cur);
  }
  out.x_hat = cur;
  return out;
}

Var attention_h(Var z, Var h, Var w_a, double slope) {
  if (!z.value().same_shape(h.value())) {
    throw DimensionError("attention_h needs matching features, got " +
                         z.value().shape_string() + " and " + h.value().shape_string());
  }
  if (w_a.rows() != 2 * z.cols() || w_a.cols() != 2) {
    throw DimensionError("attention_h weight must be " + std::to_string(2 * z.cols()) +
                         "x2, got " + w_a.value().shape_string());
  }
  const Var parts[] = {z, h};
  return ad::l2_normalize_rows(
      ad::softmax_rows(ad::leaky_relu(ad::matmul(ad::concat_cols(parts), w_a), slope)));
}

Var fuse_h(Var z, Var h, Var m) {
  if (!z.value().same_shape(h.value()) || m.rows() != z.rows() || m.cols() != 2) {
    throw DimensionError("fuse_h shape mismatch: z " + z.value().shape_string() + ", h " +
                         h.value().shape_string() + ", m " + m.value().shape_string());
  }
  return ad::add(ad::scale_rows(z, ad::slice_cols(m, 0, 1)),
                 ad::scale_rows(h, ad::slice_cols(m, 1, 2)));
}

Var gcn_layer(const SparseAdjacency& a_norm, Var input, Var w, double slope) {
  return ad::leaky_relu(ad::matmul(ad::spmm(a_norm, input), w), slope);
}

Var attention_s(std::span<const Var> features, Var w_s, double slope) {
  const Var cat = ad::concat_cols(features);
  if (w_s.rows() != cat.cols() || w_s.cols() != features.size()) {
    throw DimensionError("attention_s weight must be " + std::to_string(cat.cols()) + "x" +
                         std::to_string(features.size()) + ", got " +
                         w_s.value().shape_string());
  }
  return ad::l2_normalize_rows(ad::softmax_rows(ad::leaky_relu(ad::matmul(cat, w_s), slope)));
}

Var fuse_s(std::span<const Var> features, std::optional<Var> u) {
  if (!u) return ad::concat_cols(features);
  if (u->cols() != features.size()) {
    throw DimensionError("fuse_s has " + std::to_string(features.size()) +
                         " feature blocks but " + std::to_string(u->cols()) + " weights");
  }
  std::vector<Var> weighted;
  for (std::size_t j = 0; j < features.size(); ++j)
    weighted.push_back(ad::scale_rows(features[j], ad::slice_cols(*u, j, j + 1)));
  return ad::concat_cols(weighted);
}

Var predict_layer(const SparseAdjacency& a_norm, Var input, Var w) {
  return ad::softmax_rows(ad::matmul(ad::spmm(a_norm, input), w));
}

Var soft_assignment(Var h, Var centroids, double alpha) {
  return ad::normalize_row_sums(ad::student_t_kernel(ad::squared_distances(h, centroids), alpha));
}

DenseMatrix target_distribution(const DenseMatrix& q) {
  std::vector<double> freq(q.cols(), 0.0);
  for (std::size_t r = 0; r < q.rows(); ++r)
    for (std::size_t c = 0; c < q.cols(); ++c) {
      if (!(q(r, c) >= 0.0)) throw NumericalError("soft assignment has a negative entry");
      freq[c] += q(r, c);
    }
  for (std::size_t c = 0; c < q.cols(); ++c) {
    if (!(freq[c] > 0.0)) {
      throw NumericalError("degenerate target distribution: cluster " + std::to_string(c) +
                           " has zero total assignment");
    }
  }
  DenseMatrix p(q.rows(), q.cols());
  for (std::size_t r = 0; r < q.rows(); ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < q.cols(); ++c) {
      p(r, c) = q(r, c) * q(r, c) / freq[c];
      total += p(r, c);
    }
    if (!(total > 0.0)) {
      throw NumericalError("degenerate target distribution: row " + std::to_string(r) +
                           " is all zero");
    }
    for (double& v : p.row(r)) v /= total;
  }
  return p;
}

namespace {

double kl_value(const DenseMatrix& p, const DenseMatrix& q, const char* what) {
  if (!p.same_shape(q)) {
    throw DimensionError(std::string("KL(P||") + what + ") shape mismatch: " +
                         p.shape_string() + " vs " + q.shape_string());
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = p.data()[i];
    if (pi == 0.0) continue;
    const double qi = q.data()[i];
    if (!(qi > 0.0)) {
      throw NumericalError(std::string("KL(P||") + what + "): nonpositive entry where P > 0");
    }
    acc += pi * std::log(pi / qi);
  }
  return acc;
}

}  // namespace

double kl_loss(const DenseMatrix& p, const DenseMatrix& z, const DenseMatrix& q, double lambda1,
               double lambda2) {
  double total = 0.0;
  if (lambda1 != 0.0) total += lambda1 * kl_value(p, z, "Z");
  if (lambda2 != 0.0) total += lambda2 * kl_value(p, q, "Q");
  return total;
}

Var kl_loss(const DenseMatrix& p, Var z, Var q, double lambda1, double lambda2) {
  std::optional<Var> total;
  if (lambda1 != 0.0) total = ad::scale(ad::kl_divergence(p, z), lambda1);
  if (lambda2 != 0.0) {
    const Var term = ad::scale(ad::kl_divergence(p, q), lambda2);
    total = total ? ad::add(*total, term) : term;
  }
  if (!total) total = z.tape->constant(DenseMatrix(1, 1, 0.0));
  return *total;
}

Var total_loss(Var rec, Var kl) { return ad::add(rec, kl); }

Labels predict_labels(const DenseMatrix& z) {
  Labels out(z.rows(), 0);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

ForwardGraph forward(const ParamVars& params, Var x,
                     const SparseAdjacency& a_norm, const AgcnConfig& cfg,
                     const DenseMatrix* fixed_target) {
  const std::size_t l = cfg.depth();
  if (x.cols() != cfg.layer_dims.front()) {
    throw DimensionError("features have " + std::to_string(x.cols()) +
                         " columns but layer_dims[0] is " +
                         std::to_string(cfg.layer_dims.front()));
  }
  if (params.gcn_w.size() != l || params.attn_h_w.size() != l || !params.pred_w) {
    throw ArgumentError("network parameters are not fully bound");
  }
  ForwardGraph g;
  g.ae = ae_forward(x, params);
  const auto& h = g.ae.h;

  g.z.push_back(gcn_layer(a_norm, x, params.gcn_w[0], cfg.leaky_slope));
  for (std::size_t i = 1; i < l; ++i) {
    Var input = g.z[i - 1];
    if (cfg.use_agcnh) {
      const Var m = attention_h(g.z[i - 1], h[i - 1], params.attn_h_w[i - 1], cfg.leaky_slope);
      g.m.push_back(m);
      input = fuse_h(g.z[i - 1], h[i - 1], m);
    }
    g.z.push_back(gcn_layer(a_norm, input, params.gcn_w[i], cfg.leaky_slope));
  }

  if (cfg.use_agcns_concat) {
    std::vector<Var> features = g.z;
    features.push_back(h[l - 1]);
    if (cfg.use_agcns_attention) {
      if (!params.attn_s_w) throw ArgumentError("scale attention weights are not bound");
      g.u = attention_s(features, *params.attn_s_w, cfg.leaky_slope);
    }
    g.z_fused = fuse_s(features, g.u);
  } else if (cfg.use_agcnh) {
    const Var m = attention_h(g.z[l - 1], h[l - 1], params.attn_h_w[l - 1], cfg.leaky_slope);
    g.m.push_back(m);
    g.z_fused = fuse_h(g.z[l - 1], h[l - 1], m);
  } else {
    g.z_fused = g.z[l - 1];
  }
  g.z_pred = predict_layer(a_norm, g.z_fused, *params.pred_w);

  g.loss_rec = ad::frobenius_sq_loss(g.ae.x_hat, x);
  g.loss_total = g.loss_rec;
  if (params.centroids) {
    g.q = soft_assignment(h[l - 1], *params.centroids, cfg.alpha);
    g.p = fixed_target ? *fixed_target : target_distribution(g.q->value());
    g.loss_kl = kl_loss(g.p, g.z_pred, *g.q, cfg.lambda1, cfg.lambda2);
    g.loss_total = total_loss(g.loss_rec, *g.loss_kl);
  }
  return g;
}

ForwardOutputs snapshot(const ForwardGraph& g) {
  ForwardOutputs out;
  for (const Var& v : g.ae.h) out.h.push_back(v.value());
  out.x_hat = g.ae.x_hat.value();
  for (const Var& v : g.z) out.z.push_back(v.value());
  for (const Var& v : g.m) out.m.push_back(v.value());
  if (g.u) out.u = g.u->value();
  out.z_fused = g.z_fused.value();
  out.z_pred = g.z_pred.value();
  if (g.q) out.q = g.q->value();
  out.p = g.p;
  out.loss_rec = g.loss_rec.value()(0, 0);
  out.loss_kl = g.loss_kl ? g.loss_kl->value()(0, 0) : 0.0;
  out.loss_total = g.loss_total.value()(0, 0);
  return out;
}

}  // namespace agcn
