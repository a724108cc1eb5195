#include <doctest.h>

#include <cmath>
#include <random>

#include "agcn/error.hpp"
#include "agcn/model.hpp"
#include "model_oracles.hpp"
#include "test_support.hpp"

using namespace agcn;
using agcn::testing::max_abs_diff;
using agcn::testing::max_gradient_error;
using agcn::testing::probe;
using agcn::testing::random_matrix;

namespace {

void check_unit_rows(const DenseMatrix& m, double tol) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double sq = 0.0;
    for (double v : m.row(r)) sq += v * v;
    CHECK(std::abs(std::sqrt(sq) - 1.0) <= tol);
  }
}

void check_stochastic_rows(const DenseMatrix& m, double tol) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (double v : m.row(r)) s += v;
    CHECK(std::abs(s - 1.0) <= tol);
  }
}

SparseAdjacency identity_graph(std::size_t n) {
  return normalize_adjacency(SparseAdjacency::from_edges(n, {}));
}

}  // namespace

TEST_CASE("config validation and parameter shapes") {
  AgcnConfig cfg;
  cfg.layer_dims = {6, 4, 3, 2};
  cfg.k = 3;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.concat_width() == 4 + 3 + 2 + 2);
  auto p = AgcnParams::initialize(cfg, 1);
  CHECK(p.enc_w[0].rows() == 6);
  CHECK(p.enc_w[2].cols() == 2);
  CHECK(p.dec_w[0].rows() == 2);
  CHECK(p.dec_w[2].cols() == 6);
  CHECK(p.gcn_w[0].rows() == 6);
  CHECK(p.gcn_w[0].cols() == 4);
  CHECK(p.gcn_w[2].rows() == 3);
  CHECK(p.attn_h_w[1].rows() == 6);
  CHECK(p.attn_h_w[1].cols() == 2);
  CHECK(p.attn_s_w.rows() == 11);
  CHECK(p.attn_s_w.cols() == 4);
  CHECK(p.pred_w.rows() == 11);
  CHECK(p.pred_w.cols() == 3);
  CHECK_FALSE(p.has_centroids());
  for (auto& nm : p.named()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(nm.value->rows()));
    if (nm.name.find("_b[") != std::string::npos) continue;
    for (double v : nm.value->data()) CHECK(std::abs(v) <= bound);
  }
  CHECK(AgcnParams::initialize(cfg, 1).enc_w == p.enc_w);
  CHECK(AgcnParams::initialize(cfg, 2).enc_w != p.enc_w);

  cfg.layer_dims = {6, 4};
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg.layer_dims = {6, 4, 2};
  cfg.lambda1 = -1;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg.lambda1 = 0;
  cfg.alpha = 0;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);

  AgcnConfig no_concat;
  no_concat.layer_dims = {6, 4, 2};
  no_concat.use_agcns_concat = false;
  auto q = AgcnParams::initialize(no_concat, 1);
  CHECK(q.attn_s_w.empty());
  CHECK(q.pred_w.rows() == 2);
}

TEST_CASE("ablation settings") {
  const auto s = ablation_settings();
  REQUIRE(s.size() == 4);
  CHECK_FALSE(s[0].use_agcnh);
  CHECK_FALSE(s[0].use_agcns_concat);
  CHECK_FALSE(s[0].use_agcns_attention);
  CHECK(s[1].use_agcnh);
  CHECK_FALSE(s[1].use_agcns_concat);
  CHECK(s[2].use_agcns_concat);
  CHECK_FALSE(s[2].use_agcns_attention);
  CHECK(s[3].use_agcnh);
  CHECK(s[3].use_agcns_concat);
  CHECK(s[3].use_agcns_attention);
}

TEST_CASE("ae_forward") {
  AgcnConfig cfg;
  cfg.layer_dims = {3, 3, 3};
  auto zero = AgcnParams::zeros(cfg);
  ad::Tape tape;
  const auto vars = bind_autoencoder(tape, zero);
  const auto out = ae_forward(tape.constant(DenseMatrix(4, 3)), vars);
  for (const auto& h : out.h) CHECK(h.value() == DenseMatrix(4, 3));
  CHECK(out.x_hat.value() == DenseMatrix(4, 3));

  // Identity weights and nonnegative input pass through the ReLU layers unchanged.
  auto ident = AgcnParams::zeros(cfg);
  for (auto& w : ident.enc_w) w = DenseMatrix::identity(3);
  for (auto& w : ident.dec_w) w = DenseMatrix::identity(3);
  ad::Tape t2;
  const DenseMatrix x{{1, 2, 3}, {0, 0.5, 4}, {9, 1, 0}, {2, 2, 2}};
  const auto vars2 = bind_autoencoder(t2, ident);
  CHECK(ae_forward(t2.constant(x), vars2).x_hat.value() == x);

  std::mt19937_64 rng(51);
  auto params = AgcnParams::initialize(cfg, 3);
  const DenseMatrix input = random_matrix(4, 3, rng);
  std::vector<DenseMatrix> tensors;
  for (auto& nm : params.named_autoencoder()) tensors.push_back(*nm.value);
  const double err = max_gradient_error(tensors, [&](ad::Tape& t, std::span<const ad::Var> v) {
    ParamVars pv;
    pv.enc_w = {v[0], v[1]};
    pv.enc_b = {v[2], v[3]};
    pv.dec_w = {v[4], v[5]};
    pv.dec_b = {v[6], v[7]};
    auto xv = t.constant(input);
    return ad::frobenius_sq_loss(ae_forward(xv, pv).x_hat, xv);
  });
  CHECK(err < 1e-4);
}

TEST_CASE("attention_h") {
  std::mt19937_64 rng(52);
  ad::Tape tape;
  auto z = tape.constant(random_matrix(5, 3, rng));
  auto h = tape.constant(random_matrix(5, 3, rng));
  auto m = attention_h(z, h, tape.constant(DenseMatrix(6, 2)), 0.2);
  for (double v : m.value().data()) CHECK(v == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-15));

  // One constant-one feature column driving logits to [10, -10].
  DenseMatrix zc(2, 1, 1.0), hc(2, 1, 0.0);
  DenseMatrix w{{10, -10}, {0, 0}};
  auto sat = attention_h(tape.constant(zc), tape.constant(hc), tape.constant(w), 0.2);
  CHECK(sat.value()(0, 0) > 0.99999);
  // leaky_relu maps -10 to -2, so the second weight is about e^-12.
  CHECK(sat.value()(0, 1) < 1e-5);
  CHECK_THROWS_AS(attention_h(z, h, tape.constant(DenseMatrix(5, 2)), 0.2), DimensionError);

  const DenseMatrix z0 = random_matrix(4, 2, rng), h0 = random_matrix(4, 2, rng);
  CHECK(max_gradient_error({z0, h0, random_matrix(4, 2, rng)},
                           [](ad::Tape& t, std::span<const ad::Var> v) {
                             return probe(t, attention_h(v[0], v[1], v[2], 0.2));
                           }) < 1e-4);
}

TEST_CASE("fuse_h") {
  std::mt19937_64 rng(53);
  const DenseMatrix z = random_matrix(3, 2, rng), h = random_matrix(3, 2, rng);
  ad::Tape tape;
  auto zv = tape.constant(z), hv = tape.constant(h);
  DenseMatrix first(3, 2), second(3, 2);
  for (std::size_t r = 0; r < 3; ++r) first(r, 0) = second(r, 1) = 1.0;
  CHECK(fuse_h(zv, hv, tape.constant(first)).value() == z);
  CHECK(fuse_h(zv, hv, tape.constant(second)).value() == h);
  const DenseMatrix m = random_matrix(3, 2, rng, 0, 1);
  const DenseMatrix got = fuse_h(zv, hv, tape.constant(m)).value();
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 2; ++c) CHECK(got(r, c) == m(r, 0) * z(r, c) + m(r, 1) * h(r, c));
  CHECK_THROWS_AS(fuse_h(zv, tape.constant(DenseMatrix(3, 3)), tape.constant(m)), DimensionError);
}

TEST_CASE("gcn_layer") {
  ad::Tape tape;
  const DenseMatrix x{{1, 2}, {3, 0.5}, {0, 4}};
  CHECK(gcn_layer(identity_graph(3), tape.constant(x), tape.constant(DenseMatrix::identity(2)), 0.2)
            .value() == x);
  const std::vector<Edge> edge{{0, 1}};
  const auto pair = normalize_adjacency(SparseAdjacency::from_edges(2, edge));
  const DenseMatrix y{{1, -4}, {3, -2}};
  const auto out =
      gcn_layer(pair, tape.constant(y), tape.constant(DenseMatrix::identity(2)), 0.2).value();
  for (std::size_t r = 0; r < 2; ++r) {
    CHECK(out(r, 0) == doctest::Approx(2.0));
    CHECK(out(r, 1) == doctest::Approx(-0.6));
  }

  std::mt19937_64 rng(54);
  const std::vector<Edge> edges{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}, {1, 3}};
  const auto g = normalize_adjacency(SparseAdjacency::from_edges(5, edges));
  CHECK(max_gradient_error({random_matrix(5, 3, rng), random_matrix(3, 2, rng)},
                           [&](ad::Tape& t, std::span<const ad::Var> v) {
                             return probe(t, gcn_layer(g, v[0], v[1], 0.2));
                           }) < 1e-4);
}

TEST_CASE("attention_s and fuse_s") {
  std::mt19937_64 rng(55);
  ad::Tape tape;
  std::vector<ad::Var> feats;
  std::size_t width = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    feats.push_back(tape.constant(random_matrix(4, 1 + i % 3, rng)));
    width += feats.back().cols();
  }
  auto u = attention_s(feats, tape.constant(DenseMatrix(width, 5)), 0.2);
  for (double v : u.value().data()) CHECK(v == doctest::Approx(1 / std::sqrt(5.0)).epsilon(1e-15));

  DenseMatrix w(width, 5);
  for (std::size_t r = 0; r < width; ++r) w(r, 2) = 0.0;
  DenseMatrix ones(4, 1, 1.0);
  std::vector<ad::Var> with_bias = feats;
  with_bias[0] = tape.constant(DenseMatrix(4, 1, 1.0));
  DenseMatrix wb(width, 5);
  wb(0, 2) = 40.0;
  auto dominant = attention_s(with_bias, tape.constant(wb), 0.2);
  for (std::size_t r = 0; r < 4; ++r) CHECK(dominant.value()(r, 2) > 0.999999);

  auto plain = fuse_s(feats, std::nullopt);
  CHECK(plain.value() == ad::concat_cols(feats).value());
  CHECK(fuse_s(feats, tape.constant(DenseMatrix(4, 5, 1.0))).value() == plain.value());
  DenseMatrix weights = random_matrix(4, 5, rng, 0, 1);
  for (std::size_t r = 0; r < 4; ++r) weights(r, 1) = 0.0;
  const DenseMatrix fused = fuse_s(feats, tape.constant(weights)).value();
  std::size_t col = 0;
  for (std::size_t b = 0; b < 5; ++b) {
    const DenseMatrix& part = feats[b].value();
    for (std::size_t c = 0; c < part.cols(); ++c, ++col)
      for (std::size_t r = 0; r < 4; ++r) {
        CHECK(fused(r, col) == weights(r, b) * part(r, c));
        if (b == 1) CHECK(fused(r, col) == 0.0);
      }
  }
  CHECK_THROWS_AS(fuse_s(feats, tape.constant(DenseMatrix(4, 4, 1.0))), DimensionError);
  CHECK_THROWS_AS(attention_s(feats, tape.constant(DenseMatrix(width + 1, 5)), 0.2),
                  DimensionError);

  std::vector<DenseMatrix> inputs{random_matrix(3, 2, rng), random_matrix(3, 1, rng),
                                  random_matrix(3, 2, rng), random_matrix(5, 3, rng)};
  CHECK(max_gradient_error(inputs, [](ad::Tape& t, std::span<const ad::Var> v) {
          const std::vector<ad::Var> f{v[0], v[1], v[2]};
          auto uu = attention_s(f, v[3], 0.2);
          return probe(t, fuse_s(f, uu));
        }) < 1e-4);
}

TEST_CASE("predict_layer") {
  std::mt19937_64 rng(56);
  ad::Tape tape;
  auto x = tape.constant(random_matrix(4, 3, rng));
  auto uniform = predict_layer(identity_graph(4), x, tape.constant(DenseMatrix(3, 5)));
  for (double v : uniform.value().data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));

  DenseMatrix ones(4, 3, 1.0);
  DenseMatrix w(3, 2);
  for (std::size_t r = 0; r < 3; ++r) w(r, 1) = 5.0;
  auto favored = predict_layer(identity_graph(4), tape.constant(ones), tape.constant(w));
  for (std::size_t r = 0; r < 4; ++r) CHECK(favored.value()(r, 1) > 0.999);
  check_stochastic_rows(favored.value(), 1e-12);

  const std::vector<Edge> edges{{0, 1}, {1, 2}, {2, 3}};
  const auto g = normalize_adjacency(SparseAdjacency::from_edges(4, edges));
  CHECK(max_gradient_error({random_matrix(4, 3, rng), random_matrix(3, 2, rng)},
                           [&](ad::Tape& t, std::span<const ad::Var> v) {
                             return probe(t, predict_layer(g, v[0], v[1]));
                           }) < 1e-4);
}

TEST_CASE("soft_assignment") {
  ad::Tape tape;
  std::mt19937_64 rng(57);
  auto h = tape.constant(random_matrix(4, 2, rng));
  CHECK(soft_assignment(h, tape.constant(random_matrix(1, 2, rng)), 1.0).value() ==
        DenseMatrix(4, 1, 1.0));
  auto eq = soft_assignment(tape.constant({{0, 0}}), tape.constant({{1, 0}, {-1, 0}}), 1.0);
  CHECK(eq.value() == DenseMatrix{{0.5, 0.5}});
  auto plug = soft_assignment(tape.constant({{0, 0}}), tape.constant({{0, 0}, {1, 0}}), 1.0);
  CHECK(plug.value()(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(plug.value()(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(max_gradient_error({random_matrix(5, 3, rng), random_matrix(2, 3, rng)},
                           [](ad::Tape& t, std::span<const ad::Var> v) {
                             return probe(t, soft_assignment(v[0], v[1], 1.0));
                           }) < 1e-4);
}

TEST_CASE("target_distribution") {
  const DenseMatrix one_hot{{1, 0}, {0, 1}, {1, 0}};
  CHECK(target_distribution(one_hot) == one_hot);
  const DenseMatrix uniform(3, 4, 0.25);
  CHECK(max_abs_diff(target_distribution(uniform), uniform) < 1e-15);

  // f = [1.2, 0.8]; row 0 ∝ [0.64/1.2, 0.04/0.8], row 1 ∝ [0.16/1.2, 0.36/0.8].
  const DenseMatrix q{{0.8, 0.2}, {0.4, 0.6}};
  const double r00 = 0.64 / 1.2, r01 = 0.04 / 0.8, r10 = 0.16 / 1.2, r11 = 0.36 / 0.8;
  const DenseMatrix expected{{r00 / (r00 + r01), r01 / (r00 + r01)},
                             {r10 / (r10 + r11), r11 / (r10 + r11)}};
  CHECK(max_abs_diff(target_distribution(q), expected) < 1e-15);
  CHECK_THROWS_AS(target_distribution(DenseMatrix{{1, 0}, {1, 0}}), NumericalError);
}

TEST_CASE("property: target distribution sharpens under equal cluster frequencies") {
  std::mt19937_64 rng(58);
  for (int trial = 0; trial < 50; ++trial) {
    // Rows paired with their mirror image give equal column sums for k = 2.
    DenseMatrix q(8, 2);
    for (std::size_t r = 0; r < 4; ++r) {
      const double a = std::uniform_real_distribution<double>(0.01, 0.99)(rng);
      q(2 * r, 0) = a;
      q(2 * r, 1) = 1 - a;
      q(2 * r + 1, 0) = 1 - a;
      q(2 * r + 1, 1) = a;
    }
    const DenseMatrix p = target_distribution(q);
    check_stochastic_rows(p, 1e-12);
    for (std::size_t r = 0; r < 8; ++r)
      CHECK(std::max(p(r, 0), p(r, 1)) >= std::max(q(r, 0), q(r, 1)) - 1e-15);
  }
}

TEST_CASE("kl_loss") {
  const DenseMatrix p{{0.3, 0.7}, {0.9, 0.1}};
  CHECK(kl_loss(p, p, p, 1.0, 2.0) == 0.0);
  CHECK(kl_loss(p, DenseMatrix(2, 2, 0.5), DenseMatrix(2, 2, 0.5), 0.0, 0.0) == 0.0);
  CHECK(kl_loss(DenseMatrix{{1, 0}}, DenseMatrix{{0.5, 0.5}}, DenseMatrix{{0.5, 0.5}}, 1.0, 1.0) ==
        doctest::Approx(2 * std::log(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(kl_loss(DenseMatrix{{1, 0}}, DenseMatrix{{0, 1}}, DenseMatrix{{0.5, 0.5}}, 1, 1),
                  NumericalError);

  std::mt19937_64 rng(59);
  for (int trial = 0; trial < 50; ++trial) {
    ad::Tape tape;
    auto a = ad::softmax_rows(tape.constant(random_matrix(5, 3, rng, -3, 3)));
    auto b = ad::softmax_rows(tape.constant(random_matrix(5, 3, rng, -3, 3)));
    auto c = ad::softmax_rows(tape.constant(random_matrix(5, 3, rng, -3, 3)));
    const double l1 = std::uniform_real_distribution<double>(0, 5)(rng);
    CHECK(kl_loss(a.value(), b.value(), c.value(), l1, 1.0) >= 0.0);
    CHECK(kl_loss(a.value(), b, c, l1, 1.0).value()(0, 0) ==
          kl_loss(a.value(), b.value(), c.value(), l1, 1.0));
  }
}

TEST_CASE("total_loss and predict_labels") {
  ad::Tape tape;
  CHECK(total_loss(tape.constant({{0}}), tape.constant({{0}})).value()(0, 0) == 0.0);
  CHECK(total_loss(tape.constant({{1.5}}), tape.constant({{2.5}})).value()(0, 0) == 4.0);

  CHECK(predict_labels(DenseMatrix{{0.1, 0.7, 0.2}, {0.25, 0.25, 0.5}}) == Labels{1, 2});
  CHECK(predict_labels(DenseMatrix(1, 4, 0.25)) == Labels{0});
  std::mt19937_64 rng(60);
  const DenseMatrix z = random_matrix(100, 5, rng, 0, 1);
  const Labels got = predict_labels(z);
  for (std::size_t r = 0; r < 100; ++r) {
    int best = 0;
    for (int c = 0; c < 5; ++c)
      if (z(r, c) > z(r, best)) best = c;
    CHECK(got[r] == best);
  }
}

TEST_CASE("full forward: invariants and loss recomputation") {
  auto toy = testing::toy_instance();
  ad::Tape tape;
  const auto vars = bind_parameters(tape, toy.params);
  const auto g = forward(vars, tape.constant(toy.x), toy.a_norm, toy.cfg);
  const auto out = snapshot(g);
  REQUIRE(out.m.size() == 1);
  check_unit_rows(out.m[0], 1e-9);
  check_unit_rows(out.u, 1e-9);
  check_stochastic_rows(out.z_pred, 1e-9);
  check_stochastic_rows(out.q, 1e-9);
  check_stochastic_rows(out.p, 1e-9);

  // Independent recomputation of the objective from the snapshot.
  double rec = 0.0;
  for (std::size_t i = 0; i < toy.x.size(); ++i) {
    const double d = out.x_hat.data()[i] - toy.x.data()[i];
    rec += d * d;
  }
  double kl_z = 0.0, kl_q = 0.0;
  for (std::size_t i = 0; i < out.p.size(); ++i) {
    const double p = out.p.data()[i];
    kl_z += p * std::log(p / out.z_pred.data()[i]);
    kl_q += p * std::log(p / out.q.data()[i]);
  }
  const double expected = rec + toy.cfg.lambda1 * kl_z + toy.cfg.lambda2 * kl_q;
  CHECK(out.loss_total == doctest::Approx(expected).epsilon(1e-12));
  CHECK(out.loss_rec == doctest::Approx(rec).epsilon(1e-12));

  // Column blocks of Z' are Z_1, Z_2, H_2 weighted by u.
  std::size_t col = 0;
  const std::vector<DenseMatrix> blocks{out.z[0], out.z[1], out.h[1]};
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    ad::Tape t2;
    auto sliced = ad::slice_cols(t2.constant(out.z_fused), col, col + blocks[b].cols());
    auto weighted = ad::scale_rows(t2.constant(blocks[b]),
                                   ad::slice_cols(t2.constant(out.u), b, b + 1));
    CHECK(sliced.value() == weighted.value());
    col += blocks[b].cols();
  }
  CHECK(col == out.z_fused.cols());
}

TEST_CASE("end-to-end gradient on a 6-node graph, every parameter") {
  for (const auto& setting : ablation_settings()) {
    auto toy = testing::toy_instance(7);
    apply(setting, toy.cfg);
    auto centroids = toy.params.centroids;
    toy.params = AgcnParams::initialize(toy.cfg, 7);
    toy.params.centroids = centroids;
    for (const auto& e : testing::model_gradient_errors(toy.params, toy.x, toy.a_norm, toy.cfg)) {
      INFO(setting.name << " " << e.name << " rel err " << e.rel_error);
      CHECK(e.rel_error < 1e-4);
    }
  }
}

TEST_CASE("AGCN-H off equals fusion with m forced to [1, 0]") {
  auto toy = testing::toy_instance(9);
  toy.cfg.layer_dims = {4, 5, 3, 3};
  toy.cfg.use_agcnh = false;
  toy.params = AgcnParams::initialize(toy.cfg, 9);
  std::mt19937_64 rng(61);
  toy.params.centroids = random_matrix(2, 3, rng);

  ad::Tape tape;
  const auto vars = bind_parameters(tape, toy.params);
  auto x = tape.constant(toy.x);
  const auto g = forward(vars, x, toy.a_norm, toy.cfg);

  DenseMatrix forced(6, 2);
  for (std::size_t r = 0; r < 6; ++r) forced(r, 0) = 1.0;
  auto m = tape.constant(forced);
  const auto ae = ae_forward(x, vars);
  std::vector<ad::Var> z{gcn_layer(toy.a_norm, x, vars.gcn_w[0], 0.2)};
  for (std::size_t i = 1; i < 3; ++i)
    z.push_back(gcn_layer(toy.a_norm, fuse_h(z[i - 1], ae.h[i - 1], m), vars.gcn_w[i], 0.2));
  std::vector<ad::Var> feats = z;
  feats.push_back(ae.h[2]);
  auto u = attention_s(feats, *vars.attn_s_w, 0.2);
  auto z_pred = predict_layer(toy.a_norm, fuse_s(feats, u), *vars.pred_w);
  CHECK(z_pred.value() == g.z_pred.value());
}

TEST_CASE("forward rejects mismatched features") {
  auto toy = testing::toy_instance();
  ad::Tape tape;
  const auto vars = bind_parameters(tape, toy.params);
  CHECK_THROWS_AS(forward(vars, tape.constant(DenseMatrix(6, 3)), toy.a_norm, toy.cfg),
                  DimensionError);
}
