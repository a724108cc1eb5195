#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

#include <json.hpp>

#include "agcn/config_io.hpp"
#include "agcn/dataset.hpp"
#include "agcn/error.hpp"
#include "agcn/metrics.hpp"
#include "test_support.hpp"

using namespace agcn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("agcn_io_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path file(const std::string& name, const std::string& content) const {
    std::ofstream(path / name) << content;
    return path / name;
  }
};

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

// Connected components by flood fill over the dense adjacency.
std::vector<int> components(const SparseAdjacency& a) {
  std::vector<int> comp(a.n(), -1);
  int next = 0;
  for (std::size_t s = 0; s < a.n(); ++s) {
    if (comp[s] >= 0) continue;
    std::vector<std::size_t> stack{s};
    comp[s] = next;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t k = a.row_offsets()[u]; k < a.row_offsets()[u + 1]; ++k) {
        const std::size_t v = a.col_indices()[k];
        if (comp[v] < 0) {
          comp[v] = next;
          stack.push_back(v);
        }
      }
    }
    ++next;
  }
  return comp;
}

}  // namespace

TEST_CASE("matrix text format") {
  std::istringstream in("2 3\n1 2 3\n-4.5 1e-3 0\n");
  const DenseMatrix m = read_matrix(in);
  CHECK(m == DenseMatrix{{1, 2, 3}, {-4.5, 1e-3, 0}});

  std::istringstream short_row("2 2\n1 2\n3\n");
  CHECK(error_of([&] { read_matrix(short_row, "x.txt"); }).find("x.txt:3") == 0);
  std::istringstream bad_token("1 2\n1 abc\n");
  CHECK(error_of([&] { read_matrix(bad_token, "x.txt"); }).find("x.txt:2") == 0);
  std::istringstream missing("2 1\n1\n");
  CHECK_THROWS_AS(read_matrix(missing), ValidationError);
  std::istringstream extra("1 1\n1\n2\n");
  CHECK_THROWS_AS(read_matrix(extra), ValidationError);
  std::istringstream nan("1 1\nnan\n");
  CHECK_THROWS_AS(read_matrix(nan), ValidationError);
}

TEST_CASE("label and edge formats") {
  std::istringstream labels("0\n2\n\n1\n");
  CHECK(read_labels(labels) == Labels{0, 2, 1});
  std::istringstream bad("0\n1.5\n");
  CHECK(error_of([&] { read_labels(bad, "l"); }).find("l:2") == 0);
  std::istringstream edges("0 1\n\n2 1\n");
  CHECK(read_edges(edges) == std::vector<Edge>{{0, 1}, {2, 1}});
  std::istringstream bad_edge("0 1 2\n");
  CHECK(error_of([&] { read_edges(bad_edge, "e"); }).find("e:1") == 0);
  std::istringstream negative("0 -1\n");
  CHECK_THROWS_AS(read_edges(negative), ValidationError);
}

TEST_CASE("load_dataset") {
  TempDir tmp;
  const auto feat = tmp.file("a.features", "3 2\n1 2\n3 4\n5 6\n");
  const Dataset ds = load_dataset(feat);
  CHECK(ds.features.rows() == 3);
  CHECK_FALSE(ds.adjacency.has_value());
  CHECK_FALSE(ds.labels.has_value());

  const auto feat4 = tmp.file("b.features", "4 1\n1\n2\n3\n4\n");
  const auto lab3 = tmp.file("b.labels", "0\n1\n1\n");
  const std::string msg = error_of([&] { load_dataset(feat4, std::nullopt, lab3); });
  CHECK(msg.find('3') != std::string::npos);
  CHECK(msg.find('4') != std::string::npos);
  CHECK_THROWS_AS(load_dataset(feat4, std::nullopt, lab3), ValidationError);

  const auto far_edge = tmp.file("c.graph", "0 7\n");
  CHECK_THROWS_AS(load_dataset(feat4, far_edge), ValidationError);
  CHECK_THROWS_AS(load_dataset(tmp.path / "missing.features"), ValidationError);

  const auto graph = tmp.file("d.graph", "0 1\n1 2\n3 2\n");
  const Dataset full = load_dataset(feat4, graph, tmp.file("d.labels", "0\n0\n1\n1\n"));
  CHECK(full.adjacency->nnz() == 6);
  CHECK(full.labels->size() == 4);
}

TEST_CASE("synthetic data: round trip is bit-identical") {
  TempDir tmp;
  SyntheticSpec spec;
  spec.blocks = 3;
  spec.per_block = 10;
  spec.feat_dim = 4;
  spec.p_in = 0.6;
  spec.seed = 17;
  Dataset ds = generate_synthetic(spec);
  ds.name = "sbm";
  // Values with long binary expansions exercise the decimal encoding.
  ds.features(0, 0) = 0.1 + 0.2;
  ds.features(1, 1) = 1.0 / 3.0;
  const auto paths = save_dataset(ds, tmp.path, "sbm");
  const Dataset back = load_dataset(paths.features, paths.graph, paths.labels);
  CHECK(back.features == ds.features);
  CHECK(back.adjacency->col_indices() == ds.adjacency->col_indices());
  CHECK(back.labels == ds.labels);
  CHECK(fingerprint(back) == fingerprint(ds));
  CHECK(fingerprint(back).size() == 16);
}

TEST_CASE("synthetic data: structure and determinism") {
  SyntheticSpec cliques;
  cliques.blocks = 3;
  cliques.per_block = 5;
  cliques.p_in = 1.0;
  cliques.p_out = 0.0;
  const Dataset ds = generate_synthetic(cliques);
  CHECK(ds.adjacency->nnz() == 3 * 5 * 4);
  const auto comp = components(*ds.adjacency);
  CHECK(accuracy(*ds.labels, comp) == 1.0);
  CHECK(ari(*ds.labels, comp) == 1.0);

  const Dataset again = generate_synthetic(cliques);
  CHECK(again.features == ds.features);
  SyntheticSpec other = cliques;
  other.seed = 1;
  CHECK(generate_synthetic(other).features != ds.features);

  SyntheticSpec bad = cliques;
  bad.p_in = 0.1;
  bad.p_out = 0.2;
  CHECK_THROWS_AS(generate_synthetic(bad), ArgumentError);
  bad.p_in = 1.5;
  CHECK_THROWS_AS(generate_synthetic(bad), ArgumentError);
}

TEST_CASE("synthetic data: block means are sep standard deviations apart") {
  SyntheticSpec spec;
  spec.blocks = 2;
  spec.per_block = 4000;
  spec.feat_dim = 2;
  spec.sep = 10.0;
  spec.p_in = 0.0;
  spec.p_out = 0.0;
  const Dataset ds = generate_synthetic(spec);
  double mean[2][2] = {};
  for (std::size_t i = 0; i < ds.features.rows(); ++i)
    for (std::size_t c = 0; c < 2; ++c) mean[(*ds.labels)[i]][c] += ds.features(i, c) / 4000;
  const double dist = std::hypot(mean[0][0] - mean[1][0], mean[0][1] - mean[1][1]);
  CHECK(dist == doctest::Approx(10.0).epsilon(0.02));
}

TEST_CASE("config json: merge, unknown keys, manifests") {
  AgcnConfig model;
  merge_model_config(nlohmann::json{{"k", 4}, {"lambda1", 2.5}, {"layer_dims", {0, 8, 4}}}, model);
  CHECK(model.k == 4);
  CHECK(model.lambda1 == 2.5);
  CHECK(model.layer_dims == std::vector<std::size_t>{0, 8, 4});
  CHECK_THROWS_AS(merge_model_config(nlohmann::json{{"lamda1", 1}}, model), ValidationError);
  CHECK_THROWS_AS(merge_model_config(nlohmann::json{{"k", "two"}}, model), ValidationError);

  TrainConfig train;
  merge_train_config(nlohmann::json{{"max_iters", 7}, {"joint_lr", 0.5}}, train);
  CHECK(train.max_iters == 7);
  CHECK(train.joint_lr == 0.5);

  nlohmann::json round;
  to_json(round, model);
  AgcnConfig copy;
  merge_model_config(round, copy);
  nlohmann::json twice;
  to_json(twice, copy);
  CHECK(round == twice);

  TempDir tmp;
  const auto flat = tmp.file("flat.json", R"({"k": 3, "max_iters": 5, "seeds": [4, 5]})");
  const auto cfg = read_run_config(flat);
  AgcnConfig m2;
  TrainConfig t2;
  merge_model_config(cfg.model, m2);
  merge_train_config(cfg.train, t2);
  CHECK(m2.k == 3);
  CHECK(t2.max_iters == 5);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{4, 5});
  const auto manifest = tmp.file(
      "manifest.json",
      R"({"model_config": {"k": 6}, "train_config": {"seed": 2}, "seeds": [9], "software_version": "x"})");
  const auto cfg2 = read_run_config(manifest);
  CHECK(cfg2.model.at("k") == 6);
  CHECK(cfg2.seeds == std::vector<std::uint64_t>{9});
  CHECK_THROWS_AS(read_run_config(tmp.file("bad.json", "{not json")), ValidationError);
}

TEST_CASE("report json layout") {
  const auto rep = aggregate({MetricValues{0.8, 0.5, 0.4, 0.7}, MetricValues{0.82, 0.5, 0.4, 0.7}});
  const nlohmann::json j = to_json(rep);
  CHECK(j.at("acc").at("mean") == doctest::Approx(81.0));
  CHECK(j.at("acc").at("std") == doctest::Approx(1.0));
  CHECK(j.at("acc").at("runs").size() == 2);
  CHECK(j.at("acc").at("formatted") == "81.00±1.00");
  for (const char* key : {"nmi", "ari", "f1"}) CHECK(j.contains(key));
}

TEST_CASE("checkpoint round trip") {
  TempDir tmp;
  AgcnConfig cfg;
  cfg.layer_dims = {5, 4, 3};
  cfg.k = 3;
  cfg.use_agcns_attention = false;
  AgcnParams params = AgcnParams::initialize(cfg, 12);
  std::mt19937_64 rng(12);
  params.centroids = testing::random_matrix(3, 3, rng);
  save_checkpoint(tmp.path / "ckpt.json", params, cfg);
  AgcnConfig loaded_cfg;
  AgcnParams loaded = load_checkpoint(tmp.path / "ckpt.json", &loaded_cfg);
  CHECK_FALSE(loaded_cfg.use_agcns_attention);
  CHECK(loaded_cfg.layer_dims == cfg.layer_dims);
  auto a = params.named();
  auto b = loaded.named();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(*a[i].value == *b[i].value);
  }
  CHECK_THROWS_AS(load_checkpoint(tmp.file("x.json", R"({"a": 1})")), ValidationError);
}
