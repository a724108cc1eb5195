#include "agcn/config_io.hpp"

#include <algorithm>
#include <fstream>

#include "agcn/error.hpp"

namespace agcn {

using nlohmann::json;

void to_json(json& j, const AgcnConfig& cfg) {
  j = json{{"layer_dims", cfg.layer_dims},
           {"k", cfg.k},
           {"alpha", cfg.alpha},
           {"lambda1", cfg.lambda1},
           {"lambda2", cfg.lambda2},
           {"use_agcnh", cfg.use_agcnh},
           {"use_agcns_concat", cfg.use_agcns_concat},
           {"use_agcns_attention", cfg.use_agcns_attention},
           {"leaky_slope", cfg.leaky_slope}};
}

void to_json(json& j, const TrainConfig& cfg) {
  j = json{{"pretrain_epochs", cfg.pretrain_epochs},
           {"pretrain_lr", cfg.pretrain_lr},
           {"pretrain_batch", cfg.pretrain_batch},
           {"joint_lr", cfg.joint_lr},
           {"max_iters", cfg.max_iters},
           {"seed", cfg.seed},
           {"eval_every", cfg.eval_every},
           {"kmeans_max_iters", cfg.kmeans_max_iters},
           {"check_invariants", cfg.check_invariants}};
}

namespace {

template <typename T>
void take(const json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config field '") + key + "': " + e.what());
  }
}

}  // namespace

void merge_model_config(const json& j, AgcnConfig& cfg) {
  if (!j.is_object()) throw ValidationError("model config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    static const char* known[] = {"layer_dims",       "k",         "alpha",
                                  "lambda1",          "lambda2",   "use_agcnh",
                                  "use_agcns_concat", "use_agcns_attention", "leaky_slope"};
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw ValidationError("unknown model config field '" + key + "'");
    }
  }
  take(j, "layer_dims", cfg.layer_dims);
  take(j, "k", cfg.k);
  take(j, "alpha", cfg.alpha);
  take(j, "lambda1", cfg.lambda1);
  take(j, "lambda2", cfg.lambda2);
  take(j, "use_agcnh", cfg.use_agcnh);
  take(j, "use_agcns_concat", cfg.use_agcns_concat);
  take(j, "use_agcns_attention", cfg.use_agcns_attention);
  take(j, "leaky_slope", cfg.leaky_slope);
}

void merge_train_config(const json& j, TrainConfig& cfg) {
  if (!j.is_object()) throw ValidationError("train config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    static const char* known[] = {"pretrain_epochs", "pretrain_lr", "pretrain_batch",
                                  "joint_lr",        "max_iters",   "seed",
                                  "eval_every",      "kmeans_max_iters", "check_invariants"};
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw ValidationError("unknown train config field '" + key + "'");
    }
  }
  take(j, "pretrain_epochs", cfg.pretrain_epochs);
  take(j, "pretrain_lr", cfg.pretrain_lr);
  take(j, "pretrain_batch", cfg.pretrain_batch);
  take(j, "joint_lr", cfg.joint_lr);
  take(j, "max_iters", cfg.max_iters);
  take(j, "seed", cfg.seed);
  take(j, "eval_every", cfg.eval_every);
  take(j, "kmeans_max_iters", cfg.kmeans_max_iters);
  take(j, "check_invariants", cfg.check_invariants);
}

RunConfigFile read_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ValidationError(path.string() + ": expected a JSON object");
  RunConfigFile out;
  out.model = json::object();
  out.train = json::object();
  if (j.contains("model_config") || j.contains("train_config")) {
    if (j.contains("model_config")) out.model = j["model_config"];
    if (j.contains("train_config")) out.train = j["train_config"];
  } else {
    const AgcnConfig model_defaults;
    json model_keys;
    to_json(model_keys, model_defaults);
    for (const auto& [key, value] : j.items()) {
      if (key == "seeds") continue;
      if (model_keys.contains(key)) {
        out.model[key] = value;
      } else {
        out.train[key] = value;
      }
    }
  }
  take(j, "seeds", out.seeds);
  // Validate eagerly so errors name the file.
  AgcnConfig m;
  TrainConfig t;
  try {
    merge_model_config(out.model, m);
    merge_train_config(out.train, t);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return out;
}

json to_json(const MetricSummary& s) {
  return json{{"mean", s.mean}, {"std", s.std}, {"runs", s.runs}, {"formatted", s.formatted()}};
}

json to_json(const ClusteringReport& r) {
  return json{{"acc", to_json(r.acc)},
              {"nmi", to_json(r.nmi)},
              {"ari", to_json(r.ari)},
              {"f1", to_json(r.f1)}};
}

json to_json(const MetricValues& m) {
  return json{{"acc", m.acc}, {"nmi", m.nmi}, {"ari", m.ari}, {"f1", m.f1}};
}

void save_checkpoint(const std::filesystem::path& path, AgcnParams& params,
                     const AgcnConfig& cfg) {
  json j;
  json model;
  to_json(model, cfg);
  j["model_config"] = model;
  json tensors = json::object();
  for (const auto& nm : params.named()) {
    tensors[nm.name] = json{{"rows", nm.value->rows()},
                            {"cols", nm.value->cols()},
                            {"data", nm.value->data()}};
  }
  j["params"] = tensors;
  write_json_file(path, j);
}

AgcnParams load_checkpoint(const std::filesystem::path& path, AgcnConfig* cfg_out) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  if (!j.contains("model_config") || !j.contains("params")) {
    throw ValidationError(path.string() + ": not a checkpoint");
  }
  AgcnConfig cfg;
  merge_model_config(j["model_config"], cfg);
  AgcnParams params = AgcnParams::zeros(cfg);
  const json& tensors = j["params"];
  if (tensors.contains("centroids")) {
    const json& c = tensors["centroids"];
    params.centroids = DenseMatrix(c.at("rows").get<std::size_t>(), c.at("cols").get<std::size_t>());
  }
  for (const auto& nm : params.named()) {
    if (!tensors.contains(nm.name)) {
      throw ValidationError(path.string() + ": missing tensor " + nm.name);
    }
    const json& t = tensors[nm.name];
    DenseMatrix m(t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>(),
                  t.at("data").get<std::vector<double>>());
    if (!m.same_shape(*nm.value)) {
      throw ValidationError(path.string() + ": tensor " + nm.name + " has shape " +
                            m.shape_string() + ", expected " + nm.value->shape_string());
    }
    *nm.value = std::move(m);
  }
  if (cfg_out) *cfg_out = cfg;
  return params;
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace agcn
