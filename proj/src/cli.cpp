#include "agcn/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "agcn/config_io.hpp"
#include "agcn/dataset.hpp"
#include "agcn/error.hpp"
#include "agcn/knn_graph.hpp"
#include "agcn/metrics.hpp"
#include "agcn/model.hpp"
#include "agcn/trainer.hpp"

namespace agcn {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t thread_budget() {
  if (const char* env = std::getenv("AGCN_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void run_parallel(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& task) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  std::vector<std::exception_ptr> errors(count);
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard<std::mutex> lock(mu);
            if (next >= count) return;
            i = next++;
          }
          try {
            task(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  // Report the lowest-index failure so the outcome does not depend on timing.
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {

struct RunOptions {
  std::string features, graph, labels, config, out;
  std::size_t knn = 3;
  std::string metric = "euclidean";
  bool standardize = false;
  std::optional<std::size_t> k, pretrain_epochs, pretrain_batch, iters, eval_every;
  std::optional<std::string> dims, seeds;
  std::optional<double> alpha, lambda1, lambda2, pretrain_lr, lr;
  std::optional<std::uint64_t> seed;
  bool no_agcnh = false, no_concat = false, no_attention = false, check_invariants = false;
};

void add_run_options(CLI::App* app, RunOptions& o, bool need_graph) {
  app->add_option("--features", o.features, "Feature matrix file ('n d' header)")->required();
  app->add_option("--labels", o.labels, "Ground-truth labels, one integer per line");
  app->add_option("--config", o.config, "JSON config or run manifest; flags override it");
  app->add_option("--out", o.out, "Output directory");
  app->add_flag("--standardize", o.standardize, "Standardize each feature column");
  if (need_graph) {
    app->add_option("--graph", o.graph, "Edge list 'u v' (built as a k'-NN graph if absent)");
    app->add_option("--knn", o.knn, "k' for the k-NN graph when no --graph is given")
        ->check(CLI::PositiveNumber);
    app->add_option("--metric", o.metric, "k-NN distance")
        ->check(CLI::IsMember({"euclidean", "cosine"}));
  }
  app->add_option("--k", o.k, "Number of clusters (default: distinct labels)");
  app->add_option("--dims", o.dims, "Hidden layer sizes, e.g. 500,500,2000,10");
  app->add_option("--alpha", o.alpha, "Student-t degrees of freedom");
  app->add_option("--lambda1", o.lambda1, "Weight of KL(P||Z)");
  app->add_option("--lambda2", o.lambda2, "Weight of KL(P||Q)");
  app->add_option("--pretrain-epochs", o.pretrain_epochs);
  app->add_option("--pretrain-lr", o.pretrain_lr);
  app->add_option("--pretrain-batch", o.pretrain_batch);
  app->add_option("--lr", o.lr, "Joint training learning rate");
  app->add_option("--iters", o.iters, "Joint training iterations");
  app->add_option("--eval-every", o.eval_every);
  auto* seed = app->add_option("--seed", o.seed, "Single run seed");
  app->add_option("--seeds", o.seeds, "Comma-separated seeds")->excludes(seed);
  app->add_flag("--no-agcnh", o.no_agcnh, "Disable heterogeneity-wise attention fusion");
  app->add_flag("--no-scale-concat", o.no_concat, "Disable the multi-scale concatenation");
  app->add_flag("--no-scale-attention", o.no_attention, "Use unit multi-scale weights");
  app->add_flag("--check-invariants", o.check_invariants,
                "Abort if any iteration breaks a distribution invariant");
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<T>(v));
    } catch (const std::exception&) {
      throw ArgumentError(std::string("invalid ") + what + " '" + item + "'");
    }
  }
  if (out.empty()) throw ArgumentError(std::string("empty ") + what + " list");
  return out;
}

struct PreparedRun {
  Dataset dataset;
  SparseAdjacency graph;
  std::string graph_source;
  AgcnConfig model;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0};
};

PreparedRun prepare(const RunOptions& o, bool need_graph) {
  PreparedRun run;
  std::optional<fs::path> labels;
  if (!o.labels.empty()) labels = o.labels;
  std::optional<fs::path> graph;
  if (need_graph && !o.graph.empty()) graph = o.graph;
  run.dataset = load_dataset(o.features, graph, labels);
  if (o.standardize) run.dataset.features = standardize_columns(run.dataset.features);

  bool k_from_config = false;
  if (!o.config.empty()) {
    const RunConfigFile file = read_run_config(o.config);
    merge_model_config(file.model, run.model);
    merge_train_config(file.train, run.train);
    k_from_config = file.model.contains("k");
    if (!file.seeds.empty()) run.seeds = file.seeds;
  }
  if (o.dims) {
    const auto hidden = parse_list<std::size_t>(*o.dims, "layer size");
    run.model.layer_dims.assign(1, run.dataset.features.cols());
    run.model.layer_dims.insert(run.model.layer_dims.end(), hidden.begin(), hidden.end());
  }
  if (run.model.layer_dims.empty()) throw ArgumentError("layer_dims must not be empty");
  if (run.model.layer_dims.front() == 0) {
    run.model.layer_dims.front() = run.dataset.features.cols();
  } else if (run.model.layer_dims.front() != run.dataset.features.cols()) {
    throw ValidationError("config layer_dims[0]=" + std::to_string(run.model.layer_dims.front()) +
                          " but features have " +
                          std::to_string(run.dataset.features.cols()) + " columns");
  }
  if (o.k) {
    run.model.k = *o.k;
  } else if (!k_from_config) {
    if (!run.dataset.labels) throw ArgumentError("--k is required when no labels are given");
    run.model.k = std::set<int>(run.dataset.labels->begin(), run.dataset.labels->end()).size();
  }
  if (o.alpha) run.model.alpha = *o.alpha;
  if (o.lambda1) run.model.lambda1 = *o.lambda1;
  if (o.lambda2) run.model.lambda2 = *o.lambda2;
  if (o.no_agcnh) run.model.use_agcnh = false;
  if (o.no_concat) run.model.use_agcns_concat = false;
  if (o.no_attention) run.model.use_agcns_attention = false;
  if (o.pretrain_epochs) run.train.pretrain_epochs = *o.pretrain_epochs;
  if (o.pretrain_lr) run.train.pretrain_lr = *o.pretrain_lr;
  if (o.pretrain_batch) run.train.pretrain_batch = *o.pretrain_batch;
  if (o.lr) run.train.joint_lr = *o.lr;
  if (o.iters) run.train.max_iters = *o.iters;
  if (o.eval_every) run.train.eval_every = *o.eval_every;
  if (o.check_invariants) run.train.check_invariants = true;
  if (o.seed) run.seeds = {*o.seed};
  if (o.seeds) run.seeds = parse_list<std::uint64_t>(*o.seeds, "seed");
  run.model.validate();
  run.train.validate();

  if (need_graph) {
    if (run.dataset.adjacency) {
      run.graph = *run.dataset.adjacency;
      run.graph_source = "file";
    } else {
      const KnnConfig knn{o.knn, parse_distance_metric(o.metric)};
      run.graph = build_knn_graph(run.dataset.features, knn);
      run.graph_source = "knn:k'=" + std::to_string(o.knn) + ":" + o.metric;
    }
  }
  return run;
}

json manifest_json(const PreparedRun& run, const RunOptions& o) {
  json model, train;
  to_json(model, run.model);
  to_json(train, run.train);
  return json{{"software_version", kSoftwareVersion},
              {"model_config", model},
              {"train_config", train},
              {"seeds", run.seeds},
              {"dataset",
               {{"name", run.dataset.name},
                {"fingerprint", fingerprint(run.dataset)},
                {"n", run.dataset.features.rows()},
                {"d", run.dataset.features.cols()},
                {"standardized", o.standardize}}},
              {"graph_source", run.graph_source},
              {"graph_edges", run.graph.nnz() / 2}};
}

json record_json(const IterationRecord& r) {
  json j{{"iter", r.iter},
         {"loss_total", r.loss_total},
         {"loss_rec", r.loss_rec},
         {"loss_kl", r.loss_kl}};
  if (r.metrics) j["metrics"] = to_json(*r.metrics);
  return j;
}

fs::path output_dir(const RunOptions& o) {
  fs::path dir = o.out.empty() ? fs::path("agcn_out") : fs::path(o.out);
  fs::create_directories(dir);
  return dir;
}

// Left-justifies to `width` display columns; "±" is two bytes but one column.
std::string pad(const std::string& text, std::size_t width) {
  std::size_t columns = 0;
  for (unsigned char c : text) columns += (c & 0xC0) != 0x80;
  return text + std::string(width > columns ? width - columns : 1, ' ');
}

std::string seed_tag(std::uint64_t seed) { return "seed" + std::to_string(seed); }

std::vector<TrainResult> train_all(const PreparedRun& run, const AgcnConfig& model,
                                   const AgcnParams* pretrained) {
  std::vector<TrainResult> results(run.seeds.size());
  const Labels* labels = run.dataset.labels ? &*run.dataset.labels : nullptr;
  run_parallel(run.seeds.size(), thread_budget(), [&](std::size_t i) {
    TrainConfig cfg = run.train;
    cfg.seed = run.seeds[i];
    results[i] = train(run.dataset.features, run.graph, cfg, model, labels, pretrained);
  });
  return results;
}

int cmd_train(const RunOptions& o, const std::string& pretrained_path) {
  PreparedRun run = prepare(o, true);
  std::optional<AgcnParams> pretrained;
  if (!pretrained_path.empty()) {
    AgcnConfig ckpt_cfg;
    pretrained = load_checkpoint(pretrained_path, &ckpt_cfg);
    pretrained->centroids = DenseMatrix();
    AgcnParams expected = AgcnParams::zeros(run.model);
    auto got = pretrained->named();
    auto want = expected.named();
    bool ok = got.size() == want.size();
    for (std::size_t i = 0; ok && i < got.size(); ++i)
      ok = got[i].name == want[i].name && got[i].value->same_shape(*want[i].value);
    if (!ok) {
      throw ValidationError("checkpoint " + pretrained_path +
                            " does not match the configured network shape");
    }
  }
  const auto results = train_all(run, run.model, pretrained ? &*pretrained : nullptr);

  const fs::path dir = output_dir(o);
  json manifest = manifest_json(run, o);
  if (pretrained) manifest["pretrained_checkpoint"] = pretrained_path;
  write_json_file(dir / "manifest.json", manifest);

  json report;
  json per_seed = json::array();
  std::vector<MetricValues> finals;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const std::string tag = seed_tag(run.seeds[i]);
    {
      std::ofstream trace(dir / ("trace_" + tag + ".csv"));
      r.trace.write_csv(trace);
    }
    write_labels_file(dir / ("labels_" + tag + ".txt"), r.labels);
    write_matrix_file(dir / ("embedding_" + tag + "_h.txt"), r.embedding);
    write_matrix_file(dir / ("embedding_" + tag + "_z.txt"), r.prediction);
    json entry{{"seed", run.seeds[i]}, {"final", record_json(r.trace.records.back())}};
    if (auto best = r.trace.best()) entry["best"] = record_json(*best);
    per_seed.push_back(entry);
    if (r.trace.records.back().metrics) finals.push_back(*r.trace.records.back().metrics);
  }
  if (!finals.empty()) report = to_json(aggregate(finals));
  report["per_seed"] = per_seed;
  report["meta"] = {{"reported_iteration", "final"},
                    {"metric_units", "percent"},
                    {"nmi_normalizer", kNmiNormalizer},
                    {"ari", "adjusted"},
                    {"dataset_fingerprint", fingerprint(run.dataset)}};
  write_json_file(dir / "report.json", report);

  if (!finals.empty()) {
    const ClusteringReport agg = aggregate(finals);
    std::cout << "ACC " << agg.acc.formatted() << "  NMI " << agg.nmi.formatted() << "  ARI "
              << agg.ari.formatted() << "  F1 " << agg.f1.formatted() << "  ("
              << results.size() << " run" << (results.size() == 1 ? "" : "s") << ")\n";
  } else {
    std::cout << "trained " << results.size() << " run(s); final loss "
              << results.front().trace.records.back().loss_total << "\n";
  }
  std::cout << "outputs written to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_pretrain(const RunOptions& o) {
  PreparedRun run = prepare(o, false);
  const fs::path dir = output_dir(o);
  TrainConfig cfg = run.train;
  cfg.seed = run.seeds.front();
  AgcnParams params = AgcnParams::initialize(run.model, derive_seed(cfg.seed, 1));
  const PretrainResult res = pretrain_ae(run.dataset.features, params, run.model, cfg);
  save_checkpoint(dir / "pretrained.json", params, run.model);
  std::ofstream losses(dir / "pretrain_loss.csv");
  losses << "epoch,loss_rec\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "0,%.17g\n", res.initial_loss);
  losses << buf;
  for (std::size_t e = 0; e < res.epoch_losses.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e + 1, res.epoch_losses[e]);
    losses << buf;
  }
  std::cout << "reconstruction loss " << res.initial_loss << " -> "
            << (res.epoch_losses.empty() ? res.initial_loss : res.epoch_losses.back()) << "\n"
            << "checkpoint written to " << (dir / "pretrained.json").string() << "\n";
  return kExitOk;
}

struct KnnOptions {
  std::string features, out, metric = "euclidean";
  std::size_t k_prime = 3;
  bool standardize = false, sweep = false;
};

int cmd_build_knn(const KnnOptions& o) {
  DenseMatrix x = read_matrix_file(o.features);
  if (o.standardize) x = standardize_columns(x);
  const DistanceMetric metric = parse_distance_metric(o.metric);
  if (o.sweep) {
    for (std::size_t kp : {1, 3, 5}) {
      const fs::path path = o.out + ".k" + std::to_string(kp);
      const SparseAdjacency g = build_knn_graph(x, {kp, metric});
      write_graph_file(path, g);
      std::cout << path.string() << ": " << g.nnz() / 2 << " edges\n";
    }
    return kExitOk;
  }
  const SparseAdjacency g = build_knn_graph(x, {o.k_prime, metric});
  write_graph_file(o.out, g);
  std::cout << o.out << ": " << g.nnz() / 2 << " edges\n";
  return kExitOk;
}

int cmd_eval(const std::string& truth, const std::string& pred) {
  const Labels y_true = read_labels_file(truth);
  const Labels y_pred = read_labels_file(pred);
  if (y_true.size() != y_pred.size()) {
    throw ValidationError("label files differ in length: " + std::to_string(y_true.size()) +
                          " vs " + std::to_string(y_pred.size()));
  }
  json j = to_json(evaluate(y_true, y_pred));
  j["nmi_normalizer"] = kNmiNormalizer;
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

struct SynthOptions {
  SyntheticSpec spec;
  std::string out = ".", name = "sbm";
};

int cmd_synth(const SynthOptions& o) {
  Dataset ds = generate_synthetic(o.spec);
  ds.name = o.name;
  const DatasetPaths paths = save_dataset(ds, o.out, o.name);
  std::cout << paths.features.string() << "\n"
            << paths.graph.string() << "\n"
            << paths.labels.string() << "\n";
  return kExitOk;
}

int cmd_ablate(const RunOptions& o, bool print_json) {
  PreparedRun run = prepare(o, true);
  if (!run.dataset.labels) throw ValidationError("ablate needs --labels to score runs");
  const auto settings = ablation_settings();
  const std::size_t runs = settings.size() * run.seeds.size();
  std::vector<MetricValues> finals(runs);
  run_parallel(runs, thread_budget(), [&](std::size_t idx) {
    AgcnConfig model = run.model;
    apply(settings[idx / run.seeds.size()], model);
    TrainConfig cfg = run.train;
    cfg.seed = run.seeds[idx % run.seeds.size()];
    const TrainResult r =
        train(run.dataset.features, run.graph, cfg, model, &*run.dataset.labels);
    finals[idx] = *r.trace.records.back().metrics;
  });

  json rows = json::array();
  std::ostringstream table;
  table << pad("configuration", 28) << pad("ACC", 15) << pad("NMI", 15) << pad("ARI", 15)
        << "F1\n";
  for (std::size_t s = 0; s < settings.size(); ++s) {
    const std::vector<MetricValues> slice(
        finals.begin() + static_cast<std::ptrdiff_t>(s * run.seeds.size()),
        finals.begin() + static_cast<std::ptrdiff_t>((s + 1) * run.seeds.size()));
    const ClusteringReport rep = aggregate(slice);
    json row = to_json(rep);
    row["configuration"] = settings[s].name;
    row["use_agcnh"] = settings[s].use_agcnh;
    row["use_agcns_concat"] = settings[s].use_agcns_concat;
    row["use_agcns_attention"] = settings[s].use_agcns_attention;
    rows.push_back(row);
    table << pad(settings[s].name, 28) << pad(rep.acc.formatted(), 15)
          << pad(rep.nmi.formatted(), 15) << pad(rep.ari.formatted(), 15) << rep.f1.formatted()
          << "\n";
  }
  json out{{"configurations", rows},
           {"seeds", run.seeds},
           {"meta",
            {{"reported_iteration", "final"},
             {"metric_units", "percent"},
             {"nmi_normalizer", kNmiNormalizer},
             {"dataset_fingerprint", fingerprint(run.dataset)}}}};
  if (!o.out.empty()) {
    const fs::path dir = output_dir(o);
    write_json_file(dir / "ablation.json", out);
    write_json_file(dir / "manifest.json", manifest_json(run, o));
  }
  if (print_json) {
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << table.str();
  }
  return kExitOk;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Attention-driven graph clustering"};
  app.require_subcommand(1);

  RunOptions train_opts;
  std::string pretrained;
  auto* train_cmd = app.add_subcommand("train", "Pretrain, initialize centroids and train");
  add_run_options(train_cmd, train_opts, true);
  train_cmd->add_option("--pretrained", pretrained, "Checkpoint written by 'pretrain'");

  RunOptions pretrain_opts;
  auto* pretrain_cmd = app.add_subcommand("pretrain", "Pretrain the auto-encoder only");
  add_run_options(pretrain_cmd, pretrain_opts, false);

  KnnOptions knn_opts;
  auto* knn_cmd = app.add_subcommand("build-knn", "Build a k'-NN graph from features");
  knn_cmd->add_option("--features", knn_opts.features)->required();
  knn_cmd->add_option("--out", knn_opts.out, "Edge list output (prefix with --sweep)")
      ->required();
  knn_cmd->add_option("--k-prime", knn_opts.k_prime)->check(CLI::PositiveNumber);
  knn_cmd->add_option("--metric", knn_opts.metric)->check(CLI::IsMember({"euclidean", "cosine"}));
  knn_cmd->add_flag("--standardize", knn_opts.standardize);
  knn_cmd->add_flag("--sweep", knn_opts.sweep, "Write graphs for k' in {1,3,5}");

  std::string truth, pred;
  auto* eval_cmd = app.add_subcommand("eval", "Score predicted labels against ground truth");
  eval_cmd->add_option("--true", truth)->required();
  eval_cmd->add_option("--pred", pred)->required();

  SynthOptions synth_opts;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a stochastic block model dataset");
  synth_cmd->add_option("--blocks", synth_opts.spec.blocks);
  synth_cmd->add_option("--per-block", synth_opts.spec.per_block);
  synth_cmd->add_option("--p-in", synth_opts.spec.p_in);
  synth_cmd->add_option("--p-out", synth_opts.spec.p_out);
  synth_cmd->add_option("--feat-dim", synth_opts.spec.feat_dim);
  synth_cmd->add_option("--sep", synth_opts.spec.sep);
  synth_cmd->add_option("--seed", synth_opts.spec.seed);
  synth_cmd->add_option("--out", synth_opts.out, "Output directory");
  synth_cmd->add_option("--name", synth_opts.name, "File stem");

  RunOptions ablate_opts;
  bool ablate_json = false;
  auto* ablate_cmd = app.add_subcommand("ablate", "Compare the four fusion configurations");
  add_run_options(ablate_cmd, ablate_opts, true);
  ablate_cmd->add_flag("--json", ablate_json, "Print JSON instead of a table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_opts, pretrained);
    if (*pretrain_cmd) return cmd_pretrain(pretrain_opts);
    if (*knn_cmd) return cmd_build_knn(knn_opts);
    if (*eval_cmd) return cmd_eval(truth, pred);
    if (*synth_cmd) return cmd_synth(synth_opts);
    if (*ablate_cmd) return cmd_ablate(ablate_opts, ablate_json);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ArgumentError& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitUsage;
}

int cli_main(const std::vector<std::string>& args) {
  std::vector<std::string> storage = args;
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  argv.push_back(nullptr);
  return cli_main(static_cast<int>(storage.size()), argv.data());
}

}  // namespace agcn
