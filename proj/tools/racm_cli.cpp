// Command-line surface for the retrieval-augmented classification pipeline:
// synthetic data generation, index building, k-NN precompute, training,
// evaluation, memory growth, gradient checking, and attention-trace dumps.
//
// Every subcommand writes a config echo (all resolved flag values) next to
// its outputs, and identical flags + seeds reproduce outputs byte for byte.
// Exit codes: 0 success, 1 check failure, 2 usage/validation error,
// 3 I/O or format error.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "racm/datagen.hpp"
#include "racm/exact_index.hpp"
#include "racm/ivf_index.hpp"
#include "racm/knn_cache.hpp"
#include "racm/model.hpp"
#include "racm/nn/grad_check.hpp"
#include "racm/parallel.hpp"
#include "racm/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw racm::io_error(racm::io_errc::corrupt, "cannot write " + path);
  out << j.dump(2) << "\n";
}

// Echo of resolved settings, written alongside the outputs: <dir>/config.json
// for directory outputs, <file>.config.json otherwise.
void write_config_echo(const std::string& out_path, bool out_is_dir,
                       const json& config) {
  const std::string path =
      out_is_dir ? out_path + "/config.json" : out_path + ".config.json";
  write_json_file(path, config);
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw racm::io_error(racm::io_errc::corrupt, "cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw racm::io_error(racm::io_errc::corrupt,
                         path + ": invalid JSON (" + e.what() + ")");
  }
  return j;
}

struct GenDataArgs {
  racm::LongTailSpec longtail;
  racm::MemorySpec memory;
  std::string value_mode = "text_proxy";
  std::string out;
  bool mem_seed_set = false;
};

int cmd_gen_data(GenDataArgs& a) {
  a.memory.value_mode = racm::value_mode_from_string(a.value_mode);
  if (!a.mem_seed_set) a.memory.seed = a.longtail.seed + 1;
  fs::create_directories(a.out);

  const auto data = racm::gen_longtail(a.longtail);
  const auto store = racm::gen_memory(data.prototypes, a.memory);

  json echo;
  echo["longtail"] = a.longtail.to_json();
  echo["memory"] = a.memory.to_json();
  racm::write_dataset_bundle(a.out, data.train, data.eval, store, echo);

  json config;
  config["command"] = "gen-data";
  config["longtail"] = a.longtail.to_json();
  config["memory"] = a.memory.to_json();
  config["out"] = a.out;
  write_config_echo(a.out, true, config);

  std::cout << "wrote " << a.out << "/{train,eval,memory}.racm, sidecar.json ("
            << data.train.size() << " train, " << data.eval.size() << " eval, "
            << store.count() << " memory rows)\n";
  return kExitOk;
}

struct BuildIndexArgs {
  std::string store;
  std::string lists = "auto";
  std::uint64_t seed = 1;
  int iters = racm::IvfIndex::kDefaultKmeansIters;
  std::string out;
};

int cmd_build_index(BuildIndexArgs& a) {
  const auto store = racm::read_store(a.store);
  std::uint32_t n_lists;
  if (a.lists == "auto") {
    n_lists = racm::default_n_lists(store.count());
  } else {
    const long parsed = std::stol(a.lists);
    if (parsed <= 0) throw std::invalid_argument("--lists must be positive");
    n_lists = static_cast<std::uint32_t>(parsed);
  }
  const auto index = racm::IvfIndex::build(store, n_lists, a.seed, a.iters);
  racm::save_ivf(index, a.out);

  json config;
  config["command"] = "build-index";
  config["store"] = a.store;
  config["n_lists"] = n_lists;
  config["seed"] = a.seed;
  config["max_kmeans_iters"] = a.iters;
  config["out"] = a.out;
  write_config_echo(a.out, false, config);

  std::cout << "built ivf index with " << n_lists << " lists over "
            << store.count() << " rows -> " << a.out << "\n";
  return kExitOk;
}

struct PrecomputeArgs {
  std::string store;
  std::string queries;
  std::uint32_t k = 100;
  std::string index;  // optional ivf file
  std::uint32_t probe = 0;
  bool exclude_self = false;
  std::string out;
};

int cmd_precompute_knn(PrecomputeArgs& a) {
  const auto store = racm::read_store(a.store);
  const auto query_store = racm::read_store(a.queries);
  if (query_store.key_dim != store.key_dim)
    throw std::invalid_argument("query dimension does not match store");

  racm::KnnCache cache;
  if (a.index.empty()) {
    const racm::ExactIndex index(store);
    cache = racm::precompute_knn(index, query_store.keys, a.k, a.exclude_self);
  } else {
    const auto ivf = racm::load_ivf(a.index, store);
    cache = racm::precompute_knn(ivf, query_store.keys, a.k, a.probe,
                                 a.exclude_self);
  }
  racm::write_cache(cache, a.out);

  json config;
  config["command"] = "precompute-knn";
  config["store"] = a.store;
  config["queries"] = a.queries;
  config["k"] = a.k;
  config["index"] = a.index.empty() ? "exact" : a.index;
  config["probe"] = a.probe;
  config["exclude_self"] = a.exclude_self;
  config["out"] = a.out;
  write_config_echo(a.out, false, config);

  std::cout << "cached top-" << a.k << " neighbors for " << cache.rows.size()
            << " queries -> " << a.out << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data;
  std::string store;
  std::string cache;
  std::string mode = "mam";
  std::uint32_t layers = 8;
  racm::TrainHyper hyper;
  double tau = -1.0;  // <0 -> auto: 1.0 for imbalanced counts, 0 otherwise
  std::string cache_index;  // ivf file used at precompute time, if any
  std::uint32_t cache_probe = 0;
  std::string out;
};

json hyper_to_json(const racm::TrainHyper& h, const std::string& mode,
                   std::uint32_t layers) {
  json j;
  j["mode"] = mode;
  j["layers"] = layers;
  j["epochs"] = h.epochs;
  j["batch"] = h.batch;
  j["lr"] = h.lr;
  j["weight_decay"] = h.weight_decay;
  j["warmup_epochs"] = h.warmup_epochs;
  j["k"] = h.k;
  j["tau"] = h.tau;
  j["label_smoothing"] = h.label_smoothing;
  j["seed"] = h.seed;
  j["exclude_self"] = h.cache_excludes_self;
  j["many_min"] = h.thresholds.many_min;
  j["low_max"] = h.thresholds.low_max;
  return j;
}

int cmd_train(TrainArgs& a) {
  const auto mode = racm::head_mode_from_string(a.mode);
  const auto train_ds = racm::load_dataset(a.data, "train");
  const auto eval_ds = racm::load_dataset(a.data, "eval");
  if (a.tau >= 0.0) {
    a.hyper.tau = a.tau;
  } else {
    // Logit adjustment on by default exactly when the counts are skewed.
    const auto minmax = std::minmax_element(train_ds.class_counts.begin(),
                                            train_ds.class_counts.end());
    a.hyper.tau = (*minmax.first == *minmax.second) ? 0.0 : 1.0;
  }
  racm::MemoryStore store;
  racm::KnnCache cache;
  const racm::KnnCache* cache_ptr = nullptr;
  if (racm::uses_retrieval(mode)) {
    if (a.store.empty() || a.cache.empty())
      throw std::invalid_argument(
          "retrieval modes need --store and --cache");
    store = racm::read_store(a.store);
    cache = racm::read_cache(a.cache);
    cache_ptr = &cache;
    if (!a.cache_index.empty()) {
      const auto ivf = racm::load_ivf(a.cache_index, store);
      a.hyper.cache_index_desc = racm::ivf_cache_descriptor(ivf, a.cache_probe);
    }
  }

  racm::ModelConfig cfg;
  cfg.mode = mode;
  cfg.dim = train_ds.dim;
  cfg.num_classes = train_ds.num_classes;
  cfg.value_dim = store.value_dim;
  cfg.num_layers = a.layers;

  const auto result =
      racm::train(cfg, train_ds, store, cache_ptr, a.hyper, &eval_ds);

  fs::create_directories(a.out);
  racm::nn::save_checkpoint(result.model.params, a.out + "/model.racp");
  {
    std::ofstream hist(a.out + "/history.jsonl", std::ios::trunc);
    for (const auto& rec : result.history)
      hist << racm::history_line(rec).dump() << "\n";
  }

  json config;
  config["command"] = "train";
  config["data"] = a.data;
  config["store"] = a.store;
  config["cache"] = a.cache;
  config["cache_index"] = a.cache_index.empty() ? "exact" : a.cache_index;
  config["model"] = {{"dim", cfg.dim},
                     {"classes", cfg.num_classes},
                     {"value_dim", cfg.value_dim}};
  config["hyper"] = hyper_to_json(a.hyper, a.mode, a.layers);
  config["out"] = a.out;
  write_config_echo(a.out, true, config);

  const auto& last = result.history.back();
  std::cout << "trained " << a.mode << " for " << a.hyper.epochs
            << " epochs; final loss " << last.loss << ", eval overall "
            << last.eval.overall << " -> " << a.out << "\n";
  return kExitOk;
}

// Rebuilds the model skeleton from a run's config echo, then loads weights.
racm::Model<float> load_run_model(const std::string& run_dir,
                                  std::uint32_t* k_out) {
  const json config = load_json_file(run_dir + "/config.json");
  const json& hyper = config.at("hyper");
  racm::ModelConfig cfg;
  cfg.mode = racm::head_mode_from_string(hyper.at("mode").get<std::string>());
  cfg.dim = config.at("model").at("dim").get<std::uint32_t>();
  cfg.num_classes = config.at("model").at("classes").get<std::uint32_t>();
  cfg.value_dim = config.at("model").at("value_dim").get<std::uint32_t>();
  cfg.num_layers = hyper.at("layers").get<std::uint32_t>();
  auto model =
      racm::make_model<float>(cfg, hyper.at("seed").get<std::uint64_t>());
  racm::nn::load_checkpoint_into(run_dir + "/model.racp", model.params);
  if (k_out) *k_out = hyper.at("k").get<std::uint32_t>();
  return model;
}

struct EvalArgs {
  std::string run;
  std::string data;
  std::string store;
  std::string split = "eval";
  std::uint32_t k = 0;  // 0 -> the run's training k
  std::string ivf;
  std::uint32_t probe = 0;
  std::string out;
};

int cmd_eval(EvalArgs& a) {
  std::uint32_t run_k = 0;
  const auto model = load_run_model(a.run, &run_k);
  const auto ds = racm::load_dataset(a.data, a.split);
  const auto train_ds = racm::load_dataset(a.data, "train");
  const std::uint32_t k = a.k == 0 ? run_k : a.k;

  racm::MemoryStore store;
  racm::Metrics metrics;
  json report;
  if (racm::uses_retrieval(model.cfg.mode)) {
    if (a.store.empty())
      throw std::invalid_argument("retrieval modes need --store");
    store = racm::read_store(a.store);
    const racm::ExactIndex exact(store);
    if (a.ivf.empty()) {
      metrics = racm::evaluate(model, ds, train_ds.class_counts, store, exact, k);
    } else {
      const auto ivf = racm::load_ivf(a.ivf, store);
      metrics = racm::evaluate(model, ds, train_ds.class_counts, store, ivf, k,
                               {}, a.probe);
      // Approximate retrieval is opt-in; report its quality next to the
      // accuracy numbers.
      double recall = 0.0;
      const auto truth = exact.query_batch(ds.embeddings, k);
      racm::QueryOptions opts;
      opts.n_probe = a.probe;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto approx = ivf.query(ds.embeddings.row_span(i), k, opts);
        recall += racm::recall_at_k(approx, truth[i]);
      }
      report["recall_at_k"] = recall / static_cast<double>(ds.size());
      report["n_probe_used"] =
          a.probe == 0 ? racm::default_n_probe(ivf.n_lists()) : a.probe;
    }
  } else {
    metrics = racm::evaluate_with_hits(model, ds, train_ds.class_counts,
                                       nullptr, {});
  }
  report["metrics"] = metrics.to_json();
  report["split"] = a.split;
  report["k"] = k;
  std::cout << report.dump(2) << "\n";
  if (!a.out.empty()) write_json_file(a.out, report);
  return kExitOk;
}

struct GrowArgs {
  std::string run;
  std::string data;
  std::string store;
  std::string extra;
  std::uint32_t k = 0;
  std::string out;
};

int cmd_grow_memory(GrowArgs& a) {
  std::uint32_t run_k = 0;
  const auto model = load_run_model(a.run, &run_k);
  if (!racm::uses_retrieval(model.cfg.mode))
    throw std::invalid_argument("grow-memory needs a retrieval-mode run");
  const auto ds = racm::load_dataset(a.data, "eval");
  const auto train_ds = racm::load_dataset(a.data, "train");
  const auto small_store = racm::read_store(a.store);
  const auto extra_store = racm::read_store(a.extra);
  const std::uint32_t k = a.k == 0 ? run_k : a.k;

  const auto [before, after] = racm::grow_memory_eval(
      model, ds, train_ds.class_counts, small_store, extra_store, k);
  json report;
  report["before"] = before.to_json();
  report["after"] = after.to_json();
  report["k"] = k;
  report["added_rows"] = extra_store.count();
  std::cout << report.dump(2) << "\n";
  if (!a.out.empty()) write_json_file(a.out, report);
  return kExitOk;
}

struct GradCheckArgs {
  std::string mode = "mam";
  std::uint32_t layers = 2;
  std::uint32_t dim = 8;
  std::uint32_t value_dim = 6;
  std::uint32_t k = 5;
  std::uint32_t classes = 4;
  std::uint32_t seeds = 5;
  double tolerance = 1e-4;
  double fd_step = 1e-5;
};

// Finite-difference check of the full model + smoothed-CE loss at double
// precision, over fresh random instances.
int cmd_grad_check(GradCheckArgs& a) {
  const auto mode = racm::head_mode_from_string(a.mode);
  double worst = 0.0;
  std::string worst_param;
  for (std::uint32_t seed = 1; seed <= a.seeds; ++seed) {
    racm::ModelConfig cfg;
    cfg.mode = mode;
    cfg.dim = a.dim;
    cfg.num_classes = a.classes;
    cfg.value_dim = a.value_dim;
    cfg.num_layers = a.layers;
    auto model = racm::make_model<double>(cfg, seed);
    racm::Rng rng(seed * 31 + 7);
    for (auto& p : model.params)
      for (auto& v : p.value) v += 0.3 * rng.normal();

    std::vector<double> z(a.dim);
    for (auto& v : z) v = rng.normal();
    racm::Mat<double> keys(a.k, a.dim), values(a.k, a.value_dim);
    for (auto& v : keys.data) v = rng.normal();
    for (auto& v : values.data) v = rng.normal();
    const std::size_t label = rng.next_below(a.classes);

    model.params.zero_grads();
    racm::ModelCache<double> cache;
    const auto logits =
        racm::model_forward<double>(model, z, keys, values, &cache);
    const auto lg = racm::ce_label_smoothing<double>(logits, label, 0.1);
    racm::model_backward<double>(model, cache, keys, values, lg.dlogits);

    auto loss = [&](const racm::nn::ParamSet<double>& ps) {
      racm::Model<double> probe = model;
      probe.params = ps;
      const auto l = racm::model_forward<double>(probe, z, keys, values);
      return static_cast<double>(
          racm::ce_label_smoothing<double>(l, label, 0.1).loss);
    };
    racm::nn::GradCheckOptions opts;
    opts.fd_step = a.fd_step;
    const auto report = racm::nn::grad_check(model.params, loss, opts);
    std::cout << "seed " << seed << ": max_rel_err " << report.max_rel_err
              << " (worst " << report.worst_param << ", "
              << report.coords_checked << " coords)\n";
    if (report.max_rel_err > worst) {
      worst = report.max_rel_err;
      worst_param = report.worst_param;
    }
  }
  std::cout << "max_rel_err " << worst << " tolerance " << a.tolerance << " : "
            << (worst < a.tolerance ? "OK" : "FAIL") << "\n";
  return worst < a.tolerance ? kExitOk : kExitCheckFailed;
}

struct TraceArgs {
  std::string run;
  std::string data;
  std::string store;
  std::string split = "eval";
  std::uint64_t query_id = 0;
  std::uint32_t k = 10;
  std::string out;
};

int cmd_trace(TraceArgs& a) {
  const auto model = load_run_model(a.run, nullptr);
  if (model.cfg.mode != racm::HeadMode::mam)
    throw std::invalid_argument("trace needs a memory-attention run");
  const auto ds = racm::load_dataset(a.data, a.split);
  if (a.query_id >= ds.size())
    throw std::invalid_argument("--query-id out of range");
  const auto store = racm::read_store(a.store);
  const racm::ExactIndex index(store);
  const auto hits = index.query(ds.embeddings.row_span(a.query_id), a.k);

  racm::Mat<float> keys(hits.size(), store.key_dim);
  racm::Mat<float> values(hits.size(), store.value_dim);
  std::vector<std::uint64_t> ids(hits.size());
  for (std::size_t j = 0; j < hits.size(); ++j) {
    ids[j] = hits[j].id;
    std::copy_n(store.keys.row(hits[j].id), store.key_dim, keys.row(j));
    std::copy_n(store.values.row(hits[j].id), store.value_dim, values.row(j));
  }
  const auto trace =
      racm::attention_trace(model.params, model.mam,
                            ds.embeddings.row_span(a.query_id), keys, values,
                            ids);
  json j = trace.to_json();
  j["query_id"] = a.query_id;
  j["label"] = ds.labels[a.query_id];
  std::cout << j.dump(2) << "\n";
  if (!a.out.empty()) write_json_file(a.out, j);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"retrieval-augmented classification over precomputed embeddings"};
  app.require_subcommand(1);
  std::size_t threads = 0;
  app.add_option("--threads", threads,
                 "cap worker threads (0 = all available cores)");

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data",
                                 "generate a synthetic long-tail benchmark");
  gen->add_option("--classes", gd.longtail.classes, "number of classes");
  gen->add_option("--head", gd.longtail.head_count, "train count of class 0");
  gen->add_option("--tail", gd.longtail.tail_count, "train count of the last class");
  gen->add_option("--dim", gd.longtail.dim, "embedding width");
  gen->add_option("--sigma", gd.longtail.sigma, "cluster spread");
  gen->add_option("--eval-per-class", gd.longtail.eval_per_class,
                  "balanced eval count per class");
  gen->add_option("--seed", gd.longtail.seed, "generator seed");
  gen->add_option("--mem-size", gd.memory.size, "memory rows");
  gen->add_option("--relevant-frac", gd.memory.relevant_fraction,
                  "fraction of memory rows near class prototypes");
  gen->add_option("--distractor-frac", gd.memory.distractor_fraction,
                  "explicit distractor fraction (echoed; remainder is distractor)");
  gen->add_option("--value-mode", gd.value_mode,
                  "memory value encoder proxy: echo_visual | text_proxy");
  gen->add_option("--value-dim", gd.memory.value_dim, "memory value width");
  gen->add_option("--mem-key-noise", gd.memory.key_noise,
                  "relevant key spread around prototypes");
  gen->add_option("--mem-value-noise", gd.memory.value_noise,
                  "relevant value spread");
  gen->add_option("--mem-seed", gd.memory.seed, "memory seed (default: seed+1)")
      ->each([&gd](const std::string&) { gd.mem_seed_set = true; });
  gen->add_option("--out", gd.out, "output directory")->required();

  BuildIndexArgs bi;
  auto* build = app.add_subcommand("build-index",
                                   "build an IVF index over a memory store");
  build->add_option("--store", bi.store, "memory store file")->required();
  build->add_option("--lists", bi.lists, "posting list count or 'auto'");
  build->add_option("--seed", bi.seed, "k-means seed");
  build->add_option("--iters", bi.iters, "max k-means iterations");
  build->add_option("--out", bi.out, "output index file")->required();

  PrecomputeArgs pc;
  auto* pre = app.add_subcommand("precompute-knn",
                                 "precompute top-k neighbor lists");
  pre->add_option("--store", pc.store, "memory store file")->required();
  pre->add_option("--queries", pc.queries,
                  "query embeddings (a dataset .racm file)")->required();
  pre->add_option("--k", pc.k, "neighbors per query");
  pre->add_option("--index", pc.index, "IVF index file (default: exact search)");
  pre->add_option("--probe", pc.probe, "IVF lists to scan (0 = default rule)");
  pre->add_flag("--exclude-self", pc.exclude_self,
                "drop each query's own row id (memory = training split)");
  pre->add_option("--out", pc.out, "output cache file")->required();

  TrainArgs tr;
  auto* trn = app.add_subcommand("train", "train a classifier head");
  trn->add_option("--data", tr.data, "dataset directory")->required();
  trn->add_option("--store", tr.store, "memory store file");
  trn->add_option("--cache", tr.cache, "precomputed k-NN cache");
  trn->add_option("--mode", tr.mode, "linear | mlp | mean_knn | mam");
  trn->add_option("--layers", tr.layers, "attention depth (mam)");
  trn->add_option("--epochs", tr.hyper.epochs, "training epochs");
  trn->add_option("--batch", tr.hyper.batch, "batch size (0 = min(512, N/10))");
  trn->add_option("--lr", tr.hyper.lr, "base learning rate");
  trn->add_option("--wd", tr.hyper.weight_decay, "decoupled weight decay");
  trn->add_option("--warmup-epochs", tr.hyper.warmup_epochs, "warmup length");
  trn->add_option("--k", tr.hyper.k, "retrieved neighbors per query");
  trn->add_option("--tau", tr.tau,
                  "logit adjustment strength (default: 1 when counts are "
                  "imbalanced, else 0)");
  trn->add_option("--smoothing", tr.hyper.label_smoothing, "label smoothing");
  trn->add_option("--seed", tr.hyper.seed, "training seed");
  trn->add_flag("--exclude-self", tr.hyper.cache_excludes_self,
                "cache was built with self-exclusion");
  trn->add_option("--cache-index", tr.cache_index,
                  "IVF index the cache was built with (default: exact)");
  trn->add_option("--cache-probe", tr.cache_probe,
                  "probe count used at precompute time");
  trn->add_option("--many-min", tr.hyper.thresholds.many_min,
                  "many-shot threshold (count > many_min)");
  trn->add_option("--low-max", tr.hyper.thresholds.low_max,
                  "low-shot threshold (count < low_max)");
  trn->add_option("--out", tr.out, "run output directory")->required();

  EvalArgs ev;
  auto* evl = app.add_subcommand("eval", "evaluate a trained run");
  evl->add_option("--run", ev.run, "run directory from train")->required();
  evl->add_option("--data", ev.data, "dataset directory")->required();
  evl->add_option("--store", ev.store, "memory store file");
  evl->add_option("--split", ev.split, "train | eval");
  evl->add_option("--k", ev.k, "retrieval depth (0 = the run's k)");
  evl->add_option("--ivf", ev.ivf, "opt-in approximate retrieval index");
  evl->add_option("--probe", ev.probe, "IVF probe count (0 = default rule)");
  evl->add_option("--out", ev.out, "also write the report here");

  GrowArgs gr;
  auto* grow = app.add_subcommand(
      "grow-memory", "evaluate before/after merging extra memory, no retraining");
  grow->add_option("--run", gr.run, "run directory from train")->required();
  grow->add_option("--data", gr.data, "dataset directory")->required();
  grow->add_option("--store", gr.store, "memory used at training time")->required();
  grow->add_option("--extra", gr.extra, "rows to merge in")->required();
  grow->add_option("--k", gr.k, "retrieval depth (0 = the run's k)");
  grow->add_option("--out", gr.out, "also write the report here");

  GradCheckArgs gc;
  auto* grad = app.add_subcommand("grad-check",
                                  "finite-difference check of model gradients");
  grad->add_option("--mode", gc.mode, "linear | mlp | mean_knn | mam");
  grad->add_option("--layers", gc.layers, "attention depth (mam)");
  grad->add_option("--dim", gc.dim, "embedding width");
  grad->add_option("--value-dim", gc.value_dim, "value width");
  grad->add_option("--k", gc.k, "retrieved rows");
  grad->add_option("--classes", gc.classes, "class count");
  grad->add_option("--seeds", gc.seeds, "random instances to check");
  grad->add_option("--tolerance", gc.tolerance, "max relative error allowed");
  grad->add_option("--fd-step", gc.fd_step, "central difference step");

  TraceArgs tc;
  auto* trace = app.add_subcommand("trace",
                                   "dump per-layer attention weights for one query");
  trace->add_option("--run", tc.run, "run directory from train")->required();
  trace->add_option("--data", tc.data, "dataset directory")->required();
  trace->add_option("--store", tc.store, "memory store file")->required();
  trace->add_option("--split", tc.split, "train | eval");
  trace->add_option("--query-id", tc.query_id, "row in the split");
  trace->add_option("--k", tc.k, "neighbors to retrieve");
  trace->add_option("--out", tc.out, "also write the trace here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  racm::set_max_threads(threads);
  try {
    if (gen->parsed()) return cmd_gen_data(gd);
    if (build->parsed()) return cmd_build_index(bi);
    if (pre->parsed()) return cmd_precompute_knn(pc);
    if (trn->parsed()) return cmd_train(tr);
    if (evl->parsed()) return cmd_eval(ev);
    if (grow->parsed()) return cmd_grow_memory(gr);
    if (grad->parsed()) return cmd_grad_check(gc);
    if (trace->parsed()) return cmd_trace(tc);
  } catch (const racm::io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const racm::stale_cache_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}
