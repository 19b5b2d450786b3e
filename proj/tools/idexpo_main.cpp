// Copyright 2026 The idexpo Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command line driver: pretrain a classifier, fine-tune it with an
// explanation-aware objective, evaluate rankings, explain single rows, and
// aggregate run records into report tables.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "idexpo/dataset.hpp"
#include "idexpo/explain.hpp"
#include "idexpo/metrics.hpp"
#include "idexpo/mlp.hpp"
#include "idexpo/report.hpp"
#include "idexpo/train.hpp"
#include "idexpo/version.hpp"

namespace fs = std::filesystem;
using namespace idexpo;

namespace {

// The ingested data with one split applied: standardized features, the fitted
// transform, and the train-mean background.
struct Prepared {
  Dataset ds;
  SplitSpec split;
  Standardizer scaler;
  std::vector<double> bg;
};

Prepared prepare(const std::string& data_path, int split_index, uint64_t seed) {
  Dataset raw = load_csv(data_path);
  std::vector<SplitSpec> splits = make_splits(raw, seed);
  if (split_index < 0 || split_index >= int(splits.size())) {
    throw std::invalid_argument("--split must be in [0, " +
                                std::to_string(splits.size() - 1) + "]");
  }
  Prepared p;
  p.split = splits[size_t(split_index)];
  auto prep = standardize(raw, p.split);
  p.ds = std::move(prep.first);
  p.scaler = std::move(prep.second);
  p.bg = background(p.ds, p.split);
  return p;
}

std::string run_tag(const Dataset& ds, const std::string& method,
                    const std::string& explainer, int split, uint64_t seed) {
  std::ostringstream tag;
  tag << ds.name << "_" << method << "_" << explainer << "_split" << split
      << "_seed" << seed;
  return tag.str();
}

std::string pretrain_cache_path(const std::string& out, const Dataset& ds,
                                int split, uint64_t seed) {
  std::ostringstream name;
  name << "pretrained_" << ds.name << "_" << ds.hash.substr(0, 8) << "_split"
       << split << "_seed" << seed << ".json";
  return (fs::path(out) / "models" / name.str()).string();
}

void ensure_parent_dir(const std::string& path) {
  fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

// Loads --model if given; otherwise loads the cached pretrained checkpoint or
// creates it. The cache name embeds the data hash, so a changed csv under the
// same name never reuses a stale model.
MlpModel ensure_pretrained(const Prepared& p, const std::string& out,
                           int split, uint64_t seed,
                           const std::string& model_path,
                           const PretrainConfig& cfg, bool quiet) {
  if (!model_path.empty()) {
    MlpModel m = load_model(model_path);
    if (!m.data_hash.empty() && m.data_hash != p.ds.hash) {
      throw std::runtime_error("model " + model_path +
                               " was trained on different data (hash " +
                               m.data_hash + " != " + p.ds.hash + ")");
    }
    return m;
  }
  std::string cache = pretrain_cache_path(out, p.ds, split, seed);
  if (fs::exists(cache)) {
    if (!quiet) std::cout << "using cached pretrained model " << cache << "\n";
    return load_model(cache);
  }
  if (!quiet) std::cout << "pretraining (no cache at " << cache << ")\n";
  PretrainResult r = pretrain(p.ds, p.split, cfg, seed);
  ensure_parent_dir(cache);
  save_model(r.model, cache);
  if (!quiet) {
    std::cout << "pretrained: best val accuracy " << r.best_val_accuracy
              << " at epoch " << r.best_epoch << ", saved " << cache << "\n";
  }
  return r.model;
}

// Optional JSON file of defaults; explicit flags still win because CLI11
// overwrites the bound variables afterwards.
nlohmann::json load_config_json(int argc, char** argv, std::string& path_out) {
  std::string path;
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) {
      path = argv[i + 1];
    } else if (arg.rfind("--config=", 0) == 0) {
      path = arg.substr(9);
    }
  }
  path_out = path;
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config " + path);
  nlohmann::json j;
  in >> j;
  if (!j.is_object()) throw std::runtime_error("config must be a JSON object");
  return j;
}

template <typename T>
void cfg_get(const nlohmann::json& j, const char* key, T& var) {
  auto it = j.find(key);
  if (it != j.end()) var = it->get<T>();
}

std::vector<int> rows_for(const Prepared& p, const std::string& which) {
  if (which == "train") return p.split.train;
  if (which == "val") return p.split.val;
  if (which == "test") return p.split.test;
  if (which == "all") {
    std::vector<int> all(size_t(p.ds.num_samples()));
    for (int i = 0; i < p.ds.num_samples(); ++i) all[size_t(i)] = i;
    return all;
  }
  throw std::invalid_argument("--rows must be train, val, test or all");
}

nlohmann::json cell_json(const GridCell& c) {
  nlohmann::json j;
  j["lr"] = c.lr;
  j["lambda12"] = c.lambda12;
  j["lambda3"] = c.lambda3;
  j["expo_weight"] = c.expo_weight;
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  ensure_parent_dir(path);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// One curve as csv rows, indexed by how many top features were kept.
std::string curve_csv(const std::string& column,
                      const std::vector<double>& curve) {
  std::ostringstream s;
  s << "s," << column << "\n";
  for (size_t i = 0; i < curve.size(); ++i) {
    s << (i + 1) << "," << fmt17(curve[i]) << "\n";
  }
  return s.str();
}

std::string epochs_csv(const std::vector<EpochStats>& epochs) {
  std::ostringstream s;
  s << "epoch,val_accuracy,val_insertion,val_deletion,val_score\n";
  for (size_t i = 0; i < epochs.size(); ++i) {
    s << i << "," << fmt17(epochs[i].accuracy) << ","
      << fmt17(epochs[i].insertion) << "," << fmt17(epochs[i].deletion) << ","
      << fmt17(epochs[i].score) << "\n";
  }
  return s.str();
}

// Record of one invocation: the exact command, every knob at its resolved
// value (defaults and config file already folded in), the inputs it read by
// hash, and every file it wrote. Commands with extra structure add fields
// before saving.
nlohmann::json make_run_manifest(int argc, char** argv,
                                 const std::string& config_path,
                                 const nlohmann::json& resolved, uint64_t seed,
                                 const nlohmann::json& inputs,
                                 const std::vector<std::string>& outputs) {
  nlohmann::json j;
  j["schema"] = "idexpo.manifest/1";
  j["version"] = kVersion;
  std::ostringstream cmd;
  for (int i = 0; i < argc; ++i) {
    if (i) cmd << ' ';
    cmd << argv[i];
  }
  j["command"] = cmd.str();
  j["config_file"] = config_path;
  j["config"] = resolved;
  j["seed"] = seed;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  return j;
}

void save_manifest(const nlohmann::json& j, const std::string& path) {
  write_text(path, j.dump(1) + "\n");
  std::cout << "wrote " << path << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  try {
    CLI::App app{"explanation-aware fine-tuning toolkit"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    std::string config_path;
    nlohmann::json cfgj = load_config_json(argc, argv, config_path);

    // Shared knobs. Each subcommand binds the subset it uses.
    std::string data, out = "out", config_dummy;
    int split = 0;
    uint64_t seed = 1;
    std::string method = "idexpo", explainer = "lime", del_variant = "a";
    double lr = 0.01, lambda12 = 0.1, lambda3 = 0.001, expo_weight = 0.01;
    double s_fraction = 0.5, eta = 2.0, epsilon = 0.01, alpha = 0.05;
    int batch = 128, max_epochs = 200, patience = 20, samples = 200;
    int pre_epochs = 200, pre_patience = 20, pre_batch = 128;
    double pre_lr = 0.01;
    int jobs = 1, cell_index = -1, row = 0, label = -1;
    bool grid = false, with_sensitivity = false;
    std::string model_path, rows_which = "test", runs_dir, json_out;

    cfg_get(cfgj, "data", data);
    cfg_get(cfgj, "out", out);
    cfg_get(cfgj, "split", split);
    cfg_get(cfgj, "seed", seed);
    cfg_get(cfgj, "method", method);
    cfg_get(cfgj, "explainer", explainer);
    cfg_get(cfgj, "del_variant", del_variant);
    cfg_get(cfgj, "lr", lr);
    cfg_get(cfgj, "lambda12", lambda12);
    cfg_get(cfgj, "lambda3", lambda3);
    cfg_get(cfgj, "expo_weight", expo_weight);
    cfg_get(cfgj, "s_fraction", s_fraction);
    cfg_get(cfgj, "eta", eta);
    cfg_get(cfgj, "epsilon", epsilon);
    cfg_get(cfgj, "alpha", alpha);
    cfg_get(cfgj, "batch", batch);
    cfg_get(cfgj, "max_epochs", max_epochs);
    cfg_get(cfgj, "patience", patience);
    cfg_get(cfgj, "samples", samples);
    cfg_get(cfgj, "pretrain_epochs", pre_epochs);
    cfg_get(cfgj, "pretrain_batch", pre_batch);
    cfg_get(cfgj, "pretrain_patience", pre_patience);
    cfg_get(cfgj, "pretrain_lr", pre_lr);
    cfg_get(cfgj, "jobs", jobs);
    cfg_get(cfgj, "sensitivity", with_sensitivity);

    auto add_common = [&](CLI::App* sub, bool needs_data) {
      auto* d = sub->add_option("--data", data, "input csv (header row, numeric cells, integer label last)");
      if (needs_data && data.empty()) d->required();
      sub->add_option("--out", out, "output directory");
      sub->add_option("--split", split, "split index, 0..4");
      sub->add_option("--seed", seed, "master seed");
      sub->add_option("--config", config_dummy, "JSON file of option defaults");
    };

    // ---- synth ----------------------------------------------------------
    auto* synth_cmd = app.add_subcommand(
        "synth", "write a deterministic synthetic classification csv");
    std::string synth_name = "synthetic";
    int synth_n = 500, synth_q = 8, synth_classes = 3;
    std::string synth_out = "synthetic.csv";
    synth_cmd->add_option("--name", synth_name, "dataset name");
    synth_cmd->add_option("--n", synth_n, "rows");
    synth_cmd->add_option("--q", synth_q, "features");
    synth_cmd->add_option("--classes", synth_classes, "classes");
    synth_cmd->add_option("--seed", seed, "generator seed");
    synth_cmd->add_option("--csv", synth_out, "output csv path");
    synth_cmd->add_option("--out", out, "output directory for the manifest");
    synth_cmd->add_option("--config", config_dummy, "JSON file of option defaults");

    // ---- pretrain -------------------------------------------------------
    auto* pre_cmd = app.add_subcommand(
        "pretrain", "train the classifier with cross entropy only");
    add_common(pre_cmd, true);
    pre_cmd->add_option("--lr", pre_lr, "learning rate");
    pre_cmd->add_option("--batch", pre_batch, "batch size");
    pre_cmd->add_option("--max-epochs", pre_epochs, "epoch cap");
    pre_cmd->add_option("--patience", pre_patience, "early stop patience");

    // ---- finetune -------------------------------------------------------
    auto* fin_cmd = app.add_subcommand(
        "finetune", "fine-tune a pretrained model with an explanation-aware objective");
    add_common(fin_cmd, true);
    fin_cmd->add_option("--method", method, "ce, idexpo, expo-f or expo-s");
    fin_cmd->add_option("--explainer", explainer, "lime or kernelshap");
    fin_cmd->add_option("--del-variant", del_variant, "deletion penalty form: a, b or c");
    fin_cmd->add_option("--lr", lr, "learning rate");
    fin_cmd->add_option("--lambda12", lambda12, "insertion/deletion penalty weight");
    fin_cmd->add_option("--lambda3", lambda3, "attribution norm weight");
    fin_cmd->add_option("--expo-weight", expo_weight, "surrogate penalty weight");
    fin_cmd->add_option("--s-fraction", s_fraction, "top-s fraction of features");
    fin_cmd->add_option("--eta", eta, "accuracy weight in the validation score");
    fin_cmd->add_option("--batch", batch, "batch size");
    fin_cmd->add_option("--max-epochs", max_epochs, "epoch cap");
    fin_cmd->add_option("--patience", patience, "early stop patience");
    fin_cmd->add_option("--samples", samples, "explainer neighborhood size");
    fin_cmd->add_option("--epsilon", epsilon, "explainer ridge strength");
    fin_cmd->add_flag("--grid", grid, "search the method's full grid");
    fin_cmd->add_option("--cell", cell_index, "run only this grid cell index");
    fin_cmd->add_option("--jobs", jobs, "threads for --grid");
    fin_cmd->add_option("--model", model_path, "pretrained checkpoint (otherwise cached/auto)");
    fin_cmd->add_option("--pretrain-epochs", pre_epochs, "epoch cap for auto pretraining");
    fin_cmd->add_option("--pretrain-batch", pre_batch, "batch size for auto pretraining");
    fin_cmd->add_option("--pretrain-patience", pre_patience, "patience for auto pretraining");
    fin_cmd->add_option("--pretrain-lr", pre_lr, "learning rate for auto pretraining");

    // ---- evaluate -------------------------------------------------------
    auto* eval_cmd = app.add_subcommand(
        "evaluate", "score a checkpoint's explanations on one split");
    add_common(eval_cmd, true);
    eval_cmd->add_option("--model", model_path, "checkpoint to evaluate")->required();
    eval_cmd->add_option("--explainer", explainer, "lime or kernelshap");
    eval_cmd->add_option("--s-fraction", s_fraction, "top-s fraction of features");
    eval_cmd->add_option("--eta", eta, "accuracy weight in the score");
    eval_cmd->add_option("--rows", rows_which, "train, val, test or all");
    eval_cmd->add_option("--samples", samples, "explainer neighborhood size");
    eval_cmd->add_option("--epsilon", epsilon, "explainer ridge strength");
    eval_cmd->add_flag("--sensitivity", with_sensitivity, "also measure subset agreement");
    eval_cmd->add_option("--json-out", json_out, "also write the report to this file");

    // ---- explain --------------------------------------------------------
    auto* exp_cmd = app.add_subcommand(
        "explain", "attribute one row's prediction to its features");
    add_common(exp_cmd, true);
    exp_cmd->add_option("--model", model_path, "checkpoint to explain")->required();
    exp_cmd->add_option("--row", row, "dataset row index");
    exp_cmd->add_option("--label", label, "class to attribute (default: predicted)");
    exp_cmd->add_option("--explainer", explainer, "lime or kernelshap");
    exp_cmd->add_option("--samples", samples, "explainer neighborhood size");
    exp_cmd->add_option("--epsilon", epsilon, "explainer ridge strength");
    exp_cmd->add_option("--json-out", json_out, "also write the attribution to this file");

    // ---- report ---------------------------------------------------------
    auto* rep_cmd = app.add_subcommand(
        "report", "aggregate run records into summary tables");
    rep_cmd->add_option("--runs", runs_dir, "directory of run record json files");
    rep_cmd->add_option("--out", out, "output directory");
    rep_cmd->add_option("--eta", eta, "accuracy weight used for selection");
    rep_cmd->add_option("--alpha", alpha, "significance level");
    rep_cmd->add_option("--config", config_dummy, "JSON file of option defaults");

    CLI11_PARSE(app, argc, argv);

    if (synth_cmd->parsed()) {
      Dataset ds = make_synthetic_classification(synth_name, synth_n, synth_q,
                                                 synth_classes, seed);
      ensure_parent_dir(synth_out);
      save_csv(ds, synth_out);
      std::cout << "wrote " << synth_out << " (" << ds.num_samples() << " rows, "
                << ds.num_features() << " features, " << ds.num_classes
                << " classes)\n";
      nlohmann::json rc;
      rc["name"] = synth_name;
      rc["n"] = synth_n;
      rc["q"] = synth_q;
      rc["classes"] = synth_classes;
      rc["csv"] = synth_out;
      nlohmann::json inputs = nlohmann::json::object();
      nlohmann::json man = make_run_manifest(argc, argv, config_path, rc, seed,
                                             inputs, {synth_out});
      man["dataset_hash"] = ds.hash;
      save_manifest(man, (fs::path(out) / "manifests" /
                          ("synth_" + synth_name + ".json"))
                             .string());
      return 0;
    }

    if (pre_cmd->parsed()) {
      Prepared p = prepare(data, split, seed);
      PretrainConfig cfg;
      cfg.sgd.lr = pre_lr;
      cfg.batch_size = pre_batch;
      cfg.max_epochs = pre_epochs;
      cfg.patience = pre_patience;
      PretrainResult r = pretrain(p.ds, p.split, cfg, seed);
      std::string cache = pretrain_cache_path(out, p.ds, split, seed);
      ensure_parent_dir(cache);
      save_model(r.model, cache);
      std::cout << "best val accuracy " << r.best_val_accuracy << " at epoch "
                << r.best_epoch << " (" << r.val_accuracy.size()
                << " epochs)\nsaved " << cache << "\n";
      nlohmann::json rc;
      rc["data"] = data;
      rc["out"] = out;
      rc["split"] = split;
      rc["lr"] = pre_lr;
      rc["batch"] = pre_batch;
      rc["max_epochs"] = pre_epochs;
      rc["patience"] = pre_patience;
      nlohmann::json inputs;
      inputs["data_path"] = data;
      inputs["data_hash"] = p.ds.hash;
      nlohmann::json man = make_run_manifest(argc, argv, config_path, rc, seed,
                                             inputs, {cache});
      std::ostringstream mname;
      mname << "pretrain_" << p.ds.name << "_split" << split << "_seed" << seed;
      save_manifest(man, (fs::path(out) / "manifests" /
                          (mname.str() + ".json"))
                             .string());
      return 0;
    }

    if (fin_cmd->parsed()) {
      Method m = method_from_string(method);
      Prepared p = prepare(data, split, seed);
      PretrainConfig pcfg;
      pcfg.sgd.lr = pre_lr;
      pcfg.batch_size = pre_batch;
      pcfg.max_epochs = pre_epochs;
      pcfg.patience = pre_patience;
      MlpModel base =
          ensure_pretrained(p, out, split, seed, model_path, pcfg, false);

      TrainConfig cfg;
      cfg.method = m;
      cfg.explainer.kind = explainer_kind_from_string(explainer);
      cfg.explainer.num_samples = samples;
      cfg.explainer.epsilon = epsilon;
      cfg.deletion = deletion_variant_from_string(del_variant);
      cfg.lambda12 = lambda12;
      cfg.lambda3 = lambda3;
      cfg.expo_weight = expo_weight;
      cfg.sgd.lr = lr;
      cfg.batch_size = batch;
      cfg.max_epochs = max_epochs;
      cfg.patience = patience;
      cfg.s_fraction = s_fraction;
      cfg.eta = eta;

      std::string tag = run_tag(p.ds, method, explainer, split, seed);
      fs::path runs_path = fs::path(out) / "runs";
      fs::create_directories(runs_path);

      auto finetune_config_json = [&](const TrainConfig& c) {
        nlohmann::json rc;
        rc["data"] = data;
        rc["out"] = out;
        rc["split"] = split;
        rc["method"] = method;
        rc["explainer"] = explainer;
        rc["del_variant"] = del_variant;
        rc["lr"] = c.sgd.lr;
        rc["lambda12"] = c.lambda12;
        rc["lambda3"] = c.lambda3;
        rc["expo_weight"] = c.expo_weight;
        rc["s_fraction"] = c.s_fraction;
        rc["eta"] = c.eta;
        rc["batch"] = c.batch_size;
        rc["max_epochs"] = c.max_epochs;
        rc["patience"] = c.patience;
        rc["samples"] = c.explainer.num_samples;
        rc["epsilon"] = c.explainer.epsilon;
        rc["pretrain_lr"] = pre_lr;
        rc["pretrain_batch"] = pre_batch;
        rc["pretrain_epochs"] = pre_epochs;
        rc["pretrain_patience"] = pre_patience;
        return rc;
      };
      nlohmann::json inputs;
      inputs["data_path"] = data;
      inputs["data_hash"] = p.ds.hash;
      inputs["base_model"] = model_path.empty()
                                 ? pretrain_cache_path(out, p.ds, split, seed)
                                 : model_path;

      if (grid) {
        GridOutcome g = run_grid(base, p.ds, p.split, p.bg, cfg, m, seed,
                                 split, eta, jobs);
        nlohmann::json rc = finetune_config_json(cfg);
        rc["grid"] = true;
        rc["jobs"] = jobs;
        std::vector<std::string> outputs;
        nlohmann::json cells = nlohmann::json::array();
        nlohmann::json files = nlohmann::json::array();
        for (size_t i = 0; i < g.records.size(); ++i) {
          std::ostringstream name;
          name << tag << "_cell";
          name.fill('0');
          name.width(2);
          name << i;
          std::string file = name.str() + ".json";
          save_run_record(g.records[i], (runs_path / file).string());
          outputs.push_back((runs_path / file).string());
          cells.push_back(cell_json(g.runs[i].cell));
          files.push_back(file);
          std::cout << "cell " << i << ": "
                    << (g.runs[i].failed
                            ? std::string("failed")
                            : "val score " +
                                  std::to_string(valscore(
                                      g.runs[i].val_accuracy,
                                      g.runs[i].val_insertion,
                                      g.runs[i].val_deletion, eta)))
                    << "\n";
        }
        std::string model_file;
        if (g.selected >= 0) {
          model_file = (fs::path(out) / "models" / (tag + ".json")).string();
          ensure_parent_dir(model_file);
          save_model(g.models[size_t(g.selected)], model_file);
          outputs.push_back(model_file);
          std::cout << "selected cell " << g.selected << ", saved "
                    << model_file << "\n";
        } else {
          std::cout << "every cell failed\n";
        }
        nlohmann::json manifest = make_run_manifest(argc, argv, config_path,
                                                    rc, seed, inputs, outputs);
        manifest["dataset_name"] = p.ds.name;
        manifest["dataset_hash"] = p.ds.hash;
        manifest["split_index"] = split;
        manifest["selected"] = g.selected;
        manifest["cells"] = std::move(cells);
        manifest["records"] = std::move(files);
        if (g.selected >= 0) manifest["model"] = model_file;
        save_manifest(manifest, (fs::path(out) / "manifests" /
                                 (tag + ".json"))
                                    .string());
        return g.selected >= 0 ? 0 : 1;
      }

      GridCell cell{lr, lambda12, lambda3, expo_weight};
      std::string suffix = "_single";
      if (cell_index >= 0) {
        std::vector<GridCell> cells = enumerate_grid(m);
        if (cell_index >= int(cells.size())) {
          throw std::invalid_argument("--cell out of range, grid has " +
                                      std::to_string(cells.size()) + " cells");
        }
        cell = cells[size_t(cell_index)];
        cfg = apply_cell(cfg, m, cell);
        std::ostringstream s;
        s << "_cell";
        s.fill('0');
        s.width(2);
        s << cell_index;
        suffix = s.str();
      } else {
        cfg = apply_cell(cfg, m, cell);
      }
      TrainResult r = finetune(base, p.ds, p.split, p.bg, cfg, seed);
      RunRecord record = make_run_record(cfg, p.ds, split, seed, cell, r);
      std::string record_file = (runs_path / (tag + suffix + ".json")).string();
      save_run_record(record, record_file);
      std::cout << "wrote " << record_file << "\n";
      std::string epochs_file =
          (runs_path / (tag + suffix + "_epochs.csv")).string();
      write_text(epochs_file, epochs_csv(r.epochs));
      std::cout << "wrote " << epochs_file << "\n";
      std::vector<std::string> outputs{record_file, epochs_file};
      std::string model_file;
      if (!r.failed) {
        model_file = (fs::path(out) / "models" / (tag + suffix + ".json")).string();
        ensure_parent_dir(model_file);
        save_model(r.model, model_file);
        outputs.push_back(model_file);
      }
      nlohmann::json rc = finetune_config_json(cfg);
      rc["grid"] = false;
      rc["cell"] = cell_index;
      nlohmann::json manifest = make_run_manifest(argc, argv, config_path, rc,
                                                  seed, inputs, outputs);
      manifest["dataset_name"] = p.ds.name;
      manifest["dataset_hash"] = p.ds.hash;
      manifest["split_index"] = split;
      save_manifest(manifest, (fs::path(out) / "manifests" /
                               (tag + suffix + ".json"))
                                  .string());
      if (r.failed) {
        std::cout << "run failed: " << r.failure << "\n";
        return 1;
      }
      std::cout << "best epoch " << r.best_epoch << ", val score "
                << r.val_at_best.score << ", test score " << r.test.score
                << "\nsaved " << model_file << "\n";
      return 0;
    }

    if (eval_cmd->parsed()) {
      Prepared p = prepare(data, split, seed);
      MlpModel m = load_model(model_path);
      if (!m.data_hash.empty() && m.data_hash != p.ds.hash) {
        throw std::runtime_error("model was trained on different data");
      }
      EvalConfig ec;
      ec.explainer.kind = explainer_kind_from_string(explainer);
      ec.explainer.num_samples = samples;
      ec.explainer.epsilon = epsilon;
      ec.s_fraction = s_fraction;
      ec.eta = eta;
      ec.with_sensitivity = with_sensitivity;
      MetricReport rep =
          evaluate_model(m, p.ds, rows_for(p, rows_which), p.bg, ec, seed);
      std::string text = metric_report_to_json(rep);
      std::cout << text << "\n";
      std::vector<std::string> outputs;
      if (!json_out.empty()) {
        write_text(json_out, text + "\n");
        outputs.push_back(json_out);
      }
      std::ostringstream base;
      base << p.ds.name << "_" << rows_which << "_" << explainer << "_split"
           << split << "_seed" << seed;
      std::string ins_file =
          (fs::path(out) / "curves" / (base.str() + "_insertion.csv")).string();
      std::string del_file =
          (fs::path(out) / "curves" / (base.str() + "_deletion.csv")).string();
      write_text(ins_file, curve_csv("insertion", rep.insertion_curve));
      write_text(del_file, curve_csv("deletion", rep.deletion_curve));
      std::cout << "wrote " << ins_file << "\nwrote " << del_file << "\n";
      outputs.push_back(ins_file);
      outputs.push_back(del_file);
      nlohmann::json rc;
      rc["data"] = data;
      rc["out"] = out;
      rc["split"] = split;
      rc["model"] = model_path;
      rc["explainer"] = explainer;
      rc["rows"] = rows_which;
      rc["s_fraction"] = s_fraction;
      rc["eta"] = eta;
      rc["samples"] = samples;
      rc["epsilon"] = epsilon;
      rc["sensitivity"] = with_sensitivity;
      nlohmann::json inputs;
      inputs["data_path"] = data;
      inputs["data_hash"] = p.ds.hash;
      inputs["model"] = model_path;
      nlohmann::json man = make_run_manifest(argc, argv, config_path, rc, seed,
                                             inputs, outputs);
      save_manifest(man, (fs::path(out) / "manifests" /
                          ("evaluate_" + base.str() + ".json"))
                             .string());
      return 0;
    }

    if (exp_cmd->parsed()) {
      Prepared p = prepare(data, split, seed);
      MlpModel m = load_model(model_path);
      if (!m.data_hash.empty() && m.data_hash != p.ds.hash) {
        throw std::runtime_error("model was trained on different data");
      }
      if (row < 0 || row >= p.ds.num_samples()) {
        throw std::invalid_argument("--row out of range");
      }
      std::vector<double> x = p.ds.x.row_vector(row);
      int target = label >= 0 ? label : predict_label(m, x);
      if (target >= m.num_classes()) {
        throw std::invalid_argument("--label out of range");
      }
      ExplainConfig ec;
      ec.kind = explainer_kind_from_string(explainer);
      ec.num_samples = samples;
      ec.epsilon = epsilon;
      SeedStream rng(seed, streams::kEvalPerturb, {uint64_t(row)});
      Tensor phi = explain(m, Tensor::row(x), p.bg, target, ec, rng);

      nlohmann::json j;
      j["schema"] = "idexpo.explanation/1";
      j["dataset"] = p.ds.name;
      j["dataset_hash"] = p.ds.hash;
      j["row"] = row;
      j["label"] = target;
      if (target < int(p.ds.original_labels.size())) {
        j["original_label"] = p.ds.original_labels[size_t(target)];
      }
      j["probability"] = predict_proba_row(m, x)[size_t(target)];
      j["true_label"] = p.ds.y[size_t(row)];
      j["explainer"] = explainer;
      nlohmann::json attr = nlohmann::json::array();
      for (int c = 0; c < p.ds.num_features(); ++c) {
        nlohmann::json a;
        a["feature"] = p.ds.feature_names[size_t(c)];
        a["phi"] = phi.at(0, c);
        attr.push_back(std::move(a));
      }
      j["attributions"] = std::move(attr);
      std::string text = j.dump(1);
      std::cout << text << "\n";
      if (!json_out.empty()) {
        write_text(json_out, text + "\n");
        nlohmann::json rc;
        rc["data"] = data;
        rc["out"] = out;
        rc["split"] = split;
        rc["model"] = model_path;
        rc["row"] = row;
        rc["label"] = label;
        rc["explainer"] = explainer;
        rc["samples"] = samples;
        rc["epsilon"] = epsilon;
        nlohmann::json inputs;
        inputs["data_path"] = data;
        inputs["data_hash"] = p.ds.hash;
        inputs["model"] = model_path;
        nlohmann::json man = make_run_manifest(argc, argv, config_path, rc,
                                               seed, inputs, {json_out});
        std::ostringstream mname;
        mname << "explain_" << p.ds.name << "_" << explainer << "_row" << row
              << "_seed" << seed;
        save_manifest(man, (fs::path(out) / "manifests" /
                            (mname.str() + ".json"))
                               .string());
      }
      return 0;
    }

    if (rep_cmd->parsed()) {
      if (runs_dir.empty()) runs_dir = (fs::path(out) / "runs").string();
      std::vector<RunRecord> records = load_run_record_dir(runs_dir);
      if (records.empty()) {
        std::cerr << "no run records in " << runs_dir << "\n";
        return 1;
      }
      ReportTable table = build_report(records, eta, alpha);
      fs::create_directories(out);
      std::string sum_path = (fs::path(out) / "summary.csv").string();
      std::string sca_path = (fs::path(out) / "scatter.csv").string();
      {
        std::ofstream f(sum_path, std::ios::binary);
        f << summary_csv(table);
      }
      {
        std::ofstream f(sca_path, std::ios::binary);
        f << scatter_csv(table);
      }
      std::cout << summary_text(table) << "wrote " << sum_path << " and "
                << sca_path << "\n";
      nlohmann::json rc;
      rc["runs"] = runs_dir;
      rc["out"] = out;
      rc["eta"] = eta;
      rc["alpha"] = alpha;
      nlohmann::json inputs;
      inputs["runs_dir"] = runs_dir;
      inputs["num_records"] = records.size();
      nlohmann::json man = make_run_manifest(argc, argv, config_path, rc, seed,
                                             inputs, {sum_path, sca_path});
      save_manifest(man, (fs::path(out) / "manifests" / "report.json").string());
      return 0;
    }

    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
