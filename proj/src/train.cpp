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

#include "idexpo/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <utility>

#include "json.hpp"

namespace idexpo {

std::string method_to_string(Method m) {
  switch (m) {
    case Method::kCeOnly: return "ce";
    case Method::kIdExpo: return "idexpo";
    case Method::kExpoF: return "expo-f";
    case Method::kExpoS: return "expo-s";
  }
  throw std::invalid_argument("method_to_string: bad enum value");
}

Method method_from_string(const std::string& name) {
  if (name == "ce") return Method::kCeOnly;
  if (name == "idexpo") return Method::kIdExpo;
  if (name == "expo-f") return Method::kExpoF;
  if (name == "expo-s") return Method::kExpoS;
  throw std::invalid_argument("unknown method '" + name +
                              "' (expected ce, idexpo, expo-f or expo-s)");
}

SampleLoss build_sample_loss(Tape& tape, const TapeParams& params,
                             const Tensor& x_row, int label,
                             const std::vector<double>& background,
                             const TrainConfig& cfg, SeedStream& rng) {
  if (x_row.rows() != 1) {
    throw ShapeError("build_sample_loss: expected a single input row, got " +
                     x_row.shape_str());
  }
  SampleLoss out;

  // Cross entropy first: this prefix of the graph is byte-for-byte the same
  // for every method, including its node ids.
  NodeId xc = tape.constant(x_row);
  NodeId logits = forward_logits_on_tape(tape, params, xc);
  NodeId lsm = tape.log_softmax(logits);
  out.log_fx = tape.select(lsm, {{0, label}}, /*as_row=*/true);
  out.ce = tape.scalar_mul(out.log_fx, -1.0);
  out.loss = out.ce;
  if (cfg.method == Method::kCeOnly) return out;

  PerturbationSet pert = generate_perturbations(
      x_row, background, cfg.explainer.num_samples, rng);
  std::vector<double> weights = kernel_weights(cfg.explainer.kind, pert.z);
  TapeExplanation ex =
      explain_on_tape(tape, params, pert, weights, label, cfg.explainer.epsilon);
  out.phi = ex.phi;

  if (cfg.method == Method::kIdExpo) {
    const int s_max = s_from_fraction(x_row.cols(), cfg.s_fraction);
    SoftMaskNodes masks =
        soft_mask_nodes(tape, ex.phi, x_row, background, s_max);
    out.omega_ins = omega_insertion(tape, params, masks.alpha, label);
    out.omega_del = omega_deletion(tape, params, masks.beta, label,
                                   cfg.deletion, out.log_fx);
    NodeId phi_sq = tape.sum(tape.mul(ex.phi, ex.phi));
    // Never elide a zero-weight branch: the graph shape must not depend on
    // the lambdas, only the scalar factors may.
    NodeId ranked = tape.scalar_mul(tape.add(out.omega_ins, out.omega_del),
                                    cfg.lambda12);
    NodeId reg = tape.add(ranked, tape.scalar_mul(phi_sq, cfg.lambda3));
    out.loss = tape.add(out.ce, reg);
    return out;
  }

  // Surrogate-fit penalties over the same neighborhood. The coalition matrix
  // and kernel weights enter as constants; gradients reach the model only
  // through f_tilde (and phi, itself a linear map of f_tilde).
  const int m = cfg.explainer.num_samples;
  NodeId residual;
  if (cfg.method == Method::kExpoF) {
    NodeId fit = tape.matmul(ex.phi, tape.constant(transpose(pert.z)));
    residual = tape.sub(ex.f_tilde, fit);
  } else {
    NodeId fx = tape.exp(out.log_fx);
    NodeId fx_row = tape.matmul(fx, tape.constant(Tensor::ones(1, m)));
    residual = tape.sub(ex.f_tilde, fx_row);
  }
  Tensor k_row(1, m);
  for (int i = 0; i < m; ++i) k_row.at(0, i) = weights[size_t(i)];
  NodeId weighted = tape.mul(tape.mul(residual, residual), tape.constant(k_row));
  out.expo = tape.mean(weighted);
  out.loss = tape.add(out.ce, tape.scalar_mul(out.expo, cfg.expo_weight));
  return out;
}

bool early_stop_update(EarlyStopState& st, int epoch, double score,
                       int patience) {
  if (score > st.best) {
    st.best = score;
    st.best_epoch = epoch;
    st.since = 0;
  } else {
    ++st.since;
  }
  return st.since >= patience;
}

namespace {

// Mean cross entropy of a whole batch on one tape.
NodeId batch_ce_loss(Tape& tape, const TapeParams& params, const Tensor& batch,
                     const std::vector<int>& labels) {
  NodeId xc = tape.constant(batch);
  NodeId logits = forward_logits_on_tape(tape, params, xc);
  NodeId lsm = tape.log_softmax(logits);
  std::vector<std::pair<int, int>> entries;
  entries.reserve(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    entries.emplace_back(int(i), labels[i]);
  }
  NodeId picked = tape.select(lsm, std::move(entries), /*as_row=*/true);
  return tape.scalar_mul(tape.mean(picked), -1.0);
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& rows) {
  Tensor out(int(rows.size()), x.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    for (int c = 0; c < x.cols(); ++c) {
      out.at(int(i), c) = x.at(rows[i], c);
    }
  }
  return out;
}

double accuracy_on(const MlpModel& model, const Dataset& ds,
                   const std::vector<int>& rows) {
  Tensor probs = predict_proba(model, gather_rows(ds.x, rows));
  int correct = 0;
  for (size_t i = 0; i < rows.size(); ++i) {
    if (argmax_row(probs, int(i)) == ds.y[size_t(rows[i])]) ++correct;
  }
  return double(correct) / double(rows.size());
}

}  // namespace

PretrainResult pretrain(const Dataset& ds, const SplitSpec& split,
                        const PretrainConfig& cfg, uint64_t seed) {
  if (split.train.empty() || split.val.empty()) {
    throw std::invalid_argument("pretrain: empty train or val split");
  }
  MlpModel model = init_model(ds.num_features(), ds.num_classes, seed);
  model.data_hash = ds.hash;
  SgdState state = make_sgd_state(model);

  PretrainResult result;
  result.model = model;
  EarlyStopState es;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::vector<int> order = split.train;
    SeedStream shuffle_rng(seed, streams::kPretrainShuffle, {uint64_t(epoch)});
    shuffle_rng.shuffle(order);

    for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
      size_t stop = std::min(order.size(), start + size_t(cfg.batch_size));
      std::vector<int> rows(order.begin() + long(start), order.begin() + long(stop));
      std::vector<int> labels(rows.size());
      for (size_t i = 0; i < rows.size(); ++i) labels[i] = ds.y[size_t(rows[i])];

      Tape tape;
      TapeParams params = bind_parameter_views(tape, model);
      NodeId loss = batch_ce_loss(tape, params, gather_rows(ds.x, rows), labels);
      std::vector<Tensor> grads = make_grad_accumulator(model);
      tape.backward_into(loss, 1.0, grads);
      sgd_step(model, state, grads, cfg.sgd);
    }

    double acc = accuracy_on(model, ds, split.val);
    result.val_accuracy.push_back(acc);
    bool stop = early_stop_update(es, epoch, acc, cfg.patience);
    if (es.best_epoch == epoch) result.model = model;
    if (stop) break;
  }
  result.best_epoch = es.best_epoch;
  result.best_val_accuracy =
      es.best_epoch >= 0 ? result.val_accuracy[size_t(es.best_epoch)] : 0.0;
  return result;
}

TrainResult finetune(const MlpModel& base, const Dataset& ds,
                     const SplitSpec& split,
                     const std::vector<double>& background,
                     const TrainConfig& cfg, uint64_t seed) {
  if (split.train.empty() || split.val.empty()) {
    throw std::invalid_argument("finetune: empty train or val split");
  }
  TrainResult result;
  result.model = base;
  MlpModel model = base;
  SgdState state = make_sgd_state(model);

  EvalConfig val_cfg;
  val_cfg.explainer = cfg.explainer;
  val_cfg.s_fraction = cfg.s_fraction;
  val_cfg.eta = cfg.eta;
  val_cfg.with_sensitivity = false;

  EarlyStopState es;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::vector<int> order = split.train;
    SeedStream shuffle_rng(seed, streams::kFinetuneShuffle, {uint64_t(epoch)});
    shuffle_rng.shuffle(order);

    for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
      size_t stop = std::min(order.size(), start + size_t(cfg.batch_size));
      const double inv_batch = 1.0 / double(stop - start);
      std::vector<Tensor> grads = make_grad_accumulator(model);
      for (size_t i = start; i < stop; ++i) {
        const int row = order[i];
        Tape tape;
        TapeParams params = bind_parameter_views(tape, model);
        Tensor x_row = Tensor::row(ds.x.row_vector(row));
        SeedStream perturb_rng(seed, streams::kTrainPerturb,
                               {uint64_t(row), uint64_t(epoch)});
        SampleLoss sl = build_sample_loss(tape, params, x_row,
                                          ds.y[size_t(row)], background, cfg,
                                          perturb_rng);
        const double lv = tape.value(sl.loss).at(0, 0);
        if (!std::isfinite(lv)) {
          result.failed = true;
          std::ostringstream msg;
          msg << "non-finite loss " << lv << " at epoch " << epoch << ", row "
              << row;
          result.failure = msg.str();
          result.epochs.clear();
          result.best_epoch = -1;
          result.model = base;
          return result;
        }
        tape.backward_into(sl.loss, inv_batch, grads);
      }
      sgd_step(model, state, grads, cfg.sgd);
    }

    MetricReport vr =
        evaluate_model(model, ds, split.val, background, val_cfg, seed);
    EpochStats st{vr.accuracy, vr.insertion, vr.deletion, vr.score};
    result.epochs.push_back(st);
    bool stop = early_stop_update(es, epoch, vr.score, cfg.patience);
    if (es.best_epoch == epoch) result.model = model;
    if (stop) break;
  }
  result.best_epoch = es.best_epoch;
  if (result.best_epoch >= 0) {
    result.val_at_best = result.epochs[size_t(result.best_epoch)];
  }

  if (!split.test.empty()) {
    EvalConfig test_cfg = val_cfg;
    test_cfg.with_sensitivity = true;
    result.test = evaluate_model(result.model, ds, split.test, background,
                                 test_cfg, seed);
    result.has_test = true;
  }
  return result;
}

std::vector<GridCell> enumerate_grid(Method m) {
  const double lrs[] = {0.01, 0.001};
  std::vector<GridCell> out;
  switch (m) {
    case Method::kCeOnly:
      for (double lr : lrs) out.push_back({lr, 0.0, 0.0, 0.0});
      break;
    case Method::kIdExpo:
      for (double lr : lrs) {
        for (double l12 : {0.1, 0.01, 0.001}) {
          for (double l3 : {0.001, 0.0}) out.push_back({lr, l12, l3, 0.0});
        }
      }
      break;
    case Method::kExpoF:
    case Method::kExpoS:
      for (double lr : lrs) {
        for (double w : {0.1, 0.01, 0.001}) out.push_back({lr, 0.0, 0.0, w});
      }
      break;
  }
  return out;
}

int grid_select(const std::vector<GridRun>& runs, double eta) {
  int best = -1;
  double best_score = 0.0;
  for (size_t i = 0; i < runs.size(); ++i) {
    const GridRun& r = runs[i];
    if (r.failed) continue;
    double score = valscore(r.val_accuracy, r.val_insertion, r.val_deletion, eta);
    bool take = false;
    if (best < 0 || score > best_score) {
      take = true;
    } else if (score == best_score) {
      const GridRun& b = runs[size_t(best)];
      if (r.val_accuracy > b.val_accuracy) {
        take = true;
      } else if (r.val_accuracy == b.val_accuracy &&
                 r.cell.lambda12 < b.cell.lambda12) {
        take = true;
      }
    }
    if (take) {
      best = int(i);
      best_score = score;
    }
  }
  return best;
}

namespace {

nlohmann::json epoch_stats_json(const EpochStats& st) {
  nlohmann::json j;
  j["accuracy"] = st.accuracy;
  j["insertion"] = st.insertion;
  j["deletion"] = st.deletion;
  j["score"] = st.score;
  return j;
}

EpochStats epoch_stats_from_json(const nlohmann::json& j) {
  EpochStats st;
  st.accuracy = j.at("accuracy").get<double>();
  st.insertion = j.at("insertion").get<double>();
  st.deletion = j.at("deletion").get<double>();
  st.score = j.at("score").get<double>();
  return st;
}

nlohmann::json metric_report_json(const MetricReport& r) {
  nlohmann::json j;
  j["accuracy"] = r.accuracy;
  j["insertion"] = r.insertion;
  j["deletion"] = r.deletion;
  j["score"] = r.score;
  j["eta"] = r.eta;
  j["sensitivity"] = r.sensitivity;
  j["has_sensitivity"] = r.has_sensitivity;
  j["degenerate_sensitivity"] = r.degenerate_sensitivity;
  j["insertion_curve"] = r.insertion_curve;
  j["deletion_curve"] = r.deletion_curve;
  j["s_max"] = r.s_max;
  j["num_samples"] = r.num_samples;
  return j;
}

MetricReport metric_report_from_json(const nlohmann::json& j) {
  MetricReport r;
  r.accuracy = j.at("accuracy").get<double>();
  r.insertion = j.at("insertion").get<double>();
  r.deletion = j.at("deletion").get<double>();
  r.score = j.at("score").get<double>();
  r.eta = j.at("eta").get<double>();
  r.sensitivity = j.at("sensitivity").get<double>();
  r.has_sensitivity = j.at("has_sensitivity").get<bool>();
  r.degenerate_sensitivity = j.at("degenerate_sensitivity").get<int>();
  r.insertion_curve = j.at("insertion_curve").get<std::vector<double>>();
  r.deletion_curve = j.at("deletion_curve").get<std::vector<double>>();
  r.s_max = j.at("s_max").get<int>();
  r.num_samples = j.at("num_samples").get<int>();
  return r;
}

nlohmann::json grid_cell_json(const GridCell& c) {
  nlohmann::json j;
  j["lr"] = c.lr;
  j["lambda12"] = c.lambda12;
  j["lambda3"] = c.lambda3;
  j["expo_weight"] = c.expo_weight;
  return j;
}

GridCell grid_cell_from_json(const nlohmann::json& j) {
  GridCell c;
  c.lr = j.at("lr").get<double>();
  c.lambda12 = j.at("lambda12").get<double>();
  c.lambda3 = j.at("lambda3").get<double>();
  c.expo_weight = j.at("expo_weight").get<double>();
  return c;
}

}  // namespace

std::string metric_report_to_json(const MetricReport& r) {
  return metric_report_json(r).dump(1);
}

MetricReport metric_report_from_json_text(const std::string& text) {
  return metric_report_from_json(nlohmann::json::parse(text));
}

std::string run_record_to_json(const RunRecord& r) {
  nlohmann::json j;
  j["schema"] = "idexpo.run/1";
  j["method"] = r.method;
  j["explainer"] = r.explainer;
  j["deletion"] = r.deletion;
  j["dataset_name"] = r.dataset_name;
  j["dataset_hash"] = r.dataset_hash;
  j["split_index"] = r.split_index;
  j["seed"] = r.seed;
  j["cell"] = grid_cell_json(r.cell);
  j["explainer_samples"] = r.num_samples;
  j["epsilon"] = r.epsilon;
  j["momentum"] = r.momentum;
  j["weight_decay"] = r.weight_decay;
  j["nesterov"] = r.nesterov;
  j["batch_size"] = r.batch_size;
  j["max_epochs"] = r.max_epochs;
  j["patience"] = r.patience;
  j["s_fraction"] = r.s_fraction;
  j["eta"] = r.eta;
  nlohmann::json epochs = nlohmann::json::array();
  for (const EpochStats& st : r.epochs) epochs.push_back(epoch_stats_json(st));
  j["epochs"] = std::move(epochs);
  j["best_epoch"] = r.best_epoch;
  j["val_at_best"] = epoch_stats_json(r.val_at_best);
  j["failed"] = r.failed;
  j["failure"] = r.failure;
  j["has_test"] = r.has_test;
  if (r.has_test) j["test"] = metric_report_json(r.test);
  return j.dump(1);
}

RunRecord run_record_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("schema", "") != "idexpo.run/1") {
    throw NumericalError("run_record_from_json: unknown schema");
  }
  RunRecord r;
  r.method = j.at("method").get<std::string>();
  r.explainer = j.at("explainer").get<std::string>();
  r.deletion = j.at("deletion").get<std::string>();
  r.dataset_name = j.at("dataset_name").get<std::string>();
  r.dataset_hash = j.at("dataset_hash").get<std::string>();
  r.split_index = j.at("split_index").get<int>();
  r.seed = j.at("seed").get<uint64_t>();
  r.cell = grid_cell_from_json(j.at("cell"));
  r.num_samples = j.at("explainer_samples").get<int>();
  r.epsilon = j.at("epsilon").get<double>();
  r.momentum = j.at("momentum").get<double>();
  r.weight_decay = j.at("weight_decay").get<double>();
  r.nesterov = j.at("nesterov").get<bool>();
  r.batch_size = j.at("batch_size").get<int>();
  r.max_epochs = j.at("max_epochs").get<int>();
  r.patience = j.at("patience").get<int>();
  r.s_fraction = j.at("s_fraction").get<double>();
  r.eta = j.at("eta").get<double>();
  for (const auto& e : j.at("epochs")) {
    r.epochs.push_back(epoch_stats_from_json(e));
  }
  r.best_epoch = j.at("best_epoch").get<int>();
  r.val_at_best = epoch_stats_from_json(j.at("val_at_best"));
  r.failed = j.at("failed").get<bool>();
  r.failure = j.at("failure").get<std::string>();
  r.has_test = j.at("has_test").get<bool>();
  if (r.has_test) r.test = metric_report_from_json(j.at("test"));
  return r;
}

void save_run_record(const RunRecord& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << run_record_to_json(r) << "\n";
}

RunRecord load_run_record(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return run_record_from_json(ss.str());
}

TrainConfig apply_cell(const TrainConfig& base, Method m, const GridCell& cell) {
  TrainConfig cfg = base;
  cfg.method = m;
  cfg.sgd.lr = cell.lr;
  cfg.lambda12 = cell.lambda12;
  cfg.lambda3 = cell.lambda3;
  cfg.expo_weight = cell.expo_weight;
  return cfg;
}

RunRecord make_run_record(const TrainConfig& cfg, const Dataset& ds,
                          int split_index, uint64_t seed, const GridCell& cell,
                          const TrainResult& result) {
  RunRecord r;
  r.method = method_to_string(cfg.method);
  r.explainer = explainer_kind_to_string(cfg.explainer.kind);
  r.deletion = deletion_variant_to_string(cfg.deletion);
  r.dataset_name = ds.name;
  r.dataset_hash = ds.hash;
  r.split_index = split_index;
  r.seed = seed;
  r.cell = cell;
  r.num_samples = cfg.explainer.num_samples;
  r.epsilon = cfg.explainer.epsilon;
  r.momentum = cfg.sgd.momentum;
  r.weight_decay = cfg.sgd.weight_decay;
  r.nesterov = cfg.sgd.nesterov;
  r.batch_size = cfg.batch_size;
  r.max_epochs = cfg.max_epochs;
  r.patience = cfg.patience;
  r.s_fraction = cfg.s_fraction;
  r.eta = cfg.eta;
  r.epochs = result.epochs;
  r.best_epoch = result.best_epoch;
  r.val_at_best = result.val_at_best;
  r.failed = result.failed;
  r.failure = result.failure;
  r.test = result.test;
  r.has_test = result.has_test;
  return r;
}

GridOutcome run_grid(const MlpModel& pretrained, const Dataset& ds,
                     const SplitSpec& split,
                     const std::vector<double>& background,
                     const TrainConfig& base_cfg, Method method, uint64_t seed,
                     int split_index, double selection_eta, int jobs) {
  std::vector<GridCell> cells = enumerate_grid(method);
  GridOutcome out;
  out.runs.resize(cells.size());
  out.records.resize(cells.size());
  out.models.resize(cells.size());

  auto run_cell = [&](size_t i) {
    TrainConfig cfg = apply_cell(base_cfg, method, cells[i]);
    TrainResult tr = finetune(pretrained, ds, split, background, cfg, seed);
    out.records[i] = make_run_record(cfg, ds, split_index, seed, cells[i], tr);
    out.models[i] = tr.model;
    GridRun gr;
    gr.cell = cells[i];
    gr.failed = tr.failed || tr.best_epoch < 0;
    gr.val_accuracy = tr.val_at_best.accuracy;
    gr.val_insertion = tr.val_at_best.insertion;
    gr.val_deletion = tr.val_at_best.deletion;
    out.runs[i] = gr;
  };

  if (jobs <= 1) {
    for (size_t i = 0; i < cells.size(); ++i) run_cell(i);
  } else {
    // Static stride split: cell i goes to thread i % jobs. Cells only read the
    // shared inputs and write disjoint slots, so no synchronization is needed.
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) {
      pool.emplace_back([&, t] {
        for (size_t i = size_t(t); i < cells.size(); i += size_t(jobs)) {
          run_cell(i);
        }
      });
    }
    for (std::thread& th : pool) th.join();
  }

  out.selected = grid_select(out.runs, selection_eta);
  return out;
}

}  // namespace idexpo
