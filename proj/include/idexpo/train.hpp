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

#ifndef IDEXPO_TRAIN_HPP_
#define IDEXPO_TRAIN_HPP_

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "idexpo/dataset.hpp"
#include "idexpo/explain.hpp"
#include "idexpo/metrics.hpp"
#include "idexpo/mlp.hpp"
#include "idexpo/rng.hpp"
#include "idexpo/tape.hpp"
#include "idexpo/tensor.hpp"

namespace idexpo {

// Fine-tuning objectives. kCeOnly is the baseline; kIdExpo adds the relaxed
// insertion/deletion penalties on the explanation; kExpoF penalizes local
// surrogate misfit; kExpoS penalizes output variance over the neighborhood.
enum class Method { kCeOnly, kIdExpo, kExpoF, kExpoS };

std::string method_to_string(Method m);
Method method_from_string(const std::string& name);

struct TrainConfig {
  Method method = Method::kIdExpo;
  ExplainConfig explainer;
  DeletionVariant deletion = DeletionVariant::kA;
  double lambda12 = 0.1;     // weight shared by the insertion and deletion terms
  double lambda3 = 0.001;    // weight of ||phi||^2
  double expo_weight = 0.01; // weight of the kExpoF / kExpoS penalty
  SgdConfig sgd;
  int batch_size = 128;
  int max_epochs = 200;
  int patience = 20;
  double s_fraction = 0.5;
  double eta = 2.0;          // accuracy weight in the validation score
};

// Node handles into one sample's loss graph. Unused parts stay kNoNode.
// The cross-entropy subgraph is always built first, so its node ids form an
// identical prefix for every method; with all regularizer weights at zero the
// extra branches contribute exactly zero to the loss and signed zeros to the
// gradients, which keeps kCeOnly and a zero-weight kIdExpo run bitwise equal.
struct SampleLoss {
  NodeId loss = kNoNode;
  NodeId ce = kNoNode;
  NodeId log_fx = kNoNode;   // 1x1, log f(x)_y
  NodeId phi = kNoNode;      // 1xQ attribution (methods that explain)
  NodeId omega_ins = kNoNode;
  NodeId omega_del = kNoNode;
  NodeId expo = kNoNode;
};

// label is the true class of x_row; perturbation draws come from rng.
SampleLoss build_sample_loss(Tape& tape, const TapeParams& params,
                             const Tensor& x_row, int label,
                             const std::vector<double>& background,
                             const TrainConfig& cfg, SeedStream& rng);

// Strict-improvement patience counter.
struct EarlyStopState {
  double best = -std::numeric_limits<double>::infinity();
  int best_epoch = -1;  // index into the epoch history
  int since = 0;        // epochs since the last improvement
};

// Feeds one epoch's score; returns true when patience is exhausted. After the
// call, st.best_epoch == epoch exactly when this epoch improved.
bool early_stop_update(EarlyStopState& st, int epoch, double score, int patience);

struct PretrainConfig {
  SgdConfig sgd;
  int batch_size = 128;
  int max_epochs = 200;
  int patience = 20;
};

struct PretrainResult {
  MlpModel model;  // best validation-accuracy checkpoint
  std::vector<double> val_accuracy;  // one entry per trained epoch
  int best_epoch = -1;
  double best_val_accuracy = 0.0;
};

// Cross-entropy training from a fresh keyed initialization, early stopped on
// validation accuracy.
PretrainResult pretrain(const Dataset& ds, const SplitSpec& split,
                        const PretrainConfig& cfg, uint64_t seed);

// Validation metrics recorded after each fine-tuning epoch.
struct EpochStats {
  double accuracy = 0.0;
  double insertion = 0.0;
  double deletion = 0.0;
  double score = 0.0;  // valscore at the config's eta
};

struct TrainResult {
  MlpModel model;  // best checkpoint by validation score
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  EpochStats val_at_best;
  bool failed = false;
  std::string failure;
  MetricReport test;  // on the best checkpoint, with sensitivity
  bool has_test = false;
};

// Fine-tunes a copy of `base` on split.train with per-sample loss graphs,
// early stops on the validation score, then evaluates the best checkpoint on
// split.test. A non-finite sample loss aborts the run as failed.
TrainResult finetune(const MlpModel& base, const Dataset& ds,
                     const SplitSpec& split,
                     const std::vector<double>& background,
                     const TrainConfig& cfg, uint64_t seed);

// One hyperparameter setting. Fields that a method does not use stay zero.
struct GridCell {
  double lr = 0.0;
  double lambda12 = 0.0;
  double lambda3 = 0.0;
  double expo_weight = 0.0;
};

// The fixed search grid per method, in a stable enumeration order.
std::vector<GridCell> enumerate_grid(Method m);

// Validation summary of one grid cell.
struct GridRun {
  GridCell cell;
  bool failed = false;
  double val_accuracy = 0.0;
  double val_insertion = 0.0;
  double val_deletion = 0.0;
};

// Index of the best non-failed cell by valscore at eta. Ties prefer higher
// accuracy, then a smaller lambda12, then the earlier cell. -1 if every cell
// failed.
int grid_select(const std::vector<GridRun>& runs, double eta);

// Everything needed to reproduce and report one fine-tuning run.
struct RunRecord {
  std::string method;
  std::string explainer;
  std::string deletion;
  std::string dataset_name;
  std::string dataset_hash;
  int split_index = 0;
  uint64_t seed = 0;
  GridCell cell;
  int num_samples = 200;   // explainer neighborhood size
  double epsilon = 0.01;   // explainer ridge
  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool nesterov = true;
  int batch_size = 128;
  int max_epochs = 200;
  int patience = 20;
  double s_fraction = 0.5;
  double eta = 2.0;
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  EpochStats val_at_best;
  bool failed = false;
  std::string failure;
  MetricReport test;
  bool has_test = false;
};

std::string run_record_to_json(const RunRecord& r);
RunRecord run_record_from_json(const std::string& text);
void save_run_record(const RunRecord& r, const std::string& path);
RunRecord load_run_record(const std::string& path);

// Standalone metric report serialization (the evaluate command's output).
std::string metric_report_to_json(const MetricReport& r);
MetricReport metric_report_from_json_text(const std::string& text);

// Applies a grid cell to a base config and packs a finetune result into a
// record; the glue shared by the command line driver and the experiment suite.
TrainConfig apply_cell(const TrainConfig& base, Method m, const GridCell& cell);
RunRecord make_run_record(const TrainConfig& cfg, const Dataset& ds,
                          int split_index, uint64_t seed, const GridCell& cell,
                          const TrainResult& result);

struct GridOutcome {
  std::vector<GridRun> runs;
  std::vector<RunRecord> records;  // aligned with runs
  std::vector<MlpModel> models;    // best checkpoint per cell
  int selected = -1;
};

// Fine-tunes every cell of the method's grid from the same pretrained model
// and picks the winner at selection_eta. Cells are independent; with jobs > 1
// they run on that many threads.
GridOutcome run_grid(const MlpModel& pretrained, const Dataset& ds,
                     const SplitSpec& split,
                     const std::vector<double>& background,
                     const TrainConfig& base_cfg, Method method, uint64_t seed,
                     int split_index, double selection_eta, int jobs = 1);

}  // namespace idexpo

#endif  // IDEXPO_TRAIN_HPP_
