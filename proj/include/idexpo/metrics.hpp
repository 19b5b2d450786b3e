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

#ifndef IDEXPO_METRICS_HPP_
#define IDEXPO_METRICS_HPP_

#include <functional>
#include <vector>

#include "idexpo/dataset.hpp"
#include "idexpo/explain.hpp"
#include "idexpo/mlp.hpp"
#include "idexpo/rng.hpp"
#include "idexpo/tape.hpp"
#include "idexpo/tensor.hpp"

namespace idexpo {

// ---- attribution order helpers ----------------------------------------------

// s-th largest attribution value, 1-based. Duplicates count separately.
double sth_val(const std::vector<double>& phi, int s);

// Number of distinct values (exact comparison).
int unique_count(const std::vector<double>& phi);

// Indices of the s largest attributions, ties resolved toward the lower index.
std::vector<int> top_s_indices(const std::vector<double>& phi, int s);

// max(1, round(fraction * q)).
int s_from_fraction(int q, double fraction);

// ---- soft relaxation constants ----------------------------------------------

// Sigmoid sharpness (#distinct - 1) / (max - min); 1 when all values tie.
double temperature(const std::vector<double>& phi);

// Cut point between rank s and rank s+1. For s == Q the cut sits one average
// value-gap below the minimum so every feature lands on the keep side.
double threshold(const std::vector<double>& phi, int s);

// ---- hard ranking metrics ----------------------------------------------------

// Entry s-1 holds the model's `label` probability when only the top-s features
// keep their value and the rest are moved onto the background.
std::vector<double> hard_insertion_curve(const MlpModel& model,
                                         const Tensor& x_row,
                                         const std::vector<double>& phi,
                                         const std::vector<double>& background,
                                         int s_max, int label);

// Entry s-1 holds the probability when the top-s features are moved onto the
// background and the rest keep their value.
std::vector<double> hard_deletion_curve(const MlpModel& model,
                                        const Tensor& x_row,
                                        const std::vector<double>& phi,
                                        const std::vector<double>& background,
                                        int s_max, int label);

double hard_insertion(const MlpModel& model, const Tensor& x_row,
                      const std::vector<double>& phi,
                      const std::vector<double>& background, int s_max,
                      int label);

double hard_deletion(const MlpModel& model, const Tensor& x_row,
                     const std::vector<double>& phi,
                     const std::vector<double>& background, int s_max,
                     int label);

// ---- soft ranking surrogates --------------------------------------------------

// Plain (non-tape) relaxed curves. temp_scale multiplies the sharpness so the
// surrogate can be driven toward its hard limit in tests.
std::vector<double> soft_insertion_curve(const MlpModel& model,
                                         const Tensor& x_row,
                                         const std::vector<double>& phi,
                                         const std::vector<double>& background,
                                         int s_max, int label,
                                         double temp_scale = 1.0);

std::vector<double> soft_deletion_curve(const MlpModel& model,
                                        const Tensor& x_row,
                                        const std::vector<double>& phi,
                                        const std::vector<double>& background,
                                        int s_max, int label,
                                        double temp_scale = 1.0);

double soft_insertion_score(const MlpModel& model, const Tensor& x_row,
                            const std::vector<double>& phi,
                            const std::vector<double>& background, int s_max,
                            int label, double temp_scale = 1.0);

double soft_deletion_score(const MlpModel& model, const Tensor& x_row,
                           const std::vector<double>& phi,
                           const std::vector<double>& background, int s_max,
                           int label, double temp_scale = 1.0);

// ---- differentiable mask construction ----------------------------------------

// Rows s = 1..s_max of relaxed keep-top-s / drop-top-s inputs. The sharpness
// and cut points are captured from phi's current value and enter the graph as
// constants: gradients flow through the mask only via phi itself.
struct SoftMaskNodes {
  NodeId r;      // s_max x Q keep weights
  NodeId alpha;  // r.x + (1-r).b
  NodeId beta;   // r.b + (1-r).x
};

SoftMaskNodes soft_mask_nodes(Tape& tape, NodeId phi, const Tensor& x_row,
                              const std::vector<double>& background,
                              int s_max);

// Mean over s of -log f(alpha_s)_label (1x1 node).
NodeId omega_insertion(Tape& tape, const TapeParams& params, NodeId alpha,
                       int label);

enum class DeletionVariant { kA, kB, kC };

std::string deletion_variant_to_string(DeletionVariant v);
DeletionVariant deletion_variant_from_string(const std::string& name);

// Deletion penalty over the beta rows (1x1 node).
//   kA: mean_s log f(beta_s)_y - log f(x)_y  (needs log_fx)
//   kB: mean_s log f(beta_s)_y
//   kC: -mean_s log(1 - f(beta_s)_y), argument floored at 1e-12
NodeId omega_deletion(Tape& tape, const TapeParams& params, NodeId beta,
                      int label, DeletionVariant variant,
                      NodeId log_fx = kNoNode);

// ---- agreement between attribution and output changes -------------------------

struct SensitivityResult {
  double correlation = 0.0;
  bool degenerate = false;  // one side had zero variance; correlation forced 0
};

// Batch predictor: takes rows, returns one scalar output per row.
using RowPredictor = std::function<std::vector<double>(const Tensor&)>;

// Pearson correlation, over random feature subsets of the given size, between
// the summed attributions of the subset and the output drop caused by moving
// that subset onto the background.
SensitivityResult sensitivity_n(const RowPredictor& predict,
                                const Tensor& x_row,
                                const std::vector<double>& phi,
                                const std::vector<double>& background,
                                int subset_size, int num_subsets,
                                SeedStream& rng);

SensitivityResult sensitivity_n(const MlpModel& model, int label,
                                const Tensor& x_row,
                                const std::vector<double>& phi,
                                const std::vector<double>& background,
                                int subset_size, int num_subsets,
                                SeedStream& rng);

// ---- aggregate scoring ---------------------------------------------------------

// eta * accuracy + insertion + 1 - deletion.
double valscore(double accuracy, double insertion, double deletion, double eta);

struct EvalConfig {
  ExplainConfig explainer;
  double s_fraction = 0.5;
  double eta = 2.0;
  bool with_sensitivity = false;
  int sensitivity_subsets = 100;
  double sensitivity_fraction = 0.25;
};

struct MetricReport {
  double accuracy = 0.0;
  double insertion = 0.0;
  double deletion = 0.0;
  double score = 0.0;  // valscore at eta
  double eta = 2.0;
  double sensitivity = 0.0;
  bool has_sensitivity = false;
  int degenerate_sensitivity = 0;
  std::vector<double> insertion_curve;
  std::vector<double> deletion_curve;
  int s_max = 0;
  int num_samples = 0;
};

// Explains every listed row for its predicted class and scores the ranking.
// Accuracy is measured against the true labels. Each row draws its
// perturbations and subsets from streams keyed by the row index alone, so
// subsetting or reordering `rows` never changes a row's numbers.
MetricReport evaluate_model(const MlpModel& model, const Dataset& ds,
                            const std::vector<int>& rows,
                            const std::vector<double>& background,
                            const EvalConfig& cfg, uint64_t seed);

}  // namespace idexpo

#endif  // IDEXPO_METRICS_HPP_
