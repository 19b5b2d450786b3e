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

#ifndef IDEXPO_EXPLAIN_HPP_
#define IDEXPO_EXPLAIN_HPP_

#include <string>
#include <vector>

#include "idexpo/mlp.hpp"
#include "idexpo/rng.hpp"
#include "idexpo/tape.hpp"
#include "idexpo/tensor.hpp"

namespace idexpo {

enum class ExplainerKind { kLime, kKernelShap };

std::string explainer_kind_to_string(ExplainerKind kind);
ExplainerKind explainer_kind_from_string(const std::string& name);

// A local neighborhood around one input row: binary coalition patterns and the
// corresponding mixed inputs z.x + (1-z).b.
struct PerturbationSet {
  Tensor z;       // M x Q, entries exactly 0.0 or 1.0
  Tensor masked;  // M x Q
};

// Draws M coalition rows with independent fair bits per feature. Rows that
// keep no feature or every feature carry no ranking information for the local
// model, so they are redrawn. Requires Q >= 2.
PerturbationSet generate_perturbations(const Tensor& x_row,
                                       const std::vector<double>& background,
                                       int num_samples, SeedStream& rng);

// w_m = sqrt(|z_m| / Q).
std::vector<double> cosine_kernel_weights(const Tensor& z);

// w_m = (Q - 1) / (C(Q, |z_m|) * |z_m| * (Q - |z_m|)).
std::vector<double> shapley_kernel_weights(const Tensor& z);

std::vector<double> kernel_weights(ExplainerKind kind, const Tensor& z);

// Solves (Zt K Z + eps I) phi = Zt K f for the attribution row phi (1 x Q).
// f may be M x 1 or 1 x M. Throws NumericalError if the system is singular.
Tensor solve_wls(const Tensor& z, const std::vector<double>& weights,
                 const Tensor& f, double epsilon);

// The matrix W = K Z (Zt K Z + eps I)^{-1} (M x Q), so that phi = f_row * W.
// W depends only on the coalitions and weights, never on model parameters.
Tensor wls_weight_matrix(const Tensor& z, const std::vector<double>& weights,
                         double epsilon);

struct ExplainConfig {
  ExplainerKind kind = ExplainerKind::kLime;
  int num_samples = 200;
  double epsilon = 0.01;
};

// Attribution for the model's `label` output using a prepared neighborhood.
Tensor explain_with_perturbations(const MlpModel& model,
                                  const PerturbationSet& pert,
                                  const std::vector<double>& weights, int label,
                                  double epsilon);

// Convenience wrapper: draw the neighborhood from `rng`, weight it per
// cfg.kind, and fit the local model.
Tensor explain(const MlpModel& model, const Tensor& x_row,
               const std::vector<double>& background, int label,
               const ExplainConfig& cfg, SeedStream& rng);

// Differentiable attribution: the masked rows and W enter the tape as
// constants, so gradients flow only through the model outputs f_tilde.
struct TapeExplanation {
  NodeId phi;      // 1 x Q
  NodeId f_tilde;  // 1 x M, model probability of `label` on each masked row
};

TapeExplanation explain_on_tape(Tape& tape, const TapeParams& params,
                                const PerturbationSet& pert,
                                const std::vector<double>& weights, int label,
                                double epsilon);

}  // namespace idexpo

#endif  // IDEXPO_EXPLAIN_HPP_
