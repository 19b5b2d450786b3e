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

#ifndef IDEXPO_MLP_HPP_
#define IDEXPO_MLP_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "idexpo/tape.hpp"
#include "idexpo/tensor.hpp"

namespace idexpo {

// Fully connected ReLU network with a softmax head. Weights are stored as
// in x out matrices so a batch of row vectors flows left to right.
struct MlpModel {
  std::vector<int> dims;     // [input, hidden..., classes]
  std::vector<Tensor> w;     // per layer, dims[i] x dims[i+1]
  std::vector<Tensor> b;     // per layer, 1 x dims[i+1]
  std::string data_hash;     // content hash of the ingested training data

  int input_dim() const { return dims.front(); }
  int num_classes() const { return dims.back(); }
  int num_layers() const { return int(w.size()); }
};

// Standard architecture: two hidden layers of 256 units. Weights and biases
// are drawn uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] from a stream keyed
// by (seed, layer), so the same seed always gives bitwise-identical models.
MlpModel init_model(int num_features, int num_classes, uint64_t seed);
// Arbitrary layer sizes, same init scheme (small models for tests).
MlpModel init_model_dims(const std::vector<int>& dims, uint64_t seed);

// Batch of row vectors in, logits / probabilities out.
Tensor forward_logits(const MlpModel& m, const Tensor& x);
Tensor predict_proba(const MlpModel& m, const Tensor& x);
std::vector<double> predict_proba_row(const MlpModel& m, const std::vector<double>& x);
int predict_label(const MlpModel& m, const std::vector<double>& x);

// -log p[y] from an already computed probability vector.
double cross_entropy(const std::vector<double>& probs, int y);
// -log softmax(logits)[y] straight from logits; never takes log of a clipped
// probability, so it stays finite for logits up to |1e3|.
double cross_entropy_from_logits(const Tensor& logits, int row, int y);

// Model parameters registered on a tape in layer order (w0, b0, w1, b1, ...).
struct TapeParams {
  std::vector<NodeId> ids;
  int num_layers = 0;
  NodeId w(int layer) const { return ids[size_t(layer) * 2]; }
  NodeId bias(int layer) const { return ids[size_t(layer) * 2 + 1]; }
};

// Owned copies (mutable, usable with check_gradients).
TapeParams bind_parameters(Tape& tape, const MlpModel& m);
// Borrowed views of the model's tensors; the model must stay alive and
// unmodified while the tape is used. The cheap path for per-sample tapes.
TapeParams bind_parameter_views(Tape& tape, const MlpModel& m);

NodeId forward_logits_on_tape(Tape& tape, const TapeParams& params, NodeId x);

// One SGD update with Nesterov momentum; weight decay is added to the
// gradient as decay * w and is not applied to biases.
struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool nesterov = true;
};

struct SgdState {
  std::vector<Tensor> velocity;  // aligned with (w0, b0, w1, b1, ...)
};

SgdState make_sgd_state(const MlpModel& m);
std::vector<Tensor> make_grad_accumulator(const MlpModel& m);
void sgd_step(MlpModel& m, SgdState& state, const std::vector<Tensor>& grads,
              const SgdConfig& cfg);

// JSON checkpoint with layer dims, flat row-major weights/biases, and the
// ingested data hash. Doubles round-trip exactly.
void save_model(const MlpModel& m, const std::string& path);
MlpModel load_model(const std::string& path);
std::string model_to_json(const MlpModel& m);
MlpModel model_from_json(const std::string& text);

}  // namespace idexpo

#endif  // IDEXPO_MLP_HPP_
