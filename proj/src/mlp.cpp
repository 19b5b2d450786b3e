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

#include "idexpo/mlp.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "idexpo/rng.hpp"
#include "json.hpp"

namespace idexpo {

namespace {

constexpr int kHiddenWidth = 256;

Tensor uniform_tensor(int rows, int cols, double bound, SeedStream& rng) {
  Tensor t(rows, cols);
  for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

MlpModel init_model_dims(const std::vector<int>& dims, uint64_t seed) {
  if (dims.size() < 2) throw ShapeError("init_model: need at least input and output dims");
  for (int d : dims) {
    if (d < 1) throw ShapeError("init_model: non-positive layer width");
  }
  MlpModel m;
  m.dims = dims;
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    SeedStream rng(seed, streams::kWeightInit, {uint64_t(l)});
    double bound = 1.0 / std::sqrt(double(dims[l]));
    m.w.push_back(uniform_tensor(dims[l], dims[l + 1], bound, rng));
    m.b.push_back(uniform_tensor(1, dims[l + 1], bound, rng));
  }
  return m;
}

MlpModel init_model(int num_features, int num_classes, uint64_t seed) {
  if (num_features < 1) throw ShapeError("init_model: need at least one feature");
  if (num_classes < 2) throw ShapeError("init_model: need at least two classes");
  return init_model_dims({num_features, kHiddenWidth, kHiddenWidth, num_classes}, seed);
}

Tensor forward_logits(const MlpModel& m, const Tensor& x) {
  if (x.cols() != m.input_dim()) {
    throw ShapeError("forward_logits: input width " + x.shape_str() + " vs model " +
                     std::to_string(m.input_dim()));
  }
  Tensor h = x;
  for (int l = 0; l < m.num_layers(); ++l) {
    h = add_rowvec(matmul(h, m.w[l]), m.b[l]);
    if (l + 1 < m.num_layers()) h = relu(h);
  }
  return h;
}

Tensor predict_proba(const MlpModel& m, const Tensor& x) {
  return softmax_rows(forward_logits(m, x));
}

std::vector<double> predict_proba_row(const MlpModel& m, const std::vector<double>& x) {
  return predict_proba(m, Tensor::row(x)).row_vector(0);
}

int predict_label(const MlpModel& m, const std::vector<double>& x) {
  Tensor logits = forward_logits(m, Tensor::row(x));
  return argmax_row(logits, 0);
}

double cross_entropy(const std::vector<double>& probs, int y) {
  if (y < 0 || size_t(y) >= probs.size()) throw ShapeError("cross_entropy: label out of range");
  return -std::log(probs[size_t(y)]);
}

double cross_entropy_from_logits(const Tensor& logits, int row, int y) {
  if (y < 0 || y >= logits.cols()) throw ShapeError("cross_entropy_from_logits: label range");
  Tensor lsm = log_softmax_rows(logits);
  return -lsm.at(row, y);
}

TapeParams bind_parameters(Tape& tape, const MlpModel& m) {
  TapeParams p;
  p.num_layers = m.num_layers();
  for (int l = 0; l < m.num_layers(); ++l) {
    p.ids.push_back(tape.parameter(m.w[l]));
    p.ids.push_back(tape.parameter(m.b[l]));
  }
  return p;
}

TapeParams bind_parameter_views(Tape& tape, const MlpModel& m) {
  TapeParams p;
  p.num_layers = m.num_layers();
  for (int l = 0; l < m.num_layers(); ++l) {
    p.ids.push_back(tape.parameter_view(&m.w[l]));
    p.ids.push_back(tape.parameter_view(&m.b[l]));
  }
  return p;
}

NodeId forward_logits_on_tape(Tape& tape, const TapeParams& params, NodeId x) {
  NodeId h = x;
  for (int l = 0; l < params.num_layers; ++l) {
    h = tape.add_rowvec(tape.matmul(h, params.w(l)), params.bias(l));
    if (l + 1 < params.num_layers) h = tape.relu(h);
  }
  return h;
}

SgdState make_sgd_state(const MlpModel& m) {
  SgdState s;
  for (int l = 0; l < m.num_layers(); ++l) {
    s.velocity.emplace_back(m.w[l].rows(), m.w[l].cols());
    s.velocity.emplace_back(1, m.b[l].cols());
  }
  return s;
}

std::vector<Tensor> make_grad_accumulator(const MlpModel& m) {
  std::vector<Tensor> g;
  for (int l = 0; l < m.num_layers(); ++l) {
    g.emplace_back(m.w[l].rows(), m.w[l].cols());
    g.emplace_back(1, m.b[l].cols());
  }
  return g;
}

void sgd_step(MlpModel& m, SgdState& state, const std::vector<Tensor>& grads,
              const SgdConfig& cfg) {
  size_t expected = size_t(m.num_layers()) * 2;
  if (grads.size() != expected || state.velocity.size() != expected) {
    throw ShapeError("sgd_step: gradient/state count mismatch");
  }
  for (size_t i = 0; i < expected; ++i) {
    bool is_weight = (i % 2 == 0);
    Tensor& p = is_weight ? m.w[i / 2] : m.b[i / 2];
    Tensor& v = state.velocity[i];
    const Tensor& g0 = grads[i];
    if (!p.same_shape(g0)) throw ShapeError("sgd_step: gradient shape mismatch");
    for (size_t k = 0; k < p.size(); ++k) {
      double g = g0[k];
      if (is_weight && cfg.weight_decay != 0.0) g += cfg.weight_decay * p[k];
      v[k] = cfg.momentum * v[k] + g;
      double step = cfg.nesterov ? g + cfg.momentum * v[k] : v[k];
      p[k] -= cfg.lr * step;
    }
  }
}

std::string model_to_json(const MlpModel& m) {
  nlohmann::json j;
  j["schema"] = "idexpo.model/1";
  j["dims"] = m.dims;
  j["data_hash"] = m.data_hash;
  nlohmann::json ws = nlohmann::json::array();
  nlohmann::json bs = nlohmann::json::array();
  for (int l = 0; l < m.num_layers(); ++l) {
    ws.push_back(m.w[l].raw());
    bs.push_back(m.b[l].raw());
  }
  j["weights"] = std::move(ws);
  j["biases"] = std::move(bs);
  return j.dump(1);
}

MlpModel model_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("schema", "") != "idexpo.model/1") {
    throw NumericalError("model_from_json: unknown schema");
  }
  MlpModel m;
  m.dims = j.at("dims").get<std::vector<int>>();
  m.data_hash = j.value("data_hash", "");
  auto ws = j.at("weights");
  auto bs = j.at("biases");
  if (ws.size() + 1 != m.dims.size() || bs.size() != ws.size()) {
    throw NumericalError("model_from_json: layer count mismatch");
  }
  for (size_t l = 0; l + 1 < m.dims.size(); ++l) {
    std::vector<double> wv = ws[l].get<std::vector<double>>();
    std::vector<double> bv = bs[l].get<std::vector<double>>();
    if (wv.size() != size_t(m.dims[l]) * m.dims[l + 1]) {
      throw NumericalError("model_from_json: weight size mismatch");
    }
    if (bv.size() != size_t(m.dims[l + 1])) {
      throw NumericalError("model_from_json: bias size mismatch");
    }
    Tensor w(m.dims[l], m.dims[l + 1]);
    w.raw().assign(wv.begin(), wv.end());
    Tensor b(1, m.dims[l + 1]);
    b.raw().assign(bv.begin(), bv.end());
    m.w.push_back(std::move(w));
    m.b.push_back(std::move(b));
  }
  return m;
}

void save_model(const MlpModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NumericalError("save_model: cannot open " + path);
  out << model_to_json(m) << "\n";
}

MlpModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NumericalError("load_model: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace idexpo
