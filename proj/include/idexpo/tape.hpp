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

#ifndef IDEXPO_TAPE_HPP_
#define IDEXPO_TAPE_HPP_

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "idexpo/tensor.hpp"

namespace idexpo {

using NodeId = int32_t;

// Marker for "no node" in optional node arguments.
inline constexpr NodeId kNoNode = -1;

enum class OpKind : uint8_t {
  kConstant,       // leaf, stop-gradient
  kParameter,      // leaf, owned value, gradient root
  kParameterView,  // leaf, borrowed value, gradient root
  kMatMul,
  kAdd,
  kSub,
  kMul,            // elementwise
  kScalarMul,      // by a fixed double
  kAddRowVec,      // bias broadcast over rows
  kRelu,
  kSigmoid,
  kLog,            // optional lower clamp on the argument
  kExp,
  kSum,            // full reduction to 1x1
  kMean,           // full reduction to 1x1
  kSoftmax,        // row-wise, log-sum-exp shifted
  kLogSoftmax,     // row-wise
  kSelect,         // gather a fixed (row, col) index set
};

// Define-by-run reverse-mode tape over Tensors. Forward values are computed
// eagerly at node construction, so a node's value can steer how the rest of
// the graph is built (the soft-mask thresholds are constants derived from the
// attribution node's value). Nodes only reference earlier nodes, which makes
// cycles impossible and gives backward a fixed reverse visitation order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves. parameter_view borrows storage that must outlive the tape and stay
  // unchanged between construction and the last backward/recompute call; use
  // it to share one model across many per-sample tapes without copying.
  NodeId constant(Tensor v);
  NodeId parameter(Tensor v);
  NodeId parameter_view(const Tensor* v);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scalar_mul(NodeId a, double s);
  NodeId add_rowvec(NodeId a, NodeId b);
  NodeId relu(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId log(NodeId a, double floor = 0.0);
  NodeId exp(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId softmax(NodeId a);
  NodeId log_softmax(NodeId a);
  // Gathers value[r, c] for each (r, c) in entries into a 1xK row (or Kx1
  // column). The index set is fixed at construction; backward routes each
  // output gradient to its source element (duplicates accumulate).
  NodeId select(NodeId a, std::vector<std::pair<int, int>> entries, bool as_row = true);

  const Tensor& value(NodeId id) const;
  bool requires_grad(NodeId id) const;
  size_t num_nodes() const { return nodes_.size(); }
  const std::vector<NodeId>& parameters() const { return params_; }

  // Gradients of a scalar loss for every parameter node reachable from it.
  // Unreachable parameters are omitted. Deterministic: the same graph yields
  // bitwise-identical gradients on every call.
  std::map<NodeId, Tensor> backward(NodeId loss) const;

  // acc[i] += scale * dloss/dparam_i, aligned with parameters() order. Used by
  // the training loop to accumulate per-sample gradients without copies.
  void backward_into(NodeId loss, double scale, std::vector<Tensor>& acc) const;

  // Overwrites an owned parameter's value (finite-difference probes).
  void set_parameter(NodeId id, int flat_index, double v);
  double get_parameter(NodeId id, int flat_index) const;

  // Re-runs every non-leaf forward in construction order with current leaf
  // values. Constants keep their stored values, so quantities captured as
  // stop-gradients stay fixed, matching what backward differentiates.
  void recompute();

 private:
  struct Node {
    OpKind kind;
    bool requires_grad = false;
    NodeId a = -1;
    NodeId b = -1;
    double scalar = 0.0;  // kScalarMul factor, kLog floor
    std::vector<std::pair<int, int>> sel;
    bool sel_as_row = true;
    Tensor value;
    const Tensor* view = nullptr;
  };

  const Tensor& node_value(const Node& n) const { return n.view ? *n.view : n.value; }
  NodeId push(Node n);
  NodeId unary(OpKind k, NodeId a, Tensor v, double scalar = 0.0);
  NodeId binary(OpKind k, NodeId a, NodeId b, Tensor v);
  Tensor eval(const Node& n) const;
  void check_id(NodeId id) const;
  void run_backward(NodeId loss, double seed, std::vector<Tensor>& grads,
                    std::vector<char>& has_grad) const;

  std::vector<Node> nodes_;
  std::vector<NodeId> params_;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  NodeId worst_param = -1;
  int worst_index = -1;
  bool pass = false;
};

// Central finite differences replayed on the graph itself: each owned
// parameter element is nudged by +/-step and every downstream value is
// recomputed while constants (including captured stop-gradient values) stay
// fixed. Relative error uses max(1, |analytic|, |numeric|) as the scale.
// Requires every parameter on the tape to be owned (not a view).
GradCheckResult check_gradients(Tape& tape, NodeId loss, double step, double tolerance);

}  // namespace idexpo

#endif  // IDEXPO_TAPE_HPP_
