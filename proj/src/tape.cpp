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

#include "idexpo/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace idexpo {

void Tape::check_id(NodeId id) const {
  if (id < 0 || size_t(id) >= nodes_.size()) {
    throw ShapeError("Tape: node id out of range");
  }
}

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return NodeId(nodes_.size() - 1);
}

NodeId Tape::constant(Tensor v) {
  Node n;
  n.kind = OpKind::kConstant;
  n.value = std::move(v);
  return push(std::move(n));
}

NodeId Tape::parameter(Tensor v) {
  if (v.empty()) throw ShapeError("Tape::parameter: unbound (empty) value");
  Node n;
  n.kind = OpKind::kParameter;
  n.requires_grad = true;
  n.value = std::move(v);
  NodeId id = push(std::move(n));
  params_.push_back(id);
  return id;
}

NodeId Tape::parameter_view(const Tensor* v) {
  if (v == nullptr || v->empty()) {
    throw ShapeError("Tape::parameter_view: unbound parameter storage");
  }
  Node n;
  n.kind = OpKind::kParameterView;
  n.requires_grad = true;
  n.view = v;
  NodeId id = push(std::move(n));
  params_.push_back(id);
  return id;
}

NodeId Tape::unary(OpKind k, NodeId a, Tensor v, double scalar) {
  check_id(a);
  Node n;
  n.kind = k;
  n.a = a;
  n.scalar = scalar;
  n.requires_grad = nodes_[a].requires_grad;
  n.value = std::move(v);
  return push(std::move(n));
}

NodeId Tape::binary(OpKind k, NodeId a, NodeId b, Tensor v) {
  check_id(a);
  check_id(b);
  Node n;
  n.kind = k;
  n.a = a;
  n.b = b;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  n.value = std::move(v);
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  return binary(OpKind::kMatMul, a, b, idexpo::matmul(node_value(nodes_[a]), node_value(nodes_[b])));
}

NodeId Tape::add(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  return binary(OpKind::kAdd, a, b, idexpo::add(node_value(nodes_[a]), node_value(nodes_[b])));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  return binary(OpKind::kSub, a, b, idexpo::sub(node_value(nodes_[a]), node_value(nodes_[b])));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  return binary(OpKind::kMul, a, b, idexpo::mul(node_value(nodes_[a]), node_value(nodes_[b])));
}

NodeId Tape::scalar_mul(NodeId a, double s) {
  check_id(a);
  return unary(OpKind::kScalarMul, a, idexpo::scalar_mul(node_value(nodes_[a]), s), s);
}

NodeId Tape::add_rowvec(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  return binary(OpKind::kAddRowVec, a, b,
                idexpo::add_rowvec(node_value(nodes_[a]), node_value(nodes_[b])));
}

NodeId Tape::relu(NodeId a) {
  check_id(a);
  return unary(OpKind::kRelu, a, idexpo::relu(node_value(nodes_[a])));
}

NodeId Tape::sigmoid(NodeId a) {
  check_id(a);
  return unary(OpKind::kSigmoid, a, idexpo::sigmoid(node_value(nodes_[a])));
}

NodeId Tape::log(NodeId a, double floor) {
  check_id(a);
  return unary(OpKind::kLog, a, idexpo::log_elem(node_value(nodes_[a]), floor), floor);
}

NodeId Tape::exp(NodeId a) {
  check_id(a);
  return unary(OpKind::kExp, a, idexpo::exp_elem(node_value(nodes_[a])));
}

NodeId Tape::sum(NodeId a) {
  check_id(a);
  Tensor v(1, 1);
  v[0] = sum_all(node_value(nodes_[a]));
  return unary(OpKind::kSum, a, std::move(v));
}

NodeId Tape::mean(NodeId a) {
  check_id(a);
  Tensor v(1, 1);
  v[0] = mean_all(node_value(nodes_[a]));
  return unary(OpKind::kMean, a, std::move(v));
}

NodeId Tape::softmax(NodeId a) {
  check_id(a);
  return unary(OpKind::kSoftmax, a, softmax_rows(node_value(nodes_[a])));
}

NodeId Tape::log_softmax(NodeId a) {
  check_id(a);
  return unary(OpKind::kLogSoftmax, a, log_softmax_rows(node_value(nodes_[a])));
}

NodeId Tape::select(NodeId a, std::vector<std::pair<int, int>> entries, bool as_row) {
  check_id(a);
  const Tensor& src = node_value(nodes_[a]);
  for (const auto& [r, c] : entries) {
    if (r < 0 || r >= src.rows() || c < 0 || c >= src.cols()) {
      throw ShapeError("Tape::select: index out of range");
    }
  }
  int k = int(entries.size());
  Tensor v = as_row ? Tensor(1, k) : Tensor(k, 1);
  for (int i = 0; i < k; ++i) v[i] = src.at(entries[i].first, entries[i].second);
  Node n;
  n.kind = OpKind::kSelect;
  n.a = a;
  n.requires_grad = nodes_[a].requires_grad;
  n.sel = std::move(entries);
  n.sel_as_row = as_row;
  n.value = std::move(v);
  return push(std::move(n));
}

const Tensor& Tape::value(NodeId id) const {
  check_id(id);
  return node_value(nodes_[id]);
}

bool Tape::requires_grad(NodeId id) const {
  check_id(id);
  return nodes_[id].requires_grad;
}

Tensor Tape::eval(const Node& n) const {
  const Tensor& a = node_value(nodes_[n.a]);
  switch (n.kind) {
    case OpKind::kMatMul:
      return idexpo::matmul(a, node_value(nodes_[n.b]));
    case OpKind::kAdd:
      return idexpo::add(a, node_value(nodes_[n.b]));
    case OpKind::kSub:
      return idexpo::sub(a, node_value(nodes_[n.b]));
    case OpKind::kMul:
      return idexpo::mul(a, node_value(nodes_[n.b]));
    case OpKind::kScalarMul:
      return idexpo::scalar_mul(a, n.scalar);
    case OpKind::kAddRowVec:
      return idexpo::add_rowvec(a, node_value(nodes_[n.b]));
    case OpKind::kRelu:
      return idexpo::relu(a);
    case OpKind::kSigmoid:
      return idexpo::sigmoid(a);
    case OpKind::kLog:
      return log_elem(a, n.scalar);
    case OpKind::kExp:
      return exp_elem(a);
    case OpKind::kSum: {
      Tensor v(1, 1);
      v[0] = sum_all(a);
      return v;
    }
    case OpKind::kMean: {
      Tensor v(1, 1);
      v[0] = mean_all(a);
      return v;
    }
    case OpKind::kSoftmax:
      return softmax_rows(a);
    case OpKind::kLogSoftmax:
      return log_softmax_rows(a);
    case OpKind::kSelect: {
      int k = int(n.sel.size());
      Tensor v = n.sel_as_row ? Tensor(1, k) : Tensor(k, 1);
      for (int i = 0; i < k; ++i) v[i] = a.at(n.sel[i].first, n.sel[i].second);
      return v;
    }
    default:
      throw ShapeError("Tape::eval: leaf node");
  }
}

void Tape::recompute() {
  for (Node& n : nodes_) {
    switch (n.kind) {
      case OpKind::kConstant:
      case OpKind::kParameter:
      case OpKind::kParameterView:
        break;
      default:
        n.value = eval(n);
    }
  }
}

void Tape::set_parameter(NodeId id, int flat_index, double v) {
  check_id(id);
  Node& n = nodes_[id];
  if (n.kind != OpKind::kParameter) {
    throw ShapeError("Tape::set_parameter: node is not an owned parameter");
  }
  n.value[size_t(flat_index)] = v;
}

double Tape::get_parameter(NodeId id, int flat_index) const {
  check_id(id);
  const Node& n = nodes_[id];
  if (n.kind != OpKind::kParameter) {
    throw ShapeError("Tape::get_parameter: node is not an owned parameter");
  }
  return n.value[size_t(flat_index)];
}

void Tape::run_backward(NodeId loss, double seed, std::vector<Tensor>& grads,
                        std::vector<char>& has_grad) const {
  check_id(loss);
  const Tensor& lv = node_value(nodes_[loss]);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("Tape::backward: loss must be a 1x1 scalar, got " + lv.shape_str());
  }
  grads.assign(nodes_.size(), Tensor());
  has_grad.assign(nodes_.size(), 0);

  auto ensure = [&](NodeId id) -> Tensor& {
    if (!has_grad[id]) {
      const Tensor& v = node_value(nodes_[id]);
      grads[id] = Tensor(v.rows(), v.cols());
      has_grad[id] = 1;
    }
    return grads[id];
  };

  if (!nodes_[loss].requires_grad) return;
  ensure(loss)[0] = seed;

  for (NodeId id = loss; id >= 0; --id) {
    const Node& n = nodes_[id];
    if (!has_grad[id] || !n.requires_grad) continue;
    const Tensor& g = grads[id];
    switch (n.kind) {
      case OpKind::kConstant:
      case OpKind::kParameter:
      case OpKind::kParameterView:
        break;
      case OpKind::kMatMul: {
        const Node& na = nodes_[n.a];
        const Node& nb = nodes_[n.b];
        if (na.requires_grad) axpy(ensure(n.a), matmul_nt(g, node_value(nb)));
        if (nb.requires_grad) axpy(ensure(n.b), matmul_tn(node_value(na), g));
        break;
      }
      case OpKind::kAdd: {
        if (nodes_[n.a].requires_grad) axpy(ensure(n.a), g);
        if (nodes_[n.b].requires_grad) axpy(ensure(n.b), g);
        break;
      }
      case OpKind::kSub: {
        if (nodes_[n.a].requires_grad) axpy(ensure(n.a), g);
        if (nodes_[n.b].requires_grad) axpy(ensure(n.b), g, -1.0);
        break;
      }
      case OpKind::kMul: {
        if (nodes_[n.a].requires_grad) axpy(ensure(n.a), idexpo::mul(g, node_value(nodes_[n.b])));
        if (nodes_[n.b].requires_grad) axpy(ensure(n.b), idexpo::mul(g, node_value(nodes_[n.a])));
        break;
      }
      case OpKind::kScalarMul: {
        if (nodes_[n.a].requires_grad) axpy(ensure(n.a), g, n.scalar);
        break;
      }
      case OpKind::kAddRowVec: {
        if (nodes_[n.a].requires_grad) axpy(ensure(n.a), g);
        if (nodes_[n.b].requires_grad) axpy(ensure(n.b), col_sums(g));
        break;
      }
      case OpKind::kRelu: {
        if (!nodes_[n.a].requires_grad) break;
        const Tensor& x = node_value(nodes_[n.a]);
        Tensor& da = ensure(n.a);
        for (size_t i = 0; i < x.size(); ++i) {
          if (x[i] > 0.0) da[i] += g[i];
        }
        break;
      }
      case OpKind::kSigmoid: {
        if (!nodes_[n.a].requires_grad) break;
        const Tensor& y = n.value;
        Tensor& da = ensure(n.a);
        for (size_t i = 0; i < y.size(); ++i) da[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case OpKind::kLog: {
        if (!nodes_[n.a].requires_grad) break;
        const Tensor& x = node_value(nodes_[n.a]);
        Tensor& da = ensure(n.a);
        for (size_t i = 0; i < x.size(); ++i) {
          // Clamped entries are flat: no gradient flows back through them.
          if (n.scalar > 0.0 && x[i] < n.scalar) continue;
          da[i] += g[i] / x[i];
        }
        break;
      }
      case OpKind::kExp: {
        if (!nodes_[n.a].requires_grad) break;
        Tensor& da = ensure(n.a);
        const Tensor& y = n.value;
        for (size_t i = 0; i < y.size(); ++i) da[i] += g[i] * y[i];
        break;
      }
      case OpKind::kSum: {
        if (!nodes_[n.a].requires_grad) break;
        Tensor& da = ensure(n.a);
        double s = g[0];
        for (size_t i = 0; i < da.size(); ++i) da[i] += s;
        break;
      }
      case OpKind::kMean: {
        if (!nodes_[n.a].requires_grad) break;
        Tensor& da = ensure(n.a);
        double s = g[0] / double(da.size());
        for (size_t i = 0; i < da.size(); ++i) da[i] += s;
        break;
      }
      case OpKind::kSoftmax: {
        if (!nodes_[n.a].requires_grad) break;
        const Tensor& y = n.value;
        Tensor& da = ensure(n.a);
        for (int r = 0; r < y.rows(); ++r) {
          double dot = 0.0;
          for (int c = 0; c < y.cols(); ++c) dot += g.at(r, c) * y.at(r, c);
          for (int c = 0; c < y.cols(); ++c) {
            da.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
          }
        }
        break;
      }
      case OpKind::kLogSoftmax: {
        if (!nodes_[n.a].requires_grad) break;
        const Tensor& y = n.value;
        Tensor& da = ensure(n.a);
        for (int r = 0; r < y.rows(); ++r) {
          double gsum = 0.0;
          for (int c = 0; c < y.cols(); ++c) gsum += g.at(r, c);
          for (int c = 0; c < y.cols(); ++c) {
            da.at(r, c) += g.at(r, c) - std::exp(y.at(r, c)) * gsum;
          }
        }
        break;
      }
      case OpKind::kSelect: {
        if (!nodes_[n.a].requires_grad) break;
        Tensor& da = ensure(n.a);
        for (size_t k = 0; k < n.sel.size(); ++k) {
          da.at(n.sel[k].first, n.sel[k].second) += g[k];
        }
        break;
      }
    }
  }
}

std::map<NodeId, Tensor> Tape::backward(NodeId loss) const {
  std::vector<Tensor> grads;
  std::vector<char> has_grad;
  run_backward(loss, 1.0, grads, has_grad);
  std::map<NodeId, Tensor> out;
  for (NodeId p : params_) {
    if (has_grad[p]) out.emplace(p, std::move(grads[p]));
  }
  return out;
}

void Tape::backward_into(NodeId loss, double scale, std::vector<Tensor>& acc) const {
  if (acc.size() != params_.size()) {
    throw ShapeError("Tape::backward_into: accumulator count mismatch");
  }
  std::vector<Tensor> grads;
  std::vector<char> has_grad;
  run_backward(loss, scale, grads, has_grad);
  for (size_t i = 0; i < params_.size(); ++i) {
    NodeId p = params_[i];
    if (has_grad[p]) axpy(acc[i], grads[p]);
  }
}

GradCheckResult check_gradients(Tape& tape, NodeId loss, double step, double tolerance) {
  if (step <= 0.0) throw ShapeError("check_gradients: step must be positive");
  std::map<NodeId, Tensor> analytic = tape.backward(loss);
  GradCheckResult res;
  for (NodeId p : tape.parameters()) {
    const Tensor& pv = tape.value(p);
    const Tensor* ag = nullptr;
    if (auto it = analytic.find(p); it != analytic.end()) ag = &it->second;
    for (int i = 0; i < int(pv.size()); ++i) {
      double orig = tape.get_parameter(p, i);
      tape.set_parameter(p, i, orig + step);
      tape.recompute();
      double up = tape.value(loss)[0];
      tape.set_parameter(p, i, orig - step);
      tape.recompute();
      double down = tape.value(loss)[0];
      tape.set_parameter(p, i, orig);
      double fd = (up - down) / (2.0 * step);
      double ad = ag ? (*ag)[i] : 0.0;
      double rel = std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_param = p;
        res.worst_index = i;
      }
    }
  }
  tape.recompute();
  res.pass = res.max_rel_error <= tolerance;
  return res;
}

}  // namespace idexpo
