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

#include "idexpo/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

namespace idexpo {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

CMap cmap(const Tensor& t) { return CMap(t.data(), t.rows(), t.cols()); }
MMap mmap(Tensor& t) { return MMap(t.data(), t.rows(), t.cols()); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  }
}

}  // namespace

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << rows_ << "x" << cols_;
  return os.str();
}

bool Tensor::all_finite() const {
  for (double x : d_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor out(a.rows(), b.cols());
  mmap(out).noalias() = cmap(a) * cmap(b);
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: inner dimensions " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor out(a.cols(), b.cols());
  mmap(out).noalias() = cmap(a).transpose() * cmap(b);
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: inner dimensions " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor out(a.rows(), b.rows());
  mmap(out).noalias() = cmap(a) * cmap(b).transpose();
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.rows(), a.cols());
  mmap(out) = cmap(a) + cmap(b);
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.rows(), a.cols());
  mmap(out) = cmap(a) - cmap(b);
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.rows(), a.cols());
  mmap(out) = cmap(a).cwiseProduct(cmap(b));
  return out;
}

Tensor scalar_mul(const Tensor& a, double s) {
  Tensor out(a.rows(), a.cols());
  mmap(out) = cmap(a) * s;
  return out;
}

Tensor add_rowvec(const Tensor& a, const Tensor& b) {
  if (b.rows() != 1 || b.cols() != a.cols()) {
    throw ShapeError("add_rowvec: " + a.shape_str() + " vs row " + b.shape_str());
  }
  Tensor out(a.rows(), a.cols());
  mmap(out) = cmap(a).rowwise() + cmap(b).row(0);
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  mmap(out) = cmap(a).cwiseMax(0.0);
  return out;
}

Tensor sigmoid(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (size_t i = 0; i < a.size(); ++i) {
    double z = a[i];
    if (z >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-z));
    } else {
      double e = std::exp(z);
      out[i] = e / (1.0 + e);
    }
  }
  return out;
}

Tensor exp_elem(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (size_t i = 0; i < a.size(); ++i) out[i] = std::exp(a[i]);
  return out;
}

Tensor log_elem(const Tensor& a, double floor) {
  Tensor out(a.rows(), a.cols());
  for (size_t i = 0; i < a.size(); ++i) {
    double x = a[i];
    if (floor > 0.0 && x < floor) x = floor;
    out[i] = std::log(x);
  }
  return out;
}

double sum_all(const Tensor& a) { return cmap(a).sum(); }

double mean_all(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean_all: empty tensor");
  return cmap(a).sum() / double(a.size());
}

Tensor col_sums(const Tensor& a) {
  Tensor out(1, a.cols());
  mmap(out) = cmap(a).colwise().sum();
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  Tensor out = log_softmax_rows(a);
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
  return out;
}

Tensor log_softmax_rows(const Tensor& a) {
  if (a.cols() == 0) throw ShapeError("log_softmax_rows: zero columns");
  Tensor out(a.rows(), a.cols());
  for (int r = 0; r < a.rows(); ++r) {
    double mx = a.at(r, 0);
    for (int c = 1; c < a.cols(); ++c) mx = std::max(mx, a.at(r, c));
    double acc = 0.0;
    for (int c = 0; c < a.cols(); ++c) acc += std::exp(a.at(r, c) - mx);
    double lse = mx + std::log(acc);
    for (int c = 0; c < a.cols(); ++c) out.at(r, c) = a.at(r, c) - lse;
  }
  return out;
}

void axpy(Tensor& dst, const Tensor& src, double s) {
  require_same_shape(dst, src, "axpy");
  mmap(dst) += cmap(src) * s;
}

int argmax_row(const Tensor& a, int r) {
  int best = 0;
  for (int c = 1; c < a.cols(); ++c) {
    if (a.at(r, c) > a.at(r, best)) best = c;
  }
  return best;
}

Tensor transpose(const Tensor& a) {
  Tensor out(a.cols(), a.rows());
  for (int r = 0; r < a.rows(); ++r) {
    for (int c = 0; c < a.cols(); ++c) out.at(c, r) = a.at(r, c);
  }
  return out;
}

}  // namespace idexpo
