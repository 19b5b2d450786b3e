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

#ifndef IDEXPO_TENSOR_HPP_
#define IDEXPO_TENSOR_HPP_

#include <cstddef>
#include <new>
#include <stdexcept>
#include <string>
#include <vector>

namespace idexpo {

// Places vector storage on a fixed 64 byte boundary. The numeric kernels pick
// their vector peeling from the buffer address, so a fixed boundary keeps
// results independent of the process's allocation history.
template <typename T, std::size_t kAlign>
struct AlignedAllocator {
  static_assert((kAlign & (kAlign - 1)) == 0, "alignment must be a power of two");
  using value_type = T;

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U, kAlign>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(kAlign)));
  }
  void deallocate(T* p, std::size_t n) noexcept {
    ::operator delete(p, n * sizeof(T), std::align_val_t(kAlign));
  }

  template <typename U>
  struct rebind {
    using other = AlignedAllocator<U, kAlign>;
  };
};

template <typename T, typename U, std::size_t kAlign>
bool operator==(const AlignedAllocator<T, kAlign>&, const AlignedAllocator<U, kAlign>&) {
  return true;
}
template <typename T, typename U, std::size_t kAlign>
bool operator!=(const AlignedAllocator<T, kAlign>&, const AlignedAllocator<U, kAlign>&) {
  return false;
}

using AlignedVector = std::vector<double, AlignedAllocator<double, 64>>;

// Thrown when an operation is asked to combine incompatible shapes or is
// otherwise misconfigured by the caller.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown when a numeric routine cannot produce a usable result
// (singular systems, non-finite inputs, failed decompositions).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles. Vectors are 1xN or Nx1 tensors.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols) : rows_(rows), cols_(cols), d_(size_t(rows) * cols, 0.0) {
    if (rows < 0 || cols < 0) throw ShapeError("Tensor: negative dimension");
  }

  static Tensor full(int rows, int cols, double v) {
    Tensor t(rows, cols);
    for (double& x : t.d_) x = v;
    return t;
  }
  static Tensor ones(int rows, int cols) { return full(rows, cols, 1.0); }
  static Tensor row(const std::vector<double>& v) {
    Tensor t(1, int(v.size()));
    t.d_.assign(v.begin(), v.end());
    return t;
  }
  static Tensor column(const std::vector<double>& v) {
    Tensor t(int(v.size()), 1);
    t.d_.assign(v.begin(), v.end());
    return t;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return d_.size(); }
  bool empty() const { return d_.empty(); }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& at(int r, int c) { return d_[size_t(r) * cols_ + c]; }
  double at(int r, int c) const { return d_[size_t(r) * cols_ + c]; }
  double& operator[](size_t i) { return d_[i]; }
  double operator[](size_t i) const { return d_[i]; }

  double* data() { return d_.data(); }
  const double* data() const { return d_.data(); }
  AlignedVector& raw() { return d_; }
  const AlignedVector& raw() const { return d_; }

  std::vector<double> row_vector(int r) const {
    return std::vector<double>(d_.begin() + size_t(r) * cols_,
                               d_.begin() + size_t(r + 1) * cols_);
  }

  std::string shape_str() const;
  bool all_finite() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  AlignedVector d_;
};

// Dense kernels. The tape and the plain inference paths both call these, so a
// value computed with or without gradient tracking is bitwise identical.
Tensor matmul(const Tensor& a, const Tensor& b);
// a^T * b and a * b^T without materializing the transpose.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double s);
// a (MxN) plus row vector b (1xN) added to every row.
Tensor add_rowvec(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);                  // overflow-safe on both tails
Tensor exp_elem(const Tensor& a);
// Natural log; when floor > 0 the argument is clamped below at floor first.
Tensor log_elem(const Tensor& a, double floor = 0.0);

double sum_all(const Tensor& a);
double mean_all(const Tensor& a);
Tensor col_sums(const Tensor& a);                 // 1xN column sums

// Row-wise softmax / log-softmax, shifted by the row max so they stay finite
// for logits up to at least |1e3|.
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);

// dst += s * src (shapes must match).
void axpy(Tensor& dst, const Tensor& src, double s = 1.0);

int argmax_row(const Tensor& a, int r);           // ties resolved to lowest index

Tensor transpose(const Tensor& a);

}  // namespace idexpo

#endif  // IDEXPO_TENSOR_HPP_
