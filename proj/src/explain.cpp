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

#include "idexpo/explain.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace idexpo {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

int coalition_size(const Tensor& z, int row) {
  int k = 0;
  for (int c = 0; c < z.cols(); ++c) k += z.at(row, c) == 1.0 ? 1 : 0;
  return k;
}

// Exact binomial coefficient in extended precision; Q stays small enough that
// no term leaves long double range.
long double comb(int n, int k) {
  if (k < 0 || k > n) return 0.0L;
  if (k > n - k) k = n - k;
  long double r = 1.0L;
  for (int i = 1; i <= k; ++i) {
    r = r * (long double)(n - k + i) / (long double)i;
  }
  return r;
}

// Factored A = Zt K Z + eps I with a dense fallback for the ridge-free case.
struct WlsSystem {
  Eigen::MatrixXd zw;  // K Z, M x Q
  Eigen::LLT<Eigen::MatrixXd> llt;
  Eigen::FullPivLU<Eigen::MatrixXd> lu;
  bool use_lu = false;

  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const {
    if (use_lu) return lu.solve(rhs);
    return llt.solve(rhs);
  }
};

WlsSystem factor_wls(const Tensor& z, const std::vector<double>& weights,
                     double epsilon) {
  const int m = z.rows();
  const int q = z.cols();
  if (m < 1 || q < 1) throw ShapeError("solve_wls: empty coalition matrix");
  if (int(weights.size()) != m) {
    throw ShapeError("solve_wls: " + std::to_string(weights.size()) +
                     " weights for " + std::to_string(m) + " rows");
  }
  if (epsilon < 0.0) throw std::invalid_argument("solve_wls: epsilon < 0");
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw NumericalError("solve_wls: weights must be finite and nonnegative");
    }
  }

  WlsSystem sys;
  Eigen::Map<const RowMat> zm(z.data(), m, q);
  sys.zw = zm;
  for (int r = 0; r < m; ++r) sys.zw.row(r) *= weights[size_t(r)];
  Eigen::MatrixXd a = zm.transpose() * sys.zw;
  a.diagonal().array() += epsilon;

  sys.llt.compute(a);
  if (sys.llt.info() != Eigen::Success) {
    sys.lu.compute(a);
    sys.use_lu = true;
    if (!sys.lu.isInvertible()) {
      throw NumericalError("solve_wls: singular system; raise epsilon");
    }
  }
  return sys;
}

}  // namespace

std::string explainer_kind_to_string(ExplainerKind kind) {
  switch (kind) {
    case ExplainerKind::kLime:
      return "lime";
    case ExplainerKind::kKernelShap:
      return "kernelshap";
  }
  throw std::invalid_argument("explainer_kind_to_string: bad kind");
}

ExplainerKind explainer_kind_from_string(const std::string& name) {
  if (name == "lime") return ExplainerKind::kLime;
  if (name == "kernelshap") return ExplainerKind::kKernelShap;
  throw std::invalid_argument("unknown explainer '" + name +
                              "' (expected lime or kernelshap)");
}

PerturbationSet generate_perturbations(const Tensor& x_row,
                                       const std::vector<double>& background,
                                       int num_samples, SeedStream& rng) {
  if (x_row.rows() != 1) {
    throw ShapeError("generate_perturbations: expected a single row, got " +
                     x_row.shape_str());
  }
  const int q = x_row.cols();
  if (q < 2) {
    throw ShapeError(
        "generate_perturbations: need at least 2 features to form "
        "informative coalitions");
  }
  if (int(background.size()) != q) {
    throw ShapeError("generate_perturbations: background size " +
                     std::to_string(background.size()) + " vs " +
                     std::to_string(q) + " features");
  }
  if (num_samples < 1) {
    throw std::invalid_argument("generate_perturbations: num_samples < 1");
  }

  PerturbationSet out;
  out.z = Tensor(num_samples, q);
  out.masked = Tensor(num_samples, q);
  std::vector<uint64_t> bits(static_cast<size_t>(q));
  for (int r = 0; r < num_samples; ++r) {
    int ones = 0;
    int attempts = 0;
    do {
      if (++attempts > 10000) {
        throw NumericalError("generate_perturbations: resample cap reached");
      }
      ones = 0;
      for (int c = 0; c < q; ++c) {
        bits[size_t(c)] = rng.bernoulli_bit();
        ones += int(bits[size_t(c)]);
      }
    } while (ones == 0 || ones == q);
    for (int c = 0; c < q; ++c) {
      bool on = bits[size_t(c)] != 0;
      out.z.at(r, c) = on ? 1.0 : 0.0;
      out.masked.at(r, c) = on ? x_row.at(0, c) : background[size_t(c)];
    }
  }
  return out;
}

std::vector<double> cosine_kernel_weights(const Tensor& z) {
  const int q = z.cols();
  std::vector<double> w(size_t(z.rows()));
  for (int r = 0; r < z.rows(); ++r) {
    w[size_t(r)] = std::sqrt(double(coalition_size(z, r)) / double(q));
  }
  return w;
}

std::vector<double> shapley_kernel_weights(const Tensor& z) {
  const int q = z.cols();
  std::vector<double> w(size_t(z.rows()));
  for (int r = 0; r < z.rows(); ++r) {
    int k = coalition_size(z, r);
    if (k == 0 || k == q) {
      throw NumericalError(
          "shapley_kernel_weights: empty or full coalition has infinite "
          "weight");
    }
    long double denom = comb(q, k) * (long double)k * (long double)(q - k);
    w[size_t(r)] = double((long double)(q - 1) / denom);
  }
  return w;
}

std::vector<double> kernel_weights(ExplainerKind kind, const Tensor& z) {
  switch (kind) {
    case ExplainerKind::kLime:
      return cosine_kernel_weights(z);
    case ExplainerKind::kKernelShap:
      return shapley_kernel_weights(z);
  }
  throw std::invalid_argument("kernel_weights: bad kind");
}

Tensor solve_wls(const Tensor& z, const std::vector<double>& weights,
                 const Tensor& f, double epsilon) {
  const int m = z.rows();
  const int q = z.cols();
  if (!((f.rows() == m && f.cols() == 1) || (f.rows() == 1 && f.cols() == m))) {
    throw ShapeError("solve_wls: f shape " + f.shape_str() + " vs " +
                     std::to_string(m) + " rows");
  }
  WlsSystem sys = factor_wls(z, weights, epsilon);
  Eigen::VectorXd fv(m);
  for (int r = 0; r < m; ++r) fv(r) = f[size_t(r)];
  Eigen::VectorXd rhs = sys.zw.transpose() * fv;
  Eigen::VectorXd phi = sys.solve(rhs);
  Tensor out(1, q);
  for (int c = 0; c < q; ++c) out.at(0, c) = phi(c);
  if (!out.all_finite()) throw NumericalError("solve_wls: non-finite result");
  return out;
}

Tensor wls_weight_matrix(const Tensor& z, const std::vector<double>& weights,
                         double epsilon) {
  const int m = z.rows();
  const int q = z.cols();
  WlsSystem sys = factor_wls(z, weights, epsilon);
  // A is symmetric, so (A^{-1} (K Z)^t)^t = K Z A^{-1}.
  Eigen::MatrixXd solved = sys.solve(sys.zw.transpose());
  Tensor out(m, q);
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < q; ++c) out.at(r, c) = solved(c, r);
  }
  if (!out.all_finite()) {
    throw NumericalError("wls_weight_matrix: non-finite result");
  }
  return out;
}

Tensor explain_with_perturbations(const MlpModel& model,
                                  const PerturbationSet& pert,
                                  const std::vector<double>& weights, int label,
                                  double epsilon) {
  if (label < 0 || label >= model.num_classes()) {
    throw std::invalid_argument("explain: label out of range");
  }
  Tensor probs = predict_proba(model, pert.masked);
  Tensor f(pert.z.rows(), 1);
  for (int r = 0; r < pert.z.rows(); ++r) f.at(r, 0) = probs.at(r, label);
  return solve_wls(pert.z, weights, f, epsilon);
}

Tensor explain(const MlpModel& model, const Tensor& x_row,
               const std::vector<double>& background, int label,
               const ExplainConfig& cfg, SeedStream& rng) {
  PerturbationSet pert =
      generate_perturbations(x_row, background, cfg.num_samples, rng);
  std::vector<double> w = kernel_weights(cfg.kind, pert.z);
  return explain_with_perturbations(model, pert, w, label, cfg.epsilon);
}

TapeExplanation explain_on_tape(Tape& tape, const TapeParams& params,
                                const PerturbationSet& pert,
                                const std::vector<double>& weights, int label,
                                double epsilon) {
  const int m = pert.z.rows();
  NodeId masked = tape.constant(pert.masked);
  NodeId logits = forward_logits_on_tape(tape, params, masked);
  NodeId probs = tape.softmax(logits);
  std::vector<std::pair<int, int>> entries;
  entries.reserve(size_t(m));
  for (int r = 0; r < m; ++r) entries.emplace_back(r, label);
  NodeId f_tilde = tape.select(probs, entries, /*as_row=*/true);
  Tensor w_matrix = wls_weight_matrix(pert.z, weights, epsilon);
  NodeId phi = tape.matmul(f_tilde, tape.constant(w_matrix));
  return TapeExplanation{phi, f_tilde};
}

}  // namespace idexpo
