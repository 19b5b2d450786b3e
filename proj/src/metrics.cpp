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

#include "idexpo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace idexpo {

namespace {

void check_inputs(const Tensor& x_row, const std::vector<double>& phi,
                  const std::vector<double>& background, int s_max) {
  if (x_row.rows() != 1) {
    throw ShapeError("expected a single input row, got " + x_row.shape_str());
  }
  const size_t q = size_t(x_row.cols());
  if (phi.size() != q || background.size() != q) {
    throw ShapeError("attribution/background length mismatch against " +
                     std::to_string(q) + " features");
  }
  if (s_max < 1 || s_max > int(q)) {
    throw std::invalid_argument("rank budget " + std::to_string(s_max) +
                                " outside 1.." + std::to_string(q));
  }
}

std::vector<double> label_column(const Tensor& probs, int label) {
  std::vector<double> out(size_t(probs.rows()));
  for (int r = 0; r < probs.rows(); ++r) out[size_t(r)] = probs.at(r, label);
  return out;
}

// The relaxed keep weights and mixed rows, built from the same kernel calls
// the tape version records so both paths produce identical numbers.
struct SoftRows {
  Tensor r;
  Tensor alpha;
  Tensor beta;
  Tensor t_rows;  // s_max x Q, row s filled with the cut point t_{s+1}
  double temp = 1.0;
};

SoftRows build_soft_rows(const Tensor& phi_row, const Tensor& x_row,
                         const std::vector<double>& background, int s_max,
                         double temp_scale) {
  const int q = phi_row.cols();
  std::vector<double> phi = phi_row.row_vector(0);
  SoftRows out;
  out.temp = temperature(phi) * temp_scale;
  out.t_rows = Tensor(s_max, q);
  for (int s = 1; s <= s_max; ++s) {
    double t = threshold(phi, s);
    for (int c = 0; c < q; ++c) out.t_rows.at(s - 1, c) = t;
  }
  Tensor ones_col = Tensor::full(s_max, 1, 1.0);
  Tensor phi_big = matmul(ones_col, phi_row);
  out.r = sigmoid(scalar_mul(sub(phi_big, out.t_rows), out.temp));

  Tensor x_big = matmul(ones_col, x_row);
  Tensor b_big = matmul(ones_col, Tensor::row(background));
  Tensor ones = Tensor::full(s_max, q, 1.0);
  Tensor keep = out.r;
  Tensor drop = sub(ones, out.r);
  out.alpha = add(mul(keep, x_big), mul(drop, b_big));
  out.beta = add(mul(keep, b_big), mul(drop, x_big));
  return out;
}

}  // namespace

double sth_val(const std::vector<double>& phi, int s) {
  if (s < 1 || s > int(phi.size())) {
    throw std::invalid_argument("sth_val: rank " + std::to_string(s) +
                                " outside 1.." + std::to_string(phi.size()));
  }
  std::vector<double> sorted = phi;
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  return sorted[size_t(s - 1)];
}

int unique_count(const std::vector<double>& phi) {
  if (phi.empty()) throw std::invalid_argument("unique_count: empty input");
  std::vector<double> sorted = phi;
  std::sort(sorted.begin(), sorted.end());
  int count = 1;
  for (size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i] != sorted[i - 1]) ++count;
  }
  return count;
}

std::vector<int> top_s_indices(const std::vector<double>& phi, int s) {
  if (s < 1 || s > int(phi.size())) {
    throw std::invalid_argument("top_s_indices: rank " + std::to_string(s) +
                                " outside 1.." + std::to_string(phi.size()));
  }
  std::vector<int> order(phi.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&phi](int a, int b) {
    return phi[size_t(a)] > phi[size_t(b)];
  });
  order.resize(size_t(s));
  return order;
}

int s_from_fraction(int q, double fraction) {
  if (q < 1) throw std::invalid_argument("s_from_fraction: q < 1");
  long s = std::lround(fraction * q);
  return int(std::min<long>(q, std::max<long>(1, s)));
}

double temperature(const std::vector<double>& phi) {
  int uc = unique_count(phi);
  if (uc == 1) return 1.0;
  auto [lo, hi] = std::minmax_element(phi.begin(), phi.end());
  return double(uc - 1) / (*hi - *lo);
}

double threshold(const std::vector<double>& phi, int s) {
  const int q = int(phi.size());
  if (s < 1 || s > q) {
    throw std::invalid_argument("threshold: rank " + std::to_string(s) +
                                " outside 1.." + std::to_string(q));
  }
  if (s < q) {
    std::vector<double> sorted = phi;
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    return 0.5 * (sorted[size_t(s - 1)] + sorted[size_t(s)]);
  }
  int uc = unique_count(phi);
  auto [lo, hi] = std::minmax_element(phi.begin(), phi.end());
  double step = uc > 1 ? (*hi - *lo) / double(uc - 1) : 0.0;
  return *lo - step;
}

std::vector<double> hard_insertion_curve(const MlpModel& model,
                                         const Tensor& x_row,
                                         const std::vector<double>& phi,
                                         const std::vector<double>& background,
                                         int s_max, int label) {
  check_inputs(x_row, phi, background, s_max);
  const int q = x_row.cols();
  std::vector<int> order = top_s_indices(phi, s_max);
  Tensor batch(s_max, q);
  std::vector<double> current = background;
  for (int s = 0; s < s_max; ++s) {
    current[size_t(order[size_t(s)])] = x_row.at(0, order[size_t(s)]);
    for (int c = 0; c < q; ++c) batch.at(s, c) = current[size_t(c)];
  }
  return label_column(predict_proba(model, batch), label);
}

std::vector<double> hard_deletion_curve(const MlpModel& model,
                                        const Tensor& x_row,
                                        const std::vector<double>& phi,
                                        const std::vector<double>& background,
                                        int s_max, int label) {
  check_inputs(x_row, phi, background, s_max);
  const int q = x_row.cols();
  std::vector<int> order = top_s_indices(phi, s_max);
  Tensor batch(s_max, q);
  std::vector<double> current = x_row.row_vector(0);
  for (int s = 0; s < s_max; ++s) {
    current[size_t(order[size_t(s)])] = background[size_t(order[size_t(s)])];
    for (int c = 0; c < q; ++c) batch.at(s, c) = current[size_t(c)];
  }
  return label_column(predict_proba(model, batch), label);
}

double hard_insertion(const MlpModel& model, const Tensor& x_row,
                      const std::vector<double>& phi,
                      const std::vector<double>& background, int s_max,
                      int label) {
  auto curve = hard_insertion_curve(model, x_row, phi, background, s_max, label);
  return std::accumulate(curve.begin(), curve.end(), 0.0) / double(curve.size());
}

double hard_deletion(const MlpModel& model, const Tensor& x_row,
                     const std::vector<double>& phi,
                     const std::vector<double>& background, int s_max,
                     int label) {
  auto curve = hard_deletion_curve(model, x_row, phi, background, s_max, label);
  return std::accumulate(curve.begin(), curve.end(), 0.0) / double(curve.size());
}

std::vector<double> soft_insertion_curve(const MlpModel& model,
                                         const Tensor& x_row,
                                         const std::vector<double>& phi,
                                         const std::vector<double>& background,
                                         int s_max, int label,
                                         double temp_scale) {
  check_inputs(x_row, phi, background, s_max);
  SoftRows rows = build_soft_rows(Tensor::row(phi), x_row, background, s_max,
                                  temp_scale);
  return label_column(predict_proba(model, rows.alpha), label);
}

std::vector<double> soft_deletion_curve(const MlpModel& model,
                                        const Tensor& x_row,
                                        const std::vector<double>& phi,
                                        const std::vector<double>& background,
                                        int s_max, int label,
                                        double temp_scale) {
  check_inputs(x_row, phi, background, s_max);
  SoftRows rows = build_soft_rows(Tensor::row(phi), x_row, background, s_max,
                                  temp_scale);
  return label_column(predict_proba(model, rows.beta), label);
}

double soft_insertion_score(const MlpModel& model, const Tensor& x_row,
                            const std::vector<double>& phi,
                            const std::vector<double>& background, int s_max,
                            int label, double temp_scale) {
  auto curve = soft_insertion_curve(model, x_row, phi, background, s_max, label,
                                    temp_scale);
  return std::accumulate(curve.begin(), curve.end(), 0.0) / double(curve.size());
}

double soft_deletion_score(const MlpModel& model, const Tensor& x_row,
                           const std::vector<double>& phi,
                           const std::vector<double>& background, int s_max,
                           int label, double temp_scale) {
  auto curve = soft_deletion_curve(model, x_row, phi, background, s_max, label,
                                   temp_scale);
  return std::accumulate(curve.begin(), curve.end(), 0.0) / double(curve.size());
}

SoftMaskNodes soft_mask_nodes(Tape& tape, NodeId phi, const Tensor& x_row,
                              const std::vector<double>& background,
                              int s_max) {
  const Tensor& phi_val = tape.value(phi);
  check_inputs(x_row, phi_val.row_vector(0), background, s_max);
  const int q = phi_val.cols();

  // Sharpness and cut points are functions of phi's current value only; they
  // are frozen into constants here, exactly like the plain builder above.
  SoftRows plain = build_soft_rows(phi_val, x_row, background, s_max, 1.0);

  NodeId ones_col = tape.constant(Tensor::full(s_max, 1, 1.0));
  NodeId phi_big = tape.matmul(ones_col, phi);
  NodeId t_const = tape.constant(plain.t_rows);
  NodeId r = tape.sigmoid(tape.scalar_mul(tape.sub(phi_big, t_const), plain.temp));

  NodeId x_big = tape.constant(matmul(Tensor::full(s_max, 1, 1.0), x_row));
  NodeId b_big = tape.constant(
      matmul(Tensor::full(s_max, 1, 1.0), Tensor::row(background)));
  NodeId ones = tape.constant(Tensor::full(s_max, q, 1.0));
  NodeId drop = tape.sub(ones, r);
  SoftMaskNodes out;
  out.r = r;
  out.alpha = tape.add(tape.mul(r, x_big), tape.mul(drop, b_big));
  out.beta = tape.add(tape.mul(r, b_big), tape.mul(drop, x_big));
  return out;
}

NodeId omega_insertion(Tape& tape, const TapeParams& params, NodeId alpha,
                       int label) {
  const int s_max = tape.value(alpha).rows();
  NodeId logits = forward_logits_on_tape(tape, params, alpha);
  NodeId lsm = tape.log_softmax(logits);
  std::vector<std::pair<int, int>> entries;
  entries.reserve(size_t(s_max));
  for (int s = 0; s < s_max; ++s) entries.emplace_back(s, label);
  NodeId picked = tape.select(lsm, entries, /*as_row=*/true);
  return tape.scalar_mul(tape.mean(picked), -1.0);
}

std::string deletion_variant_to_string(DeletionVariant v) {
  switch (v) {
    case DeletionVariant::kA:
      return "a";
    case DeletionVariant::kB:
      return "b";
    case DeletionVariant::kC:
      return "c";
  }
  throw std::invalid_argument("deletion_variant_to_string: bad variant");
}

DeletionVariant deletion_variant_from_string(const std::string& name) {
  if (name == "a") return DeletionVariant::kA;
  if (name == "b") return DeletionVariant::kB;
  if (name == "c") return DeletionVariant::kC;
  throw std::invalid_argument("unknown deletion variant '" + name +
                              "' (expected a, b, or c)");
}

NodeId omega_deletion(Tape& tape, const TapeParams& params, NodeId beta,
                      int label, DeletionVariant variant, NodeId log_fx) {
  const int s_max = tape.value(beta).rows();
  NodeId logits = forward_logits_on_tape(tape, params, beta);
  std::vector<std::pair<int, int>> entries;
  entries.reserve(size_t(s_max));
  for (int s = 0; s < s_max; ++s) entries.emplace_back(s, label);

  if (variant == DeletionVariant::kC) {
    NodeId p = tape.select(tape.softmax(logits), entries, /*as_row=*/true);
    NodeId rest = tape.sub(tape.constant(Tensor::full(1, s_max, 1.0)), p);
    return tape.scalar_mul(tape.mean(tape.log(rest, 1e-12)), -1.0);
  }

  NodeId picked = tape.select(tape.log_softmax(logits), entries, /*as_row=*/true);
  NodeId mean_log = tape.mean(picked);
  if (variant == DeletionVariant::kB) return mean_log;
  if (log_fx == kNoNode) {
    throw std::invalid_argument(
        "omega_deletion: variant a needs the log f(x)_y node");
  }
  return tape.sub(mean_log, log_fx);
}

SensitivityResult sensitivity_n(const RowPredictor& predict,
                                const Tensor& x_row,
                                const std::vector<double>& phi,
                                const std::vector<double>& background,
                                int subset_size, int num_subsets,
                                SeedStream& rng) {
  check_inputs(x_row, phi, background, 1);
  const int q = x_row.cols();
  if (subset_size < 1 || subset_size > q) {
    throw std::invalid_argument("sensitivity_n: subset size " +
                                std::to_string(subset_size) + " outside 1.." +
                                std::to_string(q));
  }
  if (num_subsets < 2) {
    throw std::invalid_argument("sensitivity_n: need at least 2 subsets");
  }

  // Row 0 is the unmasked input; rows 1..R are one masked input per subset.
  Tensor batch(num_subsets + 1, q);
  for (int c = 0; c < q; ++c) batch.at(0, c) = x_row.at(0, c);
  std::vector<double> phi_sums(size_t(num_subsets), 0.0);
  std::vector<int> idx(static_cast<size_t>(q));
  for (int r = 0; r < num_subsets; ++r) {
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < subset_size; ++i) {
      int j = i + int(rng.bounded(uint64_t(q - i)));
      std::swap(idx[size_t(i)], idx[size_t(j)]);
    }
    for (int c = 0; c < q; ++c) batch.at(r + 1, c) = x_row.at(0, c);
    for (int i = 0; i < subset_size; ++i) {
      int c = idx[size_t(i)];
      phi_sums[size_t(r)] += phi[size_t(c)];
      batch.at(r + 1, c) = background[size_t(c)];
    }
  }

  std::vector<double> out = predict(batch);
  if (int(out.size()) != num_subsets + 1) {
    throw ShapeError("sensitivity_n: predictor returned " +
                     std::to_string(out.size()) + " values for " +
                     std::to_string(num_subsets + 1) + " rows");
  }
  std::vector<double> deltas(static_cast<size_t>(num_subsets));
  for (int r = 0; r < num_subsets; ++r) deltas[size_t(r)] = out[0] - out[size_t(r) + 1];

  double mx = std::accumulate(phi_sums.begin(), phi_sums.end(), 0.0) / num_subsets;
  double my = std::accumulate(deltas.begin(), deltas.end(), 0.0) / num_subsets;
  double vx = 0.0, vy = 0.0, cov = 0.0;
  for (int r = 0; r < num_subsets; ++r) {
    double dx = phi_sums[size_t(r)] - mx;
    double dy = deltas[size_t(r)] - my;
    vx += dx * dx;
    vy += dy * dy;
    cov += dx * dy;
  }
  if (vx <= 0.0 || vy <= 0.0 || !std::isfinite(vx) || !std::isfinite(vy)) {
    return {0.0, true};
  }
  double corr = cov / std::sqrt(vx * vy);
  corr = std::max(-1.0, std::min(1.0, corr));
  return {corr, false};
}

SensitivityResult sensitivity_n(const MlpModel& model, int label,
                                const Tensor& x_row,
                                const std::vector<double>& phi,
                                const std::vector<double>& background,
                                int subset_size, int num_subsets,
                                SeedStream& rng) {
  RowPredictor predict = [&model, label](const Tensor& rows) {
    return label_column(predict_proba(model, rows), label);
  };
  return sensitivity_n(predict, x_row, phi, background, subset_size,
                       num_subsets, rng);
}

double valscore(double accuracy, double insertion, double deletion, double eta) {
  return eta * accuracy + insertion + 1.0 - deletion;
}

MetricReport evaluate_model(const MlpModel& model, const Dataset& ds,
                            const std::vector<int>& rows,
                            const std::vector<double>& background,
                            const EvalConfig& cfg, uint64_t seed) {
  if (rows.empty()) throw std::invalid_argument("evaluate_model: no rows");
  const int q = ds.num_features();
  const int s_max = s_from_fraction(q, cfg.s_fraction);

  MetricReport report;
  report.s_max = s_max;
  report.num_samples = int(rows.size());
  report.eta = cfg.eta;
  report.insertion_curve.assign(size_t(s_max), 0.0);
  report.deletion_curve.assign(size_t(s_max), 0.0);

  int correct = 0;
  double sens_sum = 0.0;
  for (int r : rows) {
    Tensor x = Tensor::row(ds.x.row_vector(r));
    int predicted = predict_label(model, ds.x.row_vector(r));
    correct += predicted == ds.y[size_t(r)] ? 1 : 0;

    SeedStream perturb_rng(seed, streams::kEvalPerturb, {uint64_t(r)});
    Tensor phi_row =
        explain(model, x, background, predicted, cfg.explainer, perturb_rng);
    std::vector<double> phi = phi_row.row_vector(0);

    auto ic = hard_insertion_curve(model, x, phi, background, s_max, predicted);
    auto dc = hard_deletion_curve(model, x, phi, background, s_max, predicted);
    for (int s = 0; s < s_max; ++s) {
      report.insertion_curve[size_t(s)] += ic[size_t(s)];
      report.deletion_curve[size_t(s)] += dc[size_t(s)];
    }

    if (cfg.with_sensitivity) {
      int n = s_from_fraction(q, cfg.sensitivity_fraction);
      SeedStream sens_rng(seed, streams::kSensitivity, {uint64_t(r)});
      auto sr = sensitivity_n(model, predicted, x, phi, background, n,
                              cfg.sensitivity_subsets, sens_rng);
      sens_sum += sr.correlation;
      report.degenerate_sensitivity += sr.degenerate ? 1 : 0;
    }
  }

  const double n = double(rows.size());
  for (int s = 0; s < s_max; ++s) {
    report.insertion_curve[size_t(s)] /= n;
    report.deletion_curve[size_t(s)] /= n;
  }
  report.accuracy = double(correct) / n;
  report.insertion = std::accumulate(report.insertion_curve.begin(),
                                     report.insertion_curve.end(), 0.0) /
                     double(s_max);
  report.deletion = std::accumulate(report.deletion_curve.begin(),
                                    report.deletion_curve.end(), 0.0) /
                    double(s_max);
  if (cfg.with_sensitivity) {
    report.sensitivity = sens_sum / n;
    report.has_sensitivity = true;
  }
  report.score = valscore(report.accuracy, report.insertion, report.deletion,
                          cfg.eta);
  return report;
}

}  // namespace idexpo
