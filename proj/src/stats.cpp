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

#include "idexpo/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace idexpo {

namespace {

// Continued fraction for the incomplete beta, modified Lentz iteration.
double beta_cf(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 3e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw std::runtime_error("incomplete_beta: continued fraction stalled");
}

}  // namespace

double mean(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean: empty input");
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) throw std::invalid_argument("sample_sd: need 2+ values");
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / double(v.size() - 1));
}

double incomplete_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) {
    throw std::invalid_argument("incomplete_beta: a, b must be positive");
  }
  if (x < 0.0 || x > 1.0) {
    throw std::invalid_argument("incomplete_beta: x outside [0, 1]");
  }
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double front = std::exp(std::lgamma(a + b) - std::lgamma(a) -
                                std::lgamma(b) + a * std::log(x) +
                                b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_cf(a, b, x) / a;
  }
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, int dof) {
  if (dof < 1) throw std::invalid_argument("student_t_cdf: dof < 1");
  if (t == 0.0) return 0.5;
  const double v = double(dof);
  const double tail =
      0.5 * incomplete_beta(0.5 * v, 0.5, v / (v + t * t));
  return t > 0.0 ? 1.0 - tail : tail;
}

PairedTTest paired_t_test(const std::vector<double>& a,
                          const std::vector<double>& b, double alpha) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("paired_t_test: length mismatch");
  }
  if (a.size() < 2) {
    throw std::invalid_argument("paired_t_test: need at least 2 pairs");
  }
  const size_t n = a.size();
  std::vector<double> d(n);
  for (size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];

  PairedTTest out;
  out.dof = int(n) - 1;
  const double sd = sample_sd(d);
  if (sd == 0.0) {
    out.degenerate = true;
    out.t = 0.0;
    out.p = std::numeric_limits<double>::quiet_NaN();
    out.significant = false;
    return out;
  }
  out.t = mean(d) / (sd / std::sqrt(double(n)));
  // two-sided tail probability
  out.p = 2.0 * (1.0 - student_t_cdf(std::abs(out.t), out.dof));
  out.significant = out.p < alpha;
  return out;
}

}  // namespace idexpo
