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

#ifndef IDEXPO_STATS_HPP_
#define IDEXPO_STATS_HPP_

#include <vector>

namespace idexpo {

double mean(const std::vector<double>& v);

// Sample standard deviation (n - 1 denominator). Needs at least 2 values.
double sample_sd(const std::vector<double>& v);

// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
double incomplete_beta(double a, double b, double x);

// P(T <= t) for Student's t with `dof` degrees of freedom.
double student_t_cdf(double t, int dof);

struct PairedTTest {
  double t = 0.0;
  double p = 0.0;  // two-sided; NaN when degenerate
  int dof = 0;
  bool significant = false;
  bool degenerate = false;  // all paired differences identical
};

// Two-sided paired test on a[i] - b[i]. Requires equal lengths, n >= 2.
PairedTTest paired_t_test(const std::vector<double>& a,
                          const std::vector<double>& b, double alpha = 0.05);

}  // namespace idexpo

#endif  // IDEXPO_STATS_HPP_
