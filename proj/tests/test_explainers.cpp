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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "idexpo/explain.hpp"
#include "idexpo/mlp.hpp"
#include "idexpo/rng.hpp"

using namespace idexpo;

namespace {

// Independent reference: form the normal equations with plain loops and solve
// by Gauss-Jordan elimination with partial pivoting. No linear algebra
// library involved.
std::vector<double> wls_oracle(const Tensor& z, const std::vector<double>& w,
                               const std::vector<double>& f, double eps) {
  const int m = z.rows();
  const int q = z.cols();
  std::vector<std::vector<double>> a(size_t(q),
                                     std::vector<double>(size_t(q) + 1, 0.0));
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j < q; ++j) {
      double s = 0.0;
      for (int r = 0; r < m; ++r) s += w[size_t(r)] * z.at(r, i) * z.at(r, j);
      a[size_t(i)][size_t(j)] = s + (i == j ? eps : 0.0);
    }
    double s = 0.0;
    for (int r = 0; r < m; ++r) s += w[size_t(r)] * z.at(r, i) * f[size_t(r)];
    a[size_t(i)][size_t(q)] = s;
  }
  for (int col = 0; col < q; ++col) {
    int pivot = col;
    for (int r = col + 1; r < q; ++r) {
      if (std::abs(a[size_t(r)][size_t(col)]) >
          std::abs(a[size_t(pivot)][size_t(col)])) {
        pivot = r;
      }
    }
    std::swap(a[size_t(col)], a[size_t(pivot)]);
    double p = a[size_t(col)][size_t(col)];
    REQUIRE(std::abs(p) > 1e-14);
    for (int j = col; j <= q; ++j) a[size_t(col)][size_t(j)] /= p;
    for (int r = 0; r < q; ++r) {
      if (r == col) continue;
      double factor = a[size_t(r)][size_t(col)];
      for (int j = col; j <= q; ++j) {
        a[size_t(r)][size_t(j)] -= factor * a[size_t(col)][size_t(j)];
      }
    }
  }
  std::vector<double> phi(static_cast<size_t>(q));
  for (int i = 0; i < q; ++i) phi[size_t(i)] = a[size_t(i)][size_t(q)];
  return phi;
}

Tensor random_x(int q, SeedStream& rng) {
  Tensor x(1, q);
  for (size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-2.0, 2.0);
  return x;
}

std::vector<double> random_background(int q, SeedStream& rng) {
  std::vector<double> b(static_cast<size_t>(q));
  for (double& v : b) v = rng.uniform(-1.0, 1.0);
  return b;
}

}  // namespace

TEST_CASE("generate_perturbations: shape, binary entries, no trivial rows") {
  SeedStream rng(7, streams::kEvalPerturb, {3});
  Tensor x = Tensor::row({1.0, 2.0, 3.0, 4.0, 5.0});
  std::vector<double> b = {0.0, -1.0, 0.5, 10.0, 2.0};
  auto pert = generate_perturbations(x, b, 64, rng);
  CHECK(pert.z.rows() == 64);
  CHECK(pert.z.cols() == 5);
  for (int r = 0; r < 64; ++r) {
    int ones = 0;
    for (int c = 0; c < 5; ++c) {
      double v = pert.z.at(r, c);
      CHECK((v == 0.0 || v == 1.0));
      ones += v == 1.0 ? 1 : 0;
      double want = v == 1.0 ? x.at(0, c) : b[size_t(c)];
      CHECK(pert.masked.at(r, c) == want);
    }
    CHECK(ones >= 1);
    CHECK(ones <= 4);
  }
}

TEST_CASE("generate_perturbations: deterministic under an equal stream key") {
  Tensor x = Tensor::row({1.0, -1.0, 0.25});
  std::vector<double> b = {0.0, 0.0, 0.0};
  SeedStream r1(11, streams::kTrainPerturb, {5, 2});
  SeedStream r2(11, streams::kTrainPerturb, {5, 2});
  auto p1 = generate_perturbations(x, b, 40, r1);
  auto p2 = generate_perturbations(x, b, 40, r2);
  for (size_t i = 0; i < p1.z.size(); ++i) CHECK(p1.z[i] == p2.z[i]);
  SeedStream r3(11, streams::kTrainPerturb, {5, 3});
  auto p3 = generate_perturbations(x, b, 40, r3);
  bool same = true;
  for (size_t i = 0; i < p1.z.size(); ++i) same = same && p1.z[i] == p3.z[i];
  CHECK_FALSE(same);
}

TEST_CASE("generate_perturbations: one feature is rejected") {
  SeedStream rng(1, streams::kEvalPerturb, {0});
  Tensor x = Tensor::row({3.0});
  std::vector<double> b = {0.0};
  CHECK_THROWS_AS(generate_perturbations(x, b, 10, rng), ShapeError);
}

TEST_CASE("cosine kernel: hand values for Q=4") {
  Tensor z(3, 4);
  // coalition sizes 1, 2, 3
  z.at(0, 0) = 1.0;
  z.at(1, 0) = 1.0;
  z.at(1, 2) = 1.0;
  z.at(2, 0) = 1.0;
  z.at(2, 1) = 1.0;
  z.at(2, 3) = 1.0;
  auto w = cosine_kernel_weights(z);
  CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(w[1] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  CHECK(w[2] == doctest::Approx(std::sqrt(0.75)).epsilon(1e-15));
}

TEST_CASE("shapley kernel: hand values and symmetry for Q=4") {
  Tensor z(3, 4);
  z.at(0, 0) = 1.0;  // |z| = 1: 3 / (4 * 1 * 3)
  z.at(1, 0) = 1.0;  // |z| = 2: 3 / (6 * 2 * 2)
  z.at(1, 1) = 1.0;
  z.at(2, 1) = 1.0;  // |z| = 3: 3 / (4 * 3 * 1)
  z.at(2, 2) = 1.0;
  z.at(2, 3) = 1.0;
  auto w = shapley_kernel_weights(z);
  CHECK(w[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(w[1] == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(w[2] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(w[0] == w[2]);

  Tensor full(1, 3);
  full.at(0, 0) = full.at(0, 1) = full.at(0, 2) = 1.0;
  CHECK_THROWS_AS(shapley_kernel_weights(full), NumericalError);
}

TEST_CASE("solve_wls agrees with a hand-rolled normal-equations solver") {
  for (uint64_t trial = 0; trial < 30; ++trial) {
    SeedStream rng(900 + trial, streams::kEvalPerturb, {trial});
    int q = 2 + int(rng.bounded(8));
    int m = q + 3 + int(rng.bounded(40));
    Tensor x = random_x(q, rng);
    std::vector<double> b = random_background(q, rng);
    auto pert = generate_perturbations(x, b, m, rng);
    auto w = trial % 2 == 0 ? cosine_kernel_weights(pert.z)
                            : shapley_kernel_weights(pert.z);
    std::vector<double> f(static_cast<size_t>(m));
    for (double& v : f) v = rng.uniform(-1.0, 1.0);
    for (double eps : {0.0, 0.01, 1.0}) {
      Tensor got = solve_wls(pert.z, w, Tensor::row(f), eps);
      auto want = wls_oracle(pert.z, w, f, eps);
      for (int c = 0; c < q; ++c) {
        double denom = std::max({1.0, std::abs(want[size_t(c)])});
        CHECK(std::abs(got.at(0, c) - want[size_t(c)]) / denom < 1e-8);
      }
    }
  }
}

TEST_CASE("solve_wls: identity coalitions give a closed form") {
  const int q = 6;
  Tensor z(q, q);
  for (int i = 0; i < q; ++i) z.at(i, i) = 1.0;
  std::vector<double> w(static_cast<size_t>(q));
  std::vector<double> f(static_cast<size_t>(q));
  SeedStream rng(3, streams::kEvalPerturb, {0});
  for (int i = 0; i < q; ++i) {
    w[size_t(i)] = rng.uniform(0.1, 2.0);
    f[size_t(i)] = rng.uniform(-3.0, 3.0);
  }
  Tensor at0 = solve_wls(z, w, Tensor::column(f), 0.0);
  for (int i = 0; i < q; ++i) {
    CHECK(at0.at(0, i) == doctest::Approx(f[size_t(i)]).epsilon(1e-12));
  }
  double eps = 0.37;
  Tensor ridged = solve_wls(z, w, Tensor::column(f), eps);
  for (int i = 0; i < q; ++i) {
    double want = w[size_t(i)] * f[size_t(i)] / (w[size_t(i)] + eps);
    CHECK(ridged.at(0, i) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("solve_wls: exact recovery of a linear target at zero ridge") {
  SeedStream rng(17, streams::kEvalPerturb, {1});
  const int q = 7;
  const int m = 120;
  Tensor x = random_x(q, rng);
  std::vector<double> b = random_background(q, rng);
  auto pert = generate_perturbations(x, b, m, rng);
  auto w = cosine_kernel_weights(pert.z);
  std::vector<double> truth(static_cast<size_t>(q));
  for (double& v : truth) v = rng.uniform(-5.0, 5.0);
  std::vector<double> f(size_t(m), 0.0);
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < q; ++c) f[size_t(r)] += truth[size_t(c)] * pert.z.at(r, c);
  }
  Tensor phi = solve_wls(pert.z, w, Tensor::row(f), 0.0);
  for (int c = 0; c < q; ++c) {
    CHECK(std::abs(phi.at(0, c) - truth[size_t(c)]) < 1e-6);
  }
}

TEST_CASE("property: solve_wls is linear in the fitted values") {
  SeedStream rng(23, streams::kEvalPerturb, {2});
  const int q = 5;
  const int m = 60;
  Tensor x = random_x(q, rng);
  std::vector<double> b = random_background(q, rng);
  auto pert = generate_perturbations(x, b, m, rng);
  auto w = shapley_kernel_weights(pert.z);
  std::vector<double> f1(static_cast<size_t>(m));
  std::vector<double> f2(static_cast<size_t>(m));
  std::vector<double> mix(static_cast<size_t>(m));
  for (int r = 0; r < m; ++r) {
    f1[size_t(r)] = rng.uniform(-1.0, 1.0);
    f2[size_t(r)] = rng.uniform(-1.0, 1.0);
    mix[size_t(r)] = 2.5 * f1[size_t(r)] - 0.75 * f2[size_t(r)];
  }
  Tensor p1 = solve_wls(pert.z, w, Tensor::row(f1), 0.01);
  Tensor p2 = solve_wls(pert.z, w, Tensor::row(f2), 0.01);
  Tensor pm = solve_wls(pert.z, w, Tensor::row(mix), 0.01);
  for (int c = 0; c < q; ++c) {
    double want = 2.5 * p1.at(0, c) - 0.75 * p2.at(0, c);
    CHECK(pm.at(0, c) == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("property: kernel rescaling cancels only at zero ridge") {
  SeedStream rng(31, streams::kEvalPerturb, {4});
  const int q = 6;
  const int m = 80;
  Tensor x = random_x(q, rng);
  std::vector<double> b = random_background(q, rng);
  auto pert = generate_perturbations(x, b, m, rng);
  auto w = cosine_kernel_weights(pert.z);
  auto scaled = w;
  for (double& v : scaled) v *= 7.3;
  std::vector<double> f(static_cast<size_t>(m));
  for (double& v : f) v = rng.uniform(-1.0, 1.0);
  Tensor a0 = solve_wls(pert.z, w, Tensor::row(f), 0.0);
  Tensor s0 = solve_wls(pert.z, scaled, Tensor::row(f), 0.0);
  double drift = 0.0;
  for (int c = 0; c < q; ++c) drift = std::max(drift, std::abs(a0.at(0, c) - s0.at(0, c)));
  CHECK(drift < 1e-10);
  Tensor a1 = solve_wls(pert.z, w, Tensor::row(f), 0.5);
  Tensor s1 = solve_wls(pert.z, scaled, Tensor::row(f), 0.5);
  double gap = 0.0;
  for (int c = 0; c < q; ++c) gap = std::max(gap, std::abs(a1.at(0, c) - s1.at(0, c)));
  CHECK(gap > 1e-6);
}

TEST_CASE("coalition draws are shared by both explainers; weights differ") {
  Tensor x = Tensor::row({0.5, -0.5, 1.5, 2.5});
  std::vector<double> b(4, 0.0);
  SeedStream r1(99, streams::kEvalPerturb, {12});
  SeedStream r2(99, streams::kEvalPerturb, {12});
  auto pa = generate_perturbations(x, b, 50, r1);
  auto pb = generate_perturbations(x, b, 50, r2);
  for (size_t i = 0; i < pa.z.size(); ++i) CHECK(pa.z[i] == pb.z[i]);
  auto wl = kernel_weights(ExplainerKind::kLime, pa.z);
  auto ws = kernel_weights(ExplainerKind::kKernelShap, pb.z);
  bool differ = false;
  for (size_t i = 0; i < wl.size(); ++i) differ = differ || wl[i] != ws[i];
  CHECK(differ);
}

TEST_CASE("solve_wls: rank-deficient system throws without ridge, works with") {
  Tensor z(4, 3);
  for (int r = 0; r < 4; ++r) {
    z.at(r, 0) = 1.0;
    z.at(r, 1) = 1.0;
  }
  std::vector<double> w(4, 1.0);
  std::vector<double> f = {1.0, 2.0, 3.0, 4.0};
  CHECK_THROWS_AS(solve_wls(z, w, Tensor::row(f), 0.0), NumericalError);
  CHECK_NOTHROW(solve_wls(z, w, Tensor::row(f), 0.01));
}

TEST_CASE("explain: finite Q-length attribution, reproducible by key") {
  MlpModel model = init_model(6, 3, 21);
  SeedStream r1(5, streams::kEvalPerturb, {7});
  SeedStream r2(5, streams::kEvalPerturb, {7});
  Tensor x = Tensor::row({0.3, -1.2, 0.8, 2.0, -0.4, 0.1});
  std::vector<double> b(6, 0.0);
  ExplainConfig cfg;
  cfg.num_samples = 100;
  Tensor p1 = explain(model, x, b, 1, cfg, r1);
  Tensor p2 = explain(model, x, b, 1, cfg, r2);
  CHECK(p1.rows() == 1);
  CHECK(p1.cols() == 6);
  CHECK(p1.all_finite());
  for (size_t i = 0; i < p1.size(); ++i) CHECK(p1[i] == p2[i]);
}

TEST_CASE("wls_weight_matrix reproduces solve_wls through a product") {
  SeedStream rng(41, streams::kEvalPerturb, {9});
  const int q = 5;
  const int m = 70;
  Tensor x = random_x(q, rng);
  std::vector<double> b = random_background(q, rng);
  auto pert = generate_perturbations(x, b, m, rng);
  auto w = shapley_kernel_weights(pert.z);
  std::vector<double> f(static_cast<size_t>(m));
  for (double& v : f) v = rng.uniform(0.0, 1.0);
  Tensor direct = solve_wls(pert.z, w, Tensor::row(f), 0.01);
  Tensor wm = wls_weight_matrix(pert.z, w, 0.01);
  Tensor via = matmul(Tensor::row(f), wm);
  for (int c = 0; c < q; ++c) {
    CHECK(via.at(0, c) ==
          doctest::Approx(direct.at(0, c)).epsilon(1e-12));
  }
}

TEST_CASE("explain_on_tape matches the plain path on equal inputs") {
  MlpModel model = init_model_dims({5, 8, 3}, 77);
  SeedStream rng(13, streams::kTrainPerturb, {0, 0});
  Tensor x = Tensor::row({1.0, 0.5, -0.5, 0.25, 2.0});
  std::vector<double> b(5, 0.1);
  auto pert = generate_perturbations(x, b, 40, rng);
  auto w = cosine_kernel_weights(pert.z);
  Tensor plain = explain_with_perturbations(model, pert, w, 2, 0.01);

  Tape tape;
  TapeParams params = bind_parameters(tape, model);
  auto exp = explain_on_tape(tape, params, pert, w, 2, 0.01);
  const Tensor& phi = tape.value(exp.phi);
  REQUIRE(phi.rows() == 1);
  REQUIRE(phi.cols() == 5);
  for (int c = 0; c < 5; ++c) {
    double denom = std::max(1.0, std::abs(plain.at(0, c)));
    CHECK(std::abs(phi.at(0, c) - plain.at(0, c)) / denom < 1e-12);
  }
  const Tensor& ft = tape.value(exp.f_tilde);
  Tensor probs = predict_proba(model, pert.masked);
  for (int r = 0; r < 40; ++r) {
    CHECK(ft.at(0, r) == doctest::Approx(probs.at(r, 2)).epsilon(1e-14));
  }
}

TEST_CASE("explain_on_tape: gradients through the fit pass finite differences") {
  MlpModel model = init_model_dims({4, 6, 3}, 55);
  SeedStream rng(19, streams::kTrainPerturb, {1, 0});
  Tensor x = Tensor::row({0.4, -0.7, 1.1, 0.2});
  std::vector<double> b(4, 0.0);
  auto pert = generate_perturbations(x, b, 24, rng);
  auto w = shapley_kernel_weights(pert.z);

  Tape tape;
  TapeParams params = bind_parameters(tape, model);
  auto exp = explain_on_tape(tape, params, pert, w, 1, 0.01);
  NodeId loss = tape.sum(exp.phi);
  auto res = check_gradients(tape, loss, 1e-5, 1e-6);
  CHECK_MESSAGE(res.pass, "max rel err ", res.max_rel_error);
}
