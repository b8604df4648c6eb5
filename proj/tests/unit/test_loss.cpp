#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "stefan/loss.hpp"

using namespace stefan;

namespace {

// Probability that a particle with per-step stop chances q stops exactly at
// step n, by enumerating every stop/continue history.
std::vector<double> enumerate_stops(const std::vector<double>& q) {
  const std::size_t n = q.size();
  std::vector<double> Q(n, 0.0);
  for (std::size_t first = 0; first < n; ++first) {
    double p = 1.0;
    for (std::size_t l = 0; l < first; ++l) p *= 1.0 - q[l];
    Q[first] = p * q[first];
  }
  return Q;
}

}  // namespace

TEST_CASE("test functions") {
  Rng rng(4);
  const auto tests = sample_test_functions(300, 1.0, 2, rng);
  REQUIRE(tests.size() == 300);
  for (const auto& t : tests) {
    CHECK(t.z.norm() <= 0.9);
    CHECK(t.beta >= 4.0);
    CHECK(t.beta <= 64.0);
    CHECK(t(t.z) == 1.0);
    CHECK(t.z[2] == 0.0);
  }
  const std::vector<Vec3> pts{Vec3(0.1, 0.2, 0), Vec3(-0.3, 0.4, 0)};
  const auto m = psi_matrix(std::span(tests).first(3), pts);
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m(1, 2) == doctest::Approx(tests[2](pts[1])));
}

TEST_CASE("phase indicators per side") {
  CHECK(phase_indicator(-0.2, 1, 0.1) == 1.0);
  CHECK(phase_indicator(0.2, 2, 0.1) == 1.0);
  CHECK(phase_indicator(0.0, 1, 0.1) == 0.5);
  CHECK(phase_indicator(0.0, 0, 0.1) == 0.5);
  CHECK(phase_indicator(-0.05, 2, 0.1) == doctest::Approx(0.25));
  ad::Tape tape;
  const auto q = phase_indicators(tape.constant(ad::Tensor::row({-0.2, 0.0, 0.05})), 2, 0.1);
  CHECK(q.value()[0] == 0.0);
  CHECK(q.value()[1] == 0.5);
  CHECK(q.value()[2] == doctest::Approx(0.75));
}

TEST_CASE("stopping recursion") {
  CHECK(stopping_probabilities(std::vector<double>{1, 1, 1}) == std::vector<double>{1, 0, 0});
  CHECK(stopping_probabilities(std::vector<double>{0, 0, 0}) == std::vector<double>{0, 0, 0});
  CHECK(stopping_probabilities(std::vector<double>{0.5, 0.5, 0.5}) == std::vector<double>{0.5, 0.25, 0.125});

  // Every sequence over {0, 1/2, 1} of length up to 6.
  for (int len = 1; len <= 6; ++len) {
    int total = 1;
    for (int i = 0; i < len; ++i) total *= 3;
    for (int code = 0; code < total; ++code) {
      std::vector<double> q;
      for (int i = 0, c = code; i < len; ++i, c /= 3) q.push_back(0.5 * (c % 3));
      CHECK(stopping_probabilities(q) == enumerate_stops(q));
    }
  }

  // Tape version agrees row by row.
  ad::Tape tape;
  ad::Tensor qm(3, 2);
  qm(0, 0) = 0.2; qm(1, 0) = 0.5; qm(2, 0) = 1.0;
  qm(0, 1) = 0.0; qm(1, 1) = 0.3; qm(2, 1) = 0.4;
  const auto rows = stopping_probabilities(tape.constant(qm));
  REQUIRE(rows.size() == 3);
  const auto a = stopping_probabilities(std::vector<double>{0.2, 0.5, 1.0});
  const auto b = stopping_probabilities(std::vector<double>{0.0, 0.3, 0.4});
  for (std::size_t n = 0; n < 3; ++n) {
    CHECK(rows[n].value()[0] == doctest::Approx(a[n]));
    CHECK(rows[n].value()[1] == doctest::Approx(b[n]));
  }
}

TEST_CASE("stopping mass never exceeds one") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 100000; ++k) {
    std::vector<double> q(1 + k % 12);
    for (auto& v : q) v = u(rng);
    double s = 0.0;
    for (double Q : stopping_probabilities(q)) {
      CHECK_FALSE(Q < 0.0);
      s += Q;
    }
    if (s > 1.0 + 1e-12) FAIL("sum of stopping probabilities above one");
  }
}

TEST_CASE("stopped values") {
  const std::vector<double> Q{1, 0, 0}, psi{3, 7, 9};
  for (std::size_t n = 0; n < 3; ++n) CHECK(stopped_value(Q, psi, n) == 3.0);
  const std::vector<double> none{0, 0, 0};
  CHECK(stopped_value(none, psi, 2) == 0.0);
  const std::vector<double> Qh{0.5, 0.25, 0.125};
  double prev = 0.0;
  for (std::size_t n = 0; n < 3; ++n) {
    const double v = stopped_value(Qh, psi, n);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("sharp limit of the relaxed stopping") {
  // A path moving through the interface rho = 0 one step at a time, crossing
  // between steps 4 and 5; psi is the step index.
  std::vector<double> rho, psi;
  for (int n = 0; n < 10; ++n) {
    rho.push_back(0.45 - 0.1 * n + 0.003);
    psi.push_back(static_cast<double>(n));
  }
  const double sharp = 5.0;  // first step with rho < 0
  double prev_err = 1e9;
  for (double eps : {1e-1, 1e-2, 1e-3}) {
    std::vector<double> q;
    for (double r : rho) q.push_back(phase_indicator(r, 1, eps));
    const double v = stopped_value(stopping_probabilities(q), psi, 9);
    const double err = std::abs(v - sharp);
    CHECK(err <= prev_err);
    prev_err = err;
  }
  CHECK(prev_err < 1e-12);
}

TEST_CASE("region integrals") {
  const std::vector<double> ones(10, 1.0), zeros(10, 0.0);
  CHECK(region_integral(ones, ones, std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(region_integral(zeros, ones, std::numbers::pi) == 0.0);

  Rng rng(12);
  const auto u = sample_uniform_domain(1.0, 2, 100000, rng);
  std::vector<double> q0, psi(u.size(), 1.0);
  for (const auto& x : u) q0.push_back(x.norm() <= 0.5 ? 1.0 : 0.0);
  CHECK(region_integral(q0, psi, std::numbers::pi) == doctest::Approx(std::numbers::pi / 4).epsilon(0.02));
}

TEST_CASE("initial integrals") {
  const auto phi0 = InitialLevelSet::sphere(2, 0.5);
  Rng rng(2);
  const TestFunction flat{Vec3::Zero(), 1e-6};
  CHECK(initial_integral(flat, phi0, 1.0, 2, 1000000, rng) == doctest::Approx(std::numbers::pi / 4).epsilon(0.005));
  const TestFunction far{Vec3(0.95, 0, 0), 64.0};
  CHECK(initial_integral(far, phi0, 1.0, 2, 100000, rng) < 1e-3);
  const std::vector<TestFunction> pair{{Vec3(0.3, 0.1, 0), 8.0}, {Vec3(-0.3, -0.1, 0), 8.0}};
  const auto v = initial_integrals(pair, phi0, 1.0, 2, 200000, rng);
  CHECK(v[0] == doctest::Approx(v[1]).epsilon(0.02));
}

TEST_CASE("residuals and total loss") {
  const GrowthConstants k{2.0, -1.0, 1.0, 0.5};
  CHECK(residual_ln(k, 0.7, 0.7, {}, {}) == 0.0);
  const std::vector<double> sv1{0.2, 0.4}, sv2{0.1, 0.3};
  // 0.7 - 0.6 - (eta c1 mean(sv1) - c2 mean(sv2)) / L
  CHECK(residual_ln(k, 0.7, 0.6, sv1, sv2) == doctest::Approx(0.1 - (-0.3 - 0.1) / 2.0));
  const GrowthConstants flipped{2.0, 1.0, 1.0, 0.5};
  CHECK(residual_ln(flipped, 0.7, 0.6, sv1, {}) - residual_ln(flipped, 0.7, 0.6, {}, {}) ==
        doctest::Approx(-(residual_ln(k, 0.7, 0.6, sv1, {}) - residual_ln(k, 0.7, 0.6, {}, {}))));
  CHECK(residual_ln(k, 0.7, 0.6, {}, {}, 0.4) == doctest::Approx(0.1 - 0.2));

  CHECK(total_loss({{0.0, 0.0}, {0.0, 0.0}}).total == 0.0);
  CHECK(total_loss({{2.0}}).total == 4.0);
  const auto r = total_loss({{1.0, 2.0}, {3.0, -1.0}});
  CHECK(r.total == 15.0);
  REQUIRE(r.per_test_function.size() == 2);
  CHECK(r.per_test_function[0] == 10.0);
  CHECK(r.per_test_function[1] == 5.0);
}

TEST_CASE("jump penalty") {
  CHECK(leaky(1.0) == 1.0);
  CHECK(leaky(-1.0) == -0.01);
  const double C = std::numbers::pi / 2;
  const std::vector<std::vector<double>> still(5, std::vector<double>(100, 1.0));
  const auto p = jump_penalty(still, C, std::numbers::pi);
  CHECK(p.exact == doctest::Approx(-0.01 * C));
  CHECK(p.max_volume == 0.0);

  // Exactly half the samples switch between two steps: volume = |Omega| / 2 = C.
  std::vector<std::vector<double>> jump(3, std::vector<double>(100, 0.0));
  for (std::size_t j = 0; j < 50; ++j) jump[2][j] = 1.0;
  const auto pj = jump_penalty(jump, C, std::numbers::pi);
  CHECK(pj.max_volume == doctest::Approx(C));
  CHECK(pj.exact == doctest::Approx(0.0).scale(1.0));
  CHECK(std::abs(pj.penalty - pj.exact) < 0.02);
}

TEST_CASE("lambda annealing") {
  ad::GradientVector gl(3), gp(3);
  gl.data = {1.0, -4.0, 2.0};
  CHECK(anneal_lambda(gl, gp, 1.0) == 1.0);
  gp.data = {1.0, 1.0, 1.0};
  double s = 1.0;
  for (int i = 0; i < 300; ++i) s = anneal_lambda(gl, gp, s);
  CHECK(s == doctest::Approx(4.0 / (1.0 + 1e-12)));
  CHECK(anneal_lambda(gl, gp, 1.0) == doctest::Approx(0.9 + 0.1 * 4.0));
}

TEST_CASE("objective on a tape matches a plain evaluation") {
  const int N = 4;
  const std::size_t J = 6, K = 3;
  const TimeGrid grid(1.0, N);
  Rng rng(77);
  std::uniform_real_distribution<double> ur(-0.15, 0.15), up(0.0, 1.0);

  ad::ParamStore store;
  ObjectiveInputs in;
  in.grid = grid;
  in.domain_volume = std::numbers::pi;
  in.latent_heat = 2.0;
  in.jump_threshold = std::numbers::pi / 2;
  in.initial = {0.3, 0.1, 0.2};
  in.uniform_block = store.add_block("uniform", N + 1, J);
  in.uniform_epsilon = 0.1;
  in.psi_uniform = ad::Tensor(J, K);
  for (auto& v : in.psi_uniform.storage()) v = up(rng);
  for (int side : {1, 2}) {
    PopulationTerm t;
    t.side = side;
    t.epsilon = 0.1;
    t.weight = side == 1 ? -1.0 : -0.5;
    t.rho_block = store.add_block("pop" + std::to_string(side), N + 1, J);
    for (int n = 0; n <= N; ++n) {
      ad::Tensor psi(J, K);
      for (auto& v : psi.storage()) v = up(rng);
      t.psi.push_back(psi);
    }
    in.populations.push_back(t);
  }
  for (auto& v : store.data()) v = ur(rng);

  ad::Tape tape;
  const auto obj = build_objective(tape, store, in);

  // Plain recomputation.
  auto rho_at = [&](std::size_t block, int n, std::size_t j) {
    return store.view(block)[static_cast<std::size_t>(n) * J + j];
  };
  std::vector<std::vector<double>> residuals;
  for (int n = 1; n <= N; ++n) {
    std::vector<double> row;
    for (std::size_t k = 0; k < K; ++k) {
      std::vector<double> q0(J), psi(J);
      for (std::size_t j = 0; j < J; ++j) {
        q0[j] = phase_indicator(rho_at(in.uniform_block, n, j), 0, 0.1);
        psi[j] = in.psi_uniform(j, k);
      }
      const double current = region_integral(q0, psi, in.domain_volume);
      std::vector<double> sv[2];
      for (int p = 0; p < 2; ++p) {
        const auto& pop = in.populations[static_cast<std::size_t>(p)];
        for (std::size_t j = 0; j < J; ++j) {
          std::vector<double> q, path_psi;
          for (int l = 0; l <= N; ++l) {
            q.push_back(phase_indicator(rho_at(pop.rho_block, l, j), pop.side, 0.1));
            path_psi.push_back(pop.psi[static_cast<std::size_t>(l)](j, k));
          }
          sv[p].push_back(stopped_value(stopping_probabilities(q), path_psi, static_cast<std::size_t>(n)));
        }
      }
      const GrowthConstants c{2.0, -1.0, 1.0, 0.5};
      row.push_back(residual_ln(c, in.initial[k], current, sv[0], sv[1]));
    }
    residuals.push_back(row);
  }
  const auto expected = total_loss(residuals);
  CHECK(obj.loss.item() == doctest::Approx(expected.total).epsilon(1e-12));
  for (std::size_t n = 0; n < residuals.size(); ++n) {
    for (std::size_t k = 0; k < K; ++k) CHECK(obj.residuals[n][k] == doctest::Approx(residuals[n][k]));
  }

  std::vector<std::vector<double>> q0(N + 1, std::vector<double>(J));
  for (int n = 0; n <= N; ++n) {
    for (std::size_t j = 0; j < J; ++j) q0[static_cast<std::size_t>(n)][j] = phase_indicator(rho_at(in.uniform_block, n, j), 0, 0.1);
  }
  const auto pen = jump_penalty(q0, in.jump_threshold, in.domain_volume);
  CHECK(obj.penalty.item() == doctest::Approx(pen.penalty).epsilon(1e-12));
  CHECK(obj.report.max_symmetric_difference == doctest::Approx(pen.max_volume));

  // Gradient in rho against central differences.
  const auto g = tape.backward(obj.loss, store);
  const double h = 1e-7;
  for (std::size_t i = 0; i < store.size(); i += 3) {
    ad::ParamStore s = store;
    s.data()[i] += h;
    ad::Tape tp;
    const double up_v = build_objective(tp, s, in).loss.item();
    s.data()[i] -= 2 * h;
    ad::Tape tm;
    const double down_v = build_objective(tm, s, in).loss.item();
    CHECK(g.data[i] == doctest::Approx((up_v - down_v) / (2 * h)).epsilon(1e-5).scale(1.0));
  }
}
