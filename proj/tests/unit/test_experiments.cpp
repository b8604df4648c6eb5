#include <doctest.h>

#include <cmath>
#include <numbers>

#include "stefan/experiments.hpp"

using namespace stefan;

namespace {

LevelSetField frozen(int d, double r) {
  const auto arch = NetworkArch::for_dimension(d, 1.0);
  return LevelSetField(arch, InitialLevelSet::sphere(d, r), zero_params(arch));
}

}  // namespace

TEST_CASE("radius extraction on a frozen sphere") {
  for (int d : {2, 3}) {
    const auto dirs = radial_directions(d, 64);
    REQUIRE(dirs.size() == 64);
    for (const auto& w : dirs) CHECK(w.norm() == doctest::Approx(1.0));
    for (double r : {0.1, 0.5, 0.83}) {
      const auto s = extract_radius(frozen(d, r), 0.3, 1.0);
      CHECK(s.mean == doctest::Approx(r).epsilon(1e-8));
      CHECK(s.std < 1e-8);
    }
  }
  // No sign change along any ray: all solid gives R.
  CHECK(extract_radius(frozen(2, 1.5), 0.0, 1.0).mean == 1.0);

  const auto series = radius_series(frozen(2, 0.4), {0.0, 0.5, 1.0}, 1.0, 16);
  CHECK(series.mean.size() == 3);
  CHECK(series.mean[2] == doctest::Approx(0.4));
}

TEST_CASE("Hadzic rate") {
  const double tau = 0.6;
  for (double t : {0.0, 0.3, 0.59}) {
    const double s = tau - t;
    CHECK(hadzic_rate(t, tau) == doctest::Approx(std::sqrt(s) * std::exp(-std::sqrt(std::abs(std::log(s)) / 2))));
  }
  CHECK_THROWS_AS(hadzic_rate(0.6, tau), ConfigError);

  RadiusSeries series;
  for (int i = 0; i <= 20; ++i) {
    const double t = 0.05 * i;
    series.times.push_back(t);
    series.mean.push_back(t < tau ? 0.7 * hadzic_rate(t, tau) : 0.0);
    series.std.push_back(0.0);
  }
  CHECK(fit_rate_scale(series, tau) == doctest::Approx(0.7));
  CHECK(estimate_empty_time(series) == doctest::Approx(0.6).epsilon(0.1));
  RadiusSeries never{{0.0, 1.0}, {0.5, 0.5}, {0.0, 0.0}};
  CHECK(estimate_empty_time(never) < 0.0);
}

TEST_CASE("long-term radius") {
  CHECK(long_term_radius(0.5, 0.5, 0.1, 4.0) == doctest::Approx(std::sqrt(0.25 + 0.6 / (4.0 * std::numbers::pi))));
  CHECK(long_term_radius(0.3, 0.0, 0.0, 1.0) == doctest::Approx(0.3));
}

TEST_CASE("jump size balance") {
  const double r0 = 0.25, d0 = 0.125, L = 2.0;
  const double delta = physical_jump_size(r0, d0, L);
  CHECK(delta == doctest::Approx(0.2208).epsilon(5e-4));
  CHECK(std::abs(jump_equation_residual(delta, r0, d0, L)) < 1e-8);

  // Beyond delta0 the absorbed fraction is one, so the volume equals 1/L.
  const double big = 0.3;
  const double lhs = std::numbers::pi * ((r0 + big) * (r0 + big) - r0 * r0);
  CHECK(jump_equation_residual(big, r0, d0, L) == doctest::Approx(lhs - 1.0 / L));

  // Independent bisection oracle for a second parameter set.
  const double r1 = 0.2, d1 = 0.1, L1 = 5.0;
  auto f = [&](double x) {
    const double m = std::min(x, d1);
    return std::numbers::pi * ((r1 + x) * (r1 + x) - r1 * r1) -
           ((r1 + m) * (r1 + m) - r1 * r1) / (L1 * ((r1 + d1) * (r1 + d1) - r1 * r1));
  };
  double lo = 1e-3, hi = 0.8 - 1e-9;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(lo) * f(mid) <= 0.0 ? hi : lo) = mid;
  }
  CHECK(physical_jump_size(r1, d1, L1) == doctest::Approx(lo).epsilon(1e-6));

  CHECK(physical_jump_size(0.25, 0.125, 1e9) == 0.0);
  CHECK_THROWS_AS(physical_jump_size(-0.1, 0.1, 1.0), ConfigError);
  CHECK_THROWS_AS(physical_jump_size(0.25, 0.125, 2.0, 0.1), ConfigError);
}

TEST_CASE("reflected KDE") {
  Rng rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s, w;
  for (int i = 0; i < 20000; ++i) {
    s.push_back(u(rng));
    w.push_back(1.0);
  }
  std::vector<double> at;
  for (int i = 0; i <= 200; ++i) at.push_back(i / 200.0);
  const auto f = reflected_kde(s, w, 1.0, at);
  double mass = 0.0;
  for (std::size_t i = 1; i < f.size(); ++i) mass += 0.5 * (f[i] + f[i - 1]) / 200.0;
  CHECK(mass == doctest::Approx(1.0).epsilon(0.01));
  // Reflection keeps the edges near the true uniform density.
  CHECK(f.front() == doctest::Approx(1.0).epsilon(0.1));
  CHECK(f.back() == doctest::Approx(1.0).epsilon(0.1));
  CHECK(f[100] == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("temperature before time zero is the initial datum") {
  const auto cfg = builtin_scenario("jump-2d");
  const auto arch = cfg.arch();
  const LevelSetField field(arch, cfg.initial_level_set(), zero_params(arch));
  const auto prof = recover_temperature(field, cfg, 0.0, 200000, 3, 100);
  REQUIRE(prof.values.size() == cfg.populations().size());
  const auto pops = cfg.populations();
  for (std::size_t p = 0; p < pops.size(); ++p) {
    CHECK(prof.survival[p] == 1.0);
    if (pops[p].support != SupportKind::Annulus) continue;
    const double a = pops[p].r_in, b = pops[p].r_out;
    const double u0 = pops[p].weight / (std::numbers::pi * (b * b - a * a));
    for (std::size_t i = 0; i < prof.radii.size(); ++i) {
      const double r = prof.radii[i];
      if (r < a + 0.02 || r > b - 0.02) continue;
      CAPTURE(r);
      CHECK(prof.values[p][i] == doctest::Approx(u0).epsilon(0.1));
    }
  }
}

TEST_CASE("volume identity vanishes for a frozen interface without heat") {
  auto cfg = builtin_scenario("jump-2d");
  cfg.train.N = 20;
  cfg.c1 = 1e-9;
  cfg.c2 = 1e-9;
  const auto arch = cfg.arch();
  const LevelSetField field(arch, cfg.initial_level_set(), zero_params(arch));
  const auto diag = volume_identity(field, cfg, 4096, 1);
  CHECK(diag.residual.size() == 21);
  CHECK(diag.max_abs < 1e-6);
  CHECK(diag.domain_volume == doctest::Approx(std::numbers::pi));
}

TEST_CASE("connected components") {
  const int n = 20;
  std::vector<double> g(n * n, 1.0);
  auto set = [&](int i, int j) { g[static_cast<std::size_t>(j * n + i)] = -1.0; };
  for (int i = 2; i < 6; ++i) set(i, 3);
  for (int j = 10; j < 15; ++j) set(12, j);
  set(13, 16);  // diagonal to the second blob only: separate under 4-adjacency
  set(11, 14);
  CHECK(count_components(g, n, 2) == 3);
  CHECK(count_components(std::vector<double>(n * n, 1.0), n, 2) == 0);

  std::vector<double> cube(8 * 8 * 8, 1.0);
  cube[0] = cube[1] = -1.0;
  cube[7 * 64 + 7 * 8 + 7] = 0.0;
  cube[1 * 64 + 1] = -1.0;  // above cube[1] along z
  CHECK(count_components(cube, 8, 3) == 2);
  CHECK_THROWS(count_components(cube, 7, 3));
}

TEST_CASE("curvature demo on analytic shapes") {
  for (const std::string shape : {"circle", "parabola", "paraboloid", "hyperbolic-paraboloid", "sphere"}) {
    CAPTURE(shape);
    CurvatureDemo demo;
    demo.shape = shape;
    demo.points = 21;
    if (shape == "paraboloid") {
      demo.a = 1.0;
      demo.b = 2.0;
    }
    if (shape == "hyperbolic-paraboloid") {
      demo.a = -1.0;
      demo.b = 2.0;
    }
    const auto rows = curvature_demo(demo);
    REQUIRE(rows.size() == 21);
    for (const auto& row : rows) CHECK(row.rel_error <= 0.05);
  }
  CurvatureDemo bad;
  bad.shape = "torus";
  CHECK_THROWS_AS(curvature_demo(bad), ConfigError);
}
