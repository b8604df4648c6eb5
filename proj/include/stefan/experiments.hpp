#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stefan/geometry.hpp"
#include "stefan/levelset.hpp"
#include "stefan/scenario.hpp"

namespace stefan {

struct RadiusSample {
  double mean = 0.0;
  double std = 0.0;
};

/// Unit directions used for radius extraction: equally spaced angles in 2D,
/// a Fibonacci sphere in 3D.
std::vector<Vec3> radial_directions(int d, int n);

/// Smallest zero of s -> Phi(t, s w) on [0, R] for each direction w, averaged.
/// A ray with no sign change contributes R when Phi(t, 0) <= 0 and 0 otherwise.
RadiusSample extract_radius(const LevelSetField& field, double t, double R, int n_angles = 64);

struct RadiusSeries {
  std::vector<double> times;
  std::vector<double> mean;
  std::vector<double> std;
};

RadiusSeries radius_series(const LevelSetField& field, const std::vector<double>& times, double R,
                           int n_angles = 64);

/// sqrt(tau - t) exp(-sqrt(|log(tau - t)| / 2)); ConfigError for t >= tau.
double hadzic_rate(double t, double tau);

/// First time at which the mean radius drops below `threshold`; negative if never.
double estimate_empty_time(const RadiusSeries& series, double threshold = 0.01);

/// Least-squares constant c minimising sum (mean_r - c * rate)^2 over t < tau.
double fit_rate_scale(const RadiusSeries& series, double tau);

/// sqrt(r0^2 + (c1 + c2) / (L pi))
double long_term_radius(double r0, double c1, double c2, double L);

/// LHS - RHS of the jump-size balance at Delta.
double jump_equation_residual(double delta, double r0, double delta0, double L);

/// Smallest positive root of the jump-size balance below R - r0, or 0.
/// Only gamma = 0 is supported.
double physical_jump_size(double r0, double delta0, double L, double gamma = 0.0, double R = 1.0);

struct TemperatureProfile {
  double t = 0.0;
  std::vector<double> radii;
  /// One profile per initial population, in scenario order.
  std::vector<int> phase;
  std::vector<double> weight;
  std::vector<double> survival;
  std::vector<std::vector<double>> values;
};

/// Radial temperature recovered from the density of surviving particles.
/// t <= 0 gives the profile just before time zero (no stopping applied).
TemperatureProfile recover_temperature(const LevelSetField& field, const ScenarioConfig& cfg, double t,
                                       std::size_t particles, std::uint64_t seed, int n_radii = 100);

/// Weighted Gaussian KDE on [0, upper] with reflection at both ends and
/// Silverman's bandwidth. Returns the density at `at` (integrates to ~1).
std::vector<double> reflected_kde(const std::vector<double>& samples, const std::vector<double>& weights,
                                  double upper, const std::vector<double>& at);

struct VolumeDiagnostic {
  std::vector<double> times;
  std::vector<double> residual;  // per step n = 0..N
  double max_abs = 0.0;
  double domain_volume = 0.0;
};

/// Volume change of the solid against the absorbed particle mass, with
/// fresh particles and uniform points.
VolumeDiagnostic volume_identity(const LevelSetField& field, const ScenarioConfig& cfg, std::size_t particles,
                                 std::uint64_t seed);

/// Connected components of {values <= 0} on a resolution^d grid laid out as
/// in eval_phi_grid (4-neighbour in 2D, 6-neighbour in 3D).
int count_components(const std::vector<double>& values, int resolution, int d);

// Curvature verification on analytic surfaces.

struct CurvatureRow {
  double position = 0.0;
  double estimate = 0.0;
  double exact = 0.0;
  double rel_error = 0.0;
};

struct CurvatureDemo {
  std::string shape = "parabola";  // circle | parabola | paraboloid | hyperbolic-paraboloid | sphere
  double a = 2.0;
  double b = 2.0;
  double r = 0.5;
  int points = 101;
  double lo = -1.0;
  double hi = 1.0;
  CurvatureProbe probe{};
  std::uint64_t seed = 0;
};

/// Exact mean curvature of y_d = y1^2/a (+ y2^2/b) at (y1, y2).
double parabola_curvature(double a, double y1);
double paraboloid_curvature(double a, double b, double y1, double y2);

/// Estimates along the shape: angle for circle and sphere, y1 otherwise
/// (with y2 = 0 in 3D). Throws ConfigError for unknown shapes.
std::vector<CurvatureRow> curvature_demo(const CurvatureDemo& demo);

}  // namespace stefan
