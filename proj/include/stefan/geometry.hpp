#pragma once

#include <functional>

#include "stefan/common.hpp"

namespace stefan {

/// Mushy-band half widths for the two phases.
struct RelaxParams {
  double epsilon_liquid = 0.1;
  double epsilon_solid = 0.1;

  /// epsilon_i = sqrt(alpha_i * d * dt)
  static RelaxParams from(double alpha_liquid, double alpha_solid, int d, double dt);
};

/// chi(rho) = min(max(1 - rho/eps, 0) / 2, 1)
double relaxed_phase(double rho, double epsilon);

double ball_volume(double r, int d);
/// Volume of the annulus A_{r, delta}; negative delta shrinks inward and
/// delta < -r gives the whole ball.
double annulus_volume(double r, double delta, int d);

struct CurvatureProbe {
  double eps0 = 1e-2;
  double eps = 1e-4;

  /// Throws std::invalid_argument unless 0 < eps <= eps0 / 10.
  void validate() const;
};

/// Spatial gradient of a level-set function at a fixed time.
using GradientFn = std::function<Vec3(const Vec3&)>;

/// Dilation estimate in the plane (third coordinate ignored).
double curvature_2d(const GradientFn& grad, const Vec3& y, const CurvatureProbe& probe = {});

/// Dilation estimate of mean curvature in 3D. The tangent frame is drawn from `rng`.
double curvature_3d(const GradientFn& grad, const Vec3& y, Rng& rng, const CurvatureProbe& probe = {});

/// Dispatches on d and returns the estimate.
double curvature(const GradientFn& grad, const Vec3& y, int d, Rng& rng, const CurvatureProbe& probe = {});

/// Sign of (dilation ratio - 1) with a dead band of 1e-10.
int curvature_sign(const GradientFn& grad, const Vec3& y, int d, Rng& rng, const CurvatureProbe& probe = {});

}  // namespace stefan
