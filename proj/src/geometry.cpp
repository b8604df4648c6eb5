#include "stefan/geometry.hpp"

#include <cmath>
#include <numbers>

namespace stefan {

namespace {

constexpr double kMinGradient = 1e-12;
constexpr double kSignDeadBand = 1e-10;

Vec3 unit_normal(const GradientFn& grad, const Vec3& y) {
  const Vec3 g = grad(y);
  const double n = g.norm();
  if (!(n >= kMinGradient)) throw DegenerateGradient("level-set gradient vanishes at the curvature probe");
  return g / n;
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) { return 0.5 * (b - a).cross(c - a).norm(); }

// Area of the quadrangle p0 p1 p2 p3 (cyclic order) split along p0-p2.
double quad_area(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3) {
  return triangle_area(p0, p1, p2) + triangle_area(p2, p3, p0);
}

double ratio_2d(const GradientFn& grad, const Vec3& y, const CurvatureProbe& probe) {
  probe.validate();
  const Vec3 nu = unit_normal(grad, y);
  const Vec3 mu(-nu[1], nu[0], 0.0);
  const Vec3 yp = y + probe.eps0 * mu;
  const Vec3 ym = y - probe.eps0 * mu;
  const Vec3 dp = yp + probe.eps * unit_normal(grad, yp);
  const Vec3 dm = ym + probe.eps * unit_normal(grad, ym);
  return (dp - dm).head<2>().norm() / (2.0 * probe.eps0);
}

double ratio_3d(const GradientFn& grad, const Vec3& y, Rng& rng, const CurvatureProbe& probe) {
  probe.validate();
  const Vec3 nu = unit_normal(grad, y);
  std::normal_distribution<double> normal;
  Vec3 mu1 = Vec3::Zero();
  while (mu1.norm() < 1e-6) {
    const Vec3 r(normal(rng), normal(rng), normal(rng));
    mu1 = r - r.dot(nu) * nu;
  }
  mu1.normalize();
  const Vec3 mu2 = nu.cross(mu1);

  const Vec3 v[4] = {y + probe.eps0 * mu1, y + probe.eps0 * mu2, y - probe.eps0 * mu1, y - probe.eps0 * mu2};
  Vec3 w[4];
  for (int i = 0; i < 4; ++i) w[i] = v[i] + probe.eps * unit_normal(grad, v[i]);
  return quad_area(w[0], w[1], w[2], w[3]) / quad_area(v[0], v[1], v[2], v[3]);
}

}  // namespace

RelaxParams RelaxParams::from(double alpha_liquid, double alpha_solid, int d, double dt) {
  RelaxParams r;
  r.epsilon_liquid = std::sqrt(alpha_liquid * d * dt);
  r.epsilon_solid = std::sqrt(alpha_solid * d * dt);
  if (!(r.epsilon_liquid > 0.0 && r.epsilon_solid > 0.0)) {
    throw ConfigError("mushy-band widths must be positive (check alpha and dt)");
  }
  return r;
}

double relaxed_phase(double rho, double epsilon) {
  return std::min(std::max(1.0 - rho / epsilon, 0.0) / 2.0, 1.0);
}

double ball_volume(double r, int d) {
  if (d == 2) return std::numbers::pi * r * r;
  if (d == 3) return 4.0 / 3.0 * std::numbers::pi * r * r * r;
  throw std::invalid_argument("dimension must be 2 or 3");
}

double annulus_volume(double r, double delta, int d) {
  if (delta >= 0.0) return ball_volume(r + delta, d) - ball_volume(r, d);
  if (delta >= -r) return ball_volume(r, d) - ball_volume(r + delta, d);
  return ball_volume(r, d);
}

void CurvatureProbe::validate() const {
  if (!(eps > 0.0 && eps0 > 0.0 && eps <= eps0 / 10.0)) {
    throw std::invalid_argument("curvature probe requires 0 < eps <= eps0/10");
  }
}

double curvature_2d(const GradientFn& grad, const Vec3& y, const CurvatureProbe& probe) {
  return (ratio_2d(grad, y, probe) - 1.0) / probe.eps;
}

double curvature_3d(const GradientFn& grad, const Vec3& y, Rng& rng, const CurvatureProbe& probe) {
  return (ratio_3d(grad, y, rng, probe) - 1.0) / (2.0 * probe.eps);
}

double curvature(const GradientFn& grad, const Vec3& y, int d, Rng& rng, const CurvatureProbe& probe) {
  return d == 2 ? curvature_2d(grad, y, probe) : curvature_3d(grad, y, rng, probe);
}

int curvature_sign(const GradientFn& grad, const Vec3& y, int d, Rng& rng, const CurvatureProbe& probe) {
  const double ratio = d == 2 ? ratio_2d(grad, y, probe) : ratio_3d(grad, y, rng, probe);
  const double diff = ratio - 1.0;
  if (std::abs(diff) < kSignDeadBand) return 0;
  return diff > 0.0 ? 1 : -1;
}

}  // namespace stefan
