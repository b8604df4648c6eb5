#include "stefan/tension.hpp"

#include <cmath>
#include <numbers>

namespace stefan {

TensionEstimate estimate_K(std::span<const BoundaryArrival> arrivals, const LevelSetField& field,
                           std::span<const TestFunction> tests, const TimeGrid& grid,
                           const TensionSettings& settings) {
  const std::size_t K = tests.size();
  const auto steps = static_cast<std::size_t>(grid.N + 1);
  TensionEstimate est;
  est.K.assign(steps, std::vector<double>(K, 0.0));
  est.K1 = est.K;
  est.K2 = est.K;
  est.arrivals = arrivals.size();

  for (const auto& a : arrivals) {
    const double eps = a.side == 1 ? settings.epsilon_liquid : settings.epsilon_solid;
    const double coeff = a.scale * a.weight;
    if (coeff == 0.0) continue;
    auto& side = a.side == 1 ? est.K1 : est.K2;

    std::vector<double> q(a.path.size());
    for (std::size_t l = 0; l < a.path.size(); ++l) {
      q[l] = phase_indicator(field.rho(grid.t(a.m + static_cast<int>(l)), a.path[l]), a.side, eps);
    }
    const auto Q = stopping_probabilities(q);
    std::vector<double> sv(K, 0.0);
    for (std::size_t l = 0; l < a.path.size(); ++l) {
      for (std::size_t k = 0; k < K; ++k) sv[k] += Q[l] * tests[k](a.path[l]);
      if (l == 0) continue;
      const auto n = static_cast<std::size_t>(a.m) + l;
      for (std::size_t k = 0; k < K; ++k) {
        const double c = coeff * (sv[k] - tests[k](a.y));
        side[n][k] += c;
        est.K[n][k] -= c;
      }
    }
  }
  return est;
}

double trick_temperature(double u0, double gamma, const Vec3& x) { return u0 + gamma / x.norm(); }

std::vector<PopulationSpec> radial_trick_initial(std::span<const PopulationSpec> populations, double gamma,
                                                 int d, double r0, double R) {
  if (d != 3) throw ConfigError("radial trick requires d = 3 (1/|x| is harmonic only in three dimensions)");
  std::vector<PopulationSpec> out(populations.begin(), populations.end());
  if (gamma == 0.0) return out;
  if (!(r0 > 0.0 && r0 < R)) throw ConfigError("radial trick requires a sphere 0 < r0 < R");

  // Integral of 1/|x| over the shell a <= |x| <= b in 3D is 2 pi (b^2 - a^2).
  auto shell_mass = [](double a, double b) { return 2.0 * std::numbers::pi * (b * b - a * a); };
  PopulationSpec liquid;
  liquid.phase = 1;
  liquid.support = SupportKind::Annulus;
  liquid.r_in = r0;
  liquid.r_out = R;
  liquid.density = DensityKind::InverseRadius;
  liquid.weight = gamma * shell_mass(r0, R);
  out.push_back(liquid);

  bool has_solid = false;
  for (const auto& p : populations) has_solid = has_solid || p.phase == 2;
  if (has_solid) {
    PopulationSpec solid = liquid;
    solid.phase = 2;
    solid.r_in = 0.0;
    solid.r_out = r0;
    solid.weight = gamma * shell_mass(0.0, r0);
    out.push_back(solid);
  }
  return out;
}

}  // namespace stefan
