#pragma once

#include <span>
#include <vector>

#include "stefan/levelset.hpp"
#include "stefan/loss.hpp"
#include "stefan/particles.hpp"

namespace stefan {

/// Surface-tension term per time step and test function.
struct TensionEstimate {
  std::vector<std::vector<double>> K;   // [n][k], n = 0..N, combined -K^1 - K^2
  std::vector<std::vector<double>> K1;  // liquid-side sum
  std::vector<std::vector<double>> K2;  // solid-side sum
  std::size_t arrivals = 0;
};

struct TensionSettings {
  double epsilon_liquid = 0.1;
  double epsilon_solid = 0.1;
};

/// Plain estimate of the tension term from boundary arrivals. Each arrival
/// contributes scale * weight * (sum_{l<=n} Q_l psi(Y_l) - psi(Y_m)) to its
/// side for every n > m, where Q are the relaxed stopping weights of the path
/// against the level set in `field`.
TensionEstimate estimate_K(std::span<const BoundaryArrival> arrivals, const LevelSetField& field,
                           std::span<const TestFunction> tests, const TimeGrid& grid,
                           const TensionSettings& settings);

/// u0 + gamma / |x|: the transformed initial temperature of the radial trick.
double trick_temperature(double u0, double gamma, const Vec3& x);

/// Populations of the transformed problem: the original ones plus
/// inverse-radius populations carrying +gamma/|x| on each phase, with
/// signed masses gamma * 2 pi (b^2 - a^2). Requires d = 3 and a sphere.
std::vector<PopulationSpec> radial_trick_initial(std::span<const PopulationSpec> populations, double gamma,
                                                 int d, double r0, double R);

}  // namespace stefan
