#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "stefan/common.hpp"
#include "stefan/geometry.hpp"
#include "stefan/levelset.hpp"

namespace stefan {

struct TimeGrid {
  double T = 1.0;
  int N = 100;

  TimeGrid() = default;
  TimeGrid(double horizon, int steps);

  double dt() const { return T / N; }
  double t(int n) const { return n == N ? T : T * n / N; }
};

/// Generator for one (iteration, stream, index) cell of a run. Distinct keys
/// give statistically independent streams, so work can be split across
/// threads without changing results.
Rng keyed_rng(std::uint64_t seed, std::uint64_t iteration, std::uint64_t stream, std::uint64_t index);

struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
  std::uint64_t stream = 0;

  Rng rng(std::uint64_t index) const { return keyed_rng(seed, iteration, stream, index); }
};

/// Radial reflection into the closed ball of radius R.
void reflect_into_ball(Vec3& x, double R);

/// Euler path of reflected Brownian motion with generator (alpha/2) Laplacian,
/// N+1 positions starting at x0. R = infinity disables reflection.
std::vector<Vec3> simulate_reflected(const Vec3& x0, double alpha, const TimeGrid& grid, double R, int d,
                                     Rng& rng);

/// Same scheme started at step `start`; returns positions for steps start..N.
std::vector<Vec3> simulate_reflected_from(const Vec3& x0, int start, double alpha, const TimeGrid& grid,
                                          double R, int d, Rng& rng);

struct ParticleBatch {
  int phase = 1;  // 0 uniform samples, 1 liquid, 2 solid
  std::size_t count = 0;
  int steps = 0;  // N + 1
  std::vector<Vec3> positions;  // index j * steps + n

  const Vec3& at(std::size_t j, int n) const { return positions[j * steps + n]; }
  Vec3& at(std::size_t j, int n) { return positions[j * steps + n]; }
};

/// J/2 starting points, each driving a pair of paths with increments +xi and
/// -xi. Pair k occupies indices 2k and 2k+1 and uses key.rng(k).
ParticleBatch antithetic_batch(const std::function<Vec3(Rng&)>& x0_sampler, double alpha,
                               const TimeGrid& grid, double R, int d, std::size_t J, const StreamKey& key,
                               int phase = 1);

enum class SupportKind {
  Outside,  // {Phi_0 > 0} within the domain
  Inside,   // {Phi_0 <= 0}
  Annulus,  // r_in <= |x| <= r_out
};

enum class DensityKind {
  Uniform,
  InverseRadius,  // proportional to 1/|x|; radial supports only
};

/// One sign-definite piece of an initial temperature, normalized to a
/// probability law. `weight` is the signed total mass it contributes.
struct PopulationSpec {
  int phase = 1;
  SupportKind support = SupportKind::Outside;
  double r_in = 0.0;
  double r_out = 0.0;
  DensityKind density = DensityKind::Uniform;
  double weight = 0.0;
};

/// Draws one starting point. Uniform densities use rejection from the
/// bounding ball; inverse-radius densities invert the radial law directly.
Vec3 sample_population(const PopulationSpec& pop, const InitialLevelSet& phi0, double R, int d, Rng& rng);

Vec3 sample_uniform_ball(double R, int d, Rng& rng);
std::vector<Vec3> sample_uniform_domain(double R, int d, std::size_t J, Rng& rng);

enum class ArrivalMode {
  Poisson,     // Poisson count per step, band positions drawn uniformly
  Stratified,  // fixed number of band samples per step
};

struct ArrivalOptions {
  ArrivalMode mode = ArrivalMode::Stratified;
  int per_step = 8;     // stratified mode
  int pilot = 32;       // band samples used to estimate the mean weight (Poisson, d = 3)
  int max_attempts = 100000;
  CurvatureProbe probe{};
  double max_inverse_curvature = 10.0;  // cap on |kappa|^{-1} in d = 3
};

struct BoundaryArrival {
  int m = 0;  // arrival step
  Vec3 y = Vec3::Zero();
  int side = 1;
  double curvature = 0.0;
  double weight = 0.0;  // sign(kappa) |kappa|^{2-d}
  double scale = 1.0;   // Monte Carlo factor applied to the weight
  std::vector<Vec3> path;  // positions at steps m..N
};

struct ArrivalResult {
  std::vector<BoundaryArrival> arrivals;
  std::vector<double> intensity;  // Lambda_m per step (Poisson mode)
  bool band_vanished = false;
};

/// True when rho lies in the one-sided band of `side`: (0, delta] for the
/// liquid, [-delta, 0] for the solid.
bool in_band(double rho, int side, double delta);

/// Rejection sample of the band at time t. Returns false after max_attempts.
bool sample_band(const LevelSetField& field, double t, int side, double delta, double R, Rng& rng,
                 int max_attempts, Vec3& out);

ArrivalResult poisson_boundary_arrivals(const LevelSetField& field, int side, double delta, double gamma,
                                        double alpha, const TimeGrid& grid, double R, Rng& rng,
                                        const ArrivalOptions& options = {});

}  // namespace stefan
