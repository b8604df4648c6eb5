#include "stefan/particles.hpp"

#include <cmath>
#include <limits>

namespace stefan {

TimeGrid::TimeGrid(double horizon, int steps) : T(horizon), N(steps) {
  if (!(horizon > 0.0)) throw ConfigError("time horizon T must be positive");
  if (steps < 1) throw ConfigError("time step count N must be at least 1");
}

Rng keyed_rng(std::uint64_t seed, std::uint64_t iteration, std::uint64_t stream, std::uint64_t index) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(iteration), hi(iteration), lo(stream), hi(stream), lo(index), hi(index)};
  return Rng(seq);
}

void reflect_into_ball(Vec3& x, double R) {
  if (!std::isfinite(R)) return;
  const double r = x.norm();
  if (r <= R) return;
  const double target = 2.0 * R - r;
  if (target >= 0.0) x *= target / r;
  if (x.norm() > R || target < 0.0) x *= R / x.norm();
}

std::vector<Vec3> simulate_reflected_from(const Vec3& x0, int start, double alpha, const TimeGrid& grid,
                                          double R, int d, Rng& rng) {
  std::normal_distribution<double> normal;
  const double step = std::sqrt(alpha * grid.dt());
  std::vector<Vec3> path;
  path.reserve(static_cast<std::size_t>(grid.N - start + 1));
  Vec3 x = x0;
  path.push_back(x);
  for (int n = start; n < grid.N; ++n) {
    for (int k = 0; k < d; ++k) x[k] += step * normal(rng);
    reflect_into_ball(x, R);
    path.push_back(x);
  }
  return path;
}

std::vector<Vec3> simulate_reflected(const Vec3& x0, double alpha, const TimeGrid& grid, double R, int d,
                                     Rng& rng) {
  return simulate_reflected_from(x0, 0, alpha, grid, R, d, rng);
}

ParticleBatch antithetic_batch(const std::function<Vec3(Rng&)>& x0_sampler, double alpha,
                               const TimeGrid& grid, double R, int d, std::size_t J, const StreamKey& key,
                               int phase) {
  if (J % 2 != 0) throw std::invalid_argument("antithetic batch size must be even");
  ParticleBatch batch;
  batch.phase = phase;
  batch.count = J;
  batch.steps = grid.N + 1;
  batch.positions.resize(J * static_cast<std::size_t>(batch.steps));
  const double step = std::sqrt(alpha * grid.dt());
  std::normal_distribution<double> normal;
  for (std::size_t k = 0; k < J / 2; ++k) {
    Rng rng = key.rng(k);
    const Vec3 x0 = x0_sampler(rng);
    Vec3 a = x0;
    Vec3 b = x0;
    batch.at(2 * k, 0) = a;
    batch.at(2 * k + 1, 0) = b;
    for (int n = 1; n <= grid.N; ++n) {
      for (int c = 0; c < d; ++c) {
        const double xi = step * normal(rng);
        a[c] += xi;
        b[c] -= xi;
      }
      reflect_into_ball(a, R);
      reflect_into_ball(b, R);
      batch.at(2 * k, n) = a;
      batch.at(2 * k + 1, n) = b;
    }
  }
  return batch;
}

Vec3 sample_uniform_ball(double R, int d, Rng& rng) {
  std::uniform_real_distribution<double> u(-R, R);
  for (;;) {
    Vec3 x = Vec3::Zero();
    for (int k = 0; k < d; ++k) x[k] = u(rng);
    if (x.squaredNorm() <= R * R) return x;
  }
}

std::vector<Vec3> sample_uniform_domain(double R, int d, std::size_t J, Rng& rng) {
  std::vector<Vec3> out(J);
  for (auto& x : out) x = sample_uniform_ball(R, d, rng);
  return out;
}

namespace {

Vec3 random_direction(int d, Rng& rng) {
  std::normal_distribution<double> normal;
  for (;;) {
    Vec3 v = Vec3::Zero();
    for (int k = 0; k < d; ++k) v[k] = normal(rng);
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

bool support_contains(const PopulationSpec& pop, const InitialLevelSet& phi0, const Vec3& x) {
  switch (pop.support) {
    case SupportKind::Outside: return phi0.value(x) > 0.0;
    case SupportKind::Inside: return phi0.value(x) <= 0.0;
    case SupportKind::Annulus: {
      const double r = x.norm();
      return r >= pop.r_in && r <= pop.r_out;
    }
  }
  return false;
}

}  // namespace

Vec3 sample_population(const PopulationSpec& pop, const InitialLevelSet& phi0, double R, int d, Rng& rng) {
  if (pop.density == DensityKind::InverseRadius) {
    // Radial law with density proportional to r^{d-1}/r = r^{d-2}.
    const double a = pop.r_in;
    const double b = pop.r_out;
    if (!(b > a && a >= 0.0)) throw ConfigError("inverse-radius population needs 0 <= r_in < r_out");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double v = u(rng);
    const double r = d == 3 ? std::sqrt(a * a + v * (b * b - a * a)) : a + v * (b - a);
    return r * random_direction(d, rng);
  }
  if (pop.support == SupportKind::Annulus && !(pop.r_out > pop.r_in && pop.r_in < R)) {
    throw ConfigError("annulus support is empty");
  }
  constexpr int kMaxAttempts = 100000;
  for (int i = 0; i < kMaxAttempts; ++i) {
    const Vec3 x = sample_uniform_ball(R, d, rng);
    if (support_contains(pop, phi0, x)) return x;
  }
  throw ConfigError("initial support region is empty (no sample accepted)");
}

bool in_band(double rho, int side, double delta) {
  return side == 1 ? (rho > 0.0 && rho <= delta) : (rho >= -delta && rho <= 0.0);
}

bool sample_band(const LevelSetField& field, double t, int side, double delta, double R, Rng& rng,
                 int max_attempts, Vec3& out) {
  constexpr int kBlock = 256;
  std::vector<Vec3> cand(kBlock);
  std::vector<double> rho(kBlock);
  for (int done = 0; done < max_attempts; done += kBlock) {
    const int n = std::min(kBlock, max_attempts - done);
    cand.resize(static_cast<std::size_t>(n));
    rho.resize(static_cast<std::size_t>(n));
    for (auto& c : cand) c = sample_uniform_ball(R, field.dim(), rng);
    field.rho_batch(t, cand, rho);
    for (int i = 0; i < n; ++i) {
      if (in_band(rho[i], side, delta)) {
        out = cand[i];
        return true;
      }
    }
  }
  return false;
}

ArrivalResult poisson_boundary_arrivals(const LevelSetField& field, int side, double delta, double gamma,
                                        double alpha, const TimeGrid& grid, double R, Rng& rng,
                                        const ArrivalOptions& options) {
  if (side != 1 && side != 2) throw std::invalid_argument("side must be 1 or 2");
  ArrivalResult result;
  result.intensity.assign(static_cast<std::size_t>(grid.N), 0.0);
  if (gamma == 0.0) return result;
  if (!(gamma > 0.0 && delta > 0.0)) throw ConfigError("arrivals need gamma > 0 and delta > 0");

  const int d = field.dim();
  const double dt = grid.dt();

  for (int m = 0; m < grid.N; ++m) {
    const double t = grid.t(m);
    const GradientFn grad = [&field, t](const Vec3& x) { return field.gradient(t, x); };

    // Signed |kappa|^{2-d} weight; zero when the estimate fails.
    auto weigh = [&](const Vec3& y, double& kappa) {
      try {
        kappa = curvature(grad, y, d, rng, options.probe);
      } catch (const DegenerateGradient&) {
        kappa = 0.0;
        return 0.0;
      }
      if (d == 2) {
        const int s = curvature_sign(grad, y, d, rng, options.probe);
        return static_cast<double>(s);
      }
      if (kappa == 0.0) return 0.0;
      const double inv = std::min(1.0 / std::abs(kappa), options.max_inverse_curvature);
      return kappa > 0.0 ? inv : -inv;
    };

    int count = 0;
    double scale = 1.0;
    if (options.mode == ArrivalMode::Poisson) {
      double mean_weight = 1.0;
      if (d != 2) {
        double acc = 0.0;
        int used = 0;
        for (int p = 0; p < options.pilot; ++p) {
          Vec3 y;
          if (!sample_band(field, t, side, delta, R, rng, options.max_attempts, y)) break;
          double kappa = 0.0;
          acc += std::abs(weigh(y, kappa));
          ++used;
        }
        if (used == 0) {
          result.band_vanished = true;
          continue;
        }
        mean_weight = acc / used;
      }
      const double lambda = gamma / delta * mean_weight;
      result.intensity[static_cast<std::size_t>(m)] = lambda;
      if (mean_weight <= 0.0) continue;
      std::poisson_distribution<int> poisson(lambda * dt);
      count = poisson(rng);
      scale = 1.0 / mean_weight;
    } else {
      count = options.per_step;
      scale = gamma * dt / (delta * options.per_step);
    }

    for (int a = 0; a < count; ++a) {
      BoundaryArrival arr;
      arr.m = m;
      arr.side = side;
      if (!sample_band(field, t, side, delta, R, rng, options.max_attempts, arr.y)) {
        result.band_vanished = true;
        break;
      }
      arr.weight = weigh(arr.y, arr.curvature);
      arr.scale = scale;
      arr.path = simulate_reflected_from(arr.y, m, alpha, grid, R, d, rng);
      result.arrivals.push_back(std::move(arr));
    }
  }
  return result;
}

}  // namespace stefan
