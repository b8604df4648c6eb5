#include "stefan/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "stefan/loss.hpp"
#include "stefan/particles.hpp"

namespace stefan {

std::vector<Vec3> radial_directions(int d, int n) {
  std::vector<Vec3> dirs;
  dirs.reserve(static_cast<std::size_t>(n));
  if (d == 2) {
    for (int i = 0; i < n; ++i) {
      const double a = 2.0 * std::numbers::pi * i / n;
      dirs.emplace_back(std::cos(a), std::sin(a), 0.0);
    }
    return dirs;
  }
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / n;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    dirs.emplace_back(rho * std::cos(golden * i), rho * std::sin(golden * i), z);
  }
  return dirs;
}

namespace {

double root_along(const LevelSetField& field, double t, const Vec3& w, double R) {
  constexpr int kScan = 200;
  auto f = [&](double s) { return field.phi(t, s * w); };
  double s_prev = 0.0;
  double f_prev = f(0.0);
  for (int i = 1; i < kScan; ++i) {
    const double s = R * i / (kScan - 1);
    const double fs = f(s);
    if (fs == 0.0) return s;
    if ((f_prev < 0.0) != (fs < 0.0) && f_prev != 0.0) {
      double lo = s_prev, hi = s;
      double flo = f_prev;
      while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm < 0.0) == (flo < 0.0)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      return 0.5 * (lo + hi);
    }
    s_prev = s;
    f_prev = fs;
  }
  return f(0.0) <= 0.0 ? R : 0.0;
}

}  // namespace

RadiusSample extract_radius(const LevelSetField& field, double t, double R, int n_angles) {
  const auto dirs = radial_directions(field.dim(), n_angles);
  std::vector<double> r;
  r.reserve(dirs.size());
  for (const auto& w : dirs) r.push_back(root_along(field, t, w, R));
  RadiusSample out;
  out.mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
  double var = 0.0;
  for (double v : r) var += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(var / static_cast<double>(r.size()));
  return out;
}

RadiusSeries radius_series(const LevelSetField& field, const std::vector<double>& times, double R, int n_angles) {
  RadiusSeries s;
  for (double t : times) {
    const auto r = extract_radius(field, t, R, n_angles);
    s.times.push_back(t);
    s.mean.push_back(r.mean);
    s.std.push_back(r.std);
  }
  return s;
}

double hadzic_rate(double t, double tau) {
  if (!(t < tau)) throw ConfigError("hadzic: t must be smaller than the extinction time");
  const double gap = tau - t;
  return std::sqrt(gap) * std::exp(-std::sqrt(0.5 * std::abs(std::log(gap))));
}

double estimate_empty_time(const RadiusSeries& series, double threshold) {
  for (std::size_t i = 0; i < series.times.size(); ++i) {
    if (series.mean[i] < threshold) return series.times[i];
  }
  return -1.0;
}

double fit_rate_scale(const RadiusSeries& series, double tau) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < series.times.size(); ++i) {
    if (series.times[i] >= tau) continue;
    const double h = hadzic_rate(series.times[i], tau);
    num += h * series.mean[i];
    den += h * h;
  }
  return den > 0.0 ? num / den : 0.0;
}

double long_term_radius(double r0, double c1, double c2, double L) {
  return std::sqrt(r0 * r0 + (c1 + c2) / (L * std::numbers::pi));
}

double jump_equation_residual(double delta, double r0, double delta0, double L) {
  const double lhs = std::numbers::pi * ((r0 + delta) * (r0 + delta) - r0 * r0);
  const double reach = r0 + std::min(delta, delta0);
  const double rhs = (reach * reach - r0 * r0) / (L * ((r0 + delta0) * (r0 + delta0) - r0 * r0));
  return lhs - rhs;
}

double physical_jump_size(double r0, double delta0, double L, double gamma, double R) {
  if (gamma != 0.0) throw ConfigError("gamma: the jump-size balance is only available without surface tension");
  if (!(r0 > 0.0)) throw ConfigError("r0: must be positive");
  if (!(delta0 > 0.0)) throw ConfigError("delta0: must be positive");
  if (!(L > 0.0)) throw ConfigError("L: must be positive");
  if (!(R > r0)) throw ConfigError("R: must exceed r0");
  auto f = [&](double x) { return jump_equation_residual(x, r0, delta0, L); };
  constexpr int kScan = 4000;
  const double span = R - r0;
  double x_prev = span / kScan;
  double f_prev = f(x_prev);
  for (int i = 2; i <= kScan; ++i) {
    const double x = span * i / kScan;
    const double fx = f(x);
    if ((f_prev < 0.0) != (fx < 0.0)) {
      double lo = x_prev, hi = x, flo = f_prev;
      for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm < 0.0) == (flo < 0.0)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      return 0.5 * (lo + hi);
    }
    x_prev = x;
    f_prev = fx;
  }
  return 0.0;
}

std::vector<double> reflected_kde(const std::vector<double>& samples, const std::vector<double>& weights,
                                  double upper, const std::vector<double>& at) {
  std::vector<double> out(at.size(), 0.0);
  double sw = 0.0, sw2 = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    sw += weights[i];
    sw2 += weights[i] * weights[i];
    mean += weights[i] * samples[i];
  }
  if (!(sw > 0.0)) return out;
  mean /= sw;
  double var = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) var += weights[i] * (samples[i] - mean) * (samples[i] - mean);
  var /= sw;
  const double n_eff = sw * sw / sw2;
  double h = 1.06 * std::sqrt(var) * std::pow(n_eff, -0.2);
  if (!(h > 0.0)) h = 1e-3 * upper;
  const double norm = 1.0 / (sw * h * std::sqrt(2.0 * std::numbers::pi));
  auto kernel = [&](double u) { return std::exp(-0.5 * u * u); };
  for (std::size_t k = 0; k < at.size(); ++k) {
    const double r = at[k];
    double acc = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const double s = samples[i];
      acc += weights[i] * (kernel((r - s) / h) + kernel((r + s) / h) + kernel((r - (2.0 * upper - s)) / h));
    }
    out[k] = acc * norm;
  }
  return out;
}

namespace {

// Relaxed stopping against the field for a cloud of particles advanced step
// by step. Calls `observe(n, positions, stopped)` after the stopping weights
// of step n have been applied; `stopped[j]` is sum_{l <= n} Q_l.
template <class Observe>
void run_cloud(const LevelSetField& field, std::vector<Vec3> x, int side, double alpha, double epsilon,
               const TimeGrid& grid, int last_step, double R, int d, Rng& rng, Observe observe) {
  const std::size_t J = x.size();
  std::vector<double> survive(J, 1.0), rho(J);
  std::vector<double> stopped(J, 0.0);
  std::normal_distribution<double> normal;
  const double step = std::sqrt(alpha * grid.dt());
  for (int n = 0; n <= last_step; ++n) {
    if (n > 0) {
      for (auto& p : x) {
        for (int c = 0; c < d; ++c) p[c] += step * normal(rng);
        reflect_into_ball(p, R);
      }
    }
    field.rho_batch(grid.t(n), x, rho);
    for (std::size_t j = 0; j < J; ++j) {
      const double q = phase_indicator(rho[j], side, epsilon) * survive[j];
      survive[j] -= q;
      stopped[j] += q;
    }
    observe(n, x, stopped);
  }
}

}  // namespace

TemperatureProfile recover_temperature(const LevelSetField& field, const ScenarioConfig& cfg, double t,
                                       std::size_t particles, std::uint64_t seed, int n_radii) {
  cfg.validate();
  if (particles == 0) throw ConfigError("particles: must be positive");
  if (n_radii < 1) throw ConfigError("radii: must be positive");
  const TimeGrid grid = cfg.grid();
  const RelaxParams relax = RelaxParams::from(cfg.alpha1, cfg.alpha2, cfg.d, grid.dt());
  const InitialLevelSet phi0 = cfg.initial_level_set();
  const auto pops = cfg.populations();

  TemperatureProfile prof;
  prof.t = t;
  for (int i = 0; i < n_radii; ++i) prof.radii.push_back((i + 0.5) * cfg.R / n_radii);
  const int last = t <= 0.0 ? -1 : std::clamp(static_cast<int>(std::lround(t / grid.dt())), 0, grid.N);

  for (std::size_t p = 0; p < pops.size(); ++p) {
    const auto& pop = pops[p];
    Rng rng = keyed_rng(seed, 0, 500 + p, 0);
    std::vector<Vec3> x(particles);
    for (auto& xi : x) xi = sample_population(pop, phi0, cfg.R, cfg.d, rng);
    std::vector<double> w(particles, 1.0);
    if (last >= 0) {
      const double alpha = pop.phase == 1 ? cfg.alpha1 : cfg.alpha2;
      const double eps = pop.phase == 1 ? relax.epsilon_liquid : relax.epsilon_solid;
      run_cloud(field, x, pop.phase, alpha, eps, grid, last, cfg.R, cfg.d, rng,
                [&](int n, const std::vector<Vec3>& pos, const std::vector<double>& stopped) {
                  if (n != last) return;
                  x = pos;
                  for (std::size_t j = 0; j < particles; ++j) w[j] = 1.0 - stopped[j];
                });
    }
    const double survival = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(particles);
    std::vector<double> values(prof.radii.size(), 0.0);
    if (survival > 0.0) {
      std::vector<double> radii(particles);
      for (std::size_t j = 0; j < particles; ++j) radii[j] = x[j].norm();
      const auto density = reflected_kde(radii, w, cfg.R, prof.radii);
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double r = prof.radii[i];
        const double surface = cfg.d == 2 ? 2.0 * std::numbers::pi * r : 4.0 * std::numbers::pi * r * r;
        values[i] = pop.weight * survival * density[i] / surface;
      }
    }
    prof.phase.push_back(pop.phase);
    prof.weight.push_back(pop.weight);
    prof.survival.push_back(survival);
    prof.values.push_back(std::move(values));
  }
  return prof;
}

VolumeDiagnostic volume_identity(const LevelSetField& field, const ScenarioConfig& cfg, std::size_t particles,
                                 std::uint64_t seed) {
  cfg.validate();
  const TimeGrid grid = cfg.grid();
  const RelaxParams relax = RelaxParams::from(cfg.alpha1, cfg.alpha2, cfg.d, grid.dt());
  const InitialLevelSet phi0 = cfg.initial_level_set();
  const double volume = cfg.domain_volume();

  VolumeDiagnostic diag;
  diag.domain_volume = volume;
  for (int n = 0; n <= grid.N; ++n) diag.times.push_back(grid.t(n));

  Rng urng = keyed_rng(seed, 0, 600, 0);
  const auto uniform = sample_uniform_domain(cfg.R, cfg.d, particles, urng);
  double initial = 0.0;
  for (const auto& u : uniform) initial += phi0.value(u) <= 0.0 ? 1.0 : 0.0;
  initial *= volume / static_cast<double>(particles);

  std::vector<double> absorbed(static_cast<std::size_t>(grid.N + 1), 0.0);
  const auto pops = cfg.populations();
  for (std::size_t p = 0; p < pops.size(); ++p) {
    const auto& pop = pops[p];
    Rng rng = keyed_rng(seed, 0, 601 + p, 0);
    std::vector<Vec3> x(particles);
    for (auto& xi : x) xi = sample_population(pop, phi0, cfg.R, cfg.d, rng);
    const double alpha = pop.phase == 1 ? cfg.alpha1 : cfg.alpha2;
    const double eps = pop.phase == 1 ? relax.epsilon_liquid : relax.epsilon_solid;
    run_cloud(field, std::move(x), pop.phase, alpha, eps, grid, grid.N, cfg.R, cfg.d, rng,
              [&](int n, const std::vector<Vec3>&, const std::vector<double>& stopped) {
                const double mean = std::accumulate(stopped.begin(), stopped.end(), 0.0) /
                                    static_cast<double>(stopped.size());
                absorbed[static_cast<std::size_t>(n)] += pop.weight * mean;
              });
  }

  std::vector<double> rho(uniform.size()), phi(uniform.size());
  for (int n = 0; n <= grid.N; ++n) {
    field.rho_batch(grid.t(n), uniform, rho, phi);
    double solid = 0.0;
    for (double v : phi) solid += v <= 0.0 ? 1.0 : 0.0;
    solid *= volume / static_cast<double>(uniform.size());
    const double r = (initial - solid) - absorbed[static_cast<std::size_t>(n)] / cfg.L;
    diag.residual.push_back(r);
    diag.max_abs = std::max(diag.max_abs, std::abs(r));
  }
  return diag;
}

int count_components(const std::vector<double>& values, int resolution, int d) {
  const std::size_t n = static_cast<std::size_t>(resolution);
  const std::size_t total = d == 2 ? n * n : n * n * n;
  if (values.size() != total) throw std::invalid_argument("count_components: grid size mismatch");
  std::vector<char> seen(total, 0);
  std::vector<std::size_t> stack;
  int components = 0;
  const std::size_t plane = n * n;
  for (std::size_t start = 0; start < total; ++start) {
    if (seen[start] || values[start] > 0.0) continue;
    ++components;
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t c = stack.back();
      stack.pop_back();
      const std::size_t x = c % n;
      const std::size_t y = (c / n) % n;
      const std::size_t z = c / plane;
      std::size_t nb[6];
      int count = 0;
      if (x > 0) nb[count++] = c - 1;
      if (x + 1 < n) nb[count++] = c + 1;
      if (y > 0) nb[count++] = c - n;
      if (y + 1 < n) nb[count++] = c + n;
      if (d == 3) {
        if (z > 0) nb[count++] = c - plane;
        if (z + 1 < n) nb[count++] = c + plane;
      }
      for (int k = 0; k < count; ++k) {
        if (!seen[nb[k]] && values[nb[k]] <= 0.0) {
          seen[nb[k]] = 1;
          stack.push_back(nb[k]);
        }
      }
    }
  }
  return components;
}

double parabola_curvature(double a, double y1) {
  return 2.0 / (a * std::pow(1.0 + 4.0 * y1 * y1 / (a * a), 1.5));
}

double paraboloid_curvature(double a, double b, double y1, double y2) {
  const double num = 4.0 * y1 * y1 / a + 4.0 * y2 * y2 / b + a + b;
  return num / (a * b * std::pow(1.0 + 4.0 * y1 * y1 / (a * a) + 4.0 * y2 * y2 / (b * b), 1.5));
}

std::vector<CurvatureRow> curvature_demo(const CurvatureDemo& demo) {
  if (demo.points < 1) throw ConfigError("points: must be positive");
  demo.probe.validate();
  Rng rng = keyed_rng(demo.seed, 0, 700, 0);
  std::vector<CurvatureRow> rows;
  auto position = [&](int i, double lo, double hi) {
    return demo.points == 1 ? lo : lo + (hi - lo) * i / (demo.points - 1);
  };
  auto push = [&](double pos, double est, double exact) {
    const double err = exact != 0.0 ? std::abs(est - exact) / std::abs(exact) : std::abs(est - exact);
    rows.push_back({pos, est, exact, err});
  };

  if (demo.shape == "circle" || demo.shape == "sphere") {
    if (!(demo.r > 0.0)) throw ConfigError("r: must be positive");
    const int d = demo.shape == "circle" ? 2 : 3;
    GradientFn grad = [](const Vec3& x) { return Vec3(x / x.norm()); };
    for (int i = 0; i < demo.points; ++i) {
      const double theta = 2.0 * std::numbers::pi * i / demo.points;
      const Vec3 y = d == 2 ? Vec3(demo.r * std::cos(theta), demo.r * std::sin(theta), 0.0)
                            : Vec3(demo.r * std::cos(theta), 0.0, demo.r * std::sin(theta));
      push(theta, curvature(grad, y, d, rng, demo.probe), 1.0 / demo.r);
    }
  } else if (demo.shape == "parabola") {
    if (demo.a == 0.0) throw ConfigError("a: must be non-zero");
    const double a = demo.a;
    GradientFn grad = [a](const Vec3& x) { return Vec3(2.0 * x[0] / a, -1.0, 0.0); };
    for (int i = 0; i < demo.points; ++i) {
      const double y1 = position(i, demo.lo, demo.hi);
      push(y1, curvature(grad, Vec3(y1, y1 * y1 / a, 0.0), 2, rng, demo.probe), parabola_curvature(a, y1));
    }
  } else if (demo.shape == "paraboloid" || demo.shape == "hyperbolic-paraboloid") {
    if (demo.a == 0.0 || demo.b == 0.0) throw ConfigError("a, b: must be non-zero");
    const double a = demo.a, b = demo.b;
    GradientFn grad = [a, b](const Vec3& x) { return Vec3(2.0 * x[0] / a, 2.0 * x[1] / b, -1.0); };
    for (int i = 0; i < demo.points; ++i) {
      const double y1 = position(i, demo.lo, demo.hi);
      push(y1, curvature(grad, Vec3(y1, 0.0, y1 * y1 / a), 3, rng, demo.probe), paraboloid_curvature(a, b, y1, 0.0));
    }
  } else {
    throw ConfigError("shape: unknown shape '" + demo.shape + "'");
  }
  return rows;
}

}  // namespace stefan
