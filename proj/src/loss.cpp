#include "stefan/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stefan {

std::vector<TestFunction> sample_test_functions(std::size_t K, double R, int d, Rng& rng) {
  if (K == 0) throw ConfigError("number of test functions K must be at least 1");
  std::uniform_real_distribution<double> logu(std::log(4.0), std::log(64.0));
  std::vector<TestFunction> out(K);
  for (auto& f : out) {
    f.z = sample_uniform_ball(0.9 * R, d, rng);
    f.beta = std::exp(logu(rng));
  }
  return out;
}

ad::Tensor psi_matrix(std::span<const TestFunction> tests, std::span<const Vec3> points) {
  const std::size_t K = tests.size();
  ad::Tensor out(points.size(), K);
  for (std::size_t p = 0; p < points.size(); ++p) {
    double* row = out.data() + p * K;
    for (std::size_t k = 0; k < K; ++k) row[k] = tests[k](points[p]);
  }
  return out;
}

double phase_indicator(double rho, int side, double epsilon) {
  const double chi = relaxed_phase(rho, epsilon);
  return side == 2 ? 1.0 - chi : chi;
}

ad::Var phase_indicators(ad::Var rho, int side, double epsilon) {
  using namespace ad;
  const Var chi = min_c(max_c(scale_shift(rho, -0.5 / epsilon, 0.5), 0.0), 1.0);
  return side == 2 ? 1.0 - chi : chi;
}

std::vector<double> stopping_probabilities(std::span<const double> q) {
  std::vector<double> Q(q.size());
  double survive = 1.0;
  for (std::size_t n = 0; n < q.size(); ++n) {
    Q[n] = q[n] * survive;
    survive -= Q[n];
  }
  return Q;
}

std::vector<ad::Var> stopping_probabilities(ad::Var q) {
  using namespace ad;
  const std::size_t steps = q.value().rows();
  std::vector<Var> out;
  out.reserve(steps);
  Var survive;
  for (std::size_t n = 0; n < steps; ++n) {
    const Var qn = row(q, n);
    const Var Qn = n == 0 ? qn : qn * survive;
    survive = n == 0 ? 1.0 - Qn : survive - Qn;
    out.push_back(Qn);
  }
  return out;
}

double stopped_value(std::span<const double> Q, std::span<const double> psi, std::size_t n) {
  if (Q.size() != psi.size()) throw std::invalid_argument("stopping weights and psi values differ in length");
  if (n >= Q.size()) throw std::out_of_range("stopped_value index beyond path length");
  double s = 0.0;
  for (std::size_t l = 0; l <= n; ++l) s += Q[l] * psi[l];
  return s;
}

double region_integral(std::span<const double> q0, std::span<const double> psi, double domain_volume) {
  if (q0.size() != psi.size()) throw std::invalid_argument("indicator and psi arrays differ in length");
  if (q0.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t j = 0; j < q0.size(); ++j) s += q0[j] * psi[j];
  return domain_volume * s / static_cast<double>(q0.size());
}

std::vector<double> initial_integrals(std::span<const TestFunction> tests, const InitialLevelSet& phi0,
                                      double R, int d, std::size_t samples, Rng& rng) {
  std::vector<double> out(tests.size(), 0.0);
  for (std::size_t s = 0; s < samples; ++s) {
    const Vec3 x = sample_uniform_ball(R, d, rng);
    if (phi0.value(x) > 0.0) continue;
    for (std::size_t k = 0; k < tests.size(); ++k) out[k] += tests[k](x);
  }
  const double scale = ball_volume(R, d) / static_cast<double>(samples);
  for (double& v : out) v *= scale;
  return out;
}

double initial_integral(const TestFunction& psi, const InitialLevelSet& phi0, double R, int d,
                        std::size_t samples, Rng& rng) {
  const TestFunction one[1] = {psi};
  return initial_integrals(one, phi0, R, d, samples, rng)[0];
}

double residual_ln(const GrowthConstants& k, double initial, double current, std::span<const double> sv_liquid,
                   std::span<const double> sv_solid, double tension) {
  auto mean = [](std::span<const double> v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  return initial - current - (k.eta * k.c1 * mean(sv_liquid) - k.c2 * mean(sv_solid)) / k.latent_heat -
         tension / k.latent_heat;
}

LossReport total_loss(const std::vector<std::vector<double>>& residuals) {
  LossReport r;
  for (const auto& row : residuals) {
    if (r.per_test_function.size() < row.size()) r.per_test_function.resize(row.size(), 0.0);
    for (std::size_t k = 0; k < row.size(); ++k) {
      r.per_test_function[k] += row[k] * row[k];
      r.total += row[k] * row[k];
    }
  }
  return r;
}

double leaky(double x) { return std::max(x, 0.0) + 0.01 * std::min(x, 0.0); }

PenaltyValue jump_penalty(const std::vector<std::vector<double>>& q0, double C, double domain_volume,
                          double temperature) {
  PenaltyValue out;
  if (q0.size() < 2) {
    out.penalty = out.exact = leaky(-C);
    return out;
  }
  std::vector<double> vols;
  for (std::size_t n = 1; n < q0.size(); ++n) {
    double s = 0.0;
    for (std::size_t j = 0; j < q0[n].size(); ++j) s += std::abs(q0[n][j] - q0[n - 1][j]);
    vols.push_back(domain_volume * s / static_cast<double>(q0[n].size()));
  }
  const double mx = *std::max_element(vols.begin(), vols.end());
  double acc = 0.0;
  for (double v : vols) acc += std::exp(temperature * (v - mx));
  const double smooth = mx + std::log(acc) / temperature;
  out.max_volume = mx;
  out.exact = leaky(mx - C);
  out.penalty = leaky(smooth - C);
  return out;
}

double anneal_lambda(const ad::GradientVector& grad_loss, const ad::GradientVector& grad_penalty,
                     double previous_scale) {
  const double mean_p = grad_penalty.mean_abs();
  if (!(mean_p > 0.0)) return previous_scale;
  const double target = grad_loss.max_abs() / (mean_p + 1e-12);
  return 0.9 * previous_scale + 0.1 * target;
}

ObjectiveResult build_objective(ad::Tape& tape, const ad::ParamStore& rho_store, const ObjectiveInputs& in) {
  using namespace ad;
  const int N = in.grid.N;
  const std::size_t K = in.initial.size();
  const double L = in.latent_heat;

  const Var rho_u = tape.param(rho_store, in.uniform_block);
  const std::size_t J = rho_u.value().cols();
  if (rho_u.value().rows() != static_cast<std::size_t>(N + 1)) throw std::invalid_argument("uniform rho block must have N+1 rows");
  const Var q_u = phase_indicators(rho_u, 0, in.uniform_epsilon);
  const Var integrals = matmul(q_u, tape.constant(in.psi_uniform)) * (in.domain_volume / static_cast<double>(J));

  // Growth terms from the initial-temperature populations, accumulated per step.
  std::vector<Var> growth(static_cast<std::size_t>(N + 1));
  std::vector<bool> has_growth(static_cast<std::size_t>(N + 1), false);
  for (const auto& pop : in.populations) {
    const Var rho = tape.param(rho_store, pop.rho_block);
    const std::size_t count = rho.value().cols();
    const auto Q = stopping_probabilities(phase_indicators(rho, pop.side, pop.epsilon));
    const double coeff = pop.weight / (static_cast<double>(count) * L);
    Var sv;
    for (int n = 0; n <= N; ++n) {
      const Var w = matmul(Q[static_cast<std::size_t>(n)], tape.constant(pop.psi[static_cast<std::size_t>(n)]));
      sv = n == 0 ? w : sv + w;
      const Var term = sv * coeff;
      auto idx = static_cast<std::size_t>(n);
      growth[idx] = has_growth[idx] ? growth[idx] + term : term;
      has_growth[idx] = true;
    }
  }

  // Tension: K_n = -(K^1_n + K^2_n), each a sum over arrival steps m < n.
  std::vector<Var> tension(static_cast<std::size_t>(N + 1));
  std::vector<bool> has_tension(static_cast<std::size_t>(N + 1), false);
  for (const auto& g : in.arrivals) {
    const Var rho = tape.param(rho_store, g.rho_block);
    const auto Q = stopping_probabilities(phase_indicators(rho, g.side, g.epsilon));
    const Var start = tape.constant(Tensor::row(g.start_term));
    Var sv;
    for (int n = g.m; n <= N; ++n) {
      const std::size_t l = static_cast<std::size_t>(n - g.m);
      const Var w = matmul(Q[l], tape.constant(g.psi[l]));
      sv = l == 0 ? w : sv + w;
      if (n == g.m) continue;
      const Var term = start - sv;  // minus sign of K = -K^1 - K^2
      auto idx = static_cast<std::size_t>(n);
      tension[idx] = has_tension[idx] ? tension[idx] + term : term;
      has_tension[idx] = true;
    }
  }

  ObjectiveResult out;
  const Var initial = tape.constant(Tensor::row(in.initial));
  Var loss;
  for (int n = 1; n <= N; ++n) {
    const auto idx = static_cast<std::size_t>(n);
    Var ell = initial - row(integrals, idx);
    if (has_growth[idx]) ell = ell - growth[idx];
    if (has_tension[idx]) ell = ell - tension[idx] * (1.0 / L);
    loss = n == 1 ? dot(ell, ell) : loss + dot(ell, ell);
    const auto& v = ell.value();
    out.residuals.emplace_back(v.values().begin(), v.values().end());
    double tsum = 0.0;
    if (has_tension[idx]) {
      for (double x : tension[idx].value().values()) tsum += x;
    }
    out.tension.push_back(tsum);
  }
  out.loss = loss;

  // Jump penalty on the uniform-sample indicators.
  std::vector<Var> vols;
  double mx = -1e300;
  for (int n = 1; n <= N; ++n) {
    const Var diff = row(q_u, static_cast<std::size_t>(n)) - row(q_u, static_cast<std::size_t>(n - 1));
    const Var absdiff = max_c(diff, 0.0) - min_c(diff, 0.0);
    const Var vol = sum(absdiff) * (in.domain_volume / static_cast<double>(J));
    mx = std::max(mx, vol.item());
    vols.push_back(vol);
  }
  Var acc;
  for (std::size_t i = 0; i < vols.size(); ++i) {
    const Var e = exp(scale_shift(vols[i], in.temperature, -in.temperature * mx));
    acc = i == 0 ? e : acc + e;
  }
  const Var smooth = scale_shift(log(acc), 1.0 / in.temperature, mx);
  const Var excess = smooth - in.jump_threshold;
  out.penalty = max_c(excess, 0.0) + min_c(excess, 0.0) * 0.01;

  out.report = total_loss(out.residuals);
  out.report.penalty = out.penalty.item();
  out.report.max_symmetric_difference = mx;
  if (K != out.report.per_test_function.size()) out.report.per_test_function.resize(K, 0.0);
  return out;
}

}  // namespace stefan
