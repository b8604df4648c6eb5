#pragma once

#include <span>
#include <vector>

#include "stefan/autodiff.hpp"
#include "stefan/common.hpp"
#include "stefan/geometry.hpp"
#include "stefan/levelset.hpp"
#include "stefan/particles.hpp"

namespace stefan {

/// Gaussian test function psi(x) = exp(-beta |x - z|^2).
struct TestFunction {
  Vec3 z = Vec3::Zero();
  double beta = 1.0;

  double operator()(const Vec3& x) const { return std::exp(-beta * (x - z).squaredNorm()); }
};

/// Centres uniform in B_{0.9R}, widths log-uniform in [4, 64].
std::vector<TestFunction> sample_test_functions(std::size_t K, double R, int d, Rng& rng);

/// P x K matrix of psi_k(x_p).
ad::Tensor psi_matrix(std::span<const TestFunction> tests, std::span<const Vec3> points);

/// Side 0 (uniform samples) and 1 (liquid): chi(rho); side 2 (solid): 1 - chi(rho).
double phase_indicator(double rho, int side, double epsilon);
ad::Var phase_indicators(ad::Var rho, int side, double epsilon);

/// Q_0 = q_0, Q_n = q_n (1 - sum_{l<n} Q_l) along one particle.
std::vector<double> stopping_probabilities(std::span<const double> q);
/// Row-wise recursion on a tape: q is steps x J, returns one 1 x J row per step.
std::vector<ad::Var> stopping_probabilities(ad::Var q);

/// sum_{l <= n} Q_l psi_l.
double stopped_value(std::span<const double> Q, std::span<const double> psi, std::size_t n);

/// (|Omega| / J) sum_j q0_j psi_j
double region_integral(std::span<const double> q0, std::span<const double> psi, double domain_volume);

/// Monte Carlo integral of each psi over {Phi_0 <= 0}: `samples` uniform
/// points in the domain ball, shared by all test functions.
std::vector<double> initial_integrals(std::span<const TestFunction> tests, const InitialLevelSet& phi0,
                                      double R, int d, std::size_t samples, Rng& rng);
double initial_integral(const TestFunction& psi, const InitialLevelSet& phi0, double R, int d,
                        std::size_t samples, Rng& rng);

struct GrowthConstants {
  double latent_heat = 1.0;
  double eta = 1.0;
  double c1 = 1.0;
  double c2 = 1.0;
};

/// l_n for one (n, psi): I0 - I_n - (eta c1 mean(SV1) - c2 mean(SV2)) / L - K_n / L.
/// Stopped values are per-particle arrays (either may be empty).
double residual_ln(const GrowthConstants& k, double initial, double current, std::span<const double> sv_liquid,
                   std::span<const double> sv_solid, double tension = 0.0);

struct LossReport {
  double total = 0.0;
  std::vector<double> per_test_function;
  double penalty = 0.0;
  double lambda = 0.0;
  double max_symmetric_difference = 0.0;
};

/// Sum of squares of residuals[n][k].
LossReport total_loss(const std::vector<std::vector<double>>& residuals);

/// Leaky rectifier: max(x, 0) + 0.01 min(x, 0).
double leaky(double x);

struct PenaltyValue {
  double penalty = 0.0;     // with the smooth maximum
  double exact = 0.0;       // with the exact maximum
  double max_volume = 0.0;  // exact max symmetric-difference volume
};

/// q0[n][j] for n = 0..N. Volumes of consecutive symmetric differences.
PenaltyValue jump_penalty(const std::vector<std::vector<double>>& q0, double C, double domain_volume,
                          double temperature = 100.0);

/// New lambda scale: EMA towards max|grad L| / (mean|grad P| + 1e-12),
/// unchanged when grad P vanishes.
double anneal_lambda(const ad::GradientVector& grad_loss, const ad::GradientVector& grad_penalty,
                     double previous_scale);

// ---------------------------------------------------------------------------
// Assembly of the full objective on a tape whose leaves are rho values.

/// Particles of one phase population. rho block is (N+1) x J.
struct PopulationTerm {
  int side = 1;
  double epsilon = 0.1;
  double weight = 0.0;  // signed mass, divided by J inside
  std::size_t rho_block = 0;
  std::vector<ad::Tensor> psi;  // per step, J x K
};

/// Boundary particles that arrived at step m. rho block is (N-m+1) x S.
struct ArrivalGroupTerm {
  int m = 0;
  int side = 1;
  double epsilon = 0.1;
  std::size_t rho_block = 0;
  std::vector<ad::Tensor> psi;     // per step l = m..N, S x K, MC coefficients folded in
  std::vector<double> start_term;  // K values: sum_a coeff_a psi(Y_{a,m})
};

struct ObjectiveInputs {
  TimeGrid grid;
  double domain_volume = 0.0;
  double latent_heat = 1.0;
  double jump_threshold = 0.0;
  double temperature = 100.0;
  std::vector<double> initial;  // K
  std::size_t uniform_block = 0;
  double uniform_epsilon = 0.1;
  ad::Tensor psi_uniform;  // J x K
  std::vector<PopulationTerm> populations;
  std::vector<ArrivalGroupTerm> arrivals;
};

struct ObjectiveResult {
  ad::Var loss;
  ad::Var penalty;
  LossReport report;
  std::vector<std::vector<double>> residuals;  // n = 1..N, K each
  std::vector<double> tension;                 // K-hat summed over psi per step, n = 1..N
};

ObjectiveResult build_objective(ad::Tape& tape, const ad::ParamStore& rho_store, const ObjectiveInputs& in);

}  // namespace stefan
