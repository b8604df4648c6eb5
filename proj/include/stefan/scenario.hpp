#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stefan/levelset.hpp"
#include "stefan/particles.hpp"

namespace stefan {

/// Training hyperparameters. Zero / negative values mean "use the default
/// derived from the problem" (see the accessors on ScenarioConfig).
struct TrainingConfig {
  int J = 0;   // particles per population; default 2^(7+d)
  int M = -1;  // iterations; default 3000, or 1000 with surface tension
  int K = 0;   // test functions; default 100 d
  int N = 100;
  double lambda0 = 0.1;
  double lr = 1e-3;
  int i0_samples = 10000;
  bool early_stop = true;
  int early_window = 50;
  double early_tolerance = 1e-3;
  int checkpoint_every = 100;
  double delta = 0.0;  // tension band; default 5 sqrt(alpha d dt)
  ArrivalMode arrival_mode = ArrivalMode::Stratified;
  int arrivals_per_step = 8;
  double curvature_eps0 = 1e-2;
  double curvature_eps = 1e-4;
  double jump_threshold = 0.0;  // C; default |Omega| / 2
};

struct ScenarioConfig {
  std::string name = "custom";
  int d = 2;
  double T = 1.0;
  double R = 1.0;

  std::string phi0_kind = "sphere";  // sphere | l1-ball | diamond | dumbbell | grid
  double r0 = 0.5;
  DumbbellParams dumbbell;
  std::string phi0_grid;  // CSV path for the grid kind

  double alpha1 = 0.5;
  double alpha2 = 0.5;
  double L = 1.0;
  double eta = 1.0;
  double gamma = 0.0;
  double c1 = 1.0;
  double c2 = 1.0;
  bool one_phase = false;

  std::string liquid_support = "outside";  // outside | annulus
  double support_r_in = 0.0;
  double support_r_out = 0.0;
  bool radial_trick = false;

  TrainingConfig train;

  int J() const { return train.J > 0 ? train.J : 1 << (7 + d); }
  int M() const { return train.M >= 0 ? train.M : (gamma > 0.0 ? 1000 : 3000); }
  int K() const { return train.K > 0 ? train.K : 100 * d; }
  TimeGrid grid() const { return TimeGrid(T, train.N); }
  double domain_volume() const;
  double delta() const;
  double jump_threshold() const;
  /// gamma seen by the training loop (zero after the radial trick).
  double effective_gamma() const { return radial_trick ? 0.0 : gamma; }

  InitialLevelSet initial_level_set() const;
  NetworkArch arch() const { return NetworkArch::for_dimension(d, T); }
  /// Sign-definite initial populations with signed masses.
  std::vector<PopulationSpec> populations() const;

  /// Throws ConfigError naming the offending field.
  void validate() const;

  std::map<std::string, std::string> to_kv() const;
  static ScenarioConfig from_kv(const std::map<std::string, std::string>& kv);
  /// Sorted key=value lines; the basis of the scenario hash.
  std::string canonical() const;
  std::uint64_t hash() const;
};

/// Applies one `key=value` override; throws ConfigError on unknown keys or bad values.
void apply_override(ScenarioConfig& cfg, const std::string& key, const std::string& value);
void apply_override(ScenarioConfig& cfg, const std::string& assignment);

/// Flat key=value text with '#' comments. Unspecified keys keep the defaults
/// of the scenario named by `base` (or plain defaults).
ScenarioConfig parse_config_text(const std::string& text);
ScenarioConfig load_config_file(const std::string& path);

std::vector<ScenarioConfig> builtin_scenarios();
/// Throws ConfigError for unknown names.
ScenarioConfig builtin_scenario(const std::string& name);

std::uint64_t fnv1a(std::string_view bytes);

}  // namespace stefan
