#include "stefan/scenario.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "stefan/geometry.hpp"
#include "stefan/io.hpp"
#include "stefan/tension.hpp"

namespace stefan {

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

double ScenarioConfig::domain_volume() const { return ball_volume(R, d); }

double ScenarioConfig::delta() const {
  if (train.delta > 0.0) return train.delta;
  return 5.0 * std::sqrt(alpha1 * d * grid().dt());
}

double ScenarioConfig::jump_threshold() const {
  return train.jump_threshold > 0.0 ? train.jump_threshold : domain_volume() / 2.0;
}

namespace {

std::shared_ptr<const GridLevelSet> load_grid(const std::string& path, double R) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open level-set grid file: " + path);
  auto grid = std::make_shared<GridLevelSet>();
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int cols = 0;
    while (std::getline(ss, cell, ',')) {
      grid->values.push_back(parse_double(cell, "phi0_grid"));
      ++cols;
    }
    if (grid->nx == 0) grid->nx = cols;
    if (cols != grid->nx) throw IoError("level-set grid rows have unequal length: " + path);
    ++grid->ny;
  }
  if (grid->nx < 2 || grid->ny < 2) throw IoError("level-set grid must be at least 2x2: " + path);
  grid->x_min = grid->y_min = -R;
  grid->x_max = grid->y_max = R;
  return grid;
}

}  // namespace

InitialLevelSet ScenarioConfig::initial_level_set() const {
  if (phi0_kind == "sphere") return InitialLevelSet::sphere(d, r0);
  if (phi0_kind == "l1-ball") return InitialLevelSet::l1_ball(d, r0);
  if (phi0_kind == "diamond") return InitialLevelSet::diamond(d, r0);
  if (phi0_kind == "dumbbell") return InitialLevelSet::make_dumbbell(dumbbell);
  if (phi0_kind == "grid") {
    InitialLevelSet ls;
    ls.kind = InitialLevelSet::Kind::CustomGrid;
    ls.dim = d;
    ls.grid = load_grid(phi0_grid, R);
    return ls;
  }
  throw ConfigError("phi0: unknown initial level-set kind '" + phi0_kind + "'");
}

std::vector<PopulationSpec> ScenarioConfig::populations() const {
  std::vector<PopulationSpec> out;
  if (c1 != 0.0) {
    PopulationSpec liquid;
    liquid.phase = 1;
    liquid.weight = eta * c1;
    if (liquid_support == "annulus") {
      liquid.support = SupportKind::Annulus;
      liquid.r_in = support_r_in;
      liquid.r_out = support_r_out;
    } else {
      liquid.support = SupportKind::Outside;
    }
    out.push_back(liquid);
  }
  if (!one_phase && c2 != 0.0) {
    PopulationSpec solid;
    solid.phase = 2;
    solid.support = SupportKind::Inside;
    solid.weight = -c2;
    out.push_back(solid);
  }
  if (radial_trick) out = radial_trick_initial(out, gamma, d, r0, R);
  return out;
}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) { throw ConfigError(field + ": " + why); };
  if (d != 2 && d != 3) fail("d", "dimension must be 2 or 3");
  if (!(T > 0.0)) fail("T", "must be positive");
  if (!(R > 0.0)) fail("R", "must be positive");
  if (phi0_kind == "sphere" || phi0_kind == "l1-ball" || phi0_kind == "diamond") {
    if (!(r0 > 0.0 && r0 < R)) fail("r0", "must satisfy 0 < r0 < R");
  } else if (phi0_kind == "dumbbell" || phi0_kind == "grid") {
    if (d != 2) fail("phi0", phi0_kind + " initial level sets are two-dimensional");
    if (phi0_kind == "grid" && phi0_grid.empty()) fail("phi0_grid", "path required for the grid kind");
  } else {
    fail("phi0", "unknown kind '" + phi0_kind + "'");
  }
  if (!(alpha1 > 0.0)) fail("alpha1", "must be positive");
  if (!(alpha2 > 0.0)) fail("alpha2", "must be positive");
  if (!(L > 0.0)) fail("L", "latent heat must be positive");
  if (eta != 1.0 && eta != -1.0) fail("eta", "must be -1 or +1");
  if (!(gamma >= 0.0)) fail("gamma", "must be non-negative");
  if (!(c1 >= 0.0)) fail("c1", "must be non-negative");
  if (!(c2 >= 0.0)) fail("c2", "must be non-negative");
  if (gamma > 0.0 && alpha1 != alpha2) {
    fail("gamma", "surface tension with alpha1 != alpha2 is out of scope");
  }
  if (liquid_support != "outside" && liquid_support != "annulus") fail("liquid_support", "must be outside or annulus");
  if (liquid_support == "annulus" && !(support_r_in >= 0.0 && support_r_out > support_r_in && support_r_in < R)) {
    fail("support_r_out", "annulus support must satisfy 0 <= r_in < r_out and r_in < R");
  }
  if (radial_trick) {
    if (d != 3) fail("radial_trick", "requires d = 3");
    if (phi0_kind != "sphere") fail("radial_trick", "requires a spherical initial solid");
    if (alpha1 != alpha2) fail("radial_trick", "requires alpha1 = alpha2");
  }
  if (train.J != 0 && (train.J < 2 || train.J % 2 != 0)) fail("J", "must be a positive even number");
  if (J() % 2 != 0) fail("J", "must be even");
  if (train.N < 1) fail("N", "must be at least 1");
  if (train.K < 0) fail("K", "must be non-negative (0 selects the default)");
  if (train.M < -1) fail("M", "must be non-negative");
  if (!(train.lr > 0.0)) fail("lr", "must be positive");
  if (!(train.lambda0 >= 0.0)) fail("lambda0", "must be non-negative");
  if (train.i0_samples < 1) fail("i0_samples", "must be positive");
  if (train.early_window < 1) fail("early_window", "must be positive");
  if (train.checkpoint_every < 1) fail("checkpoint_every", "must be positive");
  if (!(train.delta >= 0.0)) fail("delta", "must be non-negative");
  if (train.arrivals_per_step < 1) fail("arrivals_per_step", "must be positive");
  if (!(train.curvature_eps > 0.0 && train.curvature_eps <= train.curvature_eps0 / 10.0)) {
    fail("curvature_eps", "must satisfy 0 < eps <= eps0 / 10");
  }
  if (!(train.jump_threshold >= 0.0)) fail("jump_threshold", "must be non-negative");
}

std::map<std::string, std::string> ScenarioConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  auto num = [](double v) { return format_double(v); };
  auto integer = [](long long v) { return std::to_string(v); };
  auto flag = [](bool b) { return std::string(b ? "1" : "0"); };
  kv["name"] = name;
  kv["d"] = integer(d);
  kv["T"] = num(T);
  kv["R"] = num(R);
  kv["phi0"] = phi0_kind;
  kv["r0"] = num(r0);
  kv["phi0_grid"] = phi0_grid;
  kv["dumbbell_offset"] = num(dumbbell.center_right[0]);
  kv["dumbbell_radius"] = num(dumbbell.radius);
  kv["dumbbell_bar_half_length"] = num(dumbbell.bar_half_length);
  kv["dumbbell_bar_half_width"] = num(dumbbell.bar_half_width);
  kv["alpha1"] = num(alpha1);
  kv["alpha2"] = num(alpha2);
  kv["L"] = num(L);
  kv["eta"] = num(eta);
  kv["gamma"] = num(gamma);
  kv["c1"] = num(c1);
  kv["c2"] = num(c2);
  kv["one_phase"] = flag(one_phase);
  kv["liquid_support"] = liquid_support;
  kv["support_r_in"] = num(support_r_in);
  kv["support_r_out"] = num(support_r_out);
  kv["radial_trick"] = flag(radial_trick);
  kv["J"] = integer(train.J);
  kv["M"] = integer(train.M);
  kv["K"] = integer(train.K);
  kv["N"] = integer(train.N);
  kv["lambda0"] = num(train.lambda0);
  kv["lr"] = num(train.lr);
  kv["i0_samples"] = integer(train.i0_samples);
  kv["early_stop"] = flag(train.early_stop);
  kv["early_window"] = integer(train.early_window);
  kv["early_tolerance"] = num(train.early_tolerance);
  kv["checkpoint_every"] = integer(train.checkpoint_every);
  kv["delta"] = num(train.delta);
  kv["arrival_mode"] = train.arrival_mode == ArrivalMode::Poisson ? "poisson" : "stratified";
  kv["arrivals_per_step"] = integer(train.arrivals_per_step);
  kv["curvature_eps0"] = num(train.curvature_eps0);
  kv["curvature_eps"] = num(train.curvature_eps);
  kv["jump_threshold"] = num(train.jump_threshold);
  return kv;
}

void apply_override(ScenarioConfig& c, const std::string& key, const std::string& value) {
  auto dbl = [&] { return parse_double(value, key); };
  auto integer = [&] { return static_cast<int>(parse_int(value, key)); };
  auto flag = [&] { return parse_bool(value, key); };
  auto& t = c.train;
  if (key == "name") c.name = value;
  else if (key == "base") c = builtin_scenario(value);
  else if (key == "d") c.d = integer();
  else if (key == "T") c.T = dbl();
  else if (key == "R") c.R = dbl();
  else if (key == "phi0") c.phi0_kind = value;
  else if (key == "r0") c.r0 = dbl();
  else if (key == "phi0_grid") c.phi0_grid = value;
  else if (key == "dumbbell_offset") {
    const double o = dbl();
    c.dumbbell.center_left = Vec3(-o, 0.0, 0.0);
    c.dumbbell.center_right = Vec3(o, 0.0, 0.0);
  } else if (key == "dumbbell_radius") c.dumbbell.radius = dbl();
  else if (key == "dumbbell_bar_half_length") c.dumbbell.bar_half_length = dbl();
  else if (key == "dumbbell_bar_half_width") c.dumbbell.bar_half_width = dbl();
  else if (key == "alpha") c.alpha1 = c.alpha2 = dbl();
  else if (key == "alpha1") c.alpha1 = dbl();
  else if (key == "alpha2") c.alpha2 = dbl();
  else if (key == "L") c.L = dbl();
  else if (key == "eta") c.eta = dbl();
  else if (key == "gamma") c.gamma = dbl();
  else if (key == "c1") c.c1 = dbl();
  else if (key == "c2") c.c2 = dbl();
  else if (key == "one_phase") c.one_phase = flag();
  else if (key == "liquid_support") c.liquid_support = value;
  else if (key == "support_r_in") c.support_r_in = dbl();
  else if (key == "support_r_out") c.support_r_out = dbl();
  else if (key == "radial_trick") c.radial_trick = flag();
  else if (key == "J") t.J = integer();
  else if (key == "M") t.M = integer();
  else if (key == "K") t.K = integer();
  else if (key == "N") t.N = integer();
  else if (key == "lambda0") t.lambda0 = dbl();
  else if (key == "lr") t.lr = dbl();
  else if (key == "i0_samples") t.i0_samples = integer();
  else if (key == "early_stop") t.early_stop = flag();
  else if (key == "early_window") t.early_window = integer();
  else if (key == "early_tolerance") t.early_tolerance = dbl();
  else if (key == "checkpoint_every") t.checkpoint_every = integer();
  else if (key == "delta") t.delta = dbl();
  else if (key == "arrival_mode") {
    if (value == "poisson") t.arrival_mode = ArrivalMode::Poisson;
    else if (value == "stratified") t.arrival_mode = ArrivalMode::Stratified;
    else throw ConfigError("arrival_mode: expected poisson or stratified, got '" + value + "'");
  } else if (key == "arrivals_per_step") t.arrivals_per_step = integer();
  else if (key == "curvature_eps0") t.curvature_eps0 = dbl();
  else if (key == "curvature_eps") t.curvature_eps = dbl();
  else if (key == "jump_threshold") t.jump_threshold = dbl();
  else throw ConfigError(key + ": unknown configuration key");
}

void apply_override(ScenarioConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not of the form key=value");
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  apply_override(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

ScenarioConfig ScenarioConfig::from_kv(const std::map<std::string, std::string>& kv) {
  ScenarioConfig c;
  for (const auto& [k, v] : kv) apply_override(c, k, v);
  return c;
}

std::string ScenarioConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : to_kv()) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t ScenarioConfig::hash() const { return fnv1a(canonical()); }

ScenarioConfig parse_config_text(const std::string& text) {
  ScenarioConfig c;
  std::stringstream ss(text);
  std::string line;
  bool first_assignment = true;
  while (std::getline(ss, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    // A base scenario replaces everything, so it must come before refinements.
    std::string key = line.substr(0, line.find('='));
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t\r") + 1);
    if (!first_assignment && key == "base") {
      throw ConfigError("base: must be the first assignment in a config file");
    }
    apply_override(c, line);
    first_assignment = false;
  }
  return c;
}

ScenarioConfig load_config_file(const std::string& path) {
  return parse_config_text(read_text_file(path));
}

std::vector<ScenarioConfig> builtin_scenarios() {
  std::vector<ScenarioConfig> all;

  ScenarioConfig melt;
  melt.name = "one-phase-melt-2d";
  melt.eta = 1.0;
  melt.L = 0.25;
  melt.c1 = 1.0;
  melt.c2 = 0.0;
  melt.one_phase = true;
  all.push_back(melt);

  ScenarioConfig longterm;
  longterm.name = "longterm-2d";
  longterm.T = 5.0;
  longterm.eta = -1.0;
  longterm.c1 = 0.5;
  longterm.c2 = 0.1;
  longterm.L = 4.0;
  all.push_back(longterm);

  ScenarioConfig tension;
  tension.name = "tension-3d-radial";
  tension.d = 3;
  tension.alpha1 = tension.alpha2 = 0.5;
  tension.L = 2.0;
  tension.gamma = 0.25;
  tension.eta = -1.0;
  tension.c1 = 0.5;
  tension.c2 = 1.0;
  all.push_back(tension);

  ScenarioConfig jump;
  jump.name = "jump-2d";
  jump.r0 = 0.25;
  jump.L = 2.0;
  jump.eta = -1.0;
  jump.c1 = 1.0;
  jump.c2 = 1.0;
  jump.liquid_support = "annulus";
  jump.support_r_in = 0.25;
  jump.support_r_out = 0.375;
  all.push_back(jump);

  ScenarioConfig square;
  square.name = "square-2d";
  square.phi0_kind = "l1-ball";
  square.r0 = 0.5;
  square.alpha1 = 0.5;
  square.alpha2 = 0.05;
  square.L = 0.01;
  square.eta = 1.0;
  square.c1 = 0.01;
  square.c2 = 0.01;
  all.push_back(square);

  ScenarioConfig dmelt;
  dmelt.name = "diamond-melt-2d";
  dmelt.phi0_kind = "diamond";
  dmelt.r0 = 0.75;
  dmelt.eta = 1.0;
  dmelt.L = 0.25;
  dmelt.gamma = 0.15;
  dmelt.c1 = 1.0;
  dmelt.c2 = 0.25;
  all.push_back(dmelt);

  ScenarioConfig dfreeze;
  dfreeze.name = "diamond-freeze-2d";
  dfreeze.phi0_kind = "diamond";
  dfreeze.r0 = 0.5;
  dfreeze.eta = -1.0;
  dfreeze.L = 1.0;
  dfreeze.gamma = 0.15;
  dfreeze.c1 = 1.0;
  dfreeze.c2 = 0.1;
  all.push_back(dfreeze);

  ScenarioConfig dumbbell;
  dumbbell.name = "dumbbell-2d";
  dumbbell.phi0_kind = "dumbbell";
  dumbbell.T = 0.2;
  dumbbell.L = 1.0;
  dumbbell.gamma = 0.1;
  dumbbell.c1 = 2.0;
  dumbbell.c2 = 0.25;
  dumbbell.eta = 1.0;
  all.push_back(dumbbell);

  return all;
}

ScenarioConfig builtin_scenario(const std::string& name) {
  for (auto& s : builtin_scenarios()) {
    if (s.name == name) return s;
  }
  throw ConfigError("scenario: unknown builtin scenario '" + name + "'");
}

}  // namespace stefan
