#include "stefan/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "stefan/experiments.hpp"
#include "stefan/io.hpp"
#include "stefan/trainer.hpp"

namespace fs = std::filesystem;

namespace stefan::cli {

ScenarioConfig RunManifest::resolve() const {
  if (!scenario.empty() && !config_path.empty()) throw ConfigError("scenario: give either --scenario or --config");
  ScenarioConfig cfg;
  if (!config_path.empty()) {
    cfg = load_config_file(config_path);
  } else if (!scenario.empty()) {
    cfg = builtin_scenario(scenario);
  } else {
    throw ConfigError("scenario: one of --scenario or --config is required");
  }
  for (const auto& o : overrides) apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

std::string RunManifest::to_json(const ScenarioConfig& resolved) const {
  nlohmann::ordered_json j;
  j["scenario"] = scenario;
  j["config"] = config_path;
  j["seed"] = seed;
  j["out"] = out_dir;
  j["overrides"] = overrides;
  j["scenario_hash"] = hex64(resolved.hash());
  j["resolved"] = resolved.to_kv();
  return j.dump(2) + "\n";
}

void RunManifest::write(const ScenarioConfig& resolved, bool force) const {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir);
  const fs::path path = fs::path(out_dir) / "manifest.json";
  if (fs::exists(path) && !force) {
    throw IoError(path.string() + " already exists (use --force to overwrite)");
  }
  write_text_file(path.string(), to_json(resolved));
}

std::vector<double> parse_list(const std::string& text, const std::string& field) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(item, field));
  if (out.empty()) throw ConfigError(field + ": empty list");
  return out;
}

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir);
}

std::string join(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

LevelSetField field_from(const Checkpoint& ck) {
  return LevelSetField(ck.arch, ck.scenario.initial_level_set(), ck.params);
}

struct TrainArgs {
  RunManifest manifest;
  bool force = false;
  bool timing = false;
  int threads = 0;
};

int cmd_train(const TrainArgs& a) {
  const ScenarioConfig cfg = a.manifest.resolve();
  if (a.manifest.out_dir.empty()) throw ConfigError("out: output directory required");
  a.manifest.write(cfg, a.force);

  const std::string history = join(a.manifest.out_dir, "loss_history.csv");
  std::ofstream log(history, std::ios::binary | std::ios::trunc);
  if (!log) throw IoError("cannot write " + history);
  log << "iteration,loss,penalty,lambda,seconds\n";

  TrainOptions opt;
  opt.threads = a.threads > 0 ? a.threads : default_threads();
  opt.checkpoint_dir = a.manifest.out_dir;
  opt.record_timing = a.timing;
  const int total = cfg.M();
  opt.on_record = [&](const TrainRecord& r) {
    log << r.iteration << ',' << format_double(r.loss) << ',' << format_double(r.penalty) << ','
        << format_double(r.lambda) << ',' << format_double(r.seconds) << '\n';
    log.flush();
    if (r.iteration == 1 || r.iteration % 10 == 0 || r.iteration == total) {
      std::cerr << "iter " << r.iteration << "/" << total << " loss " << format_double(r.loss) << " penalty "
                << format_double(r.penalty) << "\n";
    }
  };
  const auto result = train(cfg, a.manifest.seed, opt);
  if (!log) throw IoError("write failed for " + history);
  std::cerr << "done: " << result.records.size() << " iterations";
  if (result.early_stopped) std::cerr << " (loss stabilized)";
  if (result.skipped) std::cerr << ", " << result.skipped << " skipped updates";
  std::cerr << "\n";
  return kExitOk;
}

struct SnapshotArgs {
  std::string checkpoint;
  std::string times = "0,0.5,1";
  int resolution = 128;
  double half_width = 0.0;
  std::string out;
};

int cmd_snapshot(const SnapshotArgs& a) {
  if (a.resolution < 2) throw ConfigError("res: must be at least 2");
  const auto times = parse_list(a.times, "times");
  const Checkpoint ck = read_checkpoint(a.checkpoint);
  const LevelSetField field = field_from(ck);
  ensure_dir(a.out);
  GridSpec spec;
  spec.resolution = a.resolution;
  spec.half_width = a.half_width > 0.0 ? a.half_width : ck.scenario.R;
  const int d = ck.arch.dim;

  nlohmann::ordered_json meta;
  meta["dim"] = d;
  meta["resolution"] = spec.resolution;
  meta["bounds"] = {-spec.half_width, spec.half_width};
  meta["layout"] = d == 2 ? "rows are y, columns are x" : "rows are (z, y), columns are x";
  meta["scenario_hash"] = hex64(ck.scenario.hash());
  meta["iteration"] = ck.iteration;
  meta["snapshots"] = nlohmann::json::array();
  for (double t : times) {
    const auto values = eval_phi_grid(field, t, spec);
    const std::string name = "phi_grid_t" + format_double(t) + ".csv";
    std::string text;
    const std::size_t n = static_cast<std::size_t>(spec.resolution);
    for (std::size_t row = 0; row < values.size() / n; ++row) {
      for (std::size_t c = 0; c < n; ++c) {
        if (c) text += ',';
        text += format_double(values[row * n + c]);
      }
      text += '\n';
    }
    write_text_file(join(a.out, name), text);
    meta["snapshots"].push_back(
        {{"time", t}, {"file", name}, {"solid_components", count_components(values, spec.resolution, d)}});
  }
  write_text_file(join(a.out, "meta.json"), meta.dump(2) + "\n");
  return kExitOk;
}

struct RadiusArgs {
  std::string checkpoint;
  int n_times = 51;
  int n_angles = 64;
  std::string out;
  std::string hadzic;  // empty: none; "auto": estimated extinction time
  int volume_particles = 0;
  std::uint64_t seed = 0;
};

int cmd_radius(const RadiusArgs& a) {
  if (a.n_times < 1) throw ConfigError("n-times: must be positive");
  if (a.n_angles < 1) throw ConfigError("n-angles: must be positive");
  const Checkpoint ck = read_checkpoint(a.checkpoint);
  const LevelSetField field = field_from(ck);
  ensure_dir(a.out);
  const double T = ck.scenario.T;
  std::vector<double> times;
  for (int i = 0; i < a.n_times; ++i) times.push_back(a.n_times == 1 ? 0.0 : T * i / (a.n_times - 1));
  const auto series = radius_series(field, times, ck.scenario.R, a.n_angles);

  CsvTable table{{"t", "mean_r", "std_r"}, {}};
  for (std::size_t i = 0; i < times.size(); ++i) table.rows.push_back({times[i], series.mean[i], series.std[i]});
  write_csv(join(a.out, "radius.csv"), table);

  if (!a.hadzic.empty()) {
    const double tau = a.hadzic == "auto" ? estimate_empty_time(series) : parse_double(a.hadzic, "hadzic");
    if (!(tau > 0.0)) throw ConfigError("hadzic: no extinction time (radius never drops below 0.01)");
    const double scale = fit_rate_scale(series, tau);
    CsvTable h{{"t", "mean_r", "theoretical", "rate"}, {}};
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (times[i] >= tau) continue;
      const double rate = hadzic_rate(times[i], tau);
      h.rows.push_back({times[i], series.mean[i], scale * rate, rate});
    }
    write_csv(join(a.out, "hadzic.csv"), h);
  }

  if (a.volume_particles > 0) {
    const auto diag = volume_identity(field, ck.scenario, static_cast<std::size_t>(a.volume_particles), a.seed);
    CsvTable v{{"t", "residual"}, {}};
    for (std::size_t i = 0; i < diag.times.size(); ++i) v.rows.push_back({diag.times[i], diag.residual[i]});
    write_csv(join(a.out, "volume_identity.csv"), v);
    std::cout << "max |volume residual| = " << format_double(diag.max_abs) << " ("
              << format_double(diag.max_abs / diag.domain_volume) << " of |domain|)\n";
  }
  return kExitOk;
}

int cmd_jump_solve(double r0, double delta0, double L) {
  if (!(r0 > 0.0) || !(delta0 > 0.0) || !(L > 0.0)) throw ConfigError("jump-solve: r0, delta0 and L must be positive");
  std::cout << format_fixed(physical_jump_size(r0, delta0, L), 4) << "\n";
  return kExitOk;
}

struct CurvatureArgs {
  CurvatureDemo demo;
  bool a_set = false;
  bool b_set = false;
  std::string out;
};

int cmd_curvature_demo(CurvatureArgs a) {
  if (a.demo.shape == "hyperbolic-paraboloid") {
    if (!a.a_set) a.demo.a = -1.0;
    if (!a.b_set) a.demo.b = 2.0;
  } else if (a.demo.shape == "paraboloid") {
    if (!a.a_set) a.demo.a = 1.0;
    if (!a.b_set) a.demo.b = 2.0;
  }
  const auto rows = curvature_demo(a.demo);
  ensure_dir(a.out);
  CsvTable t{{"position", "estimate", "exact", "rel_error"}, {}};
  double worst = 0.0;
  for (const auto& r : rows) {
    t.rows.push_back({r.position, r.estimate, r.exact, r.rel_error});
    worst = std::max(worst, r.rel_error);
  }
  write_csv(join(a.out, "curvature.csv"), t);
  std::cout << "max relative error " << format_double(worst) << "\n";
  return kExitOk;
}

struct TemperatureArgs {
  std::string checkpoint;
  double t = 0.0;
  int particles = 100000;
  int radii = 100;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_temperature(const TemperatureArgs& a) {
  if (a.particles < 1) throw ConfigError("particles: must be positive");
  const Checkpoint ck = read_checkpoint(a.checkpoint);
  const LevelSetField field = field_from(ck);
  const auto prof =
      recover_temperature(field, ck.scenario, a.t, static_cast<std::size_t>(a.particles), a.seed, a.radii);
  ensure_dir(a.out);
  CsvTable table;
  table.header.push_back("r");
  for (std::size_t p = 0; p < prof.values.size(); ++p) {
    table.header.push_back((prof.phase[p] == 1 ? "liquid" : "solid") + std::string("_") + std::to_string(p));
  }
  for (std::size_t i = 0; i < prof.radii.size(); ++i) {
    std::vector<double> row{prof.radii[i]};
    for (const auto& v : prof.values) row.push_back(v[i]);
    table.rows.push_back(std::move(row));
  }
  write_csv(join(a.out, "temperature.csv"), table);
  for (std::size_t p = 0; p < prof.values.size(); ++p) {
    std::cout << table.header[p + 1] << " survival " << format_double(prof.survival[p]) << "\n";
  }
  return kExitOk;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Deep level-set solver for the Stefan problem"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a level-set network on a scenario");
  train_cmd->add_option("--scenario", train_args.manifest.scenario, "Builtin scenario name");
  train_cmd->add_option("--config", train_args.manifest.config_path, "key=value config file");
  train_cmd->add_option("--seed", train_args.manifest.seed, "Random seed");
  train_cmd->add_option("--out", train_args.manifest.out_dir, "Output directory")->required();
  train_cmd->add_option("--set", train_args.manifest.overrides, "Override key=value (repeatable)");
  train_cmd->add_flag("--force", train_args.force, "Overwrite an existing run");
  train_cmd->add_flag("--timing", train_args.timing, "Record wall time in loss_history.csv");
  train_cmd->add_option("--threads", train_args.threads, "Worker threads (default STEFAN_DLS_THREADS or 1)");

  SnapshotArgs snap;
  auto* snap_cmd = app.add_subcommand("snapshot", "Evaluate Phi on a grid at given times");
  snap_cmd->add_option("--checkpoint", snap.checkpoint)->required();
  snap_cmd->add_option("--times", snap.times, "Comma separated times");
  snap_cmd->add_option("--res", snap.resolution, "Grid points per axis");
  snap_cmd->add_option("--half-width", snap.half_width, "Grid covers [-w, w]^d (default R)");
  snap_cmd->add_option("--out", snap.out)->required();

  RadiusArgs rad;
  auto* rad_cmd = app.add_subcommand("radius", "Mean radius of the solid over time");
  rad_cmd->add_option("--checkpoint", rad.checkpoint)->required();
  rad_cmd->add_option("--n-times", rad.n_times);
  rad_cmd->add_option("--n-angles", rad.n_angles);
  rad_cmd->add_option("--hadzic", rad.hadzic, "Extinction time for the rate comparison, or 'auto'");
  rad_cmd->add_option("--volume-check", rad.volume_particles, "Particles for the volume identity diagnostic");
  rad_cmd->add_option("--seed", rad.seed);
  rad_cmd->add_option("--out", rad.out)->required();

  double r0 = 0.0, delta0 = 0.0, latent = 0.0;
  auto* jump_cmd = app.add_subcommand("jump-solve", "Physical jump size of a radial solid");
  jump_cmd->add_option("r0", r0)->required();
  jump_cmd->add_option("delta0", delta0)->required();
  jump_cmd->add_option("L", latent)->required();

  CurvatureArgs curv;
  auto* curv_cmd = app.add_subcommand("curvature-demo", "Curvature estimates on analytic surfaces");
  curv_cmd->add_option("--shape", curv.demo.shape)
      ->check(CLI::IsMember({"circle", "parabola", "paraboloid", "hyperbolic-paraboloid", "sphere"}));
  auto* a_opt = curv_cmd->add_option("--a", curv.demo.a);
  auto* b_opt = curv_cmd->add_option("--b", curv.demo.b);
  curv_cmd->add_option("--r", curv.demo.r);
  curv_cmd->add_option("--points", curv.demo.points);
  curv_cmd->add_option("--eps0", curv.demo.probe.eps0);
  curv_cmd->add_option("--eps", curv.demo.probe.eps);
  curv_cmd->add_option("--seed", curv.demo.seed);
  curv_cmd->add_option("--out", curv.out)->required();

  TemperatureArgs temp;
  auto* temp_cmd = app.add_subcommand("temperature", "Radial temperature from surviving particles");
  temp_cmd->add_option("--checkpoint", temp.checkpoint)->required();
  temp_cmd->add_option("--t", temp.t);
  temp_cmd->add_option("--particles", temp.particles);
  temp_cmd->add_option("--radii", temp.radii);
  temp_cmd->add_option("--seed", temp.seed);
  temp_cmd->add_option("--out", temp.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(train_args);
    if (*snap_cmd) return cmd_snapshot(snap);
    if (*rad_cmd) return cmd_radius(rad);
    if (*jump_cmd) return cmd_jump_solve(r0, delta0, latent);
    if (*curv_cmd) {
      curv.a_set = a_opt->count() > 0;
      curv.b_set = b_opt->count() > 0;
      return cmd_curvature_demo(curv);
    }
    if (*temp_cmd) return cmd_temperature(temp);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace stefan::cli
