#include "stefan/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <mutex>
#include <thread>

#include "stefan/io.hpp"
#include "stefan/tension.hpp"

namespace stefan {

AdamState AdamState::for_params(std::size_t n, double lr) {
  AdamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.lr = lr;
  return s;
}

bool adam_step(ad::ParamStore& params, const ad::GradientVector& grad, AdamState& s) {
  if (grad.size() != params.size() || s.m.size() != params.size()) {
    throw std::invalid_argument("adam: parameter, gradient and moment sizes differ");
  }
  if (!grad.all_finite()) {
    ++s.skipped;
    return false;
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  auto& p = params.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double g = grad.data[i];
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
    p[i] -= s.lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + s.eps);
  }
  return true;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

int default_threads() {
  if (const char* env = std::getenv("STEFAN_DLS_THREADS")) {
    try {
      const long long v = parse_int(env, "STEFAN_DLS_THREADS");
      if (v >= 1) return static_cast<int>(v);
    } catch (const ConfigError&) {
    }
  }
  return 1;
}

namespace {

enum Stream : std::uint64_t {
  kTests = 1,
  kUniform = 2,
  kInitial = 3,
  kPopulation = 16,
  kArrivals = 64,
};

// Points evaluated at one time step and where their rho values live.
struct StepPlan {
  std::vector<Vec3> points;
  std::vector<std::size_t> slots;  // flat offsets into the rho store
};

}  // namespace

IterationOutput evaluate_iteration(const ScenarioConfig& cfg, const ad::ParamStore& params, std::uint64_t seed,
                                   std::uint64_t iteration, const IterationOptions& options) {
  cfg.validate();
  const TimeGrid grid = cfg.grid();
  const int N = grid.N;
  const int d = cfg.d;
  const double R = cfg.R;
  const auto J = static_cast<std::size_t>(cfg.J());
  const auto K = static_cast<std::size_t>(cfg.K());
  const NetworkArch arch = cfg.arch();
  const InitialLevelSet phi0 = cfg.initial_level_set();
  const RelaxParams relax = RelaxParams::from(cfg.alpha1, cfg.alpha2, d, grid.dt());
  const auto pops = cfg.populations();
  const LevelSetField field(arch, phi0, params);

  IterationOutput out;

  Rng test_rng = keyed_rng(seed, iteration, kTests, 0);
  const auto tests = sample_test_functions(K, R, d, test_rng);
  Rng uniform_rng = keyed_rng(seed, iteration, kUniform, 0);
  const auto uniform = sample_uniform_domain(R, d, J, uniform_rng);
  Rng initial_rng = keyed_rng(seed, iteration, kInitial, 0);
  const auto initial =
      initial_integrals(tests, phi0, R, d, static_cast<std::size_t>(cfg.train.i0_samples), initial_rng);

  std::vector<ParticleBatch> batches;
  for (std::size_t p = 0; p < pops.size(); ++p) {
    const auto& pop = pops[p];
    const double alpha = pop.phase == 1 ? cfg.alpha1 : cfg.alpha2;
    const StreamKey key{seed, iteration, kPopulation + p};
    batches.push_back(antithetic_batch(
        [&](Rng& rng) { return sample_population(pop, phi0, R, d, rng); }, alpha, grid, R, d, J, key, pop.phase));
  }

  // Boundary arrivals grouped by (side, arrival step).
  std::map<std::pair<int, int>, std::vector<BoundaryArrival>> groups;
  const double gamma = cfg.effective_gamma();
  if (gamma > 0.0) {
    ArrivalOptions ao;
    ao.mode = cfg.train.arrival_mode;
    ao.per_step = cfg.train.arrivals_per_step;
    ao.probe = CurvatureProbe{cfg.train.curvature_eps0, cfg.train.curvature_eps};
    for (int side = 1; side <= 2; ++side) {
      Rng rng = keyed_rng(seed, iteration, kArrivals + static_cast<std::uint64_t>(side), 0);
      const double alpha = side == 1 ? cfg.alpha1 : cfg.alpha2;
      auto res = poisson_boundary_arrivals(field, side, cfg.delta(), gamma, alpha, grid, R, rng, ao);
      out.band_vanished = out.band_vanished || res.band_vanished;
      for (auto& a : res.arrivals) {
        if (a.weight * a.scale == 0.0) continue;
        ++out.arrivals;
        groups[{side, a.m}].push_back(std::move(a));
      }
    }
  }

  // rho store layout and per-step evaluation plan.
  ad::ParamStore store;
  std::vector<StepPlan> plan(static_cast<std::size_t>(N + 1));
  const std::size_t steps = static_cast<std::size_t>(N + 1);
  const std::size_t uniform_block = store.add_block("uniform", steps, J);
  {
    const std::size_t off = store.block(uniform_block).offset;
    for (std::size_t n = 0; n < steps; ++n) {
      for (std::size_t j = 0; j < J; ++j) {
        plan[n].points.push_back(uniform[j]);
        plan[n].slots.push_back(off + n * J + j);
      }
    }
  }
  std::vector<std::size_t> pop_blocks;
  for (std::size_t p = 0; p < batches.size(); ++p) {
    const std::size_t b = store.add_block("pop" + std::to_string(p), steps, J);
    pop_blocks.push_back(b);
    const std::size_t off = store.block(b).offset;
    for (std::size_t n = 0; n < steps; ++n) {
      for (std::size_t j = 0; j < J; ++j) {
        plan[n].points.push_back(batches[p].at(j, static_cast<int>(n)));
        plan[n].slots.push_back(off + n * J + j);
      }
    }
  }
  std::vector<std::size_t> group_blocks;
  for (const auto& [key, arrivals] : groups) {
    const int m = key.second;
    const std::size_t S = arrivals.size();
    const std::size_t len = static_cast<std::size_t>(N - m + 1);
    const std::size_t b =
        store.add_block("arr" + std::to_string(key.first) + "_" + std::to_string(m), len, S);
    group_blocks.push_back(b);
    const std::size_t off = store.block(b).offset;
    for (std::size_t l = 0; l < len; ++l) {
      for (std::size_t a = 0; a < S; ++a) {
        plan[static_cast<std::size_t>(m) + l].points.push_back(arrivals[a].path[l]);
        plan[static_cast<std::size_t>(m) + l].slots.push_back(off + l * S + a);
      }
    }
  }

  // Forward values of rho (plain evaluator).
  parallel_for(steps, options.threads, [&](std::size_t n) {
    const auto& sp = plan[n];
    std::vector<double> rho(sp.points.size());
    field.rho_batch(grid.t(static_cast<int>(n)), sp.points, rho);
    for (std::size_t i = 0; i < rho.size(); ++i) store.data()[sp.slots[i]] = rho[i];
  });

  // Loss and penalty as functions of rho.
  ObjectiveInputs in;
  in.grid = grid;
  in.domain_volume = cfg.domain_volume();
  in.latent_heat = cfg.L;
  in.jump_threshold = cfg.jump_threshold();
  in.initial = initial;
  in.uniform_block = uniform_block;
  in.uniform_epsilon = std::min(relax.epsilon_liquid, relax.epsilon_solid);
  in.psi_uniform = psi_matrix(tests, uniform);
  for (std::size_t p = 0; p < batches.size(); ++p) {
    PopulationTerm term;
    term.side = pops[p].phase;
    term.epsilon = term.side == 1 ? relax.epsilon_liquid : relax.epsilon_solid;
    term.weight = pops[p].weight;
    term.rho_block = pop_blocks[p];
    std::vector<Vec3> pts(J);
    for (int n = 0; n <= N; ++n) {
      for (std::size_t j = 0; j < J; ++j) pts[j] = batches[p].at(j, n);
      term.psi.push_back(psi_matrix(tests, pts));
    }
    in.populations.push_back(std::move(term));
  }
  {
    std::size_t gi = 0;
    for (const auto& [key, arrivals] : groups) {
      ArrivalGroupTerm term;
      term.side = key.first;
      term.m = key.second;
      term.epsilon = term.side == 1 ? relax.epsilon_liquid : relax.epsilon_solid;
      term.rho_block = group_blocks[gi++];
      term.start_term.assign(K, 0.0);
      const std::size_t S = arrivals.size();
      for (std::size_t a = 0; a < S; ++a) {
        const double c = arrivals[a].scale * arrivals[a].weight;
        for (std::size_t k = 0; k < K; ++k) term.start_term[k] += c * tests[k](arrivals[a].y);
      }
      std::vector<Vec3> pts(S);
      for (int l = 0; l <= N - term.m; ++l) {
        for (std::size_t a = 0; a < S; ++a) pts[a] = arrivals[a].path[static_cast<std::size_t>(l)];
        ad::Tensor psi = psi_matrix(tests, pts);
        for (std::size_t a = 0; a < S; ++a) {
          const double c = arrivals[a].scale * arrivals[a].weight;
          for (std::size_t k = 0; k < K; ++k) psi(a, k) *= c;
        }
        term.psi.push_back(std::move(psi));
      }
      in.arrivals.push_back(std::move(term));
    }
  }

  ad::GradientVector seed_loss, seed_penalty;
  {
    ad::Tape tape;
    const auto obj = build_objective(tape, store, in);
    out.report = obj.report;
    seed_loss = tape.backward(obj.loss, store);
    if (options.penalty_gradient) seed_penalty = tape.backward(obj.penalty, store);
  }
  in = ObjectiveInputs{};  // release psi tables before the second stage

  // Chain rule through the network, one tape per time step.
  std::vector<ad::GradientVector> partial_loss(steps), partial_penalty(steps);
  std::vector<std::size_t> degenerate(steps, 0);
  parallel_for(steps, options.threads, [&](std::size_t n) {
    const auto& sp = plan[n];
    std::vector<double> times(sp.points.size(), grid.t(static_cast<int>(n)));
    ad::Tape tape;
    const auto ev = eval_network(tape, arch, params, phi0, times, sp.points);
    degenerate[n] = ev.degenerate;
    ad::Tensor sl(sp.points.size(), 1);
    for (std::size_t i = 0; i < sp.slots.size(); ++i) sl[i] = seed_loss.data[sp.slots[i]];
    partial_loss[n] = tape.backward(ad::dot(ev.rho, tape.constant(std::move(sl))), params);
    if (options.penalty_gradient) {
      ad::Tensor spn(sp.points.size(), 1);
      for (std::size_t i = 0; i < sp.slots.size(); ++i) spn[i] = seed_penalty.data[sp.slots[i]];
      partial_penalty[n] = tape.backward(ad::dot(ev.rho, tape.constant(std::move(spn))), params);
    }
  });
  out.grad_loss = ad::GradientVector(params.size());
  out.grad_penalty = ad::GradientVector(params.size());
  for (std::size_t n = 0; n < steps; ++n) {
    out.grad_loss.add_scaled(partial_loss[n]);
    if (options.penalty_gradient) out.grad_penalty.add_scaled(partial_penalty[n]);
    out.degenerate += degenerate[n];
  }
  return out;
}

bool loss_stabilized(const std::vector<double>& losses, int window, double tolerance) {
  const auto w = static_cast<std::size_t>(window);
  if (w == 0 || losses.size() < 2 * w || losses.size() % w != 0) return false;
  double prev = 0.0, cur = 0.0;
  const std::size_t n = losses.size();
  for (std::size_t i = n - 2 * w; i < n - w; ++i) prev += losses[i];
  for (std::size_t i = n - w; i < n; ++i) cur += losses[i];
  prev /= static_cast<double>(w);
  cur /= static_cast<double>(w);
  return prev > 0.0 && std::abs(cur - prev) < tolerance * prev;
}

TrainResult train(const ScenarioConfig& cfg, std::uint64_t seed, const TrainOptions& options) {
  cfg.validate();
  const NetworkArch arch = cfg.arch();
  TrainResult result;
  result.params = init_params(arch, seed);
  const int M = cfg.M();
  if (M == 0) return result;

  AdamState adam = AdamState::for_params(result.params.size(), cfg.train.lr);
  double lambda_scale = 1.0;
  std::vector<double> losses;
  const auto start = std::chrono::steady_clock::now();

  auto save = [&](const std::string& file, int iteration) {
    if (options.checkpoint_dir.empty()) return;
    Checkpoint ck{arch, cfg, static_cast<std::uint64_t>(iteration), result.params};
    write_checkpoint((std::filesystem::path(options.checkpoint_dir) / file).string(), ck);
  };

  IterationOptions io;
  io.threads = options.threads;
  io.penalty_gradient = cfg.train.lambda0 > 0.0;

  for (int m = 1; m <= M; ++m) {
    const auto it = evaluate_iteration(cfg, result.params, seed, static_cast<std::uint64_t>(m), io);
    if (io.penalty_gradient) lambda_scale = anneal_lambda(it.grad_loss, it.grad_penalty, lambda_scale);
    const double lambda = cfg.train.lambda0 * lambda_scale;
    ad::GradientVector g = it.grad_loss;
    if (io.penalty_gradient) g.add_scaled(it.grad_penalty, lambda);
    adam_step(result.params, g, adam);

    TrainRecord rec;
    rec.iteration = m;
    rec.loss = it.report.total;
    rec.penalty = it.report.penalty;
    rec.lambda = lambda;
    rec.max_symmetric_difference = it.report.max_symmetric_difference;
    if (options.record_timing) {
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    result.records.push_back(rec);
    if (options.on_record) options.on_record(rec);
    losses.push_back(rec.loss);

    if (m % cfg.train.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_%06d.ckpt", m);
      save(name, m);
    }
    if (cfg.train.early_stop && loss_stabilized(losses, cfg.train.early_window, cfg.train.early_tolerance)) {
      result.early_stopped = true;
      break;
    }
  }
  result.skipped = adam.skipped;
  save("final.ckpt", result.records.empty() ? 0 : result.records.back().iteration);
  return result;
}

}  // namespace stefan
