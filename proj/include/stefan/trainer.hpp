#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stefan/autodiff.hpp"
#include "stefan/loss.hpp"
#include "stefan/scenario.hpp"

namespace stefan {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  long skipped = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr = 1e-3;

  static AdamState for_params(std::size_t n, double lr);
};

/// Bias-corrected Adam update. A non-finite gradient leaves everything
/// untouched, bumps `skipped` and returns false.
bool adam_step(ad::ParamStore& params, const ad::GradientVector& grad, AdamState& state);

struct TrainRecord {
  int iteration = 0;
  double loss = 0.0;
  double penalty = 0.0;
  double lambda = 0.0;
  double seconds = 0.0;
  double max_symmetric_difference = 0.0;
};

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// Thread count from the STEFAN_DLS_THREADS environment variable (default 1).
int default_threads();

/// One stochastic objective evaluation (Algorithm step I-II) at fixed samples.
struct IterationOutput {
  LossReport report;
  ad::GradientVector grad_loss;
  ad::GradientVector grad_penalty;
  std::size_t arrivals = 0;
  std::size_t degenerate = 0;
  bool band_vanished = false;
};

struct IterationOptions {
  int threads = 1;
  bool penalty_gradient = true;
};

IterationOutput evaluate_iteration(const ScenarioConfig& cfg, const ad::ParamStore& params, std::uint64_t seed,
                                   std::uint64_t iteration, const IterationOptions& options = {});

struct TrainOptions {
  int threads = 1;
  std::string checkpoint_dir;  // empty: no checkpoints
  bool record_timing = false;  // wall time in TrainRecord::seconds, otherwise 0
  std::function<void(const TrainRecord&)> on_record;
};

struct TrainResult {
  ad::ParamStore params;
  std::vector<TrainRecord> records;
  long skipped = 0;
  bool early_stopped = false;
};

TrainResult train(const ScenarioConfig& cfg, std::uint64_t seed, const TrainOptions& options = {});

/// Early-stop rule: the mean of the last `window` losses differs from the
/// mean of the `window` before by less than `tolerance` (relative).
bool loss_stabilized(const std::vector<double>& losses, int window, double tolerance);

}  // namespace stefan
