#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stefan/autodiff.hpp"
#include "stefan/common.hpp"

namespace stefan {

/// Fully connected tanh network G(t, x; theta) with two hidden layers.
struct NetworkArch {
  int dim = 2;
  int hidden_layers = 2;
  int width = 23;
  double horizon = 1.0;  // t is fed to the network as t / horizon
  std::string activation = "tanh";

  static NetworkArch for_dimension(int d, double horizon);
  int input_dim() const { return dim + 1; }
};

/// Bilinear interpolation of level-set samples on a regular 2D grid.
struct GridLevelSet {
  int nx = 0;
  int ny = 0;
  double x_min = -1.0;
  double x_max = 1.0;
  double y_min = -1.0;
  double y_max = 1.0;
  std::vector<double> values;  // row-major, ny rows of nx values

  double value(const Vec3& x) const;
  Vec3 gradient(const Vec3& x) const;
};

struct DumbbellParams {
  Vec3 center_left{-0.45, 0.0, 0.0};
  Vec3 center_right{0.45, 0.0, 0.0};
  double radius = 0.3;
  double bar_half_length = 0.45;
  double bar_half_width = 0.08;
};

/// Initial level-set function Phi_0. The solid is {Phi_0 <= 0}.
struct InitialLevelSet {
  enum class Kind { Sphere, L1Ball, Diamond, Dumbbell, CustomGrid };

  Kind kind = Kind::Sphere;
  int dim = 2;
  double r0 = 0.5;
  DumbbellParams dumbbell;
  std::shared_ptr<const GridLevelSet> grid;

  static InitialLevelSet sphere(int dim, double r0);
  static InitialLevelSet l1_ball(int dim, double r0);
  static InitialLevelSet diamond(int dim, double r0);
  static InitialLevelSet make_dumbbell(DumbbellParams p);

  double value(const Vec3& x) const;
  Vec3 gradient(const Vec3& x) const;
};

double eval_phi0(const InitialLevelSet& ls, const Vec3& x);

/// Allocates W1, b1, W2, b2, W3, b3 in that order, Glorot-uniform weights,
/// zero biases and the output layer scaled by 0.01.
ad::ParamStore init_params(const NetworkArch& arch, std::uint64_t seed);
/// Same layout with every entry zero.
ad::ParamStore zero_params(const NetworkArch& arch);
bool layout_matches(const NetworkArch& arch, const ad::ParamStore& params);

/// Tape handles for a batch of B points. Every field is a Bx1 column.
struct LevelSetEval {
  ad::Var phi;
  std::vector<ad::Var> grad_x;
  ad::Var rho;
  std::size_t degenerate = 0;  // points with |grad_x| < 1e-12
};

/// Records Phi, its analytic spatial gradient and rho = Phi / |grad Phi| on the
/// tape. `times` and `points` have one entry per batch row.
LevelSetEval eval_network(ad::Tape& tape, const NetworkArch& arch, const ad::ParamStore& params,
                          const InitialLevelSet& phi0, std::span<const double> times,
                          std::span<const Vec3> points);

LevelSetEval eval_network(ad::Tape& tape, const NetworkArch& arch, const ad::ParamStore& params,
                          const InitialLevelSet& phi0, double t, const Vec3& x);

/// Plain (tape-free) evaluator for a fixed parameter vector.
class LevelSetField {
 public:
  LevelSetField(NetworkArch arch, InitialLevelSet phi0, ad::ParamStore params);

  double phi(double t, const Vec3& x) const;
  Vec3 gradient(double t, const Vec3& x) const;
  double rho(double t, const Vec3& x) const;

  /// Batched rho at a common time; optional phi output.
  void rho_batch(double t, std::span<const Vec3> x, std::span<double> rho_out,
                 std::span<double> phi_out = {}) const;

  const NetworkArch& arch() const { return arch_; }
  const InitialLevelSet& phi0() const { return phi0_; }
  const ad::ParamStore& params() const { return params_; }
  int dim() const { return arch_.dim; }

 private:
  void evaluate(double t, std::span<const Vec3> x, double* phi, double* grad, double* rho) const;

  NetworkArch arch_;
  InitialLevelSet phi0_;
  ad::ParamStore params_;
};

struct GridSpec {
  int resolution = 128;
  double half_width = 1.0;  // grid covers [-half_width, half_width]^d
};

/// Phi on a regular grid. 2D: resolution^2 values with x varying fastest.
/// 3D: resolution^3 values ordered (z, y, x).
std::vector<double> eval_phi_grid(const LevelSetField& field, double t, const GridSpec& spec);

}  // namespace stefan
