#include "stefan/levelset.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace stefan {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kNormSmoothing = 1e-12;

double sign(double v) { return (v > 0.0) - (v < 0.0); }

double sd_ball(const Vec3& x, const Vec3& c, double r) { return (x - c).norm() - r; }

Vec3 sd_ball_grad(const Vec3& x, const Vec3& c) {
  const Vec3 d = x - c;
  const double n = d.norm();
  return n > 0.0 ? Vec3(d / n) : Vec3::Zero();
}

// Axis-aligned box centred at the origin with half extents (hx, hy, hy).
double sd_box(const Vec3& x, const Vec3& half, int dim) {
  double outside = 0.0;
  double inside = -1e300;
  for (int i = 0; i < dim; ++i) {
    const double q = std::abs(x[i]) - half[i];
    outside += std::max(q, 0.0) * std::max(q, 0.0);
    inside = std::max(inside, q);
  }
  return std::sqrt(outside) + std::min(inside, 0.0);
}

Vec3 sd_box_grad(const Vec3& x, const Vec3& half, int dim) {
  Vec3 q = Vec3::Zero();
  bool outside = false;
  for (int i = 0; i < dim; ++i) {
    q[i] = std::abs(x[i]) - half[i];
    outside = outside || q[i] > 0.0;
  }
  Vec3 g = Vec3::Zero();
  if (outside) {
    double n = 0.0;
    for (int i = 0; i < dim; ++i) {
      const double qi = std::max(q[i], 0.0);
      g[i] = qi * sign(x[i]);
      n += qi * qi;
    }
    return g / std::sqrt(n);
  }
  int best = 0;
  for (int i = 1; i < dim; ++i) {
    if (q[i] > q[best]) best = i;
  }
  g[best] = x[best] >= 0.0 ? 1.0 : -1.0;
  return g;
}

}  // namespace

NetworkArch NetworkArch::for_dimension(int d, double horizon) {
  NetworkArch a;
  a.dim = d;
  a.width = 21 + d;
  a.horizon = horizon;
  return a;
}

double GridLevelSet::value(const Vec3& x) const {
  const double fx = std::clamp((x[0] - x_min) / (x_max - x_min) * (nx - 1), 0.0, nx - 1.0);
  const double fy = std::clamp((x[1] - y_min) / (y_max - y_min) * (ny - 1), 0.0, ny - 1.0);
  const int i = std::min(static_cast<int>(fx), nx - 2);
  const int j = std::min(static_cast<int>(fy), ny - 2);
  const double u = fx - i;
  const double v = fy - j;
  auto at = [&](int a, int b) { return values[static_cast<std::size_t>(b) * nx + a]; };
  return (1 - u) * (1 - v) * at(i, j) + u * (1 - v) * at(i + 1, j) + (1 - u) * v * at(i, j + 1) +
         u * v * at(i + 1, j + 1);
}

Vec3 GridLevelSet::gradient(const Vec3& x) const {
  const double hx = (x_max - x_min) / (nx - 1);
  const double hy = (y_max - y_min) / (ny - 1);
  const Vec3 ex(hx * 0.5, 0.0, 0.0);
  const Vec3 ey(0.0, hy * 0.5, 0.0);
  return Vec3((value(x + ex) - value(x - ex)) / hx, (value(x + ey) - value(x - ey)) / hy, 0.0);
}

InitialLevelSet InitialLevelSet::sphere(int dim, double r0) {
  InitialLevelSet ls;
  ls.kind = Kind::Sphere;
  ls.dim = dim;
  ls.r0 = r0;
  return ls;
}

InitialLevelSet InitialLevelSet::l1_ball(int dim, double r0) {
  InitialLevelSet ls = sphere(dim, r0);
  ls.kind = Kind::L1Ball;
  return ls;
}

InitialLevelSet InitialLevelSet::diamond(int dim, double r0) {
  InitialLevelSet ls = sphere(dim, r0);
  ls.kind = Kind::Diamond;
  return ls;
}

InitialLevelSet InitialLevelSet::make_dumbbell(DumbbellParams p) {
  InitialLevelSet ls;
  ls.kind = Kind::Dumbbell;
  ls.dim = 2;
  ls.dumbbell = p;
  return ls;
}

double InitialLevelSet::value(const Vec3& x) const {
  switch (kind) {
    case Kind::Sphere: return x.norm() - r0;
    case Kind::L1Ball: {
      double s = 0.0;
      for (int i = 0; i < dim; ++i) s += std::abs(x[i]);
      return s - r0;
    }
    case Kind::Diamond: {
      double s = 0.0;
      for (int i = 0; i < dim; ++i) s += std::sqrt(std::abs(x[i]));
      return s * s - r0;
    }
    case Kind::Dumbbell: {
      const auto& p = dumbbell;
      const Vec3 half(p.bar_half_length, p.bar_half_width, p.bar_half_width);
      return std::min({sd_ball(x, p.center_left, p.radius), sd_ball(x, p.center_right, p.radius),
                       sd_box(x, half, dim)});
    }
    case Kind::CustomGrid: return grid->value(x);
  }
  return 0.0;
}

Vec3 InitialLevelSet::gradient(const Vec3& x) const {
  Vec3 g = Vec3::Zero();
  switch (kind) {
    case Kind::Sphere: {
      const double n = x.norm();
      if (n > 0.0) g = x / n;
      return g;
    }
    case Kind::L1Ball:
      for (int i = 0; i < dim; ++i) g[i] = sign(x[i]);
      return g;
    case Kind::Diamond: {
      // d/dx_i (sum sqrt|x_j|)^2 = S * sign(x_i) / sqrt|x_i|; the axis is a
      // cusp, so |x_i| is floored to keep the value finite.
      double s = 0.0;
      for (int i = 0; i < dim; ++i) s += std::sqrt(std::abs(x[i]));
      for (int i = 0; i < dim; ++i) {
        const double ax = std::max(std::abs(x[i]), 1e-12);
        g[i] = s * (x[i] >= 0.0 ? 1.0 : -1.0) / std::sqrt(ax);
      }
      return g;
    }
    case Kind::Dumbbell: {
      const auto& p = dumbbell;
      const Vec3 half(p.bar_half_length, p.bar_half_width, p.bar_half_width);
      const double a = sd_ball(x, p.center_left, p.radius);
      const double b = sd_ball(x, p.center_right, p.radius);
      const double c = sd_box(x, half, dim);
      if (a <= b && a <= c) return sd_ball_grad(x, p.center_left);
      if (b <= c) return sd_ball_grad(x, p.center_right);
      return sd_box_grad(x, half, dim);
    }
    case Kind::CustomGrid: return grid->gradient(x);
  }
  return g;
}

double eval_phi0(const InitialLevelSet& ls, const Vec3& x) { return ls.value(x); }

namespace {

void add_blocks(const NetworkArch& arch, ad::ParamStore& p) {
  const auto in = static_cast<std::size_t>(arch.input_dim());
  const auto h = static_cast<std::size_t>(arch.width);
  p.add_block("W1", h, in);
  p.add_block("b1", 1, h);
  p.add_block("W2", h, h);
  p.add_block("b2", 1, h);
  p.add_block("W3", 1, h);
  p.add_block("b3", 1, 1);
}

}  // namespace

ad::ParamStore zero_params(const NetworkArch& arch) {
  if (arch.hidden_layers != 2 || arch.activation != "tanh") {
    throw ConfigError("only two tanh hidden layers are supported");
  }
  ad::ParamStore p;
  add_blocks(arch, p);
  return p;
}

ad::ParamStore init_params(const NetworkArch& arch, std::uint64_t seed) {
  ad::ParamStore p = zero_params(arch);
  Rng rng(seed);
  auto glorot = [&](std::string_view name, double scale) {
    const auto& b = p.block(name);
    const double limit = std::sqrt(6.0 / static_cast<double>(b.rows + b.cols));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (double& w : p.view(name)) w = scale * u(rng);
  };
  glorot("W1", 1.0);
  glorot("W2", 1.0);
  glorot("W3", 0.01);
  return p;
}

bool layout_matches(const NetworkArch& arch, const ad::ParamStore& params) {
  return zero_params(arch).same_layout(params);
}

LevelSetEval eval_network(ad::Tape& tape, const NetworkArch& arch, const ad::ParamStore& params,
                          const InitialLevelSet& phi0, std::span<const double> times,
                          std::span<const Vec3> points) {
  using namespace ad;
  if (times.size() != points.size()) throw std::invalid_argument("times and points differ in length");
  const std::size_t n = points.size();
  const int d = arch.dim;
  const std::size_t in = static_cast<std::size_t>(arch.input_dim());

  Tensor z(n, in);
  std::vector<Tensor> grad0(static_cast<std::size_t>(d), Tensor(n, 1));
  Tensor base(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    z(i, 0) = times[i] / arch.horizon;
    for (int k = 0; k < d; ++k) z(i, 1 + k) = points[i][k];
    base[i] = phi0.value(points[i]);
    const Vec3 g = phi0.gradient(points[i]);
    for (int k = 0; k < d; ++k) grad0[k][i] = g[k];
  }

  const Var w1 = tape.param(params, "W1");
  const Var b1 = tape.param(params, "b1");
  const Var w2 = tape.param(params, "W2");
  const Var b2 = tape.param(params, "b2");
  const Var w3 = tape.param(params, "W3");
  const Var b3 = tape.param(params, "b3");

  const Var input = tape.constant(std::move(z));
  const Var h1 = tanh(affine(input, w1, b1));
  const Var h2 = tanh(affine(h1, w2, b2));
  const Var g = affine(h2, w3, b3);

  // tanh' = 1 - tanh^2
  const Var s1 = 1.0 - h1 * h1;
  const Var s2 = 1.0 - h2 * h2;

  LevelSetEval out;
  Var sumsq;
  for (int k = 0; k < d; ++k) {
    Tensor unit(1, in);
    unit[1 + k] = 1.0;
    const Var wk = affine(tape.constant(std::move(unit)), w1);  // column k+1 of W1 as a row
    const Var g1 = s1 * wk;
    const Var g2 = affine(g1, w2) * s2;
    const Var dk = affine(g2, w3) + tape.constant(std::move(grad0[k]));
    out.grad_x.push_back(dk);
    sumsq = k == 0 ? dk * dk : sumsq + dk * dk;
  }
  const Var norm = sqrt(scale_shift(sumsq, 1.0, kNormSmoothing * kNormSmoothing));
  out.phi = g + tape.constant(std::move(base));
  out.rho = out.phi / norm;
  for (double v : norm.value().values()) {
    if (v < 1e-12 * std::sqrt(2.0)) ++out.degenerate;
  }
  return out;
}

LevelSetEval eval_network(ad::Tape& tape, const NetworkArch& arch, const ad::ParamStore& params,
                          const InitialLevelSet& phi0, double t, const Vec3& x) {
  const double times[1] = {t};
  const Vec3 points[1] = {x};
  return eval_network(tape, arch, params, phi0, times, points);
}

LevelSetField::LevelSetField(NetworkArch arch, InitialLevelSet phi0, ad::ParamStore params)
    : arch_(std::move(arch)), phi0_(std::move(phi0)), params_(std::move(params)) {
  if (!layout_matches(arch_, params_)) throw std::invalid_argument("parameter layout does not match architecture");
}

void LevelSetField::evaluate(double t, std::span<const Vec3> x, double* phi, double* grad, double* rho) const {
  const int d = arch_.dim;
  const Eigen::Index n = static_cast<Eigen::Index>(x.size());
  const Eigen::Index in = arch_.input_dim();
  const Eigen::Index h = arch_.width;
  auto view = [&](std::string_view name, Eigen::Index r, Eigen::Index c) {
    return Eigen::Map<const RowMat>(params_.view(name).data(), r, c);
  };
  const auto w1 = view("W1", h, in);
  const auto b1 = view("b1", 1, h);
  const auto w2 = view("W2", h, h);
  const auto b2 = view("b2", 1, h);
  const auto w3 = view("W3", 1, h);
  const double b3 = params_.view("b3")[0];

  RowMat z(n, in);
  for (Eigen::Index i = 0; i < n; ++i) {
    z(i, 0) = t / arch_.horizon;
    for (int k = 0; k < d; ++k) z(i, 1 + k) = x[i][k];
  }
  RowMat h1 = z * w1.transpose();
  h1.rowwise() += b1.row(0);
  h1 = h1.array().tanh();
  RowMat h2 = h1 * w2.transpose();
  h2.rowwise() += b2.row(0);
  h2 = h2.array().tanh();
  const Eigen::VectorXd gval = h2 * w3.row(0).transpose();

  const bool need_grad = grad != nullptr || rho != nullptr;
  RowMat s1, s2;
  if (need_grad) {
    s1 = (1.0 - h1.array().square()).matrix();
    s2 = (1.0 - h2.array().square()).matrix();
  }
  std::vector<Eigen::VectorXd> dk;
  if (need_grad) {
    for (int k = 0; k < d; ++k) {
      RowMat g1 = s1.array().rowwise() * w1.col(1 + k).transpose().array();
      RowMat g2 = ((g1 * w2.transpose()).array() * s2.array()).matrix();
      dk.push_back(g2 * w3.row(0).transpose());
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = gval[i] + b3 + phi0_.value(x[i]);
    if (phi) phi[i] = p;
    if (!need_grad) continue;
    const Vec3 g0 = phi0_.gradient(x[i]);
    double sumsq = 0.0;
    for (int k = 0; k < d; ++k) {
      const double gk = dk[k][i] + g0[k];
      if (grad) grad[3 * i + k] = gk;
      sumsq += gk * gk;
    }
    if (grad) {
      for (int k = d; k < 3; ++k) grad[3 * i + k] = 0.0;
    }
    if (rho) rho[i] = p / std::sqrt(sumsq + kNormSmoothing * kNormSmoothing);
  }
}

double LevelSetField::phi(double t, const Vec3& x) const {
  double out = 0.0;
  evaluate(t, std::span<const Vec3>(&x, 1), &out, nullptr, nullptr);
  return out;
}

Vec3 LevelSetField::gradient(double t, const Vec3& x) const {
  double g[3];
  evaluate(t, std::span<const Vec3>(&x, 1), nullptr, g, nullptr);
  return Vec3(g[0], g[1], g[2]);
}

double LevelSetField::rho(double t, const Vec3& x) const {
  double out = 0.0;
  evaluate(t, std::span<const Vec3>(&x, 1), nullptr, nullptr, &out);
  return out;
}

void LevelSetField::rho_batch(double t, std::span<const Vec3> x, std::span<double> rho_out,
                              std::span<double> phi_out) const {
  if (rho_out.size() != x.size()) throw std::invalid_argument("rho output size mismatch");
  if (!phi_out.empty() && phi_out.size() != x.size()) throw std::invalid_argument("phi output size mismatch");
  evaluate(t, x, phi_out.empty() ? nullptr : phi_out.data(), nullptr, rho_out.data());
}

std::vector<double> eval_phi_grid(const LevelSetField& field, double t, const GridSpec& spec) {
  const int res = spec.resolution;
  if (res < 2) throw std::invalid_argument("grid resolution must be at least 2");
  const int d = field.dim();
  const double h = 2.0 * spec.half_width / (res - 1);
  auto coord = [&](int i) { return -spec.half_width + h * i; };
  const std::size_t layers = d == 3 ? static_cast<std::size_t>(res) : 1;
  std::vector<double> out(static_cast<std::size_t>(res) * res * layers);
  std::vector<Vec3> row(static_cast<std::size_t>(res));
  std::vector<double> rho(row.size());
  std::vector<double> phi(row.size());
  for (std::size_t k = 0; k < layers; ++k) {
    for (int j = 0; j < res; ++j) {
      for (int i = 0; i < res; ++i) row[i] = Vec3(coord(i), coord(j), d == 3 ? coord(static_cast<int>(k)) : 0.0);
      field.rho_batch(t, row, rho, phi);
      std::copy(phi.begin(), phi.end(), out.begin() + static_cast<std::ptrdiff_t>((k * res + j) * res));
    }
  }
  return out;
}

}  // namespace stefan
