#include "stefan/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace stefan::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

MapC as_mat(const Tensor& t) { return MapC(t.data(), t.rows(), t.cols()); }
Map as_mat(Tensor& t) { return Map(t.data(), t.rows(), t.cols()); }

std::size_t broadcast_dim(std::size_t a, std::size_t b) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  throw std::invalid_argument("tensor shapes are not broadcast-compatible");
}

template <class F>
Tensor binary(const Tensor& a, const Tensor& b, F f) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    Tensor out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  const std::size_t rows = broadcast_dim(a.rows(), b.rows());
  const std::size_t cols = broadcast_dim(a.cols(), b.cols());
  Tensor out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t ra = a.rows() == 1 ? 0 : r;
    const std::size_t rb = b.rows() == 1 ? 0 : r;
    for (std::size_t c = 0; c < cols; ++c) {
      out(r, c) = f(a(ra, a.cols() == 1 ? 0 : c), b(rb, b.cols() == 1 ? 0 : c));
    }
  }
  return out;
}

template <class F>
Tensor unary(const Tensor& a, F f) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

// Adds `g` (shape of the broadcast result) into `target`, summing over any
// broadcast dimensions. `w` supplies a per-element local derivative.
template <class W>
void accumulate_broadcast(Tensor& target, const Tensor& g, W w) {
  if (target.rows() == g.rows() && target.cols() == g.cols()) {
    for (std::size_t i = 0; i < g.size(); ++i) target[i] += g[i] * w(g.rows() == 0 ? 0 : i / g.cols(), i % g.cols());
    return;
  }
  for (std::size_t r = 0; r < g.rows(); ++r) {
    const std::size_t tr = target.rows() == 1 ? 0 : r;
    for (std::size_t c = 0; c < g.cols(); ++c) {
      target(tr, target.cols() == 1 ? 0 : c) += g(r, c) * w(r, c);
    }
  }
}

// Element of `t` at broadcast position (r, c).
inline double bcast(const Tensor& t, std::size_t r, std::size_t c) {
  return t(t.rows() == 1 ? 0 : r, t.cols() == 1 ? 0 : c);
}

}  // namespace

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) throw std::invalid_argument("tensor data size does not match shape");
}

Tensor Tensor::column(std::vector<double> data) {
  const std::size_t n = data.size();
  return Tensor(n, 1, std::move(data));
}

Tensor Tensor::row(std::vector<double> data) {
  const std::size_t n = data.size();
  return Tensor(1, n, std::move(data));
}

double Tensor::item() const {
  if (size() != 1) throw std::logic_error("item() requires a 1x1 tensor");
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::size_t ParamStore::add_block(std::string name, std::size_t rows, std::size_t cols, double fill) {
  for (const auto& b : layout_) {
    if (b.name == name) throw std::invalid_argument("duplicate parameter block: " + name);
  }
  ParamBlock block{std::move(name), data_.size(), rows, cols};
  data_.resize(data_.size() + rows * cols, fill);
  layout_.push_back(std::move(block));
  return layout_.size() - 1;
}

std::size_t ParamStore::block_index(std::string_view name) const {
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    if (layout_[i].name == name) return i;
  }
  throw std::out_of_range("unknown parameter block: " + std::string(name));
}

std::span<double> ParamStore::view(std::size_t index) {
  const auto& b = layout_.at(index);
  return {data_.data() + b.offset, b.size()};
}

std::span<const double> ParamStore::view(std::size_t index) const {
  const auto& b = layout_.at(index);
  return {data_.data() + b.offset, b.size()};
}

bool ParamStore::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool ParamStore::same_layout(const ParamStore& other) const {
  if (layout_.size() != other.layout_.size() || data_.size() != other.data_.size()) return false;
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    const auto& a = layout_[i];
    const auto& b = other.layout_[i];
    if (a.name != b.name || a.offset != b.offset || a.rows != b.rows || a.cols != b.cols) return false;
  }
  return true;
}

void GradientVector::add_scaled(const GradientVector& other, double scale) {
  if (other.size() != size()) throw std::invalid_argument("gradient length mismatch");
  for (std::size_t i = 0; i < data.size(); ++i) data[i] += scale * other.data[i];
}

bool GradientVector::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

double GradientVector::max_abs() const {
  double m = 0.0;
  for (double v : data) m = std::max(m, std::abs(v));
  return m;
}

double GradientVector::mean_abs() const {
  if (data.empty()) return 0.0;
  double s = 0.0;
  for (double v : data) s += std::abs(v);
  return s / static_cast<double>(data.size());
}

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Constant: return "constant";
    case OpKind::Param: return "param";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Neg: return "neg";
    case OpKind::Tanh: return "tanh";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Sqrt: return "sqrt";
    case OpKind::AbsSmooth: return "abs-smooth";
    case OpKind::MaxConst: return "max-with-constant";
    case OpKind::MinConst: return "min-with-constant";
    case OpKind::ScaleShift: return "scale-shift";
    case OpKind::Sum: return "sum";
    case OpKind::Dot: return "dot";
    case OpKind::Affine: return "affine";
    case OpKind::MatMul: return "matmul";
    case OpKind::Row: return "row";
    case OpKind::Col: return "col";
  }
  return "unknown";
}

NonFiniteError::NonFiniteError(std::uint32_t node, OpKind kind, bool adjoint)
    : std::runtime_error(std::string(adjoint ? "non-finite adjoint" : "non-finite value") + " at node " +
                         std::to_string(node) + " (" + std::string(op_name(kind)) + ")"),
      node_(node) {}

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::push(Node node) {
  if (!node.value.all_finite()) {
    throw NonFiniteError(static_cast<std::uint32_t>(nodes_.size()), node.kind, false);
  }
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.kind = OpKind::Constant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::param(const ParamStore& store, std::size_t block_index) {
  const auto& b = store.block(block_index);
  auto v = store.view(block_index);
  Node n;
  n.kind = OpKind::Param;
  n.needs_grad = true;
  n.param_offset = b.offset;
  n.value = Tensor(b.rows, b.cols, std::vector<double>(v.begin(), v.end()));
  return push(std::move(n));
}

void Tape::clear() { nodes_.clear(); }

namespace {

std::size_t expected_inputs(OpKind kind) {
  switch (kind) {
    case OpKind::Constant:
    case OpKind::Param: return 0;
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::Div:
    case OpKind::Dot:
    case OpKind::MatMul: return 2;
    case OpKind::Affine: return 3;  // 2 also accepted
    default: return 1;
  }
}

}  // namespace

Var Tape::record(OpKind kind, std::span<const Var> inputs, std::span<const double> constants) {
  if (kind == OpKind::Constant || kind == OpKind::Param) {
    throw std::invalid_argument("leaves are created with constant() or param()");
  }
  const std::size_t want = expected_inputs(kind);
  const bool ok = inputs.size() == want || (kind == OpKind::Affine && inputs.size() == 2);
  if (!ok) throw std::invalid_argument("wrong number of inputs for " + std::string(op_name(kind)));
  if (constants.size() > 2) throw std::invalid_argument("at most two constants per node");

  Node n;
  n.kind = kind;
  n.n_inputs = static_cast<std::uint8_t>(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].tape != this || inputs[i].id >= nodes_.size()) {
      throw std::invalid_argument("input node is not on this tape");
    }
    n.inputs[i] = inputs[i].id;
    n.needs_grad = n.needs_grad || nodes_[inputs[i].id].needs_grad;
  }
  for (std::size_t i = 0; i < constants.size(); ++i) n.constants[i] = constants[i];
  n.value = forward(n);
  return push(std::move(n));
}

Tensor Tape::forward(const Node& n) const {
  const Tensor& a = nodes_[n.inputs[0]].value;
  switch (n.kind) {
    case OpKind::Add: return binary(a, nodes_[n.inputs[1]].value, [](double x, double y) { return x + y; });
    case OpKind::Sub: return binary(a, nodes_[n.inputs[1]].value, [](double x, double y) { return x - y; });
    case OpKind::Mul: return binary(a, nodes_[n.inputs[1]].value, [](double x, double y) { return x * y; });
    case OpKind::Div: return binary(a, nodes_[n.inputs[1]].value, [](double x, double y) { return x / y; });
    case OpKind::Neg: return unary(a, [](double x) { return -x; });
    case OpKind::Tanh: return unary(a, [](double x) { return std::tanh(x); });
    case OpKind::Exp: return unary(a, [](double x) { return std::exp(x); });
    case OpKind::Log: return unary(a, [](double x) { return std::log(x); });
    case OpKind::Sqrt: return unary(a, [](double x) { return std::sqrt(x); });
    case OpKind::AbsSmooth: {
      const double k2 = n.constants[0] * n.constants[0];
      return unary(a, [k2](double x) { return std::sqrt(x * x + k2); });
    }
    case OpKind::MaxConst: {
      const double c = n.constants[0];
      return unary(a, [c](double x) { return std::max(x, c); });
    }
    case OpKind::MinConst: {
      const double c = n.constants[0];
      return unary(a, [c](double x) { return std::min(x, c); });
    }
    case OpKind::ScaleShift: {
      const double s = n.constants[0];
      const double b = n.constants[1];
      return unary(a, [s, b](double x) { return s * x + b; });
    }
    case OpKind::Sum: {
      return Tensor::scalar(std::accumulate(a.values().begin(), a.values().end(), 0.0));
    }
    case OpKind::Dot: {
      const Tensor& b = nodes_[n.inputs[1]].value;
      if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("dot requires equal shapes");
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
      return Tensor::scalar(s);
    }
    case OpKind::Affine: {
      const Tensor& w = nodes_[n.inputs[1]].value;
      if (a.cols() != w.cols()) throw std::invalid_argument("affine: input width does not match weight columns");
      Tensor out(a.rows(), w.rows());
      as_mat(out).noalias() = as_mat(a) * as_mat(w).transpose();
      if (n.n_inputs == 3) {
        const Tensor& b = nodes_[n.inputs[2]].value;
        if (b.size() != w.rows()) throw std::invalid_argument("affine: bias length does not match output width");
        for (std::size_t r = 0; r < out.rows(); ++r) {
          double* o = out.data() + r * out.cols();
          for (std::size_t c = 0; c < out.cols(); ++c) o[c] += b[c];
        }
      }
      return out;
    }
    case OpKind::MatMul: {
      const Tensor& b = nodes_[n.inputs[1]].value;
      if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
      Tensor out(a.rows(), b.cols());
      as_mat(out).noalias() = as_mat(a) * as_mat(b);
      return out;
    }
    case OpKind::Row: {
      const auto i = static_cast<std::size_t>(n.constants[0]);
      if (i >= a.rows()) throw std::out_of_range("row index out of range");
      Tensor out(1, a.cols());
      std::copy_n(a.data() + i * a.cols(), a.cols(), out.data());
      return out;
    }
    case OpKind::Col: {
      const auto j = static_cast<std::size_t>(n.constants[0]);
      if (j >= a.cols()) throw std::out_of_range("column index out of range");
      Tensor out(a.rows(), 1);
      for (std::size_t r = 0; r < a.rows(); ++r) out[r] = a(r, j);
      return out;
    }
    case OpKind::Constant:
    case OpKind::Param: break;
  }
  throw std::logic_error("forward called on a leaf");
}

void Tape::propagate(const Node& n, const Tensor& g, std::vector<Tensor>& adjoints) const {
  auto adj_of = [&](std::size_t slot) -> Tensor* {
    const std::uint32_t id = n.inputs[slot];
    if (!nodes_[id].needs_grad) return nullptr;
    Tensor& t = adjoints[id];
    if (t.size() == 0) t = Tensor(nodes_[id].value.rows(), nodes_[id].value.cols());
    return &t;
  };
  const Tensor& a = nodes_[n.inputs[0]].value;
  const Tensor& y = n.value;

  switch (n.kind) {
    case OpKind::Add:
    case OpKind::Sub: {
      if (Tensor* ga = adj_of(0)) accumulate_broadcast(*ga, g, [](std::size_t, std::size_t) { return 1.0; });
      const double s = n.kind == OpKind::Add ? 1.0 : -1.0;
      if (Tensor* gb = adj_of(1)) accumulate_broadcast(*gb, g, [s](std::size_t, std::size_t) { return s; });
      return;
    }
    case OpKind::Mul: {
      const Tensor& b = nodes_[n.inputs[1]].value;
      if (Tensor* ga = adj_of(0)) accumulate_broadcast(*ga, g, [&](std::size_t r, std::size_t c) { return bcast(b, r, c); });
      if (Tensor* gb = adj_of(1)) accumulate_broadcast(*gb, g, [&](std::size_t r, std::size_t c) { return bcast(a, r, c); });
      return;
    }
    case OpKind::Div: {
      const Tensor& b = nodes_[n.inputs[1]].value;
      if (Tensor* ga = adj_of(0)) {
        accumulate_broadcast(*ga, g, [&](std::size_t r, std::size_t c) { return 1.0 / bcast(b, r, c); });
      }
      if (Tensor* gb = adj_of(1)) {
        accumulate_broadcast(*gb, g, [&](std::size_t r, std::size_t c) {
          const double bv = bcast(b, r, c);
          return -bcast(a, r, c) / (bv * bv);
        });
      }
      return;
    }
    case OpKind::Neg:
    case OpKind::Tanh:
    case OpKind::Exp:
    case OpKind::Log:
    case OpKind::Sqrt:
    case OpKind::AbsSmooth:
    case OpKind::MaxConst:
    case OpKind::MinConst:
    case OpKind::ScaleShift: {
      Tensor* ga = adj_of(0);
      if (!ga) return;
      const double c0 = n.constants[0];
      for (std::size_t i = 0; i < g.size(); ++i) {
        double d = 0.0;
        switch (n.kind) {
          case OpKind::Neg: d = -1.0; break;
          case OpKind::Tanh: d = 1.0 - y[i] * y[i]; break;
          case OpKind::Exp: d = y[i]; break;
          case OpKind::Log: d = 1.0 / a[i]; break;
          case OpKind::Sqrt: d = 0.5 / y[i]; break;
          case OpKind::AbsSmooth: d = a[i] / y[i]; break;
          case OpKind::MaxConst: d = a[i] > c0 ? 1.0 : 0.0; break;
          case OpKind::MinConst: d = a[i] < c0 ? 1.0 : 0.0; break;
          case OpKind::ScaleShift: d = c0; break;
          default: break;
        }
        (*ga)[i] += g[i] * d;
      }
      return;
    }
    case OpKind::Sum: {
      if (Tensor* ga = adj_of(0)) {
        const double s = g[0];
        for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += s;
      }
      return;
    }
    case OpKind::Dot: {
      const Tensor& b = nodes_[n.inputs[1]].value;
      const double s = g[0];
      if (Tensor* ga = adj_of(0)) {
        for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += s * b[i];
      }
      if (Tensor* gb = adj_of(1)) {
        for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += s * a[i];
      }
      return;
    }
    case OpKind::Affine: {
      const Tensor& w = nodes_[n.inputs[1]].value;
      if (Tensor* gx = adj_of(0)) as_mat(*gx).noalias() += as_mat(g) * as_mat(w);
      if (Tensor* gw = adj_of(1)) as_mat(*gw).noalias() += as_mat(g).transpose() * as_mat(a);
      if (n.n_inputs == 3) {
        if (Tensor* gb = adj_of(2)) {
          for (std::size_t r = 0; r < g.rows(); ++r) {
            const double* gr = g.data() + r * g.cols();
            for (std::size_t c = 0; c < g.cols(); ++c) (*gb)[c] += gr[c];
          }
        }
      }
      return;
    }
    case OpKind::MatMul: {
      const Tensor& b = nodes_[n.inputs[1]].value;
      if (Tensor* ga = adj_of(0)) as_mat(*ga).noalias() += as_mat(g) * as_mat(b).transpose();
      if (Tensor* gb = adj_of(1)) as_mat(*gb).noalias() += as_mat(a).transpose() * as_mat(g);
      return;
    }
    case OpKind::Row: {
      if (Tensor* ga = adj_of(0)) {
        const auto i = static_cast<std::size_t>(n.constants[0]);
        double* dst = ga->data() + i * ga->cols();
        for (std::size_t c = 0; c < g.size(); ++c) dst[c] += g[c];
      }
      return;
    }
    case OpKind::Col: {
      if (Tensor* ga = adj_of(0)) {
        const auto j = static_cast<std::size_t>(n.constants[0]);
        for (std::size_t r = 0; r < g.size(); ++r) (*ga)(r, j) += g[r];
      }
      return;
    }
    case OpKind::Constant:
    case OpKind::Param: return;
  }
}

GradientVector Tape::backward(Var output, const ParamStore& params) const {
  if (output.tape != this || output.id >= nodes_.size()) throw std::invalid_argument("output is not on this tape");
  if (nodes_[output.id].value.size() != 1) throw std::invalid_argument("backward requires a scalar output");

  GradientVector grad(params.size());
  if (!nodes_[output.id].needs_grad) return grad;

  std::vector<Tensor> adjoints(output.id + 1);
  adjoints[output.id] = Tensor::scalar(1.0);
  for (std::size_t k = output.id + 1; k-- > 0;) {
    const Node& n = nodes_[k];
    if (!n.needs_grad || adjoints[k].size() == 0) continue;
    if (!adjoints[k].all_finite()) throw NonFiniteError(static_cast<std::uint32_t>(k), n.kind, true);
    if (n.kind == OpKind::Param) {
      if (n.param_offset + n.value.size() > grad.size()) {
        throw std::invalid_argument("parameter leaf does not fit the supplied ParamStore");
      }
      for (std::size_t i = 0; i < n.value.size(); ++i) grad.data[n.param_offset + i] += adjoints[k][i];
    } else {
      propagate(n, adjoints[k], adjoints);
    }
    adjoints[k] = Tensor();
  }
  return grad;
}

namespace {
Var rec1(OpKind kind, Var a, std::initializer_list<double> c = {}) {
  const Var in[1] = {a};
  return a.tape->record(kind, in, std::span<const double>(c.begin(), c.size()));
}
Var rec2(OpKind kind, Var a, Var b) {
  const Var in[2] = {a, b};
  return a.tape->record(kind, in);
}
}  // namespace

Var add(Var a, Var b) { return rec2(OpKind::Add, a, b); }
Var sub(Var a, Var b) { return rec2(OpKind::Sub, a, b); }
Var mul(Var a, Var b) { return rec2(OpKind::Mul, a, b); }
Var div(Var a, Var b) { return rec2(OpKind::Div, a, b); }
Var neg(Var a) { return rec1(OpKind::Neg, a); }
Var tanh(Var a) { return rec1(OpKind::Tanh, a); }
Var exp(Var a) { return rec1(OpKind::Exp, a); }
Var log(Var a) { return rec1(OpKind::Log, a); }
Var sqrt(Var a) { return rec1(OpKind::Sqrt, a); }
Var abs_smooth(Var a, double kappa) { return rec1(OpKind::AbsSmooth, a, {kappa}); }
Var max_c(Var a, double c) { return rec1(OpKind::MaxConst, a, {c}); }
Var min_c(Var a, double c) { return rec1(OpKind::MinConst, a, {c}); }
Var scale_shift(Var a, double scale, double shift) { return rec1(OpKind::ScaleShift, a, {scale, shift}); }
Var sum(Var a) { return rec1(OpKind::Sum, a); }
Var dot(Var a, Var b) { return rec2(OpKind::Dot, a, b); }
Var affine(Var x, Var w, Var b) {
  const Var in[3] = {x, w, b};
  return x.tape->record(OpKind::Affine, in);
}
Var affine(Var x, Var w) { return rec2(OpKind::Affine, x, w); }
Var matmul(Var a, Var b) { return rec2(OpKind::MatMul, a, b); }
Var row(Var a, std::size_t i) { return rec1(OpKind::Row, a, {static_cast<double>(i)}); }
Var col(Var a, std::size_t j) { return rec1(OpKind::Col, a, {static_cast<double>(j)}); }

}  // namespace stefan::ad
