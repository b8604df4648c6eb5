#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stefan::ad {

/// Dense row-major matrix used as the value of every tape node.
///
/// Scalars are 1x1 tensors. Binary elementwise ops broadcast along any
/// dimension of extent 1, so a 1xC row can be combined with an RxC matrix.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor column(std::vector<double> data);
  static Tensor row(std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }

  /// Value of a 1x1 tensor.
  double item() const;
  bool all_finite() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

/// Flat parameter vector with named, contiguous blocks.
class ParamStore {
 public:
  /// Appends a block and returns its index.
  std::size_t add_block(std::string name, std::size_t rows, std::size_t cols, double fill = 0.0);

  std::size_t block_index(std::string_view name) const;
  const ParamBlock& block(std::size_t index) const { return layout_.at(index); }
  const ParamBlock& block(std::string_view name) const { return layout_.at(block_index(name)); }
  const std::vector<ParamBlock>& layout() const { return layout_; }

  std::span<double> view(std::size_t index);
  std::span<const double> view(std::size_t index) const;
  std::span<double> view(std::string_view name) { return view(block_index(name)); }
  std::span<const double> view(std::string_view name) const { return view(block_index(name)); }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  std::size_t size() const { return data_.size(); }

  bool all_finite() const;
  /// True when the layouts (names, offsets, shapes) agree.
  bool same_layout(const ParamStore& other) const;

 private:
  std::vector<double> data_;
  std::vector<ParamBlock> layout_;
};

/// Gradient aligned with a ParamStore.
struct GradientVector {
  std::vector<double> data;

  GradientVector() = default;
  explicit GradientVector(std::size_t n) : data(n, 0.0) {}

  std::size_t size() const { return data.size(); }
  void add_scaled(const GradientVector& other, double scale = 1.0);
  bool all_finite() const;
  double max_abs() const;
  double mean_abs() const;
};

enum class OpKind : std::uint8_t {
  Constant,
  Param,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Tanh,
  Exp,
  Log,
  Sqrt,
  AbsSmooth,  // sqrt(x^2 + k^2), k = constants[0]
  MaxConst,   // max(x, c)
  MinConst,   // min(x, c)
  ScaleShift, // a*x + b
  Sum,        // sum of all entries -> 1x1
  Dot,        // sum(a .* b) -> 1x1
  Affine,     // X * W^T (+ b), X: BxI, W: OxI, b: 1xO
  MatMul,     // A * B
  Row,        // row i as 1xC
  Col,        // column j as Rx1
};

std::string_view op_name(OpKind kind);

/// Raised when a node value or adjoint is NaN/Inf.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(std::uint32_t node, OpKind kind, bool adjoint);
  std::uint32_t node() const { return node_; }

 private:
  std::uint32_t node_;
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  double item() const { return value().item(); }
};

/// Dynamic reverse-mode tape. Nodes are appended in topological order and
/// backward() performs one sweep from the output down to node 0.
class Tape {
 public:
  Var constant(Tensor value);
  Var scalar(double v) { return constant(Tensor::scalar(v)); }
  /// Leaf bound to a parameter block. The current value is copied in.
  Var param(const ParamStore& store, std::size_t block_index);
  Var param(const ParamStore& store, std::string_view name) {
    return param(store, store.block_index(name));
  }

  Var record(OpKind kind, std::span<const Var> inputs, std::span<const double> constants = {});

  /// Gradient of a scalar output with respect to every parameter of `params`.
  GradientVector backward(Var output, const ParamStore& params) const;

  void clear();
  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  OpKind kind(Var v) const { return nodes_.at(v.id).kind; }

 private:
  struct Node {
    OpKind kind = OpKind::Constant;
    std::uint8_t n_inputs = 0;
    bool needs_grad = false;
    std::array<std::uint32_t, 3> inputs{};
    std::array<double, 2> constants{};
    std::size_t param_offset = 0;
    Tensor value;
  };

  Var push(Node node);
  Tensor forward(const Node& node) const;
  void propagate(const Node& node, const Tensor& adj, std::vector<Tensor>& adjoints) const;

  std::vector<Node> nodes_;
};

// Builders. All inputs must live on the same tape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var abs_smooth(Var a, double kappa = 1e-12);
Var max_c(Var a, double c);
Var min_c(Var a, double c);
Var scale_shift(Var a, double scale, double shift);
Var sum(Var a);
Var dot(Var a, Var b);
Var affine(Var x, Var w, Var b);
Var affine(Var x, Var w);
Var matmul(Var a, Var b);
Var row(Var a, std::size_t i);
Var col(Var a, std::size_t j);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator+(Var a, double c) { return scale_shift(a, 1.0, c); }
inline Var operator+(double c, Var a) { return scale_shift(a, 1.0, c); }
inline Var operator-(Var a, double c) { return scale_shift(a, 1.0, -c); }
inline Var operator-(double c, Var a) { return scale_shift(a, -1.0, c); }
inline Var operator*(Var a, double c) { return scale_shift(a, c, 0.0); }
inline Var operator*(double c, Var a) { return scale_shift(a, c, 0.0); }

}  // namespace stefan::ad
