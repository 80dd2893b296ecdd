#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "posemod/error.hpp"

namespace posemod {

// Dense row-major matrices of 64-bit reals with a dynamic reverse-mode tape.
// Every tensor is two-dimensional; scalars are 1x1 and vectors are 1xN rows.

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

enum class OpKind {
  Leaf,
  MatMul,
  Add,
  Sub,
  Mul,
  Div,
  Scale,
  AddScalar,
  Sin,
  Exp,
  Sigmoid,
  Relu,
  Softplus,
  Abs,
  Pow,
  L2Norm,
  ConcatCols,
  ConcatRows,
  SliceCols,
  SliceRows,
  Sum,
  RowSums,
  ColSums,
  MaxReduce,
  ElementwiseMax,
  Transpose,
  Reshape,
  ExclusiveCumsum,
  GatherRows,
  ScatterRows,
};

std::string_view op_name(OpKind kind);

namespace detail {

struct Node;

// Receives the node itself (for cached outputs), dL/d(output), and one accumulator per
// input (null where the input does not require a gradient).
using BackwardFn = std::function<void(const Node& self, std::span<const double> grad_out,
                                      std::span<std::vector<double>* const> input_grads)>;

struct Node {
  OpKind kind = OpKind::Leaf;
  Shape shape;
  std::vector<double> value;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
  std::string param_name;  // non-empty for trainable leaves
  bool requires_grad = false;
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor filled(std::size_t rows, std::size_t cols, double value);
  static Tensor scalar(double value);
  static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Tensor row(std::vector<double> data);
  // A named leaf that receives gradients from backward().
  static Tensor parameter(std::string name, std::size_t rows, std::size_t cols,
                          std::vector<double> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rows() const { return shape().rows; }
  std::size_t cols() const { return shape().cols; }
  std::size_t size() const { return shape().size(); }

  std::span<const double> data() const;
  // In-place access for optimizer updates and weight surgery. Only valid on leaves.
  std::span<double> mutable_data();

  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  bool is_parameter() const;
  const std::string& name() const;
  OpKind kind() const;

  // Detached copy of the values (a constant leaf).
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_result(OpKind, Shape, std::vector<double>, std::vector<Tensor>,
                            detail::BackwardFn);
  std::shared_ptr<detail::Node> node_;
};

// Disables tape recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---- operations -------------------------------------------------------------
// Binary elementwise ops broadcast any dimension of size 1.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor sin(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
// log(1 + e^x), with the x > 20 branch returning x.
Tensor softplus(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor pow(const Tensor& a, double exponent);
// Euclidean norm of each row -> [rows, 1]. Gradient at the zero row is zero.
Tensor l2_norm(const Tensor& a);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor sum(const Tensor& a);
Tensor row_sums(const Tensor& a);  // [rows, 1]
Tensor col_sums(const Tensor& a);  // [1, cols]

enum class Axis { Rows, Cols };
// Max along an axis (Cols reduces each row to one value). Ties pick the lowest index.
Tensor max_reduce(const Tensor& a, Axis axis);
// Elementwise max across same-shaped tensors. Ties pick the earliest tensor.
Tensor elementwise_max(std::span<const Tensor> parts);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols);
// out[i][j] = sum_{k<j} a[i][k]
Tensor exclusive_cumsum(const Tensor& a);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
// Rows of `a` placed at `rows` in a zero tensor with `total_rows` rows.
Tensor scatter_rows(const Tensor& a, std::span<const std::size_t> rows, std::size_t total_rows);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

// Attribute bag for the generic dispatcher.
struct OpAttrs {
  double exponent = 2.0;
  double factor = 1.0;
  std::size_t begin = 0;
  std::size_t end = 0;
  Axis axis = Axis::Cols;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> indices;
};

Tensor forward_op(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs = {});

// ---- gradients ---------------------------------------------------------------

class GradientStore {
 public:
  bool contains(const std::string& name) const { return grads_.count(name) != 0; }
  // Gradient for `param`, or zeros of its shape when the loss does not depend on it.
  std::vector<double> gradient(const Tensor& param) const;
  const std::vector<double>& at(const std::string& name) const;
  void accumulate(const std::string& name, std::span<const double> g);
  void scale(double factor);
  std::size_t size() const { return grads_.size(); }
  const std::map<std::string, std::vector<double>>& entries() const { return grads_; }

 private:
  std::map<std::string, std::vector<double>> grads_;
};

GradientStore backward(const Tensor& loss);

// ---- parameters ----------------------------------------------------------------

class ParameterStore {
 public:
  // Registers a new named leaf. Non-trainable entries are saved but never receive gradients.
  Tensor add(const std::string& name, std::size_t rows, std::size_t cols,
             std::vector<double> data, bool trainable = true);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<Tensor>& all() const { return params_; }
  std::vector<Tensor> trainable() const;
  std::size_t total_size() const;

 private:
  std::vector<Tensor> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace posemod
