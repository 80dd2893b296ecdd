#include "posemod/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "kernels.hpp"

namespace posemod {

using detail::BackwardFn;
using detail::Node;

std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '[' << s.rows << ", " << s.cols << ']';
  return os.str();
}

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Scale: return "scale";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::Sin: return "sin";
    case OpKind::Exp: return "exp";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Relu: return "relu";
    case OpKind::Softplus: return "softplus";
    case OpKind::Abs: return "abs";
    case OpKind::Pow: return "pow";
    case OpKind::L2Norm: return "l2_norm";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::ConcatRows: return "concat_rows";
    case OpKind::SliceCols: return "slice_cols";
    case OpKind::SliceRows: return "slice_rows";
    case OpKind::Sum: return "sum";
    case OpKind::RowSums: return "row_sums";
    case OpKind::ColSums: return "col_sums";
    case OpKind::MaxReduce: return "max_reduce";
    case OpKind::ElementwiseMax: return "elementwise_max";
    case OpKind::Transpose: return "transpose";
    case OpKind::Reshape: return "reshape";
    case OpKind::ExclusiveCumsum: return "exclusive_cumsum";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::ScatterRows: return "scatter_rows";
  }
  return "unknown";
}

namespace {

thread_local bool t_grad_enabled = true;

std::shared_ptr<Node> make_leaf(Shape shape, std::vector<double> data) {
  if (data.size() != shape.size()) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + to_string(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value = std::move(data);
  return node;
}

void check_finite(OpKind kind, const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError("non-finite output from op '" + std::string(op_name(kind)) + "'");
    }
  }
}

const Node& node_of(const Tensor& t) {
  if (!t.defined()) throw InvalidArgument("operation on an undefined tensor");
  return *t.node();
}

// Index mapping for broadcast binary ops.
struct Broadcast {
  Shape out;
  std::size_t a_rs, a_cs, b_rs, b_cs;
};

Broadcast broadcast_shapes(OpKind kind, const Shape& a, const Shape& b) {
  auto dim = [&](std::size_t x, std::size_t y) {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw ShapeError("incompatible shapes " + to_string(a) + " and " + to_string(b) + " for " +
                     std::string(op_name(kind)));
  };
  Broadcast bc;
  bc.out = {dim(a.rows, b.rows), dim(a.cols, b.cols)};
  bc.a_rs = a.rows == 1 ? 0 : a.cols;
  bc.a_cs = a.cols == 1 ? 0 : 1;
  bc.b_rs = b.rows == 1 ? 0 : b.cols;
  bc.b_cs = b.cols == 1 ? 0 : 1;
  return bc;
}

}  // namespace

Tensor make_result(OpKind kind, Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   BackwardFn backward) {
  check_finite(kind, value);
  auto node = std::make_shared<Node>();
  node->kind = kind;
  node->shape = shape;
  node->value = std::move(value);
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->backward = std::move(backward);
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
  }
  return Tensor(std::move(node));
}

// ---- Tensor ---------------------------------------------------------------------

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) {
  return Tensor(make_leaf({rows, cols}, std::vector<double>(rows * cols, 0.0)));
}

Tensor Tensor::filled(std::size_t rows, std::size_t cols, double value) {
  return Tensor(make_leaf({rows, cols}, std::vector<double>(rows * cols, value)));
}

Tensor Tensor::scalar(double value) { return Tensor(make_leaf({1, 1}, {value})); }

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor(make_leaf({rows, cols}, std::move(data)));
}

Tensor Tensor::row(std::vector<double> data) {
  const std::size_t n = data.size();
  return Tensor(make_leaf({1, n}, std::move(data)));
}

Tensor Tensor::parameter(std::string name, std::size_t rows, std::size_t cols,
                         std::vector<double> data) {
  if (name.empty()) throw InvalidArgument("parameters need a name");
  auto node = make_leaf({rows, cols}, std::move(data));
  node->param_name = std::move(name);
  node->requires_grad = true;
  return Tensor(std::move(node));
}

const Shape& Tensor::shape() const { return node_of(*this).shape; }

std::span<const double> Tensor::data() const { return node_of(*this).value; }

std::span<double> Tensor::mutable_data() {
  if (!defined() || node_->kind != OpKind::Leaf) {
    throw InvalidArgument("mutable_data() is only available on leaf tensors");
  }
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  const auto& n = node_of(*this);
  if (r >= n.shape.rows || c >= n.shape.cols) throw ShapeError("index out of range");
  return n.value[r * n.shape.cols + c];
}

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }

bool Tensor::is_parameter() const { return defined() && !node_->param_name.empty(); }

const std::string& Tensor::name() const { return node_of(*this).param_name; }

OpKind Tensor::kind() const { return node_of(*this).kind; }

Tensor Tensor::detach() const {
  const auto& n = node_of(*this);
  return Tensor(make_leaf(n.shape, n.value));
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

// ---- linear algebra ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& A = node_of(a);
  const auto& B = node_of(b);
  if (A.shape.cols != B.shape.rows) {
    throw ShapeError("matmul shape mismatch " + to_string(A.shape) + " x " + to_string(B.shape));
  }
  const std::size_t m = A.shape.rows, k = A.shape.cols, n = B.shape.cols;
  std::vector<double> out(m * n);
  kernels::matmul(A.value.data(), B.value.data(), out.data(), m, k, n);
  const Node* pa = &A;
  const Node* pb = &B;
  return make_result(OpKind::MatMul, {m, n}, std::move(out), {a, b},
                     [pa, pb, m, k, n](const Node&, std::span<const double> g,
                                       std::span<std::vector<double>* const> ig) {
                       if (ig[0]) kernels::matmul_nt_acc(g.data(), pb->value.data(),
                                                         ig[0]->data(), m, k, n);
                       if (ig[1]) kernels::matmul_tn_acc(pa->value.data(), g.data(),
                                                         ig[1]->data(), m, k, n);
                     });
}

// ---- broadcast binary ops -----------------------------------------------------------

namespace {

template <typename Fwd, typename Da, typename Db>
Tensor binary_op(OpKind kind, const Tensor& a, const Tensor& b, Fwd fwd, Da da, Db db) {
  const auto& A = node_of(a);
  const auto& B = node_of(b);
  const Broadcast bc = broadcast_shapes(kind, A.shape, B.shape);
  const std::size_t R = bc.out.rows, C = bc.out.cols;
  std::vector<double> out(R * C);
  const double* av = A.value.data();
  const double* bv = B.value.data();
  if (A.shape == bc.out && B.shape == bc.out) {
    for (std::size_t i = 0; i < R * C; ++i) out[i] = fwd(av[i], bv[i]);
  } else {
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < C; ++j)
        out[i * C + j] = fwd(av[i * bc.a_rs + j * bc.a_cs], bv[i * bc.b_rs + j * bc.b_cs]);
  }
  const Node* pa = &A;
  const Node* pb = &B;
  return make_result(kind, bc.out, std::move(out), {a, b},
                     [pa, pb, bc, da, db](const Node&, std::span<const double> g,
                                          std::span<std::vector<double>* const> ig) {
                       const double* av = pa->value.data();
                       const double* bv = pb->value.data();
                       const std::size_t R = bc.out.rows, C = bc.out.cols;
                       for (std::size_t i = 0; i < R; ++i) {
                         for (std::size_t j = 0; j < C; ++j) {
                           const std::size_t ia = i * bc.a_rs + j * bc.a_cs;
                           const std::size_t ib = i * bc.b_rs + j * bc.b_cs;
                           const double gv = g[i * C + j];
                           if (ig[0]) (*ig[0])[ia] += gv * da(av[ia], bv[ib]);
                           if (ig[1]) (*ig[1])[ib] += gv * db(av[ia], bv[ib]);
                         }
                       }
                     });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      OpKind::Add, a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      OpKind::Sub, a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      OpKind::Mul, a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      OpKind::Div, a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

// ---- unary ops ----------------------------------------------------------------------

namespace {

// `deriv(x, y)` is d(out)/d(in) given input x and output y.
template <typename Fwd, typename Deriv>
Tensor unary_op(OpKind kind, const Tensor& a, Fwd fwd, Deriv deriv) {
  const auto& A = node_of(a);
  std::vector<double> out(A.value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(A.value[i]);
  const Node* pa = &A;
  return make_result(kind, A.shape, std::move(out), {a},
                     [pa, deriv](const Node& self, std::span<const double> g,
                                 std::span<std::vector<double>* const> ig) {
                       auto& ga = *ig[0];
                       for (std::size_t i = 0; i < g.size(); ++i)
                         ga[i] += g[i] * deriv(pa->value[i], self.value[i]);
                     });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor scale(const Tensor& a, double factor) {
  return unary_op(
      OpKind::Scale, a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary_op(
      OpKind::AddScalar, a, [value](double x) { return x + value; },
      [](double, double) { return 1.0; });
}

Tensor sin(const Tensor& a) {
  const auto& A = node_of(a);
  std::vector<double> out(A.value.size());
  kernels::vsin(A.value.data(), out.data(), out.size());
  const Node* pa = &A;
  return make_result(OpKind::Sin, A.shape, std::move(out), {a},
                     [pa](const Node&, std::span<const double> g,
                          std::span<std::vector<double>* const> ig) {
                       std::vector<double> c(g.size());
                       kernels::vcos(pa->value.data(), c.data(), c.size());
                       auto& ga = *ig[0];
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c[i];
                     });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      OpKind::Exp, a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      OpKind::Sigmoid, a, [](double x) { return stable_sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      OpKind::Relu, a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& a) {
  return unary_op(
      OpKind::Softplus, a, [](double x) { return x > 20.0 ? x : std::log1p(std::exp(x)); },
      [](double x, double) { return stable_sigmoid(x); });
}

Tensor abs(const Tensor& a) {
  return unary_op(
      OpKind::Abs, a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor pow(const Tensor& a, double exponent) {
  return unary_op(
      OpKind::Pow, a, [exponent](double x) { return std::pow(x, exponent); },
      [exponent](double x, double) {
        if (exponent == 0.0) return 0.0;
        if (exponent == 1.0) return 1.0;
        return exponent * std::pow(x, exponent - 1.0);
      });
}

Tensor l2_norm(const Tensor& a) {
  const auto& A = node_of(a);
  const std::size_t R = A.shape.rows, C = A.shape.cols;
  std::vector<double> out(R);
  for (std::size_t i = 0; i < R; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < C; ++j) s += A.value[i * C + j] * A.value[i * C + j];
    out[i] = std::sqrt(s);
  }
  const Node* pa = &A;
  return make_result(OpKind::L2Norm, {R, 1}, std::move(out), {a},
                     [pa, R, C](const Node& self, std::span<const double> g,
                                std::span<std::vector<double>* const> ig) {
                       auto& ga = *ig[0];
                       for (std::size_t i = 0; i < R; ++i) {
                         const double n = self.value[i];
                         if (n == 0.0) continue;
                         for (std::size_t j = 0; j < C; ++j)
                           ga[i * C + j] += g[i] * pa->value[i * C + j] / n;
                       }
                     });
}

// ---- structural ops -------------------------------------------------------------------

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const std::size_t R = parts[0].rows();
  std::vector<std::size_t> offsets;
  std::size_t C = 0;
  for (const auto& p : parts) {
    if (p.rows() != R) throw ShapeError("concat_cols row mismatch");
    offsets.push_back(C);
    C += p.cols();
  }
  std::vector<double> out(R * C);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = node_of(parts[k]).value;
    const std::size_t pc = parts[k].cols();
    for (std::size_t i = 0; i < R; ++i)
      std::copy_n(v.data() + i * pc, pc, out.data() + i * C + offsets[k]);
  }
  std::vector<std::size_t> widths;
  for (const auto& p : parts) widths.push_back(p.cols());
  return make_result(OpKind::ConcatCols, {R, C}, std::move(out),
                     std::vector<Tensor>(parts.begin(), parts.end()),
                     [R, C, offsets, widths](const Node&, std::span<const double> g,
                                             std::span<std::vector<double>* const> ig) {
                       for (std::size_t k = 0; k < ig.size(); ++k) {
                         if (!ig[k]) continue;
                         auto& gk = *ig[k];
                         const std::size_t pc = widths[k];
                         for (std::size_t i = 0; i < R; ++i)
                           for (std::size_t j = 0; j < pc; ++j)
                             gk[i * pc + j] += g[i * C + offsets[k] + j];
                       }
                     });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  const std::size_t C = parts[0].cols();
  std::size_t R = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.cols() != C) throw ShapeError("concat_rows column mismatch");
    offsets.push_back(R * C);
    R += p.rows();
  }
  std::vector<double> out;
  out.reserve(R * C);
  for (const auto& p : parts) {
    const auto& v = node_of(p).value;
    out.insert(out.end(), v.begin(), v.end());
  }
  return make_result(OpKind::ConcatRows, {R, C}, std::move(out),
                     std::vector<Tensor>(parts.begin(), parts.end()),
                     [offsets](const Node&, std::span<const double> g,
                               std::span<std::vector<double>* const> ig) {
                       for (std::size_t k = 0; k < ig.size(); ++k) {
                         if (!ig[k]) continue;
                         auto& gk = *ig[k];
                         for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += g[offsets[k] + i];
                       }
                     });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  const auto& A = node_of(a);
  if (begin >= end || end > A.shape.cols) throw ShapeError("slice_cols range out of bounds");
  const std::size_t R = A.shape.rows, C = A.shape.cols, W = end - begin;
  std::vector<double> out(R * W);
  for (std::size_t i = 0; i < R; ++i)
    std::copy_n(A.value.data() + i * C + begin, W, out.data() + i * W);
  return make_result(OpKind::SliceCols, {R, W}, std::move(out), {a},
                     [R, C, W, begin](const Node&, std::span<const double> g,
                                      std::span<std::vector<double>* const> ig) {
                       auto& ga = *ig[0];
                       for (std::size_t i = 0; i < R; ++i)
                         for (std::size_t j = 0; j < W; ++j) ga[i * C + begin + j] += g[i * W + j];
                     });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  const auto& A = node_of(a);
  if (begin >= end || end > A.shape.rows) throw ShapeError("slice_rows range out of bounds");
  const std::size_t C = A.shape.cols;
  std::vector<double> out(A.value.begin() + begin * C, A.value.begin() + end * C);
  return make_result(OpKind::SliceRows, {end - begin, C}, std::move(out), {a},
                     [begin, C](const Node&, std::span<const double> g,
                                std::span<std::vector<double>* const> ig) {
                       auto& ga = *ig[0];
                       for (std::size_t i = 0; i < g.size(); ++i) ga[begin * C + i] += g[i];
                     });
}

Tensor sum(const Tensor& a) {
  const auto& A = node_of(a);
  const double s = std::accumulate(A.value.begin(), A.value.end(), 0.0);
  return make_result(OpKind::Sum, {1, 1}, {s}, {a},
                     [](const Node&, std::span<const double> g,
                        std::span<std::vector<double>* const> ig) {
                       for (auto& x : *ig[0]) x += g[0];
                     });
}

Tensor row_sums(const Tensor& a) {
  const auto& A = node_of(a);
  const std::size_t R = A.shape.rows, C = A.shape.cols;
  std::vector<double> out(R, 0.0);
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < C; ++j) out[i] += A.value[i * C + j];
  return make_result(OpKind::RowSums, {R, 1}, std::move(out), {a},
                     [R, C](const Node&, std::span<const double> g,
                            std::span<std::vector<double>* const> ig) {
                       auto& ga = *ig[0];
                       for (std::size_t i = 0; i < R; ++i)
                         for (std::size_t j = 0; j < C; ++j) ga[i * C + j] += g[i];
                     });
}

Tensor col_sums(const Tensor& a) {
  const auto& A = node_of(a);
  const std::size_t R = A.shape.rows, C = A.shape.cols;
  std::vector<double> out(C, 0.0);
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < C; ++j) out[j] += A.value[i * C + j];
  return make_result(OpKind::ColSums, {1, C}, std::move(out), {a},
                     [R, C](const Node&, std::span<const double> g,
                            std::span<std::vector<double>* const> ig) {
                       auto& ga = *ig[0];
                       for (std::size_t i = 0; i < R; ++i)
                         for (std::size_t j = 0; j < C; ++j) ga[i * C + j] += g[j];
                     });
}

Tensor max_reduce(const Tensor& a, Axis axis) {
  const auto& A = node_of(a);
  const std::size_t R = A.shape.rows, C = A.shape.cols;
  if (R == 0 || C == 0) throw ShapeError("max_reduce of an empty tensor");
  const bool along_cols = axis == Axis::Cols;
  const std::size_t outer = along_cols ? R : C;
  const std::size_t inner = along_cols ? C : R;
  std::vector<double> out(outer);
  std::vector<std::size_t> arg(outer);
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t best = 0;
    auto idx = [&](std::size_t k) { return along_cols ? o * C + k : k * C + o; };
    for (std::size_t k = 1; k < inner; ++k)
      if (A.value[idx(k)] > A.value[idx(best)]) best = k;
    arg[o] = idx(best);
    out[o] = A.value[arg[o]];
  }
  const Shape shape = along_cols ? Shape{R, 1} : Shape{1, C};
  return make_result(OpKind::MaxReduce, shape, std::move(out), {a},
                     [arg](const Node&, std::span<const double> g,
                           std::span<std::vector<double>* const> ig) {
                       auto& ga = *ig[0];
                       for (std::size_t o = 0; o < arg.size(); ++o) ga[arg[o]] += g[o];
                     });
}

Tensor elementwise_max(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("elementwise_max of nothing");
  const Shape shape = parts[0].shape();
  for (const auto& p : parts)
    if (p.shape() != shape) throw ShapeError("elementwise_max shape mismatch");
  const std::size_t n = shape.size();
  std::vector<double> out(node_of(parts[0]).value);
  std::vector<std::uint32_t> arg(n, 0);
  for (std::size_t k = 1; k < parts.size(); ++k) {
    const auto& v = node_of(parts[k]).value;
    for (std::size_t i = 0; i < n; ++i) {
      if (v[i] > out[i]) {
        out[i] = v[i];
        arg[i] = static_cast<std::uint32_t>(k);
      }
    }
  }
  return make_result(OpKind::ElementwiseMax, shape, std::move(out),
                     std::vector<Tensor>(parts.begin(), parts.end()),
                     [arg = std::move(arg)](const Node&, std::span<const double> g,
                                            std::span<std::vector<double>* const> ig) {
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         auto* gk = ig[arg[i]];
                         if (gk) (*gk)[i] += g[i];
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  const auto& A = node_of(a);
  const std::size_t R = A.shape.rows, C = A.shape.cols;
  std::vector<double> out(R * C);
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < C; ++j) out[j * R + i] = A.value[i * C + j];
  return make_result(OpKind::Transpose, {C, R}, std::move(out), {a},
                     [R, C](const Node&, std::span<const double> g,
                            std::span<std::vector<double>* const> ig) {
                       auto& ga = *ig[0];
                       for (std::size_t i = 0; i < R; ++i)
                         for (std::size_t j = 0; j < C; ++j) ga[i * C + j] += g[j * R + i];
                     });
}

Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols) {
  const auto& A = node_of(a);
  if (rows * cols != A.shape.size()) {
    throw ShapeError("cannot reshape " + to_string(A.shape) + " to " +
                     to_string(Shape{rows, cols}));
  }
  return make_result(OpKind::Reshape, {rows, cols}, A.value, {a},
                     [](const Node&, std::span<const double> g,
                        std::span<std::vector<double>* const> ig) {
                       auto& ga = *ig[0];
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                     });
}

Tensor exclusive_cumsum(const Tensor& a) {
  const auto& A = node_of(a);
  const std::size_t R = A.shape.rows, C = A.shape.cols;
  std::vector<double> out(R * C);
  for (std::size_t i = 0; i < R; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < C; ++j) {
      out[i * C + j] = acc;
      acc += A.value[i * C + j];
    }
  }
  return make_result(OpKind::ExclusiveCumsum, A.shape, std::move(out), {a},
                     [R, C](const Node&, std::span<const double> g,
                            std::span<std::vector<double>* const> ig) {
                       auto& ga = *ig[0];
                       for (std::size_t i = 0; i < R; ++i) {
                         double acc = 0.0;
                         for (std::size_t j = C; j-- > 0;) {
                           ga[i * C + j] += acc;
                           acc += g[i * C + j];
                         }
                       }
                     });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  const auto& A = node_of(a);
  const std::size_t C = A.shape.cols;
  std::vector<double> out(rows.size() * C);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= A.shape.rows) throw ShapeError("gather_rows index out of range");
    std::copy_n(A.value.data() + rows[r] * C, C, out.data() + r * C);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result(OpKind::GatherRows, {rows.size(), C}, std::move(out), {a},
                     [idx = std::move(idx), C](const Node&, std::span<const double> g,
                                               std::span<std::vector<double>* const> ig) {
                       auto& ga = *ig[0];
                       for (std::size_t r = 0; r < idx.size(); ++r)
                         for (std::size_t j = 0; j < C; ++j) ga[idx[r] * C + j] += g[r * C + j];
                     });
}

Tensor scatter_rows(const Tensor& a, std::span<const std::size_t> rows, std::size_t total_rows) {
  const auto& A = node_of(a);
  if (rows.size() != A.shape.rows) throw ShapeError("scatter_rows index count mismatch");
  const std::size_t C = A.shape.cols;
  std::vector<double> out(total_rows * C, 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= total_rows) throw ShapeError("scatter_rows index out of range");
    std::copy_n(A.value.data() + r * C, C, out.data() + rows[r] * C);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result(OpKind::ScatterRows, {total_rows, C}, std::move(out), {a},
                     [idx = std::move(idx), C](const Node&, std::span<const double> g,
                                               std::span<std::vector<double>* const> ig) {
                       auto& ga = *ig[0];
                       for (std::size_t r = 0; r < idx.size(); ++r)
                         for (std::size_t j = 0; j < C; ++j) ga[r * C + j] += g[idx[r] * C + j];
                     });
}

// ---- dispatcher ---------------------------------------------------------------------

Tensor forward_op(OpKind kind, std::span<const Tensor> in, const OpAttrs& at) {
  auto need = [&](std::size_t n) {
    if (in.size() != n) {
      throw InvalidArgument("op '" + std::string(op_name(kind)) + "' expects " +
                            std::to_string(n) + " inputs");
    }
  };
  switch (kind) {
    case OpKind::Leaf: need(1); return in[0].detach();
    case OpKind::MatMul: need(2); return matmul(in[0], in[1]);
    case OpKind::Add: need(2); return add(in[0], in[1]);
    case OpKind::Sub: need(2); return sub(in[0], in[1]);
    case OpKind::Mul: need(2); return mul(in[0], in[1]);
    case OpKind::Div: need(2); return div(in[0], in[1]);
    case OpKind::Scale: need(1); return scale(in[0], at.factor);
    case OpKind::AddScalar: need(1); return add_scalar(in[0], at.factor);
    case OpKind::Sin: need(1); return sin(in[0]);
    case OpKind::Exp: need(1); return exp(in[0]);
    case OpKind::Sigmoid: need(1); return sigmoid(in[0]);
    case OpKind::Relu: need(1); return relu(in[0]);
    case OpKind::Softplus: need(1); return softplus(in[0]);
    case OpKind::Abs: need(1); return abs(in[0]);
    case OpKind::Pow: need(1); return pow(in[0], at.exponent);
    case OpKind::L2Norm: need(1); return l2_norm(in[0]);
    case OpKind::ConcatCols: return concat_cols(in);
    case OpKind::ConcatRows: return concat_rows(in);
    case OpKind::SliceCols: need(1); return slice_cols(in[0], at.begin, at.end);
    case OpKind::SliceRows: need(1); return slice_rows(in[0], at.begin, at.end);
    case OpKind::Sum: need(1); return sum(in[0]);
    case OpKind::RowSums: need(1); return row_sums(in[0]);
    case OpKind::ColSums: need(1); return col_sums(in[0]);
    case OpKind::MaxReduce: need(1); return max_reduce(in[0], at.axis);
    case OpKind::ElementwiseMax: return elementwise_max(in);
    case OpKind::Transpose: need(1); return transpose(in[0]);
    case OpKind::Reshape: need(1); return reshape(in[0], at.rows, at.cols);
    case OpKind::ExclusiveCumsum: need(1); return exclusive_cumsum(in[0]);
    case OpKind::GatherRows: need(1); return gather_rows(in[0], at.indices);
    case OpKind::ScatterRows: need(1); return scatter_rows(in[0], at.indices, at.rows);
  }
  throw InvalidArgument("unknown op kind");
}

// ---- backward -----------------------------------------------------------------------

std::vector<double> GradientStore::gradient(const Tensor& param) const {
  auto it = grads_.find(param.name());
  if (it == grads_.end()) return std::vector<double>(param.size(), 0.0);
  return it->second;
}

const std::vector<double>& GradientStore::at(const std::string& name) const {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw InvalidArgument("no gradient recorded for '" + name + "'");
  return it->second;
}

void GradientStore::accumulate(const std::string& name, std::span<const double> g) {
  auto& dst = grads_[name];
  if (dst.empty()) {
    dst.assign(g.begin(), g.end());
    return;
  }
  if (dst.size() != g.size()) throw ShapeError("gradient size mismatch for '" + name + "'");
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

void GradientStore::scale(double factor) {
  for (auto& [name, g] : grads_)
    for (auto& x : g) x *= factor;
}

GradientStore backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward() needs a scalar loss");
  }
  GradientStore store;
  if (!loss.requires_grad()) return store;

  // Iterative DFS post-order; a node met again while on the stack means a cycle.
  std::vector<const Node*> order;
  std::unordered_map<const Node*, int> state;  // 1 = on stack, 2 = done
  std::vector<std::pair<const Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  state[loss.node().get()] = 1;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const Node* child = node->inputs[next++].get();
      if (!child->requires_grad) continue;
      auto it = state.find(child);
      if (it == state.end()) {
        state[child] = 1;
        stack.emplace_back(child, 0);
      } else if (it->second == 1) {
        throw GraphError("computation graph contains a cycle");
      }
    } else {
      state[node] = 2;
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<const Node*, std::vector<double>> grads;
  grads[loss.node().get()] = {1.0};
  std::vector<std::vector<double>*> input_grads;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Node* node = *it;
    auto g_it = grads.find(node);
    if (g_it == grads.end()) continue;
    std::vector<double> g = std::move(g_it->second);
    grads.erase(g_it);
    if (node->kind == OpKind::Leaf) {
      if (!node->param_name.empty()) store.accumulate(node->param_name, g);
      continue;
    }
    input_grads.assign(node->inputs.size(), nullptr);
    for (std::size_t k = 0; k < node->inputs.size(); ++k) {
      const Node* in = node->inputs[k].get();
      if (!in->requires_grad) continue;
      auto& slot = grads[in];
      if (slot.empty()) slot.assign(in->value.size(), 0.0);
      input_grads[k] = &slot;
    }
    node->backward(*node, g, input_grads);
  }
  return store;
}

// ---- parameter store ------------------------------------------------------------------

Tensor ParameterStore::add(const std::string& name, std::size_t rows, std::size_t cols,
                           std::vector<double> data, bool trainable) {
  if (contains(name)) throw InvalidArgument("duplicate parameter '" + name + "'");
  Tensor t = Tensor::parameter(name, rows, cols, std::move(data));
  if (!trainable) t.node()->requires_grad = false;
  index_[name] = params_.size();
  params_.push_back(t);
  return t;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return params_[it->second];
}

std::vector<Tensor> ParameterStore::trainable() const {
  std::vector<Tensor> out;
  for (const auto& p : params_)
    if (p.requires_grad()) out.push_back(p);
  return out;
}

std::size_t ParameterStore::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

}  // namespace posemod
