#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "posemod/error.hpp"
#include "posemod/gradcheck.hpp"
#include "posemod/rng.hpp"
#include "posemod/tensor.hpp"

using namespace posemod;

namespace {

Tensor random_param(Rng& rng, const std::string& name, std::size_t r, std::size_t c, double lo = -1,
                    double hi = 1) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::parameter(name, r, c, v);
}

// Central differences written out directly, independent of the library's checker.
std::vector<double> numeric_gradient(const std::function<double()>& f, Tensor& x, double h = 1e-5) {
  auto d = x.mutable_data();
  std::vector<double> g(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double saved = d[i];
    d[i] = saved + h;
    const double fp = f();
    d[i] = saved - h;
    const double fm = f();
    d[i] = saved;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

double max_rel(const std::vector<double>& a, const std::vector<double>& n) {
  double e = 0;
  for (std::size_t i = 0; i < a.size(); ++i) e = std::max(e, std::fabs(a[i] - n[i]) / std::max(1.0, std::fabs(n[i])));
  return e;
}

}  // namespace

TEST(Tensor, SineOfZeroIsZero) {
  const Tensor z = sin(Tensor::zeros(3, 4));
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(Tensor, MatmulByIdentityReturnsInput) {
  Rng rng(3);
  const Tensor a = random_param(rng, "a", 5, 4);
  std::vector<double> eye(16, 0.0);
  for (int i = 0; i < 4; ++i) eye[i * 5] = 1.0;
  const Tensor out = matmul(a, Tensor::from(4, 4, eye));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(out.data()[i], a.data()[i]);
}

TEST(Tensor, MaxReduceRoutesGradientToArgmax) {
  const Tensor x = Tensor::parameter("x", 1, 3, {1, 5, 3});
  const Tensor m = max_reduce(x, Axis::Cols);
  EXPECT_EQ(m.item(), 5.0);
  const auto g = backward(sum(m)).gradient(x);
  EXPECT_EQ(g, (std::vector<double>{0, 1, 0}));
}

TEST(Tensor, MaxReduceTiesPickLowestIndex) {
  const Tensor x = Tensor::parameter("x", 1, 4, {2, 7, 7, 1});
  const auto g = backward(sum(max_reduce(x, Axis::Cols))).gradient(x);
  EXPECT_EQ(g, (std::vector<double>{0, 1, 0, 0}));
}

TEST(Tensor, ElementwiseMaxTiesPickEarliestTensor) {
  const Tensor a = Tensor::parameter("a", 1, 2, {3, 1});
  const Tensor b = Tensor::parameter("b", 1, 2, {3, 2});
  const GradientStore g = backward(sum(elementwise_max(std::vector<Tensor>{a, b})));
  EXPECT_EQ(g.gradient(a), (std::vector<double>{1, 0}));
  EXPECT_EQ(g.gradient(b), (std::vector<double>{0, 1}));
}

TEST(Tensor, PowerRuleGradient) {
  const Tensor x = Tensor::parameter("x", 1, 1, {3});
  EXPECT_DOUBLE_EQ(backward(pow(x, 2.0)).gradient(x)[0], 6.0);
  EXPECT_DOUBLE_EQ(backward(x * x).gradient(x)[0], 6.0);
}

TEST(Tensor, SineGradientAtZeroIsOne) {
  const Tensor x = Tensor::parameter("x", 1, 1, {0});
  EXPECT_DOUBLE_EQ(backward(sin(x)).gradient(x)[0], 1.0);
}

TEST(Tensor, RandomCompositeGraphMatchesFiniteDifferences) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = random_param(rng, "a", 3, 4);
    Tensor b = random_param(rng, "b", 4, 2);
    auto f = [&] { return sum(sigmoid(matmul(sin(a), b)) * exp(scale(matmul(a, b), 0.3))); };
    const GradientStore g = backward(f());
    auto fv = [&] { NoGradGuard ng; return f().item(); };
    EXPECT_LT(max_rel(g.gradient(a), numeric_gradient(fv, a)), 1e-6);
    EXPECT_LT(max_rel(g.gradient(b), numeric_gradient(fv, b)), 1e-6);
  }
}

// Every differentiable op at 100 random probe points.
TEST(Tensor, OpJacobiansMatchFiniteDifferencesAtRandomProbes) {
  struct Case {
    const char* name;
    double lo, hi;
    std::function<Tensor(const Tensor&)> op;
  };
  const Tensor w = Tensor::from(3, 2, {0.3, -0.7, 1.1, 0.2, -0.4, 0.9});
  const std::vector<Case> cases{
      {"matmul", -1, 1, [&](const Tensor& x) { return matmul(x, w); }},
      {"mul", -1, 1, [](const Tensor& x) { return x * x; }},
      {"div", 0.5, 2, [](const Tensor& x) { return Tensor::filled(2, 3, 1.3) / x; }},
      {"sin", -3, 3, [](const Tensor& x) { return sin(x); }},
      {"exp", -2, 2, [](const Tensor& x) { return exp(x); }},
      {"sigmoid", -4, 4, [](const Tensor& x) { return sigmoid(x); }},
      {"softplus", -6, 6, [](const Tensor& x) { return softplus(x); }},
      {"pow", 0.3, 2, [](const Tensor& x) { return pow(x, 3.0); }},
      {"l2_norm", -1, 1, [](const Tensor& x) { return l2_norm(x); }},
      {"row_sums", -1, 1, [](const Tensor& x) { return row_sums(x * x); }},
      {"col_sums", -1, 1, [](const Tensor& x) { return col_sums(x * x); }},
      {"transpose", -1, 1, [](const Tensor& x) { return transpose(x) * transpose(x); }},
      {"exclusive_cumsum", -1, 1, [](const Tensor& x) { return exclusive_cumsum(sin(x)); }},
  };
  Rng rng(19);
  for (const auto& c : cases) {
    double worst = 0;
    for (int probe = 0; probe < 100; ++probe) {
      Tensor x = random_param(rng, "x", 2, 3, c.lo, c.hi);
      const Tensor out0 = c.op(x);
      std::vector<double> wv(out0.size());
      for (auto& v : wv) v = rng.uniform(-1, 1);
      const Tensor weights = Tensor::from(out0.rows(), out0.cols(), wv);
      auto f = [&] { return sum(c.op(x) * weights); };
      const auto analytic = backward(f()).gradient(x);
      worst = std::max(worst, max_rel(analytic, numeric_gradient([&] { NoGradGuard ng; return f().item(); }, x)));
    }
    EXPECT_LT(worst, 1e-4) << c.name;
  }
}

TEST(Tensor, FiniteDifferenceCheckOfLinearFunctionIsExact) {
  Rng rng(2);
  const Tensor x = random_param(rng, "x", 3, 3);
  const Tensor c = Tensor::from(3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const GradCheckResult r = finite_difference_check([&] { return sum(x * c); }, {x});
  EXPECT_TRUE(r.finite);
  EXPECT_LT(r.max_rel_error, 1e-9);
  EXPECT_EQ(r.coordinates, 9u);
}

TEST(Tensor, FiniteDifferenceCheckReportsNonFiniteAsFailure) {
  const Tensor x = Tensor::parameter("x", 1, 1, {0.0});
  const GradCheckResult r = finite_difference_check([&] { return pow(x, 0.5); }, {x});
  EXPECT_FALSE(r.finite);
  EXPECT_TRUE(std::isinf(r.max_rel_error));
}

TEST(Tensor, ParameterWithoutPathGetsZeroGradient) {
  const Tensor used = Tensor::parameter("used", 1, 2, {1, 2});
  const Tensor unused = Tensor::parameter("unused", 2, 2, {1, 2, 3, 4});
  const GradientStore g = backward(sum(used * used));
  EXPECT_FALSE(g.contains("unused"));
  EXPECT_EQ(g.gradient(unused), std::vector<double>(4, 0.0));
}

TEST(Tensor, ConstantLeavesReceiveNoGradient) {
  const Tensor c = Tensor::from(1, 2, {1, 2});
  const Tensor p = Tensor::parameter("p", 1, 2, {3, 4});
  const GradientStore g = backward(sum(c * p));
  EXPECT_EQ(g.size(), 1u);
  EXPECT_EQ(g.at("p"), (std::vector<double>{1, 2}));
}

TEST(Tensor, GradientShapesMatchParameters) {
  Rng rng(5);
  const Tensor a = random_param(rng, "a", 4, 3);
  const Tensor b = random_param(rng, "b", 3, 5);
  const GradientStore g = backward(sum(matmul(a, b)));
  EXPECT_EQ(g.at("a").size(), a.size());
  EXPECT_EQ(g.at("b").size(), b.size());
}

TEST(Tensor, SharedParameterGradientsAccumulate) {
  const Tensor x = Tensor::parameter("x", 1, 1, {2});
  const GradientStore g = backward(x * x + scale(x, 3.0));
  EXPECT_DOUBLE_EQ(g.at("x")[0], 7.0);
}

TEST(Tensor, BackwardRejectsNonScalarLoss) {
  const Tensor x = Tensor::parameter("x", 1, 2, {1, 2});
  EXPECT_THROW(backward(x * x), ShapeError);
}

TEST(Tensor, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Tensor::zeros(2, 3), Tensor::zeros(2, 3)), ShapeError);
  EXPECT_THROW(add(Tensor::zeros(2, 3), Tensor::zeros(3, 2)), ShapeError);
}

TEST(Tensor, NonFiniteForwardIsAnError) {
  EXPECT_THROW(div(Tensor::filled(1, 1, 1.0), Tensor::zeros(1, 1)), NumericError);
  EXPECT_THROW(exp(Tensor::filled(1, 1, 1000.0)), NumericError);
}

TEST(Tensor, SoftplusLargeInputShortcut) {
  const Tensor s = softplus(Tensor::from(1, 3, {30.0, 0.0, -40.0}));
  EXPECT_EQ(s.data()[0], 30.0);
  EXPECT_DOUBLE_EQ(s.data()[1], std::log(2.0));
  EXPECT_GT(s.data()[2], 0.0);
}

TEST(Tensor, ForwardIsBitDeterministic) {
  auto run = [] {
    Rng rng(7);
    const Tensor a = random_param(rng, "a", 37, 19);
    const Tensor b = random_param(rng, "b", 19, 23);
    const Tensor c = matmul(sin(a), b);
    return std::vector<double>(c.data().begin(), c.data().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(Tensor, MatmulMatchesNaiveProductOnOddShapes) {
  Rng rng(13);
  for (auto [m, k, n] : std::vector<std::array<std::size_t, 3>>{{1, 1, 1}, {7, 5, 3}, {9, 17, 33}, {130, 20, 19}}) {
    const Tensor a = random_param(rng, "a", m, k);
    const Tensor b = random_param(rng, "b", k, n);
    const Tensor c = matmul(a, b);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        long double s = 0;
        for (std::size_t p = 0; p < k; ++p) s += static_cast<long double>(a.at(i, p)) * b.at(p, j);
        EXPECT_NEAR(c.at(i, j), static_cast<double>(s), 1e-12);
      }
    // dA = G B^T and dB = A^T G with G = 1.
    const GradientStore g = backward(sum(c));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        double s = 0;
        for (std::size_t j = 0; j < n; ++j) s += b.at(p, j);
        EXPECT_NEAR(g.at("a")[i * k + p], s, 1e-12);
      }
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0;
        for (std::size_t i = 0; i < m; ++i) s += a.at(i, p);
        EXPECT_NEAR(g.at("b")[p * n + j], s, 1e-11);
      }
  }
}

// Culling relies on a row's product not depending on which other rows share the batch.
TEST(Tensor, MatmulRowsAreIndependentOfBatchComposition) {
  Rng rng(17);
  const Tensor a = random_param(rng, "a", 61, 35);
  const Tensor b = random_param(rng, "b", 35, 64);
  const Tensor full = matmul(a, b);
  const std::vector<std::size_t> rows{3, 4, 20, 60};
  const Tensor part = matmul(gather_rows(a, rows), b);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t j = 0; j < 64; ++j) EXPECT_EQ(part.at(r, j), full.at(rows[r], j));
  const Tensor s_full = sin(full);
  const Tensor s_part = sin(part);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t j = 0; j < 64; ++j) EXPECT_EQ(s_part.at(r, j), s_full.at(rows[r], j));
}

TEST(Tensor, NoGradGuardStopsRecording) {
  const Tensor x = Tensor::parameter("x", 1, 1, {1});
  {
    NoGradGuard g;
    EXPECT_FALSE(grad_enabled());
    EXPECT_FALSE((x * x).requires_grad());
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE((x * x).requires_grad());
}

TEST(Tensor, ScatterGatherRoundTrip) {
  const Tensor a = Tensor::from(3, 2, {1, 2, 3, 4, 5, 6});
  const std::vector<std::size_t> rows{4, 0, 2};
  const Tensor s = scatter_rows(a, rows, 5);
  EXPECT_EQ(s.at(1, 0), 0.0);
  const Tensor back = gather_rows(s, rows);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(back.data()[i], a.data()[i]);
}

TEST(Tensor, ExclusiveCumsumValues) {
  const Tensor c = exclusive_cumsum(Tensor::from(1, 4, {1, 2, 3, 4}));
  EXPECT_EQ(std::vector<double>(c.data().begin(), c.data().end()), (std::vector<double>{0, 1, 3, 6}));
}

TEST(Tensor, ParameterStoreTracksTrainableFlags) {
  ParameterStore s;
  s.add("a", 2, 2, {1, 2, 3, 4});
  s.add("b", 1, 3, {1, 2, 3}, false);
  EXPECT_EQ(s.total_size(), 7u);
  EXPECT_EQ(s.trainable().size(), 1u);
  EXPECT_THROW(s.add("a", 1, 1, {0}), Error);
  EXPECT_FALSE(s.get("b").requires_grad());
}
