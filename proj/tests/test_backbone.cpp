#include <gtest/gtest.h>

#include <cmath>

#include "posemod/error.hpp"
#include "posemod/backbone.hpp"
#include "posemod/geometry.hpp"
#include "posemod/gradcheck.hpp"

using namespace posemod;

namespace {

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double lo = -1, double hi = 1) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(r, c, v);
}

Tensor unit_dirs(Rng& rng, std::size_t n) {
  std::vector<double> v;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 d = normalized({rng.normal(), rng.normal(), rng.normal()});
    v.insert(v.end(), d.begin(), d.end());
  }
  return Tensor::from(n, 3, v);
}

}  // namespace

TEST(Backbone, UnitThetaEqualsUnmodulated) {
  ParameterStore ps;
  Rng rng(1);
  Backbone bb(15, {}, ps, rng);
  const Tensor x = random_tensor(rng, 9, 15, -0.5, 0.5);
  std::vector<Tensor> ones(4, Tensor::filled(9, 64, 1.0));
  const BackboneOutput a = bb.modulated_forward(x, ones);
  const BackboneOutput b = bb.modulated_forward(x, {});
  ASSERT_EQ(a.features.cols(), 4u * 64u);
  for (std::size_t k = 0; k < a.features.size(); ++k) EXPECT_EQ(a.features.data()[k], b.features.data()[k]);
}

TEST(Backbone, ZeroThetaGivesSineOfBias) {
  ParameterStore ps;
  Rng rng(2);
  Backbone bb(6, {2, 8, 30}, ps, rng);
  const Tensor x = random_tensor(rng, 5, 6);
  const std::vector<Tensor> theta = {Tensor::zeros(5, 8), Tensor::filled(5, 8, 1.0)};
  const BackboneOutput out = bb.modulated_forward(x, theta);
  for (std::size_t p = 0; p < 5; ++p)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(out.layers[0].at(p, c), std::sin(bb.bias(1).at(0, c)), 1e-15);
}

TEST(Backbone, DoublingThetaDoublesPreactivation) {
  ParameterStore ps;
  Rng rng(3);
  Backbone bb(6, {2, 8, 30}, ps, rng);
  const Tensor x = random_tensor(rng, 5, 6);
  const Tensor t = random_tensor(rng, 5, 8, 0.5, 1.5);
  const auto a = bb.modulated_forward(x, {t, Tensor::filled(5, 8, 1.0)});
  const auto b = bb.modulated_forward(x, {scale(t, 2.0), Tensor::filled(5, 8, 1.0)});
  for (std::size_t k = 0; k < a.preactivations[0].size(); ++k)
    EXPECT_EQ(b.preactivations[0].data()[k], 2.0 * a.preactivations[0].data()[k]);
}

TEST(Backbone, ScalarThetaBroadcastsOverChannels) {
  ParameterStore ps;
  Rng rng(4);
  Backbone bb(6, {2, 8, 30}, ps, rng);
  const Tensor x = random_tensor(rng, 3, 6);
  const auto a = bb.modulated_forward(x, {Tensor::filled(3, 1, 1.7), Tensor::filled(3, 1, 0.3)});
  const auto b = bb.modulated_forward(x, {Tensor::filled(3, 8, 1.7), Tensor::filled(3, 8, 0.3)});
  for (std::size_t k = 0; k < a.features.size(); ++k) EXPECT_EQ(a.features.data()[k], b.features.data()[k]);
}

TEST(Backbone, FeaturesBoundedAndShaped) {
  ParameterStore ps;
  Rng rng(5);
  Backbone bb(15, {}, ps, rng);
  const auto out = bb.modulated_forward(random_tensor(rng, 50, 15), {});
  EXPECT_EQ(out.features.rows(), 50u);
  EXPECT_EQ(out.features.cols(), bb.output_dim());
  for (double v : out.features.data()) EXPECT_LE(std::fabs(v), 1.0);
}

TEST(Backbone, InitialisationBounds) {
  ParameterStore ps;
  Rng rng(6);
  Backbone bb(15, {}, ps, rng);
  for (double v : bb.weight(0).data()) EXPECT_LE(std::fabs(v), 30.0 / 15.0);
  for (std::size_t l = 1; l <= 4; ++l)
    for (double v : bb.weight(l).data()) EXPECT_LE(std::fabs(v), std::sqrt(6.0 / 64.0));
}

TEST(Backbone, ShapeMismatchesThrow) {
  ParameterStore ps;
  Rng rng(7);
  Backbone bb(6, {2, 8, 30}, ps, rng);
  const Tensor x = random_tensor(rng, 3, 6);
  EXPECT_THROW(bb.modulated_forward(random_tensor(rng, 3, 5), {}), ShapeError);
  EXPECT_THROW(bb.modulated_forward(x, {Tensor::filled(3, 8, 1.0)}), ShapeError);
  EXPECT_THROW(bb.modulated_forward(x, {Tensor::filled(3, 7, 1.0), Tensor::filled(3, 8, 1.0)}), ShapeError);
  EXPECT_THROW(Backbone(6, {0, 8, 30}, ps, rng), InvalidArgument);
}

TEST(DirectionEmbedding, ValuesAndErrors) {
  const Tensor e = direction_embedding(Tensor::row({0, 0, 1}), 2);
  ASSERT_EQ(e.cols(), 12u);
  // [sin(d), cos(d), sin(2d), cos(2d)]
  EXPECT_NEAR(e.at(0, 2), std::sin(1.0), 1e-15);
  EXPECT_NEAR(e.at(0, 3), 1.0, 1e-15);
  EXPECT_NEAR(e.at(0, 5), std::cos(1.0), 1e-15);
  EXPECT_NEAR(e.at(0, 8), std::sin(2.0), 1e-15);
  EXPECT_THROW(direction_embedding(Tensor::row({0, 0, 1.1}), 2), InvalidArgument);
  EXPECT_THROW(direction_embedding(Tensor::row({0, 1}), 2), ShapeError);
}

TEST(RadianceHead, OutputRanges) {
  ParameterStore ps;
  Rng rng(8);
  RadianceHead head(32, {}, ps, rng);
  for (double s : {1.0, 30.0}) {
    const auto out = head.forward(random_tensor(rng, 40, 32, -s, s), unit_dirs(rng, 40));
    for (double v : out.sigma.data()) EXPECT_GE(v, 0.0);
    for (double v : out.color.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(RadianceHead, DensityIgnoresDirection) {
  ParameterStore ps;
  Rng rng(9);
  RadianceHead head(32, {}, ps, rng);
  const Tensor s = random_tensor(rng, 10, 32);
  const auto a = head.forward(s, unit_dirs(rng, 10));
  const auto b = head.forward(s, unit_dirs(rng, 10));
  for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(a.sigma.data()[k], b.sigma.data()[k]);
  bool color_differs = false;
  for (std::size_t k = 0; k < 30; ++k) color_differs |= a.color.data()[k] != b.color.data()[k];
  EXPECT_TRUE(color_differs);
}

TEST(RadianceHead, RejectsUnnormalizedDirections) {
  ParameterStore ps;
  Rng rng(10);
  RadianceHead head(8, {}, ps, rng);
  EXPECT_THROW(head.forward(random_tensor(rng, 1, 8), Tensor::row({1, 1, 0})), InvalidArgument);
  EXPECT_THROW(head.forward(random_tensor(rng, 2, 8), unit_dirs(rng, 1)), ShapeError);
}

TEST(BackboneGradients, MatchFiniteDifferences) {
  ParameterStore ps;
  Rng rng(11);
  Backbone bb(6, {3, 8, 30}, ps, rng);
  RadianceHead head(24, {8, 2, -1.0}, ps, rng);
  const Tensor x = Tensor::parameter("x", 4, 6, [&] {
    std::vector<double> v(24);
    for (auto& e : v) e = rng.uniform(-0.3, 0.3);
    return v;
  }());
  std::vector<Tensor> theta;
  for (int l = 0; l < 3; ++l) {
    std::vector<double> v(32);
    for (auto& e : v) e = rng.uniform(0.8, 1.2);
    theta.push_back(Tensor::parameter("theta" + std::to_string(l), 4, 8, v));
  }
  const Tensor dirs = unit_dirs(rng, 4);
  auto fn = [&] {
    const auto s = head.forward(bb.modulated_forward(x, theta).features, dirs);
    return sum(s.sigma) + sum(s.color * s.color);
  };
  std::vector<Tensor> params = ps.trainable();
  params.push_back(x);
  params.insert(params.end(), theta.begin(), theta.end());
  const GradCheckResult r = finite_difference_check(fn, params);
  EXPECT_TRUE(r.finite);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "]";
}
