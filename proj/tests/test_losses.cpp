#include <doctest.h>

#include "haifit/losses.hpp"
#include "support.hpp"

using namespace haifit;
using testing::uniform_tensor;

namespace {

using D = Var<double>;

D constant(Shape s, double v) { return D(Tensor<double>(s, v)); }

}  // namespace

TEST_CASE("l1 loss is the mean absolute difference") {
  D a(Tensor<double>(Shape{1, 1, 1, 4}, Eigen::Vector4d(0, 1, 2, 3)));
  D b(Tensor<double>(Shape{1, 1, 1, 4}, Eigen::Vector4d(1, 1, 0, 7)));
  CHECK(l1_loss(a, b).item() == doctest::Approx((1 + 0 + 2 + 4) / 4.0));
  CHECK_THROWS_AS(l1_loss(a, constant({1, 1, 2, 2}, 0)), Error);
}

TEST_CASE("adversarial losses at known probabilities") {
  const Shape s{1, 1, 2, 2};
  // D(real) = 0.8, D(fake) = 0.3: d = -(log 0.8 + log 0.7), g = -log 0.3
  const auto l = adversarial_losses(constant(s, 0.8), constant(s, 0.3));
  CHECK(l.d_loss.item() == doctest::Approx(-(std::log(0.8) + std::log(0.7))).epsilon(1e-12));
  CHECK(l.g_loss.item() == doctest::Approx(-std::log(0.3)).epsilon(1e-12));
  // A perfectly confident critic is clamped instead of producing infinity.
  CHECK(std::isfinite(discriminator_loss(constant(s, 1.0), constant(s, 1.0)).item()));
  CHECK(generator_adversarial_loss(constant(s, 0.0)).item() == doctest::Approx(-std::log(kProbabilityClamp)));
}

TEST_CASE("adversarial losses reject scores outside [0, 1]") {
  const Shape s{1, 1, 1, 1};
  try {
    discriminator_loss(constant(s, 1.2), constant(s, 0.5));
    FAIL("expected a domain error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Domain);
  }
  CHECK_THROWS_AS(generator_adversarial_loss(constant(s, std::nan(""))), Error);
}

TEST_CASE("gram matrix of a known map") {
  // c = 2, h*w = 2: F = [[1, 2], [3, 4]]; F F^T / (2*2) = [[5, 11], [11, 25]] / 4
  D f(Tensor<double>(Shape{1, 2, 1, 2}, Eigen::Vector4d(1, 2, 3, 4)));
  const auto g = gram_matrix(f).value();
  CHECK(g.shape() == Shape{1, 1, 2, 2});
  CHECK(g[0] == doctest::Approx(5.0 / 4));
  CHECK(g[1] == doctest::Approx(11.0 / 4));
  CHECK(g[2] == doctest::Approx(11.0 / 4));
  CHECK(g[3] == doctest::Approx(25.0 / 4));
  CHECK(style_loss(f, f).item() == 0.0);
}

TEST_CASE("perceptual loss properties on the test extractor") {
  const auto fx = testing::test_extractor<double>();
  const D a(uniform_tensor<double>(Shape{2, 3, 32, 32}, -1, 1, 1));
  const D b(uniform_tensor<double>(Shape{2, 3, 32, 32}, -1, 1, 2));
  CHECK(perceptual_loss(a, a, fx).item() == 0.0);
  CHECK(perceptual_loss(a, b, fx).item() > 0.0);
  CHECK(perceptual_loss(a, b, fx).item() == doctest::Approx(perceptual_loss(b, a, fx).item()).epsilon(1e-12));

  // With a linear extractor the loss is positively homogeneous in the difference.
  auto layout = FeatureExtractor<double>::test_profile_layout();
  for (auto& stage : layout) stage.relu = false;
  // Random extractors start with zero biases, so these features are linear.
  const auto linear = FeatureExtractor<double>::random(layout, 3);
  const D zero(Tensor<double>(Shape{2, 3, 32, 32}));
  const D twice(Tensor<double>(Shape{2, 3, 32, 32}, Eigen::VectorXd(2.0 * b.value().vec())));
  CHECK(perceptual_loss(twice, zero, linear).item() ==
        doctest::Approx(2.0 * perceptual_loss(b, zero, linear).item()).epsilon(1e-10));

  auto four = FeatureExtractor<double>::test_profile_layout();
  four.pop_back();
  try {
    perceptual_loss(a, b, FeatureExtractor<double>::random(four, 1));
    FAIL("expected a configuration error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Configuration);
  }
}

TEST_CASE("weighted total uses the configured weights") {
  const auto w = LossWeights::from(TrainConfig{});
  const auto b = total_generator_loss(0.2, 0.7, 0.001, 3.0, w);
  CHECK(b.total == 1.5 * 0.2 + 10.0 * 0.7 + 250.0 * 0.001 + 0.1 * 3.0);
  CHECK(b.l1 == 0.2);
  CHECK(b.perceptual == 3.0);
}
