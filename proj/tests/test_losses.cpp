#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "bast/losses.hpp"

using namespace bast;

namespace {

double eval(LossKind kind, std::vector<Real> c, std::vector<Real> p, double alpha = 0.5) {
  const std::size_t n = c.size() / 2;
  Graph g(false);
  Tensor target(Shape{n, 2}, std::move(c)), pred(Shape{n, 2}, std::move(p));
  return compute_loss(g, {kind, alpha, 1e-7}, target, pred).item();
}

}  // namespace

TEST_CASE("mse examples") {
  CHECK(eval(LossKind::MSE, {0.3, -0.2}, {0.3, -0.2}) == 0.0);
  CHECK(eval(LossKind::MSE, {0, 1}, {0, 0}) == 1.0);
  CHECK(eval(LossKind::MSE, {1, 0, 0, 1}, {0, 0, 0, 0}) == 1.0);
}

TEST_CASE("ad examples") {
  CHECK(eval(LossKind::AD, {0.6, 0.8}, {0.6, 0.8}) == doctest::Approx(0.0).epsilon(1e-3));
  CHECK(eval(LossKind::AD, {0, 1}, {1, 0}) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(eval(LossKind::AD, {0, 1}, {0, -1}) == doctest::Approx(1.0).epsilon(1e-3));
  // Scale invariance holds exactly.
  CHECK(eval(LossKind::AD, {0.3, 0.4}, {-0.2, 0.7}) == eval(LossKind::AD, {0.3, 0.4}, {-0.6, 2.1}));
}

TEST_CASE("ad range and rotation invariance") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int k = 0; k < 200; ++k) {
    const double cx = u(rng), cy = u(rng), px = u(rng), py = u(rng);
    const double ad = eval(LossKind::AD, {static_cast<Real>(cx), static_cast<Real>(cy)},
                           {static_cast<Real>(px), static_cast<Real>(py)});
    CHECK(ad >= 0.0);
    CHECK(ad <= 1.0);
    for (int deg = 10; deg < 360; deg += 70) {
      const double a = deg * std::numbers::pi / 180.0, cs = std::cos(a), sn = std::sin(a);
      const double rotated =
          eval(LossKind::AD, {static_cast<Real>(cs * cx - sn * cy), static_cast<Real>(sn * cx + cs * cy)},
               {static_cast<Real>(cs * px - sn * py), static_cast<Real>(sn * px + cs * py)});
      CHECK(std::abs(rotated - ad) <= 1e-6);
    }
  }
}

TEST_CASE("hybrid examples and boundaries") {
  CHECK(eval(LossKind::Hybrid, {0, 1}, {1, 0}, 0.5) == doctest::Approx(1.25).epsilon(1e-6));
  const std::vector<Real> c{0.2f, 0.9f, -1, 0.1f}, p{0.5f, -0.3f, 0.25f, 0.75f};
  CHECK(eval(LossKind::Hybrid, c, p, 1.0) == eval(LossKind::AD, c, p));
  CHECK(eval(LossKind::Hybrid, c, p, 0.0) == eval(LossKind::MSE, c, p));
  CHECK_THROWS_AS(eval(LossKind::Hybrid, c, p, 1.5), ParameterError);
  CHECK_THROWS_AS(eval(LossKind::Hybrid, c, p, -0.1), ParameterError);
}

TEST_CASE("ad input errors") {
  CHECK_THROWS_AS(eval(LossKind::AD, {0, 0}, {1, 0}), InputError);
  Graph g;
  CHECK_THROWS_AS(mse_loss(g, Tensor(Shape{2, 2}), Tensor(Shape{1, 2})), DimensionError);
}

TEST_CASE("degenerate prediction contributes the clamp value with zero gradient") {
  Tensor target(Shape{1, 2}, {0, 1});
  Tensor pred(Shape{1, 2}, {0, 0}, true);
  Graph g;
  Tensor loss = ad_loss(g, target, pred);
  CHECK(loss.item() == doctest::Approx(std::acos(-1.0 + 1e-7) / std::numbers::pi));
  g.backward(loss);
  CHECK(pred.grad()[0] == 0);
  CHECK(pred.grad()[1] == 0);

  // The MSE term still pulls the prediction off the origin.
  Tensor pred2(Shape{1, 2}, {0, 0}, true);
  Graph h;
  h.backward(hybrid_loss(h, target, pred2, 0.5));
  CHECK(pred2.grad()[1] < 0);
}

TEST_CASE("gradients at the clamp boundary stay finite") {
  Tensor target(Shape{2, 2}, {0, 1, 1, 0});
  Tensor pred(Shape{2, 2}, {0, 2, -3, 0}, true);
  Graph g;
  g.backward(hybrid_loss(g, target, pred, 0.5));
  for (Real v : pred.grad()) CHECK(std::isfinite(v));
}

TEST_CASE("loss names round trip") {
  for (auto k : {LossKind::MSE, LossKind::AD, LossKind::Hybrid}) CHECK(parse_loss(loss_name(k)) == k);
  CHECK_THROWS_AS(parse_loss("L1"), ParameterError);
}
