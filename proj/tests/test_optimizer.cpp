#include <doctest.h>

#include <cmath>

#include "bmfal/optimizer.hpp"

using namespace bmfal;

TEST_SUITE("input_optimizer") {

TEST_CASE("finds the interior maximum of a concave quadratic") {
  const Eigen::VectorXd c = Eigen::Vector3d(0.3, 0.6, 0.2);
  OptimizerConfig cfg;
  cfg.restarts = 3;
  const auto res = maximize([&](const Eigen::VectorXd& x) { return -(x - c).squaredNorm(); },
                            DomainBox::unit(3), cfg);
  CHECK((res.x - c).lpNorm<Eigen::Infinity>() < 1e-4);
  CHECK(res.value == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("an exterior optimum is clipped to the box") {
  const Eigen::VectorXd c = Eigen::Vector2d(1.7, -0.4);
  OptimizerConfig cfg;
  cfg.restarts = 4;
  const auto res = maximize([&](const Eigen::VectorXd& x) { return -(x - c).squaredNorm(); },
                            DomainBox::unit(2), cfg);
  CHECK(res.x(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(res.x(1) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("multistart finds the taller of two bumps almost always") {
  // two Gaussian bumps; the taller basin occupies roughly half the square
  const Eigen::VectorXd c1 = Eigen::Vector2d(0.25, 0.25);
  const Eigen::VectorXd c2 = Eigen::Vector2d(0.75, 0.75);
  auto f = [&](const Eigen::VectorXd& x) {
    return std::exp(-(x - c1).squaredNorm() / 0.02) + 0.6 * std::exp(-(x - c2).squaredNorm() / 0.02);
  };
  // dense grid oracle for the global maximum
  double best_grid = -1e300;
  for (int i = 0; i <= 200; ++i)
    for (int j = 0; j <= 200; ++j)
      best_grid = std::max(best_grid, f(Eigen::Vector2d(i / 200.0, j / 200.0)));

  int hits = 0;
  for (int run = 0; run < 100; ++run) {
    OptimizerConfig cfg;
    cfg.restarts = 10;
    cfg.seed = 1000 + run;
    const auto res = maximize(f, DomainBox::unit(2), cfg);
    if (res.value >= best_grid - 1e-3) ++hits;
  }
  CHECK(hits >= 95);
}

TEST_CASE("the returned point is always inside the box") {
  OptimizerConfig cfg;
  cfg.restarts = 5;
  const DomainBox box = DomainBox::cube(3, -2.0, 5.0);
  for (std::uint64_t s = 0; s < 10; ++s) {
    cfg.seed = s;
    const auto res = maximize(
        [](const Eigen::VectorXd& x) { return x.sum() + std::sin(3.0 * x(0)); }, box, cfg);
    CHECK(box.contains(res.x));
  }
}

TEST_CASE("more restarts never lower the final value") {
  auto f = [](const Eigen::VectorXd& x) {
    return std::sin(7.0 * x(0)) * std::cos(5.0 * x(1)) + 0.3 * x(0);
  };
  double previous = -1e300;
  for (int r : {1, 2, 4, 8, 16}) {
    OptimizerConfig cfg;
    cfg.restarts = r;
    cfg.seed = 5;
    const auto res = maximize(f, DomainBox::unit(2), cfg);
    CHECK(res.value >= previous - 1e-12);
    previous = res.value;
  }
}

TEST_CASE("value never falls below the best start value") {
  auto f = [](const Eigen::VectorXd& x) { return -std::pow(x(0) - 0.4, 4.0); };
  OptimizerConfig cfg;
  cfg.restarts = 6;
  cfg.seed = 9;
  const auto res = maximize(f, DomainBox::unit(1), cfg);
  // the box center is the first start, so at minimum its value is attained
  CHECK(res.value >= f(Eigen::VectorXd::Constant(1, 0.5)));
}

TEST_CASE("deterministic given the seed") {
  auto f = [](const Eigen::VectorXd& x) { return std::sin(9.0 * x(0)) + x(1) * x(1); };
  OptimizerConfig cfg;
  cfg.restarts = 8;
  cfg.seed = 1234;
  const auto a = maximize(f, DomainBox::unit(2), cfg);
  const auto b = maximize(f, DomainBox::unit(2), cfg);
  CHECK(a.value == b.value);
  CHECK((a.x - b.x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mostly non-finite objectives raise an optimizer failure") {
  auto f = [](const Eigen::VectorXd& x) {
    return x(0) < 0.97 ? std::numeric_limits<double>::quiet_NaN() : 1.0;
  };
  OptimizerConfig cfg;
  cfg.restarts = 3;
  CHECK_THROWS_AS(maximize(f, DomainBox::unit(1), cfg), OptimizerError);
}

TEST_CASE("config validation rejects nonpositive fields") {
  OptimizerConfig cfg;
  cfg.restarts = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
}

}  // TEST_SUITE
