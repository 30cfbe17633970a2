#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gaitmae/optim.hpp"
#include "gaitmae/tensor.hpp"

using namespace gaitmae;

TEST_CASE("first adamw step with unit gradient moves by lr over (1 + eps)") {
  Tensor theta = Tensor::from_data({1}, {1.0}, true, "theta");
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW opt({{"theta", theta}}, cfg);
  theta.grad()[0] = 1.0;
  opt.step(0.1);
  // mhat = vhat = 1 exactly after one step, so the move is lr / (1 + eps).
  const double expected = 0.1 / (1.0 + 1e-8);
  REQUIRE(1.0 - theta.values()[0] == Catch::Approx(expected).margin(1e-15));
  REQUIRE(1.0 - theta.values()[0] == Catch::Approx(0.1).margin(1e-9));
  REQUIRE(opt.step_count() == 1);
}

TEST_CASE("zero gradient leaves parameters unchanged without decay") {
  Tensor theta = Tensor::from_data({2}, {1.5, -2.5}, true);
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW opt({{"theta", theta}}, cfg);
  theta.zero_grad();
  opt.step(0.1);
  REQUIRE(theta.values() == std::vector<double>{1.5, -2.5});
}

TEST_CASE("decoupled decay shrinks parameters by lr times wd under zero gradient") {
  Tensor theta = Tensor::from_data({2}, {1.0, -4.0}, true);
  AdamW opt({{"theta", theta}});  // wd = 0.01 default
  theta.zero_grad();
  opt.step(0.1);
  REQUIRE(theta.values()[0] == Catch::Approx(0.999).epsilon(1e-12));
  REQUIRE(theta.values()[1] == Catch::Approx(-3.996).epsilon(1e-12));
}

TEST_CASE("non-finite gradient is rejected with the parameter name") {
  Tensor theta = Tensor::from_data({2}, {1.0, 2.0}, true);
  AdamW opt({{"mlp.w1", theta}});
  theta.grad()[1] = std::nan("");
  REQUIRE_THROWS_WITH(opt.step(0.1),
                      Catch::Matchers::ContainsSubstring("mlp.w1"));
}

TEST_CASE("adamw drives a quadratic toward its minimum") {
  Tensor theta = Tensor::from_data({1}, {0.0}, true);
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW opt({{"theta", theta}}, cfg);
  for (int i = 0; i < 400; ++i) {
    opt.zero_grad();
    Tensor d = add_scalar(theta, -3.0);
    backward(sum_all(mul(d, d)));
    opt.step(0.05);
  }
  REQUIRE(theta.values()[0] == Catch::Approx(3.0).margin(1e-2));
}

TEST_CASE("lr schedule endpoints and midpoint") {
  const double lo = 0.1, hi = 1.0;
  REQUIRE(lr_schedule(0, 100, 10, hi, lo) == 0.0);
  REQUIRE(lr_schedule(5, 100, 10, hi, lo) == Catch::Approx(hi * 0.5));
  REQUIRE(lr_schedule(10, 100, 10, hi, lo) == Catch::Approx(hi));
  REQUIRE(lr_schedule(100, 100, 10, hi, lo) == Catch::Approx(lo).margin(1e-15));
  REQUIRE(lr_schedule(55, 100, 10, hi, lo) == Catch::Approx((hi + lo) / 2));
  // degenerate: no cosine segment
  REQUIRE(lr_schedule(10, 10, 10, hi, lo) == lo);
  REQUIRE_THROWS_AS(lr_schedule(-1, 100, 10, hi, lo), std::invalid_argument);
  REQUIRE_THROWS_AS(lr_schedule(101, 100, 10, hi, lo), std::invalid_argument);
}

TEST_CASE("identical gradient streams give identical trajectories") {
  auto run = [] {
    Tensor theta = Tensor::from_data({3}, {0.3, -0.7, 1.1}, true);
    AdamW opt({{"theta", theta}});
    for (int i = 0; i < 20; ++i) {
      opt.zero_grad();
      backward(sum_all(mul(theta, theta)));
      opt.step(lr_schedule(i + 1, 20, 5, 1e-2, 0.0));
    }
    return theta.values();
  };
  REQUIRE(run() == run());
}
