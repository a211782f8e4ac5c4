#include <doctest.h>

#include <cmath>
#include <limits>

#include "ecgqa/errors.hpp"
#include "ecgqa/optim.hpp"

using namespace ecgqa;

namespace {

ParamStore scalar_store(double w, double g) {
  ParamStore s;
  s.add("w", Tensor::vector({w}));
  s.grad("w") = Tensor::vector({g});
  return s;
}

}  // namespace

TEST_CASE("adamw zero gradient and zero decay leaves weights") {
  ParamStore s = scalar_store(0.7, 0.0);
  AdamState st;
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  adamw_step(s, {"w"}, st, cfg, 0.1);
  CHECK(s.value("w").data()[0] == 0.7);
  CHECK(st.step == 1);
}

TEST_CASE("adamw first step on a scalar") {
  ParamStore s = scalar_store(1.0, 1.0);
  AdamState st;
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  adamw_step(s, {"w"}, st, cfg, 0.1);
  // m̂ = 1, v̂ = 1 after bias correction: w' = 1 − 0.1·1/(1 + 1e-6).
  CHECK(std::abs(s.value("w").data()[0] - (1.0 - 0.1 / (1.0 + 1e-6))) < 1e-9);
  CHECK(std::abs(s.value("w").data()[0] - 0.9) < 1e-6);
}

TEST_CASE("adamw decoupled decay") {
  ParamStore s = scalar_store(2.0, 0.0);
  AdamState st;
  AdamWConfig cfg;
  adamw_step(s, {"w"}, st, cfg, 0.1);
  CHECK(std::abs(s.value("w").data()[0] - 2.0 * (1.0 - 0.001)) < 1e-9);
}

TEST_CASE("adamw two steps match a hand recurrence") {
  ParamStore s = scalar_store(0.5, 0.3);
  AdamState st;
  AdamWConfig cfg;
  adamw_step(s, {"w"}, st, cfg, 0.01);
  s.grad("w") = Tensor::vector({-0.2});
  adamw_step(s, {"w"}, st, cfg, 0.02);
  double w = 0.5, m = 0, v = 0;
  const double g[] = {0.3, -0.2}, lr[] = {0.01, 0.02};
  for (int t = 1; t <= 2; ++t) {
    m = 0.9 * m + 0.1 * g[t - 1];
    v = 0.98 * v + 0.02 * g[t - 1] * g[t - 1];
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.98, t));
    w = w - lr[t - 1] * 0.01 * w - lr[t - 1] * mh / (std::sqrt(vh) + 1e-6);
  }
  CHECK(std::abs(s.value("w").data()[0] - w) < 1e-12);
}

TEST_CASE("adamw rejects non-finite gradients without touching state") {
  ParamStore s = scalar_store(1.0, std::numeric_limits<double>::quiet_NaN());
  AdamState st;
  CHECK_THROWS_AS(adamw_step(s, {"w"}, st, AdamWConfig{}, 0.1), TrainingError);
  CHECK(s.value("w").data()[0] == 1.0);
  CHECK(st.step == 0);
}

TEST_CASE("cosine warmup schedule") {
  const double lr = 5e-4;
  CHECK(cosine_warmup_lr(0, 500, lr, 0.1) == 0.0);
  CHECK(cosine_warmup_lr(25, 500, lr, 0.1) == doctest::Approx(lr / 2));
  CHECK(cosine_warmup_lr(50, 500, lr, 0.1) == lr);
  CHECK(std::abs(cosine_warmup_lr(500, 500, lr, 0.1)) <= 1e-12);
  CHECK(cosine_warmup_lr(275, 500, lr, 0.1) == doctest::Approx(lr * 0.5));
  double prev = lr;
  for (std::size_t s = 51; s <= 500; ++s) {
    const double cur = cosine_warmup_lr(s, 500, lr, 0.1);
    CHECK(cur <= prev);
    prev = cur;
  }
  CHECK_THROWS_AS(cosine_warmup_lr(0, 0, lr, 0.1), InvalidArgument);
  CHECK_THROWS_AS(cosine_warmup_lr(501, 500, lr, 0.1), InvalidArgument);
}
