#include <random>
#include <sstream>

#include "doctest.h"
#include "support.hpp"
#include "tsgcn/gradcheck.hpp"
#include "tsgcn/ops.hpp"
#include "tsgcn/optim.hpp"

using namespace tsgcn;

TEST_SUITE("gradcheck") {
  TEST_CASE("x^2 at 3 with eps 1e-5") {
    Parameter x("x", Tensor({1}, 3.0));
    Parameter* params[] = {&x};
    Tape probe;
    Var y = ops::mul(probe.param(x), probe.param(x));
    probe.backward(y);
    CHECK(probe.param_grad(x)[0] == 6.0);
    auto r = grad_check([&](Tape& t) { return ops::mul(t.param(x), t.param(x)); }, params, 1e-5);
    CHECK(r.max_rel_error < 1e-9);
    CHECK(r.coordinates == 1);
  }

  TEST_CASE("relu at 1") {
    Parameter x("x", Tensor({1}, 1.0));
    Parameter* params[] = {&x};
    auto r = grad_check([&](Tape& t) { return ops::sum(ops::relu(t.param(x))); }, params);
    CHECK(r.max_rel_error < 1e-9);
  }

  TEST_CASE("eps outside [1e-7, 1e-3] is rejected") {
    Parameter x("x", Tensor({1}, 1.0));
    Parameter* params[] = {&x};
    auto f = [&](Tape& t) { return ops::sum(t.param(x)); };
    CHECK_THROWS_AS(grad_check(f, params, 1e-8), std::invalid_argument);
    CHECK_THROWS_AS(grad_check(f, params, 1e-2), std::invalid_argument);
  }

  TEST_CASE("non-scalar function is rejected") {
    Parameter x("x", Tensor({3}, 1.0));
    Parameter* params[] = {&x};
    CHECK_THROWS_AS(grad_check([&](Tape& t) { return ops::relu(t.param(x)); }, params), ShapeError);
  }

  TEST_CASE("a wrong backward is detected") {
    Parameter x("x", Tensor({2}, std::vector<double>{0.3, -0.7}));
    Parameter* params[] = {&x};
    // value x^3 with a deliberately wrong gradient 2x
    auto f = [&](Tape& t) {
      Var p = t.param(x);
      Tensor out = p.value();
      for (double& v : out.values()) v = v * v * v;
      const auto id = p.id();
      Var y = t.record("bad_cube", std::move(out), {p}, [id](Tape& tape, const Tensor& g) {
        Tensor gx = tape.value(id);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = 2.0 * gx[i] * g[i];
        tape.accumulate_grad(id, gx);
      });
      return ops::sum(y);
    };
    CHECK(grad_check(f, params).max_rel_error > 1e-2);
  }

  TEST_CASE("parameter values are restored after the check") {
    std::mt19937_64 rng(4);
    Parameter x("x", testing::random_tensor({3, 2}, rng));
    const Tensor before = x.value;
    Parameter* params[] = {&x};
    grad_check([&](Tape& t) { return ops::sum(ops::mul(t.param(x), t.param(x))); }, params);
    CHECK(testing::bit_equal(x.value, before));
  }
}

TEST_SUITE("optim") {
  TEST_CASE("plain SGD step") {
    Parameter p("p", Tensor({1}, 1.0));
    Parameter* params[] = {&p};
    SgdMomentum sgd(params, 0.1, 0.0);
    const Tensor g[] = {Tensor({1}, 1.0)};
    sgd.step(g);
    CHECK(p.value[0] == doctest::Approx(0.9).epsilon(1e-15));
  }

  TEST_CASE("momentum 0.9, two identical steps") {
    Parameter p("p", Tensor({1}, 1.0));
    Parameter* params[] = {&p};
    SgdMomentum sgd(params, 0.1, 0.9);
    const Tensor g[] = {Tensor({1}, 1.0)};
    sgd.step(g);
    CHECK(1.0 - p.value[0] == doctest::Approx(0.1));
    const double after_first = p.value[0];
    sgd.step(g);
    CHECK(after_first - p.value[0] == doctest::Approx(0.19));
  }

  TEST_CASE("zero gradient leaves parameters and decays velocity") {
    Parameter p("p", Tensor({2}, 1.0));
    Parameter* params[] = {&p};
    SgdMomentum sgd(params, 0.0, 0.9);
    const Tensor g1[] = {Tensor({2}, 1.0)};
    sgd.step(g1);
    CHECK(p.value == Tensor({2}, 1.0));
    const Tensor g0[] = {Tensor({2}, 0.0)};
    sgd.step(g0);
    CHECK(sgd.velocity()[0][0] == doctest::Approx(0.9));
  }

  TEST_CASE("gradient shapes must match") {
    Parameter p("p", Tensor({2}, 1.0));
    Parameter* params[] = {&p};
    SgdMomentum sgd(params, 0.1, 0.9);
    const Tensor g[] = {Tensor({3}, 1.0)};
    CHECK_THROWS_AS(sgd.step(g), ShapeError);
    CHECK(sgd.velocity()[0].shape() == Shape{2});
  }

  TEST_CASE("parameter checkpoint round trip is bit exact") {
    std::mt19937_64 rng(8);
    Parameter a("block.weight", testing::random_tensor({3, 4}, rng, -1e6, 1e6));
    Parameter b("block.bias", Tensor({2}, std::vector<double>{1e-300, -0.1}));
    const Parameter* params[] = {&a, &b};
    std::stringstream ss;
    write_parameters(ss, params);
    auto back = read_parameters(ss);
    REQUIRE(back.size() == 2);
    CHECK(back[0].name == "block.weight");
    CHECK(testing::bit_equal(back[0].value, a.value));
    CHECK(testing::bit_equal(back[1].value, b.value));
  }

  TEST_CASE("corrupt checkpoint is rejected") {
    std::stringstream bad("NOTACKPT....");
    CHECK_THROWS(read_parameters(bad));
    Parameter a("a", Tensor({4}, 1.0));
    const Parameter* params[] = {&a};
    std::stringstream ss;
    write_parameters(ss, params);
    std::string truncated = ss.str().substr(0, ss.str().size() - 5);
    std::stringstream ts(truncated);
    CHECK_THROWS(read_parameters(ts));
  }
}
