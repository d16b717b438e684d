#include <cmath>
#include <numeric>

#include "doctest.h"
#include "rsyn/autograd.hpp"
#include "rsyn/error.hpp"
#include "support/gradcheck.hpp"

using namespace rsyn;
using rsyn::testing::max_gradient_error;
using rsyn::testing::random_tensor;

TEST_CASE("matmul small cases") {
  Var id = constant(Tensor::from({{1, 0}, {0, 1}}));
  Var b = constant(Tensor::from({{3, 4}, {5, 6}}));
  CHECK(ops::matmul(id, b).value().vec() == std::vector<double>{3, 4, 5, 6});

  Var row = constant(Tensor::from({{1, 2}}));
  Var col = constant(Tensor::from({{3}, {4}}));
  Var c = ops::matmul(row, col);
  CHECK(c.shape() == Shape{1, 1});
  CHECK(c.value()[0] == 11.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Var a = constant(Tensor({2, 3}));
  Var b = constant(Tensor({4, 2}));
  try {
    ops::matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,2]") != std::string::npos);
  }
  CHECK_THROWS_AS(ops::matmul(constant(Tensor({2, 2, 3})), constant(Tensor({3, 3, 4}))), DimensionError);
}

TEST_CASE("matmul gradients vs central differences") {
  Rng rng(11);
  auto build = [](const std::vector<Var>& v) { return ops::sum(ops::mul(ops::matmul(v[0], v[1]), v[2])); };
  auto a = random_tensor({4, 5}, rng), b = random_tensor({5, 3}, rng), w = random_tensor({4, 3}, rng);
  CHECK(max_gradient_error(build, {a, b, w}) < 1e-6);

  // batched with a broadcast right operand, and batched on both sides
  auto a3 = random_tensor({2, 3, 4, 5}, rng), w3 = random_tensor({2, 3, 4, 3}, rng);
  CHECK(max_gradient_error(build, {a3, b, w3}) < 1e-6);
  auto b3 = random_tensor({3, 5, 3}, rng);
  CHECK(max_gradient_error(build, {a3, b3, w3}) < 1e-6);
  auto b1 = random_tensor({1, 5, 3}, rng);
  CHECK(max_gradient_error(build, {a3, b1, w3}) < 1e-6);

  auto build_bt = [](const std::vector<Var>& v) {
    return ops::sum(ops::mul(ops::matmul_bt(v[0], v[1]), v[2]));
  };
  auto bt = random_tensor({3, 5}, rng);
  CHECK(max_gradient_error(build_bt, {a, bt, w}) < 1e-6);
  auto bt3 = random_tensor({2, 3, 6, 5}, rng), w6 = random_tensor({2, 3, 4, 6}, rng);
  CHECK(max_gradient_error(build_bt, {a3, bt3, w6}) < 1e-6);
}

TEST_CASE("matmul_bt equals matmul with permuted operand") {
  Rng rng(3);
  Var a = constant(random_tensor({2, 4, 5}, rng));
  Var b = constant(random_tensor({2, 6, 5}, rng));
  Var x = ops::matmul_bt(a, b);
  Var y = ops::matmul(a, ops::permute(b, {0, 2, 1}));
  for (std::size_t i = 0; i < x.value().size(); ++i) CHECK(x.value()[i] == doctest::Approx(y.value()[i]).epsilon(1e-13));
}

TEST_CASE("softmax") {
  Var z = ops::softmax_lastdim(constant(Tensor({1, 3}, std::vector<double>{0, 0, 0})));
  for (double v : z.value().vec()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  Var big = ops::softmax_lastdim(constant(Tensor({1, 2}, std::vector<double>{1000, 0})));
  CHECK(big.value().all_finite());
  CHECK(big.value()[0] == 1.0);
  CHECK(big.value()[1] == 0.0);  // e^-1000 underflows to zero, no overflow

  Rng rng(5);
  Var r = ops::softmax_lastdim(constant(random_tensor({3, 7}, rng, 3.0)));
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 7; ++j) s += r.value()[i * 7 + j];
    CHECK(std::abs(s - 1.0) < 1e-12);
  }

  auto build = [](const std::vector<Var>& v) { return ops::sum(ops::mul(ops::softmax_lastdim(v[0]), v[1])); };
  CHECK(max_gradient_error(build, {random_tensor({3, 7}, rng), random_tensor({3, 7}, rng)}) < 1e-5);
}

TEST_CASE("layer norm") {
  Var ones = constant(Tensor({4}, 1.0));
  Var zeros = constant(Tensor({4}, 0.0));
  Var c = ops::layer_norm(constant(Tensor({1, 4}, 5.0)), ones, zeros);
  for (double v : c.value().vec()) CHECK(v == 0.0);

  Var p = ops::layer_norm(constant(Tensor({1, 2}, std::vector<double>{1, -1})), constant(Tensor({2}, 1.0)),
                          constant(Tensor({2}, 0.0)));
  CHECK(p.value()[0] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(p.value()[1] == doctest::Approx(-1.0).epsilon(1e-5));

  Rng rng(9);
  Tensor x = random_tensor({6, 8}, rng, 2.0);
  Var y = ops::layer_norm(constant(x), constant(Tensor({8}, 1.0)), constant(Tensor({8}, 0.0)));
  for (std::size_t r = 0; r < 6; ++r) {
    double mu = 0.0, var = 0.0, raw_var = 0.0, raw_mu = 0.0;
    for (std::size_t j = 0; j < 8; ++j) {
      mu += y.value()[r * 8 + j] / 8.0;
      raw_mu += x[r * 8 + j] / 8.0;
    }
    for (std::size_t j = 0; j < 8; ++j) {
      var += std::pow(y.value()[r * 8 + j] - mu, 2) / 8.0;
      raw_var += std::pow(x[r * 8 + j] - raw_mu, 2) / 8.0;
    }
    CHECK(std::abs(mu) < 1e-10);
    // eps-corrected: var(y) == raw_var / (raw_var + eps)
    CHECK(std::abs(var - raw_var / (raw_var + 1e-5)) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-5 / raw_var + 1e-9);
  }

  // shift invariance
  Tensor shifted = x;
  for (auto& v : shifted.data()) v += 3.25;
  Var ys = ops::layer_norm(constant(shifted), constant(Tensor({8}, 1.0)), constant(Tensor({8}, 0.0)));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(ys.value()[i] - y.value()[i]) < 1e-10);

  auto build = [](const std::vector<Var>& v) {
    return ops::sum(ops::mul(ops::layer_norm(v[0], v[1], v[2]), v[3]));
  };
  CHECK(max_gradient_error(build, {random_tensor({5, 6}, rng), random_tensor({6}, rng), random_tensor({6}, rng),
                                   random_tensor({5, 6}, rng)}) < 1e-5);
}

TEST_CASE("relu, softplus") {
  CHECK(softplus_value(0.0) == doctest::Approx(0.693147180559945).epsilon(1e-14));
  CHECK(softplus_value(800.0) == 800.0);
  CHECK(softplus_value(-800.0) >= 0.0);
  Var s = ops::softplus(constant(Tensor({3}, std::vector<double>{-1000, 0, 1000})));
  CHECK(s.value().all_finite());

  Rng rng(13);
  auto relu_build = [](const std::vector<Var>& v) { return ops::sum(ops::mul(ops::relu(v[0]), v[1])); };
  CHECK(max_gradient_error(relu_build, {random_tensor({4, 6}, rng), random_tensor({4, 6}, rng)}) < 1e-6);
  auto sp_build = [](const std::vector<Var>& v) { return ops::sum(ops::mul(ops::softplus(v[0]), v[1])); };
  CHECK(max_gradient_error(sp_build, {random_tensor({4, 6}, rng, 3.0), random_tensor({4, 6}, rng)}) < 1e-5);
}

TEST_CASE("dropout") {
  Rng rng(17);
  Tensor x = random_tensor({100}, rng);
  Var same = ops::dropout(constant(x), 0.3, rng, false);
  CHECK(same.value().vec() == x.vec());
  CHECK_THROWS_AS(ops::dropout(constant(x), 1.0, rng, true), ConfigError);
  CHECK_THROWS_AS(ops::dropout(constant(x), -0.1, rng, true), ConfigError);

  const std::size_t n = 1000000;
  Tensor big({n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) big[i] = 1.0 + 0.5 * std::sin(static_cast<double>(i));
  Var d = ops::dropout(constant(big), 0.3, rng, true);
  std::size_t kept = 0;
  double in_sum = 0.0, out_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    kept += d.value()[i] != 0.0;
    in_sum += big[i];
    out_sum += d.value()[i];
  }
  CHECK(std::abs(static_cast<double>(kept) / n - 0.7) < 0.002);
  CHECK(std::abs(out_sum / in_sum - 1.0) < 0.01);
  CHECK(d.value().all_finite());

  // same seed, same mask
  Rng r1(99), r2(99);
  CHECK(ops::dropout(constant(x), 0.5, r1, true).value().vec() ==
        ops::dropout(constant(x), 0.5, r2, true).value().vec());

  // gradient flows through the mask
  Tape tape;
  Var leaf = tape.leaf(x);
  Rng r3(5);
  Var y = ops::dropout(leaf, 0.5, r3, true);
  auto g = tape.backward(ops::sum(y));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(g.of(leaf)[i] == (y.value()[i] == 0.0 ? 0.0 : 2.0));
}

TEST_CASE("add broadcasting, reshape, permute gradients") {
  Rng rng(21);
  auto build = [](const std::vector<Var>& v) {
    Var s = ops::add(v[0], v[1]);  // [2,3,4] + [3,4]
    Var p = ops::permute(s, {2, 0, 1});
    Var r = ops::reshape(p, {4, 6});
    return ops::sum(ops::mul(r, v[2]));
  };
  CHECK(max_gradient_error(build, {random_tensor({2, 3, 4}, rng), random_tensor({3, 4}, rng),
                                   random_tensor({4, 6}, rng)}) < 1e-6);
  CHECK_THROWS_AS(ops::add(constant(Tensor({2, 3})), constant(Tensor({2}))), DimensionError);
  // suffix on the left operand is accepted too
  Var flipped = ops::add(constant(Tensor({3}, 1.0)), constant(Tensor({2, 3}, 2.0)));
  CHECK(flipped.shape() == Shape{2, 3});

  Tensor t({2, 3, 4});
  std::iota(t.vec().begin(), t.vec().end(), 0.0);
  Tensor p = permute_values(t, {1, 0, 2});
  CHECK(p.shape() == Shape{3, 2, 4});
  CHECK(p[4] == 12.0);  // (j=0,i=1,k=0) <- t[1,0,0]
  Tensor q = permute_values(t, {2, 1, 0});
  CHECK(q[1] == 12.0);  // (k=0,j=0,i=1)
}

TEST_CASE("backward contract") {
  Tape tape;
  Var x = tape.leaf(Tensor({2, 2}, std::vector<double>{1, 2, 3, 4}));
  Var unused = tape.leaf(Tensor({3}, 5.0));
  auto g = tape.backward(ops::sum(x));
  for (double v : g.of(x).vec()) CHECK(v == 1.0);
  for (double v : g.of(unused).vec()) CHECK(v == 0.0);

  Tape t2;
  Var y = t2.leaf(Tensor({2}, 1.0));
  CHECK_THROWS_AS(t2.backward(ops::scale(y, 2.0)), ContractError);
}

TEST_CASE("gradient of a shared input sums all consumers") {
  Tape tape;
  Var x = tape.leaf(Tensor({3}, std::vector<double>{1, 2, 3}));
  Var loss = ops::sum(ops::add(ops::mul(x, x), ops::scale(x, 3.0)));  // x^2 + 3x
  auto g = tape.backward(loss);
  CHECK(g.of(x).vec() == std::vector<double>{5, 7, 9});
}

TEST_CASE("tiny two-layer net: all parameter gradients vs finite differences") {
  Rng rng(23);
  auto build = [](const std::vector<Var>& v) {
    Var h = ops::relu(ops::add(ops::matmul(v[0], v[1]), v[2]));
    Var out = ops::add(ops::matmul(h, v[3]), v[4]);
    return ops::mse_loss(out, v[5]);
  };
  std::vector<Tensor> in{random_tensor({6, 4}, rng), random_tensor({4, 7}, rng), random_tensor({7}, rng),
                         random_tensor({7, 2}, rng), random_tensor({2}, rng), random_tensor({6, 2}, rng)};
  CHECK(max_gradient_error(build, in) < 1e-5);
}

TEST_CASE("parameters map to their gradients") {
  Parameter w{"w", Tensor({2}, std::vector<double>{1.5, -2.0})};
  Tape tape;
  Var a = tape.param(w);
  Var b = tape.param(w);
  CHECK(a.node() == b.node());
  auto g = tape.backward(ops::sum(ops::mul(a, a)));
  REQUIRE(g.of(w) != nullptr);
  CHECK(g.of(w)->vec() == std::vector<double>{3.0, -4.0});
  CHECK(tape.size() == 0);  // graph released
}

TEST_CASE("eval-mode forward records nothing") {
  Var a = constant(Tensor({2, 2}, 1.0));
  Var b = ops::relu(ops::matmul(a, a));
  CHECK_FALSE(b.requires_grad());
  CHECK(b.node()->inputs.empty());
}

TEST_CASE("mse loss") {
  Var p = constant(Tensor({4}, std::vector<double>{1, 2, 3, 4}));
  CHECK(ops::mse_loss(p, p).value()[0] == 0.0);
  Var t = constant(Tensor({4}, std::vector<double>{0, 1, 2, 3}));
  CHECK(ops::mse_loss(p, t).value()[0] == 1.0);
  CHECK_THROWS_AS(ops::mse_loss(p, constant(Tensor({3}))), ContractError);
}
