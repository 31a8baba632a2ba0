#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dgcount/kernels.hpp"
#include "dgcount/ops.hpp"
#include "test_util.hpp"

using namespace dgcount;
using testutil::values;

TEST_CASE("elementwise basics") {
  auto r = ops::relu(Tensor::from_data({2}, {-1, 2}));
  CHECK(values(r) == std::vector<double>{0, 2});
  auto s = ops::add(Tensor::from_data({2}, {1, 2}), Tensor::from_data({2}, {3, 4}));
  CHECK(values(s) == std::vector<double>{4, 6});
  CHECK_THROWS_AS(ops::add(Tensor::create({2}), Tensor::create({3})), ShapeError);
}

TEST_CASE("mul gradient matches central difference") {
  auto a = Tensor::from_data({1}, {2}, true);
  auto b = Tensor::from_data({1}, {3}, true);
  backward(ops::sum(ops::mul(a, b)));
  auto num = testutil::numeric_grad([&] { return ops::mul(a, b).item(); }, a);
  CHECK(a.grad()[0] == doctest::Approx(3.0));
  CHECK(num[0] == doctest::Approx(3.0).epsilon(1e-8));
}

TEST_CASE("matmul values") {
  auto id = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  auto m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  CHECK(values(ops::matmul(id, m)) == values(m));
  auto p = ops::matmul(Tensor::from_data({1, 2}, {1, 2}), Tensor::from_data({2, 1}, {3, 4}));
  CHECK(p.shape() == Shape{1, 1});
  CHECK(p[0] == 11.0);
  CHECK_THROWS_AS(ops::matmul(m, Tensor::create({3, 1})), ShapeError);
}

TEST_CASE("matmul gradient on random 3x3") {
  Rng rng(11);
  for (int t = 0; t < 5; ++t) {
    auto a = testutil::random({3, 3}, rng), b = testutil::random({3, 3}, rng);
    a.release_grad();
    backward(ops::sum(ops::matmul(a, b)));
    NoGradGuard g;
    auto num = testutil::numeric_grad([&] { return ops::sum(ops::matmul(a, b)).item(); }, a);
    CHECK(testutil::max_rel_err({a.grad().begin(), a.grad().end()}, num) < 1e-4);
  }
}

TEST_CASE("softmax values and stability") {
  auto a = ops::softmax(Tensor::from_data({2}, {0, 0}), 0);
  CHECK(a[0] == 0.5);
  CHECK(a[1] == 0.5);
  auto b = ops::softmax(Tensor::from_data({2}, {1000, 1000}), 0);
  CHECK(b[0] == 0.5);
  CHECK(std::isfinite(b[1]));
  auto c = ops::softmax(Tensor::from_data({3}, {1, 2, 3}), 0);
  // exp(i) / (e + e^2 + e^3)
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(c[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-14));
  CHECK(c[0] == doctest::Approx(0.0900).epsilon(1e-3));
  CHECK(c[1] == doctest::Approx(0.2447).epsilon(1e-3));
  CHECK(c[2] == doctest::Approx(0.6652).epsilon(1e-3));
  auto l = ops::log_softmax(Tensor::from_data({2}, {-1000, 1000}), 0);
  CHECK(l[0] == doctest::Approx(-2000.0));
  CHECK(l[1] == 0.0);
}

TEST_CASE("softmax along an inner axis normalises that axis only") {
  Rng rng(5);
  auto x = testutil::random({2, 3, 4}, rng, false);
  auto s = ops::softmax(x, 1);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < 4; ++k) {
      double tot = 0;
      for (std::size_t j = 0; j < 3; ++j) tot += s[(i * 3 + j) * 4 + k];
      CHECK(tot == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("conv2d examples") {
  auto x = Tensor::from_data({1, 2, 2}, {1, 2, 3, 4});
  auto w = Tensor::from_data({1, 1, 1, 1}, {1});
  CHECK(values(ops::conv2d(x, w, Tensor(), 1, 0)) == values(x));

  auto ones = Tensor::create({1, 3, 3}, Init::constant(1));
  auto k = Tensor::create({1, 1, 3, 3}, Init::constant(1));
  auto y = ops::conv2d(ones, k, Tensor(), 1, 0);
  CHECK(y.shape() == Shape{1, 1, 1});
  CHECK(y[0] == 9.0);
  CHECK_THROWS_AS(ops::conv2d(ones, Tensor::create({1, 2, 3, 3}), Tensor(), 1, 0), ShapeError);
}

TEST_CASE("conv2d kernel gradient on random 1x4x4 input") {
  Rng rng(6);
  auto x = testutil::random({1, 4, 4}, rng, false);
  auto w = testutil::random({2, 1, 3, 3}, rng);
  auto proj = testutil::random({2, 4, 4}, rng, false);
  auto f = [&] { return ops::sum(ops::mul(ops::conv2d(x, w, Tensor(), 1, 1), proj)); };
  backward(f());
  NoGradGuard g;
  auto num = testutil::numeric_grad([&] { return f().item(); }, w);
  CHECK(testutil::max_rel_err({w.grad().begin(), w.grad().end()}, num) < 1e-4);
}

TEST_CASE("composite of matmul, softmax and conv matches finite differences") {
  Rng rng(7);
  auto x = testutil::random({2, 4, 4}, rng);
  auto w = testutil::random({3, 2, 3, 3}, rng);
  auto v = testutil::random({5, 3}, rng);
  auto f = [&] {
    auto y = ops::conv2d(x, w, Tensor(), 1, 1);
    auto pix = ops::transpose(ops::reshape(y, {3, 16}));
    auto att = ops::softmax(ops::matmul(pix, ops::transpose(v)), 1);
    return ops::mean(ops::square(ops::matmul(att, v)));
  };
  backward(f());
  NoGradGuard g;
  for (auto* t : {&x, &w, &v}) {
    std::vector<double> an(t->grad().begin(), t->grad().end());
    CHECK(testutil::max_rel_err(an, testutil::numeric_grad([&] { return f().item(); }, *t)) < 1e-3);
  }
}

TEST_CASE("pooling, upsampling, concat, diag, transpose") {
  auto x = Tensor::from_data({1, 2, 2}, {1, 2, 3, 4});
  CHECK(ops::avg_pool2d(x, 2)[0] == 2.5);
  CHECK(values(ops::upsample_nearest(x, 2)) ==
        std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});
  auto c = ops::concat({x, x}, 0);
  CHECK(c.shape() == Shape{2, 2, 2});
  auto c2 = ops::concat({Tensor::from_data({1, 2}, {1, 2}), Tensor::from_data({1, 1}, {3})}, 1);
  CHECK(values(c2) == std::vector<double>{1, 2, 3});
  auto m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  CHECK(values(ops::diag(m)) == std::vector<double>{1, 4});
  CHECK(values(ops::transpose(m)) == std::vector<double>{1, 3, 2, 4});
  CHECK_THROWS_AS(ops::avg_pool2d(Tensor::create({1, 3, 3}), 2), ShapeError);
}

TEST_CASE("l2 normalisation handles zero rows") {
  auto x = Tensor::from_data({2, 2}, {3, 4, 0, 0});
  auto n = ops::l2_normalize_rows(x, 1e-8);
  CHECK(n[0] == doctest::Approx(0.6));
  CHECK(n[1] == doctest::Approx(0.8));
  CHECK(n[2] == 0.0);
  CHECK(std::isfinite(n[3]));
}

TEST_CASE("ops give identical results through serial and parallel kernels") {
  Rng rng(8);
  auto x = testutil::random({3, 12, 12}, rng, false);
  auto w = testutil::random({4, 3, 3, 3}, rng, false);
  kernels::set_force_serial(true);
  auto a = values(ops::conv2d(x, w, Tensor(), 1, 1));
  kernels::set_force_serial(false);
  auto b = values(ops::conv2d(x, w, Tensor(), 1, 1));
  CHECK(a == b);
}
