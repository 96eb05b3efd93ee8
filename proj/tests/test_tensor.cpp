// Copyright 2026 The cmnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <catch_amalgamated.hpp>

#include "cmnet/gradcheck.hpp"
#include "cmnet/tensor.hpp"
#include "oracles.hpp"

using namespace cmnet;

TEST_CASE("elementwise basics") {
  Tensor<double> a({2}, {1, 2}), b({2}, {3, 4});
  auto c = add(a, b);
  CHECK(c.value() == std::vector<double>{4, 6});
  CHECK(sub(b, a).value() == std::vector<double>{2, 2});
  CHECK(mul(a, b).value() == std::vector<double>{3, 8});

  CHECK(sigmoid(Tensor<double>::scalar(0)).item() == Catch::Approx(0.5));
  CHECK(prelu(Tensor<double>::scalar(-2), 0.25).item() == Catch::Approx(-0.5));
  CHECK(prelu(Tensor<double>::scalar(3), 0.25).item() == Catch::Approx(3.0));
  CHECK(relu(Tensor<double>::scalar(-1)).item() == 0.0);
  CHECK(tanh_t(Tensor<double>::scalar(0)).item() == 0.0);
  CHECK(negate(a).value() == std::vector<double>{-1, -2});
  CHECK(scale(a, 3.0).value() == std::vector<double>{3, 6});
}

TEST_CASE("broadcasting matches explicit expansion") {
  Rng rng(11);
  const std::vector<std::pair<Shape, Shape>> cases = {
      {{3, 1, 5}, {1, 4, 5}}, {{2, 3}, {3}}, {{1}, {4, 2}}, {{2, 1}, {2, 7}}, {{5}, {1}},
  };
  for (const auto& [sa, sb] : cases) {
    Tensor<double> a = Tensor<double>::uniform(sa, rng, -2, 2);
    Tensor<double> b = Tensor<double>::uniform(sb, rng, -2, 2);
    auto out = add(a, b);
    const Shape so = out.shape();
    auto ref = oracle::broadcast_ref(a.value(), sa, b.value(), sb, so, [](double x, double y) { return x + y; });
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(out.value()[i] == Catch::Approx(ref[i]).margin(0));
  }
  CHECK_THROWS_AS(add(Tensor<double>({2, 3}), Tensor<double>({4})), shape_error);
}

TEST_CASE("broadcast backward reduces over expanded dims") {
  Tensor<double> a({2, 1}, {1, 2});
  Tensor<double> b({1, 3}, {10, 20, 30});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  Tape<double> tape;
  auto loss = sum_all(mul(a, b));
  tape.backward(loss);
  CHECK(a.grad()[0] == Catch::Approx(60));
  CHECK(a.grad()[1] == Catch::Approx(60));
  CHECK(b.grad()[0] == Catch::Approx(3));
}

TEST_CASE("matmul") {
  SECTION("identity") {
    Tensor<double> eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Rng rng(5);
    Tensor<double> a = Tensor<double>::uniform({3, 3}, rng, -1, 1);
    auto out = matmul(eye, a);
    for (std::size_t i = 0; i < 9; ++i) CHECK(out.value()[i] == Catch::Approx(a.value()[i]).margin(0));
  }
  SECTION("small exact") {
    Tensor<double> a({2, 2}, {1, 2, 3, 4});
    Tensor<double> b({2, 1}, {1, 1});
    auto out = matmul(a, b);
    CHECK(out.value() == std::vector<double>{3, 7});
  }
  SECTION("random against triple-loop oracle") {
    Rng rng(7);
    Tensor<double> a = Tensor<double>::uniform({4, 5}, rng, -1, 1);
    Tensor<double> b = Tensor<double>::uniform({5, 3}, rng, -1, 1);
    auto out = matmul(a, b);
    auto ref = oracle::matmul_ref(a.value(), b.value(), 4, 5, 3);
    for (std::size_t i = 0; i < ref.size(); ++i)
      CHECK(std::abs(out.value()[i] - ref[i]) < 1e-12);
  }
  SECTION("transpose flags agree with materialized transposes") {
    Rng rng(9);
    Tensor<double> a = Tensor<double>::uniform({4, 3}, rng, -1, 1);
    Tensor<double> b = Tensor<double>::uniform({5, 3}, rng, -1, 1);
    auto out = matmul(a, b, false, true);
    auto bt = permute(b, {1, 0});
    auto ref = matmul(a, bt);
    for (std::size_t i = 0; i < ref.size(); ++i)
      CHECK(out.value()[i] == Catch::Approx(ref.value()[i]).margin(0));
  }
  SECTION("batched over leading dims") {
    Rng rng(13);
    Tensor<double> a = Tensor<double>::uniform({2, 3, 4}, rng, -1, 1);
    Tensor<double> b = Tensor<double>::uniform({2, 4, 2}, rng, -1, 1);
    auto out = matmul(a, b);
    REQUIRE(out.shape() == Shape{2, 3, 2});
    for (std::size_t i = 0; i < 2; ++i) {
      auto ref = oracle::matmul_ref({a.value().begin() + i * 12, a.value().begin() + (i + 1) * 12},
                                    {b.value().begin() + i * 8, b.value().begin() + (i + 1) * 8}, 3, 4, 2);
      for (std::size_t k = 0; k < 6; ++k) CHECK(out.value()[i * 6 + k] == Catch::Approx(ref[k]).margin(1e-14));
    }
  }
  SECTION("inner extent mismatch throws") {
    CHECK_THROWS_AS(matmul(Tensor<double>({2, 3}), Tensor<double>({4, 2})), shape_error);
  }
}

TEST_CASE("softmax") {
  SECTION("symmetry and stability") {
    Tensor<double> x({2}, {0, 0});
    auto y = softmax(x, 0);
    CHECK(y.value()[0] == Catch::Approx(0.5));
    Tensor<double> big({3}, {1000, 1000, 1000});
    auto yb = softmax(big, 0);
    for (double v : yb.value()) CHECK(v == Catch::Approx(1.0 / 3.0));
  }
  SECTION("additive -inf mask forces zeros") {
    const double ninf = -std::numeric_limits<double>::infinity();
    Tensor<double> x({2}, {1.7, 0.0});
    Tensor<double> m({2}, {0.0, ninf});
    auto y = softmax(x, 0, &m);
    CHECK(y.value()[0] == 1.0);
    CHECK(y.value()[1] == 0.0);
  }
  SECTION("fully masked slice yields zeros, not NaN") {
    const double ninf = -std::numeric_limits<double>::infinity();
    Tensor<double> x({2, 2}, {1, 2, 3, 4});
    Tensor<double> m({2, 2}, {0, 0, ninf, ninf});
    auto y = softmax(x, 1, &m);
    CHECK(y.value()[2] == 0.0);
    CHECK(y.value()[3] == 0.0);
    CHECK(y.value()[0] + y.value()[1] == Catch::Approx(1.0));
  }
  SECTION("rows nonnegative, sum to one within 1e-9") {
    Rng rng(3);
    Tensor<double> x = Tensor<double>::uniform({5, 7}, rng, -4, 4);
    auto y = softmax(x, 1);
    for (std::size_t r = 0; r < 5; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 7; ++c) {
        CHECK(y.value()[r * 7 + c] >= 0.0);
        s += y.value()[r * 7 + c];
      }
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("reductions and shape ops") {
  CHECK(mean_pool(Tensor<double>::ones({3, 4}), {0, 1}).item() == Catch::Approx(1.0));
  Tensor<double> m({2, 2}, {1, 3, 5, 7});
  auto row_means = mean_pool(m, {1});
  CHECK(row_means.value() == std::vector<double>{2, 6});

  Rng rng(17);
  Tensor<double> x = Tensor<double>::uniform({3, 4, 5}, rng, -1, 1);
  auto mp = mean_pool(x, {0, 2});
  for (std::size_t t = 0; t < 4; ++t) {
    double acc = 0;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t f = 0; f < 5; ++f) acc += x.value()[(c * 4 + t) * 5 + f];
    CHECK(std::abs(mp.value()[t] - acc / 15.0) < 1e-12);
  }

  auto p = permute(x, {1, 0, 2});
  REQUIRE(p.shape() == Shape{4, 3, 5});
  CHECK(p.value()[(2 * 3 + 1) * 5 + 3] == x.value()[(1 * 4 + 2) * 5 + 3]);

  auto r = reshape(x, {12, 5});
  CHECK(r.value() == x.value());
  CHECK_THROWS_AS(reshape(x, {7}), shape_error);

  auto s = slice(x, 1, 1, 2);
  REQUIRE(s.shape() == Shape{3, 2, 5});
  CHECK(s.value()[0] == x.value()[5]);

  auto c = concat<double>({s, s}, 0);
  REQUIRE(c.shape() == Shape{6, 2, 5});
}

TEST_CASE("backward basics") {
  SECTION("x squared") {
    Tensor<double> x = Tensor<double>::scalar(3);
    x.set_requires_grad(true);
    Tape<double> tape;
    auto loss = mul(x, x);
    tape.backward(loss);
    CHECK(x.grad()[0] == Catch::Approx(6.0));
  }
  SECTION("accumulation over multiple uses") {
    Tensor<double> x = Tensor<double>::scalar(2);
    x.set_requires_grad(true);
    Tape<double> tape;
    auto loss = add(mul(x, x), x);  // x^2 + x -> 2x + 1 = 5
    tape.backward(loss);
    CHECK(x.grad()[0] == Catch::Approx(5.0));
  }
  SECTION("matmul gradient against finite differences") {
    Rng rng(23);
    Tensor<double> b0 = Tensor<double>::uniform({3, 2}, rng, -1, 1);
    auto f = [&](const Tensor<double>& a) { return sum_all(matmul(a, b0)); };
    Tensor<double> a0 = Tensor<double>::uniform({2, 3}, rng, -1, 1);
    CHECK(fd_max_rel_err(f, a0) < 1e-9);
  }
  SECTION("unused parameter keeps zero grads") {
    Tensor<double> x = Tensor<double>::scalar(1), unused = Tensor<double>::scalar(5);
    x.set_requires_grad(true);
    unused.set_requires_grad(true);
    unused.ensure_grad();
    Tape<double> tape;
    auto loss = mul(x, x);
    tape.backward(loss);
    CHECK(unused.grad()[0] == 0.0);
  }
  SECTION("non-scalar loss is a contract error") {
    Tensor<double> x({2}, {1, 2});
    x.set_requires_grad(true);
    Tape<double> tape;
    auto y = mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), contract_error);
  }
  SECTION("double backward on one tape is a contract error") {
    Tensor<double> x = Tensor<double>::scalar(1);
    x.set_requires_grad(true);
    Tape<double> tape;
    auto loss = mul(x, x);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), contract_error);
  }
}

// <Lx, y> == <x, L^T y> with L^T y obtained from the backward pass of
// loss = <Lx, y> (y held constant, so d(loss)/dx = L^T y)
namespace {
template <class Op>
double adjoint_gap(const Shape& in_shape, Op op, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> x = Tensor<double>::uniform(in_shape, rng, -1, 1, true);
  Tape<double> tape;
  Tensor<double> lx = op(x);
  Tensor<double> y = Tensor<double>::uniform(lx.shape(), rng, -1, 1);
  Tensor<double> loss = sum_all(mul(lx, y));
  const double lhs = loss.item();
  tape.backward(loss);
  double rhs = 0;
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x.value()[i] * x.grad()[i];
  return std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs));
}
}  // namespace

TEST_CASE("adjoint property of linear primitives") {
  Rng wr(31);
  Tensor<double> w = Tensor<double>::uniform({3, 2, 2, 3}, wr, -1, 1);
  Tensor<double> wt = Tensor<double>::uniform({2, 3, 2, 3}, wr, -1, 1);
  Tensor<double> mm = Tensor<double>::uniform({4, 6}, wr, -1, 1);
  CHECK(adjoint_gap({2, 4, 6}, [&](const Tensor<double>& x) {
          return conv2d(x, w, {1, 2}, {1, 1, 1});
        }, 1) < 1e-10);
  CHECK(adjoint_gap({2, 4, 3}, [&](const Tensor<double>& x) {
          return conv2d_transpose(x, wt, {1, 2}, {1, 1, 4, 6});
        }, 2) < 1e-10);
  CHECK(adjoint_gap({6, 4}, [&](const Tensor<double>& x) { return matmul(mm, x); }, 3) < 1e-10);
  CHECK(adjoint_gap({3, 4, 5}, [&](const Tensor<double>& x) { return mean_pool(x, {1}); }, 4) < 1e-10);
  CHECK(adjoint_gap({3, 4, 5}, [&](const Tensor<double>& x) { return permute(x, {2, 0, 1}); }, 5) < 1e-10);
  CHECK(adjoint_gap({3, 4}, [&](const Tensor<double>& x) { return reshape(x, {12}); }, 6) < 1e-10);
  CHECK(adjoint_gap({3, 4}, [&](const Tensor<double>& x) { return slice(x, 0, 1, 2); }, 7) < 1e-10);
  CHECK(adjoint_gap({3, 4}, [&](const Tensor<double>& x) { return concat<double>({x, x}, 1); }, 8) < 1e-10);
}

namespace {
// forward 2x, backward pretends the factor was 3
struct BadBuilder {
  template <class R>
  Tensor<R> operator()(ParameterStore<R>& ps) const {
    auto x = ps.get_or_create("x", {6}, Init::KaimingUniform, 1);
    auto y = unary_op(
        x, [](R v) { return R(2) * v; },
        [](R, R, R g) { return R(3) * g; });
    return sum_all(mul(y, y));
  }
};
}  // namespace

TEST_CASE("finite_difference_check behaviour") {
  SECTION("sum of sigmoid") {
    Rng rng(3);
    Tensor<double> x0 = Tensor<double>::uniform({10}, rng, -2, 2);
    auto f = [](const Tensor<double>& x) { return sum_all(sigmoid(x)); };
    CHECK(fd_max_rel_err(f, x0) < 1e-6);
  }
  SECTION("conv -> prelu -> sum pipeline") {
    Rng rng(5);
    Tensor<double> w = Tensor<double>::uniform({2, 2, 2, 3}, rng, -1, 1);
    Tensor<double> x0 = Tensor<double>::uniform({2, 5, 6}, rng, -1, 1);
    auto f = [&](const Tensor<double>& x) {
      return sum_all(prelu(conv2d(x, w, {1, 1}, {1, 1, 1}), 0.25));
    };
    CHECK(fd_max_rel_err(f, x0) < 1e-5);
  }
  SECTION("linear map is exact up to rounding") {
    Rng rng(7);
    Tensor<double> a = Tensor<double>::uniform({4, 4}, rng, -1, 1);
    Tensor<double> x0 = Tensor<double>::uniform({4, 2}, rng, -1, 1);
    auto f = [&](const Tensor<double>& x) { return sum_all(matmul(a, x)); };
    CHECK(fd_max_rel_err(f, x0) < 1e-9);
  }
  SECTION("negative control: corrupted backward is flagged") {
    ParameterStore<double> master(9);
    auto entry = finite_difference_check<double>("corrupted", BadBuilder{}, master);
    CHECK_FALSE(entry.pass);
    CHECK(entry.max_rel_err > 0.1);
  }
}

TEST_CASE("determinism of forward results") {
  Rng rng(41);
  Tensor<float> x = Tensor<float>::uniform({4, 9}, rng, -1, 1);
  Tensor<float> w = Tensor<float>::uniform({9, 5}, rng, -1, 1);
  auto a = softmax(matmul(x, w), 1);
  auto b = softmax(matmul(x, w), 1);
  CHECK(a.value() == b.value());
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor<double>({2, 3}, {1.0, 2.0}), shape_error);
  Tensor<double> t({2, 2}, {1, 2, 3, 4});
  t.set_requires_grad(true);
  CHECK(t.grad().size() == t.size());
  Rng rng(1);
  Tensor<double> r = Tensor<double>::uniform({64}, rng, -3, 3);
  auto y = sigmoid(tanh_t(exp_t(scale(r, 0.1))));
  CHECK(all_finite(y.value()));
}
