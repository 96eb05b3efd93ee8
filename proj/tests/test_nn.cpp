// Copyright 2026 The cmnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <catch_amalgamated.hpp>

#include "cmnet/gradcheck.hpp"
#include "cmnet/cm.hpp"
#include "oracles.hpp"

using namespace cmnet;

TEST_CASE("conv2d forward") {
  SECTION("ones input, 2x2 ones kernel, no padding") {
    Tensor<double> x = Tensor<double>::ones({1, 3, 3});
    Tensor<double> w = Tensor<double>::ones({1, 1, 2, 2});
    auto y = conv2d(x, w, {1, 1}, {});
    REQUIRE(y.shape() == Shape{1, 2, 2});
    for (double v : y.value()) CHECK(v == Catch::Approx(4.0));
  }
  SECTION("delta kernel under causal padding is the identity") {
    Rng rng(3);
    Tensor<double> x = Tensor<double>::uniform({1, 6, 7}, rng, -1, 1);
    Tensor<double> w = Tensor<double>::zeros({1, 1, 3, 5});
    // temporal index kT-1 (current frame), centered in frequency
    w.value()[(0 * 3 + 2) * 5 + 2] = 1.0;
    auto y = conv2d(x, w, {1, 1}, {2, 2, 2});
    REQUIRE(y.shape() == x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.value()[i] == Catch::Approx(x.value()[i]).margin(0));
  }
  SECTION("random case against the six-loop oracle") {
    Rng rng(5);
    Tensor<double> x = Tensor<double>::uniform({2, 6, 8}, rng, -1, 1);
    Tensor<double> w = Tensor<double>::uniform({3, 2, 3, 5}, rng, -1, 1);
    Tensor<double> b = Tensor<double>::uniform({3}, rng, -1, 1);
    auto y = conv2d(x, w, &b, {1, 2}, {2, 2, 2});
    std::size_t To, Fo;
    auto ref = oracle::conv2d_ref(x.value(), 2, 6, 8, w.value(), 3, 3, 5, b.value(), 1, 2, 2, 2, 2, To, Fo);
    REQUIRE(y.shape() == Shape{3, To, Fo});
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(y.value()[i] - ref[i]) < 1e-12);
  }
  SECTION("time output extent is preserved at stride 1 with past padding") {
    for (std::size_t T : {1ul, 2ul, 9ul}) {
      Tensor<double> x = Tensor<double>::ones({1, T, 5});
      Tensor<double> w = Tensor<double>::ones({1, 1, 3, 5});
      auto y = conv2d(x, w, {1, 1}, {2, 2, 2});
      CHECK(y.dim(1) == T);
    }
  }
  SECTION("kernel larger than padded input throws") {
    CHECK_THROWS_AS(conv2d(Tensor<double>({1, 2, 2}), Tensor<double>({1, 1, 5, 5}), {1, 1}, {}),
                    shape_error);
    CHECK_THROWS_AS(conv2d(Tensor<double>({2, 4, 4}), Tensor<double>({1, 3, 2, 2}), {1, 1}, {}),
                    shape_error);
  }
}

TEST_CASE("conv2d_transpose") {
  SECTION("transpose of the delta-kernel identity is the identity") {
    Rng rng(7);
    Tensor<double> x = Tensor<double>::uniform({1, 5, 7}, rng, -1, 1);
    Tensor<double> w = Tensor<double>::zeros({1, 1, 3, 5});
    w.value()[(0 * 3 + 2) * 5 + 2] = 1.0;
    // causal crop: keep head in time (drop the future overhang), centered in F
    auto y = conv2d_transpose(x, w, {1, 1}, {2, 2, 5, 7});
    REQUIRE(y.shape() == x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.value()[i] == Catch::Approx(x.value()[i]).margin(0));
  }
  SECTION("random case against the scatter-add oracle") {
    Rng rng(9);
    Tensor<double> x = Tensor<double>::uniform({2, 4, 6}, rng, -1, 1);
    Tensor<double> w = Tensor<double>::uniform({2, 3, 3, 5}, rng, -1, 1);
    Tensor<double> b = Tensor<double>::uniform({3}, rng, -1, 1);
    TransposeCrop crop{0, 2, 4, 11};
    auto y = conv2d_transpose(x, w, &b, {1, 2}, crop);
    auto ref = oracle::conv2d_transpose_ref(x.value(), 2, 4, 6, w.value(), 3, 3, 5, b.value(), 1, 2, 0, 2, 4, 11);
    REQUIRE(y.value().size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(y.value()[i] - ref[i]) < 1e-12);
  }
  SECTION("adjoint identity against the forward conv") {
    // conv with padding (pT, a, b) pairs with transpose cropping (pT, a)
    Rng rng(11);
    Tensor<double> x = Tensor<double>::uniform({2, 5, 8}, rng, -1, 1);
    Tensor<double> w = Tensor<double>::uniform({3, 2, 3, 5}, rng, -1, 1);
    auto lx = conv2d(x, w, {1, 2}, {2, 2, 2});
    Tensor<double> y = Tensor<double>::uniform(lx.shape(), rng, -1, 1);
    // transpose kernel layout is [Ci,Co,kT,kF] with Ci = channels of y
    Tensor<double> wt({3, 2, 3, 5});
    for (std::size_t co = 0; co < 3; ++co)
      for (std::size_t ci = 0; ci < 2; ++ci)
        for (std::size_t k = 0; k < 15; ++k)
          wt.value()[(co * 2 + ci) * 15 + k] = w.value()[(co * 2 + ci) * 15 + k];
    auto lty = conv2d_transpose(y, wt, {1, 2}, {2, 2, 5, 8});
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) lhs += lx.value()[i] * y.value()[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x.value()[i] * lty.value()[i];
    CHECK(std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)) < 1e-10);
  }
  SECTION("unreachable target extent throws") {
    CHECK_THROWS_AS(
        conv2d_transpose(Tensor<double>({1, 2, 2}), Tensor<double>({1, 1, 3, 3}), {1, 1}, {0, 0, 9, 9}),
        shape_error);
  }
}

TEST_CASE("batch_norm") {
  Rng rng(13);
  Tensor<double> gamma = Tensor<double>::ones({3});
  Tensor<double> beta = Tensor<double>::zeros({3});
  Tensor<double> rm = Tensor<double>::zeros({3});
  Tensor<double> rv = Tensor<double>::ones({3});
  Tensor<double> x = Tensor<double>::uniform({3, 4, 5}, rng, -2, 2);

  SECTION("infer mode with unit running stats is near identity") {
    auto y = batch_norm(x, gamma, beta, rm, rv, BnMode::Infer);
    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK(y.value()[i] == Catch::Approx(x.value()[i]).epsilon(1e-4));
  }
  SECTION("train mode normalizes each channel") {
    auto y = batch_norm(x, gamma, beta, rm, rv, BnMode::Train);
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0, v = 0;
      for (std::size_t i = 0; i < 20; ++i) m += y.value()[c * 20 + i];
      m /= 20;
      for (std::size_t i = 0; i < 20; ++i) {
        const double d = y.value()[c * 20 + i] - m;
        v += d * d;
      }
      v /= 20;
      CHECK(std::abs(m) < 1e-6);
      CHECK(std::abs(v - 1.0) < 1e-3);  // epsilon in the normalizer
    }
  }
  SECTION("gamma and beta apply the affine map") {
    Tensor<double> g2 = Tensor<double>::full({3}, 2.0);
    Tensor<double> b3 = Tensor<double>::full({3}, 3.0);
    auto base = batch_norm(x, gamma, beta, rm, rv, BnMode::Infer);
    auto aff = batch_norm(x, g2, b3, rm, rv, BnMode::Infer);
    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK(aff.value()[i] == Catch::Approx(2.0 * base.value()[i] + 3.0).margin(1e-12));
  }
  SECTION("running stats update with momentum 0.1") {
    Tensor<double> rm2 = Tensor<double>::zeros({3});
    Tensor<double> rv2 = Tensor<double>::ones({3});
    batch_norm(x, gamma, beta, rm2, rv2, BnMode::Train);
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0, v = 0;
      for (std::size_t i = 0; i < 20; ++i) m += x.value()[c * 20 + i];
      m /= 20;
      for (std::size_t i = 0; i < 20; ++i) {
        const double d = x.value()[c * 20 + i] - m;
        v += d * d;
      }
      v /= 20;
      CHECK(rm2.value()[c] == Catch::Approx(0.1 * m).margin(1e-12));
      CHECK(rv2.value()[c] == Catch::Approx(0.9 + 0.1 * v).margin(1e-12));
    }
  }
}

TEST_CASE("gru_step") {
  SECTION("all-zero weights halve the state") {
    ParameterStore<double> ps(1);
    GruCell<double> cell;
    cell.wz = Tensor<double>::zeros({2, 2});
    cell.uz = Tensor<double>::zeros({2, 2});
    cell.bz = Tensor<double>::zeros({2});
    cell.wr = cell.wz;
    cell.ur = cell.uz;
    cell.br = cell.bz;
    cell.wh = cell.wz;
    cell.uh = cell.uz;
    cell.bh = cell.bz;
    Tensor<double> x({2}, {0.3, -0.7});
    Tensor<double> h({2}, {0.8, -0.4});
    auto h2 = gru_step(cell, x, h);
    CHECK(h2.value()[0] == Catch::Approx(0.4));
    CHECK(h2.value()[1] == Catch::Approx(-0.2));
    auto h3 = gru_step(cell, x, Tensor<double>::zeros({2}));
    CHECK(h3.value()[0] == 0.0);
    CHECK(h3.value()[1] == 0.0);
  }
  SECTION("random case against the formula oracle") {
    Rng rng(17);
    const std::size_t I = 3, H = 2;
    auto mk = [&](Shape s) { return Tensor<double>::uniform(s, rng, -1, 1); };
    GruCell<double> cell{mk({H, I}), mk({H, H}), mk({H}), mk({H, I}), mk({H, H}),
                         mk({H}),   mk({H, I}), mk({H, H}), mk({H})};
    Tensor<double> x = mk({I}), h = mk({H});
    auto out = gru_step(cell, x, h);
    auto ref = oracle::gru_step_ref(x.value(), h.value(), I, H, cell.wz.value(), cell.uz.value(),
                                    cell.bz.value(), cell.wr.value(), cell.ur.value(), cell.br.value(),
                                    cell.wh.value(), cell.uh.value(), cell.bh.value());
    for (std::size_t i = 0; i < H; ++i) CHECK(std::abs(out.value()[i] - ref[i]) < 1e-12);
  }
}

// the spec's per-primitive gradient property, double precision
namespace {
struct ConvB {
  template <class R>
  Tensor<R> operator()(ParameterStore<R>& ps) const {
    auto x = ps.get_or_create("x", {3, 5, 9}, Init::KaimingUniform, 4);
    auto w = ps.get_or_create("w", {2, 3, 3, 5}, Init::KaimingUniform, 45);
    auto b = ps.get_or_create("b", {2}, Init::KaimingUniform, 1);
    auto y = conv2d(x, w, &b, {1, 2}, {2, 2, 2});
    return sum_all(mul(y, y));
  }
};
struct DeconvB {
  template <class R>
  Tensor<R> operator()(ParameterStore<R>& ps) const {
    auto x = ps.get_or_create("x", {3, 5, 5}, Init::KaimingUniform, 4);
    auto w = ps.get_or_create("w", {3, 2, 3, 5}, Init::KaimingUniform, 45);
    auto b = ps.get_or_create("b", {2}, Init::KaimingUniform, 1);
    auto y = conv2d_transpose(x, w, &b, {1, 2}, {0, 2, 5, 9});
    return sum_all(mul(y, y));
  }
};
struct BnB {
  template <class R>
  Tensor<R> operator()(ParameterStore<R>& ps) const {
    auto x = ps.get_or_create("x", {3, 4, 5}, Init::KaimingUniform, 2);
    auto g = ps.get_or_create("g", {3}, Init::Ones);
    auto b = ps.get_or_create("b", {3}, Init::Zeros);
    auto rm = ps.get_or_create("rm", {3}, Init::Zeros, 1, false);
    auto rv = ps.get_or_create("rv", {3}, Init::Ones, 1, false);
    auto y = batch_norm(x, g, b, rm, rv, BnMode::Train);
    return sum_all(mul(y, y));
  }
};
struct PreluB {
  template <class R>
  Tensor<R> operator()(ParameterStore<R>& ps) const {
    auto x = ps.get_or_create("x", {3, 4, 5}, Init::KaimingUniform, 2);
    auto a = ps.get_or_create("a", {3}, Init::Const, 1, true, 0.25);
    auto y = prelu_channel(x, a);
    return sum_all(mul(y, y));
  }
};
struct GruB {
  template <class R>
  Tensor<R> operator()(ParameterStore<R>& ps) const {
    auto cell = make_gru(ps, "gru", 1, 1);
    auto x = ps.get_or_create("x", {7}, Init::KaimingUniform, 1);
    auto y = gru_run_scalar(cell, x);
    return sum_all(mul(y, y));
  }
};
struct SoftmaxB {
  template <class R>
  Tensor<R> operator()(ParameterStore<R>& ps) const {
    auto x = ps.get_or_create("x", {5, 5}, Init::KaimingUniform, 1);
    Tensor<R> m({5, 5});
    const R ninf = -std::numeric_limits<R>::infinity();
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t u = t + 1; u < 5; ++u) m.value()[t * 5 + u] = ninf;
    auto w = ps.get_or_create("w", {5, 5}, Init::KaimingUniform, 5);
    auto y = softmax(scale(x, R(1.3)), 1, &m);
    return sum_all(mul(y, w));
  }
};

}  // namespace

TEST_CASE("gradient property of network primitives") {
  GradCheckOptions opt;
  opt.tol = 1e-6;
  opt.max_per_tensor = 6;

  CHECK(finite_difference_check<double>("conv2d", ConvB{}, ParameterStore<double>(3), opt).pass);
  CHECK(finite_difference_check<double>("conv2d_transpose", DeconvB{}, ParameterStore<double>(3), opt).pass);
  CHECK(finite_difference_check<double>("batch_norm", BnB{}, ParameterStore<double>(3), opt).pass);
  CHECK(finite_difference_check<double>("prelu", PreluB{}, ParameterStore<double>(3), opt).pass);
  CHECK(finite_difference_check<double>("gru", GruB{}, ParameterStore<double>(3), opt).pass);
  CHECK(finite_difference_check<double>("softmax", SoftmaxB{}, ParameterStore<double>(3), opt).pass);

  GradCheckOptions opt32 = opt;
  opt32.tol = 1e-4;
  CHECK(finite_difference_check<float>("conv2d_f32", ConvB{}, ParameterStore<double>(3), opt32).pass);
  CHECK(finite_difference_check<float>("gru_f32", GruB{}, ParameterStore<double>(3), opt32).pass);
}

TEST_CASE("parameter store") {
  ParameterStore<double> ps(42);
  CHECK(ps.trainable_count() == 0);
  auto w = ps.get_or_create("block.conv.w", {4, 3}, Init::KaimingUniform, 3);
  auto b = ps.get_or_create("block.conv.b", {4}, Init::Zeros);
  auto rm = ps.get_or_create("block.bn.running_mean", {4}, Init::Zeros, 1, false);
  CHECK(ps.trainable_count() == 16);
  CHECK(ps.breakdown(1).at("block") == 16);

  // same name returns the same tensor; shape conflict throws
  auto w2 = ps.get_or_create("block.conv.w", {4, 3}, Init::KaimingUniform, 3);
  CHECK(w2.same_as(w));
  CHECK_THROWS_AS(ps.get_or_create("block.conv.w", {2, 2}, Init::Zeros), shape_error);

  // name-seeded init: creation order does not matter
  ParameterStore<double> ps2(42);
  ps2.get_or_create("block.conv.b", {4}, Init::Zeros);
  auto w3 = ps2.get_or_create("block.conv.w", {4, 3}, Init::KaimingUniform, 3);
  CHECK(w3.value() == w.value());

  auto psf = ps.cast<float>();
  CHECK(psf.trainable_count() == ps.trainable_count());
  CHECK_FALSE(psf.trainable("block.bn.running_mean"));
  (void)b;
  (void)rm;
}
