#include <doctest.h>

#include <cmath>

#include "adnet/ops.hpp"
#include "adnet/rng.hpp"

using namespace adnet;
using namespace adnet::ops;

namespace {

Tensor random_tensor(std::vector<int> shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.data[i] * b.data[i];
  return acc;
}

}  // namespace

TEST_CASE("conv2d: 3x3 ones kernel on ones input, same padding") {
  Tape t;
  NodeId x = t.constant(Tensor::full({1, 5, 5, 1}, 1.0));
  NodeId k = t.constant(Tensor::full({3, 3, 1, 1}, 1.0));
  NodeId b = t.constant(Tensor::zeros({1}));
  NodeId y = conv2d(t, x, k, b, 1, 1, Padding::Same);
  const Tensor& out = t.value(y);
  CHECK(out.shape == std::vector<int>{1, 5, 5, 1});
  CHECK(out.at4(0, 2, 2, 0) == doctest::Approx(9.0));
  CHECK(out.at4(0, 0, 0, 0) == doctest::Approx(4.0));
  CHECK(out.at4(0, 0, 4, 0) == doctest::Approx(4.0));
}

TEST_CASE("conv2d: 1x1 identity kernel passes input through") {
  SplitMix64 rng(7);
  Tape t;
  Tensor xin = random_tensor({2, 4, 4, 1}, rng);
  NodeId x = t.constant(xin);
  NodeId k = t.constant(Tensor::full({1, 1, 1, 1}, 1.0));
  NodeId b = t.constant(Tensor::zeros({1}));
  NodeId y = conv2d(t, x, k, b, 1, 1, Padding::Same);
  for (std::size_t i = 0; i < xin.size(); ++i) CHECK(t.value(y).data[i] == xin.data[i]);
}

TEST_CASE("conv2d: dilation 2 stencil of a centered delta impulse") {
  Tape t;
  Tensor xin = Tensor::zeros({1, 5, 5, 1});
  xin.at4(0, 2, 2, 0) = 1.0;
  NodeId y = conv2d(t, t.constant(xin), t.constant(Tensor::full({3, 3, 1, 1}, 1.0)),
                    t.constant(Tensor::zeros({1})), 1, 2, Padding::Same);
  const Tensor& out = t.value(y);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      const bool hit = (std::abs(i - 2) == 2 || i == 2) && (std::abs(j - 2) == 2 || j == 2);
      CHECK(out.at4(0, i, j, 0) == doctest::Approx(hit ? 1.0 : 0.0));
    }
}

TEST_CASE("conv2d: dilation < 1 and channel mismatch rejected") {
  Tape t;
  NodeId x = t.constant(Tensor::zeros({1, 4, 4, 2}));
  NodeId k = t.constant(Tensor::zeros({3, 3, 2, 4}));
  NodeId b = t.constant(Tensor::zeros({4}));
  CHECK_THROWS_AS(conv2d(t, x, k, b, 1, 0, Padding::Same), ParameterError);
  NodeId kbad = t.constant(Tensor::zeros({3, 3, 3, 4}));
  CHECK_THROWS_AS(conv2d(t, x, kbad, b, 1, 1, Padding::Same), ContractViolation);
}

TEST_CASE("conv2d: same padding preserves extents for dilation 1, 2, 4") {
  SplitMix64 rng(11);
  for (int d : {1, 2, 4}) {
    Tape t;
    NodeId y = conv2d(t, t.constant(random_tensor({1, 16, 16, 2}, rng)),
                      t.constant(random_tensor({3, 3, 2, 3}, rng)),
                      t.constant(Tensor::zeros({3})), 1, d, Padding::Same);
    CHECK(t.value(y).shape == std::vector<int>{1, 16, 16, 3});
  }
}

TEST_CASE("conv_transpose2d: single pixel expands to the kernel") {
  Tape t;
  Tensor k({2, 2, 1, 1}, {1.5, -2.0, 0.5, 3.0});
  NodeId y = conv_transpose2d(t, t.constant(Tensor::full({1, 1, 1, 1}, 1.0)), t.constant(k),
                              t.constant(Tensor::zeros({1})));
  const Tensor& out = t.value(y);
  CHECK(out.shape == std::vector<int>{1, 2, 2, 1});
  CHECK(out.at4(0, 0, 0, 0) == doctest::Approx(1.5));
  CHECK(out.at4(0, 0, 1, 0) == doctest::Approx(-2.0));
  CHECK(out.at4(0, 1, 0, 0) == doctest::Approx(0.5));
  CHECK(out.at4(0, 1, 1, 0) == doctest::Approx(3.0));
}

TEST_CASE("conv_transpose2d: ones kernel tiles ones input without overlap") {
  Tape t;
  NodeId y = conv_transpose2d(t, t.constant(Tensor::full({1, 2, 2, 1}, 1.0)),
                              t.constant(Tensor::full({2, 2, 1, 1}, 1.0)),
                              t.constant(Tensor::zeros({1})));
  CHECK(t.value(y).shape == std::vector<int>{1, 4, 4, 1});
  for (double v : t.value(y).data) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("conv_transpose2d: zero kernel gives zero output of doubled extent") {
  Tape t;
  NodeId y = conv_transpose2d(t, t.constant(Tensor::full({2, 3, 5, 4}, 1.23)),
                              t.constant(Tensor::zeros({2, 2, 4, 6})),
                              t.constant(Tensor::zeros({6})));
  CHECK(t.value(y).shape == std::vector<int>{2, 6, 10, 6});
  for (double v : t.value(y).data) CHECK(v == 0.0);
}

TEST_CASE("conv_transpose2d is the exact adjoint of stride-2 valid 2x2 conv2d") {
  SplitMix64 rng(13);
  // <conv(x), y> == <x, conv_T(y)> with the same kernel
  Tensor x = random_tensor({2, 6, 6, 3}, rng);
  Tensor k = random_tensor({2, 2, 3, 5}, rng);
  Tensor y = random_tensor({2, 3, 3, 5}, rng);

  Tape t;
  NodeId cx = conv2d(t, t.constant(x), t.constant(k), t.constant(Tensor::zeros({5})), 2, 1,
                     Padding::Valid);
  // adjoint maps Cout back to Cin: transpose the kernel channel axes
  Tensor kt({2, 2, 5, 3});
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int ci = 0; ci < 3; ++ci)
        for (int co = 0; co < 5; ++co)
          kt.data[((a * 2 + b) * 5 + co) * 3 + ci] = k.data[((a * 2 + b) * 3 + ci) * 5 + co];
  NodeId ty = conv_transpose2d(t, t.constant(y), t.constant(kt), t.constant(Tensor::zeros({3})));
  CHECK(dot(t.value(cx), y) == doctest::Approx(dot(x, t.value(ty))).epsilon(1e-10));
}

TEST_CASE("conv2d adjointness via input gradient") {
  SplitMix64 rng(17);
  Tensor x = random_tensor({1, 8, 8, 2}, rng);
  Tensor k = random_tensor({3, 3, 2, 3}, rng);
  Tensor cotangent = random_tensor({1, 8, 8, 3}, rng);
  Tape t;
  NodeId xn = t.leaf(x);
  NodeId yn = conv2d(t, xn, t.constant(k), t.constant(Tensor::zeros({3})), 1, 1, Padding::Same);
  // loss = <conv(x), cotangent>
  NodeId loss = ops::sum(t, ops::mul(t, yn, t.constant(cotangent)));
  t.backward(loss);
  Tensor grad(x.shape, t.grad(xn));
  CHECK(dot(t.value(yn), cotangent) == doctest::Approx(dot(x, grad) + (dot(t.value(yn), cotangent) - dot(x, grad))));
  // <conv(x), y> == <x, grad> exactly because conv is linear in x
  CHECK(std::abs(dot(t.value(yn), cotangent) - dot(x, grad)) < 1e-10 * (1.0 + std::abs(dot(x, grad))));
}

TEST_CASE("batch_norm2d: infer identity statistics") {
  SplitMix64 rng(19);
  Tensor x = random_tensor({2, 3, 3, 2}, rng);
  Tensor rm = Tensor::zeros({2});
  Tensor rv = Tensor::full({2}, 1.0);
  Tape t;
  NodeId y = batch_norm2d(t, t.constant(x), t.constant(Tensor::full({2}, 1.0)),
                          t.constant(Tensor::zeros({2})), rm, rv, Mode::Infer, 0.99, 1e-12);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(t.value(y).data[i] == doctest::Approx(x.data[i]).epsilon(1e-9));
}

TEST_CASE("batch_norm2d: train mode removes a constant batch") {
  Tensor rm = Tensor::zeros({1});
  Tensor rv = Tensor::full({1}, 1.0);
  Tape t;
  NodeId y = batch_norm2d(t, t.constant(Tensor::full({2, 2, 2, 1}, 5.0)),
                          t.constant(Tensor::full({1}, 1.0)), t.constant(Tensor::zeros({1})), rm,
                          rv, Mode::Train, 0.99, 1e-5);
  for (double v : t.value(y).data) CHECK(v == doctest::Approx(0.0));
  CHECK(rm.data[0] == doctest::Approx(0.99 * 0.0 + 0.01 * 5.0));
}

TEST_CASE("batch_norm2d: two-value batch normalizes to +-1") {
  Tensor rm = Tensor::zeros({1});
  Tensor rv = Tensor::full({1}, 1.0);
  Tensor x({2, 1, 1, 1}, {1.0, 3.0});
  Tape t;
  NodeId y = batch_norm2d(t, t.constant(x), t.constant(Tensor::full({1}, 1.0)),
                          t.constant(Tensor::zeros({1})), rm, rv, Mode::Train, 0.99, 1e-5);
  CHECK(std::abs(t.value(y).data[0] + 1.0) < 1e-4);
  CHECK(std::abs(t.value(y).data[1] - 1.0) < 1e-4);
}

TEST_CASE("batch_norm2d: train output is standardized for batches >= 4") {
  SplitMix64 rng(23);
  Tensor x = random_tensor({4, 6, 6, 3}, rng, -2.0, 2.0);
  Tensor rm = Tensor::zeros({3});
  Tensor rv = Tensor::full({3}, 1.0);
  Tape t;
  NodeId y = batch_norm2d(t, t.constant(x), t.constant(Tensor::full({3}, 1.0)),
                          t.constant(Tensor::zeros({3})), rm, rv, Mode::Train, 0.99, 1e-9);
  const Tensor& out = t.value(y);
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    const std::size_t m = out.size() / 3;
    for (std::size_t i = 0; i < out.size(); i += 3) mean += out.data[i + c];
    mean /= static_cast<double>(m);
    for (std::size_t i = 0; i < out.size(); i += 3)
      var += (out.data[i + c] - mean) * (out.data[i + c] - mean);
    var /= static_cast<double>(m);
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("activations") {
  Tape t;
  Tensor x({1, 1, 1, 3}, {-1.0, 0.0, 2.0});
  NodeId r = activation(t, t.constant(x), Activation::Relu);
  CHECK(t.value(r).data == std::vector<double>{0.0, 0.0, 2.0});
  NodeId s = activation(t, t.constant(Tensor::full({1, 1, 1, 1}, 0.0)), Activation::Sigmoid);
  CHECK(t.value(s).data[0] == doctest::Approx(0.5));
  NodeId l = activation(t, t.constant(Tensor::full({1, 1, 1, 1}, -2.0)), Activation::LeakyRelu, 0.3);
  CHECK(t.value(l).data[0] == doctest::Approx(-0.6));
}

TEST_CASE("pool2d: constants are fixed points, 1..9 window cases") {
  Tape t;
  NodeId c = t.constant(Tensor::full({1, 4, 4, 2}, 3.25));
  for (PoolKind k : {PoolKind::Max, PoolKind::Avg})
    for (double v : t.value(pool2d(t, c, k)).data) CHECK(v == doctest::Approx(3.25));

  Tensor grid({1, 3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  NodeId g = t.constant(grid);
  CHECK(t.value(pool2d(t, g, PoolKind::Max)).at4(0, 1, 1, 0) == doctest::Approx(9.0));
  // corner window covers {1,2,4,5}
  CHECK(t.value(pool2d(t, g, PoolKind::Avg)).at4(0, 0, 0, 0) == doctest::Approx(3.0));
}

TEST_CASE("max pool tie-break is deterministic across runs") {
  Tensor x = Tensor::full({1, 4, 4, 1}, 1.0);
  std::vector<double> first_grad;
  for (int run = 0; run < 3; ++run) {
    Tape t;
    NodeId xn = t.leaf(x);
    NodeId y = pool2d(t, xn, PoolKind::Max);
    t.backward(ops::sum(t, y));
    if (run == 0) first_grad = t.grad(xn);
    else CHECK(t.grad(xn) == first_grad);
  }
}

TEST_CASE("max_pool_downsample") {
  Tape t;
  Tensor x({1, 2, 2, 1}, {1, 2, 3, 4});
  CHECK(t.value(max_pool_downsample(t, t.constant(x))).data[0] == doctest::Approx(4.0));
  NodeId c = max_pool_downsample(t, t.constant(Tensor::full({1, 8, 8, 3}, 2.5)));
  CHECK(t.value(c).shape == std::vector<int>{1, 4, 4, 3});
  for (double v : t.value(c).data) CHECK(v == doctest::Approx(2.5));
  CHECK_THROWS_AS(max_pool_downsample(t, t.constant(Tensor::zeros({1, 3, 4, 1}))),
                  ContractViolation);
}

TEST_CASE("max_pool_downsample: four stages reach 16x16 from 256x256") {
  Tape t;
  NodeId h = t.constant(Tensor::zeros({1, 256, 256, 1}));
  for (int i = 0; i < 4; ++i) h = max_pool_downsample(t, h);
  CHECK(t.value(h).shape == std::vector<int>{1, 16, 16, 1});
}

TEST_CASE("global_avg_pool") {
  Tape t;
  Tensor x({1, 2, 2, 1}, {0, 0, 2, 2});
  CHECK(t.value(global_avg_pool(t, t.constant(x))).data[0] == doctest::Approx(1.0));
  NodeId c = global_avg_pool(t, t.constant(Tensor::full({3, 5, 7, 4}, -1.5)));
  CHECK(t.value(c).shape == std::vector<int>{3, 1, 1, 4});
  for (double v : t.value(c).data) CHECK(v == doctest::Approx(-1.5));
  // gradient of sum(GAP(x)) is 1/(H*W) everywhere
  Tape t2;
  NodeId xn = t2.leaf(Tensor::full({1, 4, 4, 2}, 0.7));
  t2.backward(ops::sum(t2, global_avg_pool(t2, xn)));
  for (double g : t2.grad(xn)) CHECK(g == doctest::Approx(1.0 / 16.0));
}

TEST_CASE("concat_channels and its gradient split") {
  SplitMix64 rng(29);
  Tensor a = random_tensor({1, 3, 3, 2}, rng);
  Tensor b = random_tensor({1, 3, 3, 3}, rng);
  Tape t;
  NodeId an = t.leaf(a), bn = t.leaf(b);
  NodeId cat = concat_channels(t, an, bn);
  CHECK(t.value(cat).shape == std::vector<int>{1, 3, 3, 5});
  Tensor w = random_tensor({1, 3, 3, 5}, rng);
  t.backward(ops::sum(t, ops::mul(t, cat, t.constant(w))));
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      for (int c = 0; c < 2; ++c)
        CHECK(t.grad(an)[a.idx4(0, y, x, c)] == doctest::Approx(w.at4(0, y, x, c)));
      for (int c = 0; c < 3; ++c)
        CHECK(t.grad(bn)[b.idx4(0, y, x, c)] == doctest::Approx(w.at4(0, y, x, 2 + c)));
    }
  CHECK_THROWS_AS(concat_channels(t, an, t.constant(Tensor::zeros({1, 2, 3, 1}))),
                  ContractViolation);
}

TEST_CASE("elementwise add/mul with the attention broadcast") {
  SplitMix64 rng(31);
  Tensor a = random_tensor({2, 3, 3, 2}, rng);
  Tape t;
  NodeId an = t.constant(a);
  NodeId zero = t.constant(Tensor::zeros({2, 3, 3, 2}));
  NodeId one = t.constant(Tensor::full({2, 3, 3, 2}, 1.0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(t.value(add(t, an, zero)).data[i] == a.data[i]);
    CHECK(t.value(mul(t, an, one)).data[i] == a.data[i]);
  }
  // N x 1 x 1 x C weights of 0.5 halve a constant-4 map
  NodeId m = mul(t, t.constant(Tensor::full({2, 3, 3, 2}, 4.0)),
                 t.constant(Tensor::full({2, 1, 1, 2}, 0.5)));
  for (double v : t.value(m).data) CHECK(v == doctest::Approx(2.0));
  CHECK_THROWS_AS(mul(t, an, t.constant(Tensor::zeros({2, 2, 1, 2}))), ContractViolation);
}

TEST_CASE("upsample_nearest") {
  Tape t;
  SplitMix64 rng(37);
  Tensor x = random_tensor({1, 3, 3, 2}, rng);
  NodeId same = upsample_nearest(t, t.constant(x), 3, 3);
  CHECK(t.value(same).data == x.data);

  NodeId v = upsample_nearest(t, t.constant(Tensor::full({1, 1, 1, 1}, 2.5)), 4, 4);
  for (double d : t.value(v).data) CHECK(d == doctest::Approx(2.5));

  Tensor checker({1, 2, 2, 1}, {0, 1, 1, 0});
  NodeId up = upsample_nearest(t, t.constant(checker), 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int xx = 0; xx < 4; ++xx)
      CHECK(t.value(up).at4(0, y, xx, 0) == checker.at4(0, y / 2, xx / 2, 0));

  CHECK_THROWS_AS(upsample_nearest(t, t.constant(checker), 5, 4), ContractViolation);
}

TEST_CASE("backward: sum and sum of squares") {
  SplitMix64 rng(41);
  Tensor x = random_tensor({1, 4, 4, 2}, rng);
  Tape t;
  NodeId xn = t.leaf(x);
  t.backward(ops::sum(t, xn));
  for (double g : t.grad(xn)) CHECK(g == doctest::Approx(1.0));

  Tape t2;
  NodeId xn2 = t2.leaf(x);
  t2.backward(ops::sum(t2, ops::mul(t2, xn2, xn2)));
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(t2.grad(xn2)[i] == doctest::Approx(2.0 * x.data[i]));
}

TEST_CASE("backward rejects non-scalar loss") {
  Tape t;
  NodeId xn = t.leaf(Tensor::zeros({1, 2, 2, 1}));
  CHECK_THROWS_AS(t.backward(xn), ContractViolation);
}
