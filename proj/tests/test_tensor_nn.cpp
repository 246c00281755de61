// Tensor substrate + trainable ops. Expected values marked "oracle" were
// computed with an independent NumPy implementation and frozen here.

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "fd_check.hpp"
#include "hqnoise/nn.hpp"
#include "hqnoise/tensor.hpp"

using namespace hqnoise;

TEST_CASE("tensor basics") {
  Tensor t({2, 3, 4}, 1.5);
  REQUIRE(t.size() == 24);
  REQUIRE(t.mean() == Catch::Approx(1.5));
  REQUIRE(t.std_pop() == 0.0);

  t.at(1, 2, 3) = 7.0;
  REQUIRE(t[23] == 7.0);

  Tensor a({2, 2});
  REQUIRE_THROWS_AS(a += t, ShapeError);
  REQUIRE_THROWS_AS(Tensor({0, 3}), ShapeError);

  Tensor z({4}, 0.0);
  z[0] = 1.0;
  z[1] = 3.0;
  z[2] = 5.0;
  z[3] = 7.0;
  REQUIRE(z.mean() == Catch::Approx(4.0));
  REQUIRE(z.std_pop() == Catch::Approx(std::sqrt(5.0)));
}

TEST_CASE("tensor concat and split") {
  Rng rng(11);
  Tensor a = Tensor::randn({2, 3, 3}, rng);
  Tensor b = Tensor::randn({3, 3, 3}, rng);
  Tensor c = concat_channels(a, b);
  REQUIRE(c.shape() == Shape{5, 3, 3});
  auto [ga, gb] = split_channels(c, 2);
  for (size_t i = 0; i < a.size(); ++i) REQUIRE(ga[i] == a[i]);
  for (size_t i = 0; i < b.size(); ++i) REQUIRE(gb[i] == b[i]);
  Tensor bad({2, 4, 3});
  REQUIRE_THROWS_AS(concat_channels(a, bad), ShapeError);
}

TEST_CASE("randn is deterministic per seed") {
  Rng r1(42), r2(42), r3(43);
  Tensor a = Tensor::randn({32}, r1);
  Tensor b = Tensor::randn({32}, r2);
  Tensor c = Tensor::randn({32}, r3);
  for (size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
  bool any_diff = false;
  for (size_t i = 0; i < a.size(); ++i) any_diff = any_diff || a[i] != c[i];
  REQUIRE(any_diff);
}

TEST_CASE("rng moments") {
  Rng rng(7);
  const int n = 1000000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    s += v;
    s2 += v * v;
  }
  const double mean = s / n;
  const double std = std::sqrt(s2 / n - mean * mean);
  REQUIRE(std::abs(mean) < 0.01);
  REQUIRE(std > 0.995);
  REQUIRE(std < 1.005);
}

TEST_CASE("conv2d hand examples") {
  // Single 2x2 input, all-ones 2x2 kernel: one output = 1+2+3+4 = 10.
  Tensor in({1, 2, 2});
  in[0] = 1;
  in[1] = 2;
  in[2] = 3;
  in[3] = 4;
  Tensor k({1, 1, 2, 2}, 1.0);
  Tensor out = conv2d(in, k, 1, 0);
  REQUIRE(out.shape() == Shape{1, 1, 1});
  REQUIRE(out[0] == Catch::Approx(10.0));

  // 1x1 identity kernel preserves the input.
  Tensor id({1, 1, 1, 1});
  id[0] = 1.0;
  Tensor same = conv2d(in, id, 1, 0);
  for (size_t i = 0; i < in.size(); ++i) REQUIRE(same[i] == in[i]);
}

TEST_CASE("conv2d frozen case: stride 2, pad 1") {
  // oracle: numpy reference conv on in[i] = 0.25*i - 1, k[i] = 0.125*(i - 7.5)
  Tensor in({2, 3, 3});
  for (size_t i = 0; i < in.size(); ++i) in[i] = 0.25 * static_cast<double>(i) - 1.0;
  Tensor k({2, 2, 2, 2});
  for (size_t i = 0; i < k.size(); ++i) k[i] = 0.125 * (static_cast<double>(i) - 7.5);
  Tensor out = conv2d(in, k, 2, 1);
  REQUIRE(out.shape() == Shape{2, 2, 2});
  const double expect[8] = {0.484375, 0.40625, -0.875, -3.8125,
                            0.734375, 2.40625, 4.125,  9.1875};
  for (size_t i = 0; i < 8; ++i) REQUIRE(out[i] == Catch::Approx(expect[i]).margin(1e-12));
}

TEST_CASE("conv2d shape validation") {
  Tensor in({2, 4, 4});
  Tensor k({3, 5, 2, 2});  // channel mismatch: kernel wants 5 input channels
  REQUIRE_THROWS_AS(conv2d(in, k, 1, 0), ShapeError);
  Tensor kbig({1, 2, 7, 7});
  REQUIRE_THROWS_AS(conv2d(in, kbig, 1, 0), ShapeError);
  REQUIRE(conv2d(in, kbig, 1, 2).shape() == Shape{1, 2, 2});
  Tensor k2({3, 2, 2, 2});
  REQUIRE_THROWS_AS(conv2d(in, k2, 0, 0), ConfigError);
}

TEST_CASE("conv2d is linear in its input") {
  Rng rng(3);
  Tensor x = Tensor::randn({3, 6, 6}, rng);
  Tensor y = Tensor::randn({3, 6, 6}, rng);
  Tensor k = Tensor::randn({2, 3, 3, 3}, rng);
  Tensor lhs = conv2d(x + y, k, 1, 1);
  Tensor rhs = conv2d(x, k, 1, 1) + conv2d(y, k, 1, 1);
  for (size_t i = 0; i < lhs.size(); ++i)
    REQUIRE(lhs[i] == Catch::Approx(rhs[i]).margin(1e-10));
}

namespace {

// Weighted-sum loss over a batch output; grad_out is then just the weights.
double weighted_loss(const Batch& out, const Batch& w) {
  double s = 0.0;
  for (size_t i = 0; i < out.size(); ++i) s += out[i].dot(w[i]);
  return s;
}

// FD-checks one layer: input gradients and all parameter gradients.
void check_layer_gradients(Layer& layer, Batch x, double tol, uint64_t wseed) {
  Rng rng(wseed);
  Batch probe = layer.forward(x, true);
  Batch w;
  for (const Tensor& t : probe) w.push_back(Tensor::randn(t.shape(), rng));

  std::vector<Parameter*> params;
  layer.collect_params(params);
  for (Parameter* p : params) p->zero_grad();
  Batch gin = layer.backward(w);

  auto loss = [&]() { return weighted_loss(layer.forward(x, true), w); };

  std::vector<double*> xs;
  std::vector<double> analytic;
  for (size_t i = 0; i < x.size(); ++i)
    for (size_t j = 0; j < x[i].size(); ++j) {
      xs.push_back(&x[i][j]);
      analytic.push_back(gin[i][j]);
    }
  for (Parameter* p : params)
    for (size_t j = 0; j < p->value.size(); ++j) {
      xs.push_back(&p->value[j]);
      analytic.push_back(p->grad[j]);
    }
  fd::Result r = fd::compare(loss, xs, analytic);
  INFO("max abs err " << r.max_abs_err << " scale " << r.scale);
  REQUIRE(r.rel() < tol);
}

}  // namespace

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(101);
  for (auto [stride, pad, bias] : {std::tuple{1, 0, false}, {1, 1, true}, {2, 1, true}}) {
    Conv2dLayer conv("t", 2, 3, 3, stride, pad, bias, rng);
    Batch x{Tensor::randn({2, 6, 6}, rng), Tensor::randn({2, 6, 6}, rng)};
    check_layer_gradients(conv, x, 1e-6, 7 + stride + pad);
  }
}

TEST_CASE("conv transpose gradients and shape") {
  Rng rng(102);
  ConvTranspose2dLayer up("t", 3, 2, 2, 2, rng);
  Batch x{Tensor::randn({3, 4, 4}, rng)};
  Batch out = up.forward(x, true);
  REQUIRE(out[0].shape() == Shape{2, 8, 8});
  check_layer_gradients(up, x, 1e-6, 11);
}

TEST_CASE("batchnorm normalizes and tracks running stats") {
  Rng rng(103);
  BatchNorm2dLayer bn("t", 3);
  Batch x{Tensor::randn({3, 4, 4}, rng) * 2.5, Tensor::randn({3, 4, 4}, rng) * 2.5};
  for (Tensor& t : x) t += 1.0;
  Batch out = bn.forward(x, true);
  // With unit gamma / zero beta, each channel of the output has mean 0, std 1.
  for (int c = 0; c < 3; ++c) {
    double s = 0.0, s2 = 0.0;
    for (const Tensor& t : out)
      for (int y = 0; y < 4; ++y)
        for (int xx = 0; xx < 4; ++xx) {
          s += t.at(c, y, xx);
          s2 += t.at(c, y, xx) * t.at(c, y, xx);
        }
    const double n = 2 * 16;
    REQUIRE(std::abs(s / n) < 1e-12);
    REQUIRE(s2 / n == Catch::Approx(1.0).epsilon(1e-3));  // eps in denominator
  }
  // Eval mode must use running stats, not batch stats.
  std::vector<Tensor*> bufs;
  bn.collect_buffers(bufs);
  REQUIRE(bufs.size() == 2);
  Batch eval_out = bn.forward(x, false);
  bool differs = false;
  for (size_t i = 0; i < out.size() && !differs; ++i)
    for (size_t j = 0; j < out[i].size(); ++j)
      if (out[i][j] != eval_out[i][j]) {
        differs = true;
        break;
      }
  REQUIRE(differs);
}

TEST_CASE("batchnorm gradients match finite differences") {
  Rng rng(104);
  BatchNorm2dLayer bn("t", 2);
  Batch x{Tensor::randn({2, 3, 3}, rng), Tensor::randn({2, 3, 3}, rng),
          Tensor::randn({2, 3, 3}, rng)};
  check_layer_gradients(bn, x, 1e-6, 13);
}

TEST_CASE("maxpool forward, routing, gradients") {
  Tensor in({1, 2, 2});
  in[0] = 1;
  in[1] = 4;
  in[2] = 3;
  in[3] = 2;
  MaxPool2dLayer pool;
  Batch out = pool.forward({in}, true);
  REQUIRE(out[0].shape() == Shape{1, 1, 1});
  REQUIRE(out[0][0] == 4.0);
  Tensor g({1, 1, 1});
  g[0] = 5.0;
  Batch gin = pool.backward({g});
  REQUIRE(gin[0][1] == 5.0);  // routed to the argmax position only
  REQUIRE(gin[0][0] == 0.0);
  REQUIRE(gin[0][2] == 0.0);

  Rng rng(105);
  MaxPool2dLayer pool2;
  Batch x{Tensor::randn({2, 6, 6}, rng)};
  check_layer_gradients(pool2, x, 1e-6, 17);

  Tensor odd({1, 3, 3});
  REQUIRE_THROWS_AS(pool.forward({odd}, true), ShapeError);
}

TEST_CASE("pixel shuffle examples and inverse") {
  Tensor in({4, 1, 1});
  in[0] = 1;
  in[1] = 2;
  in[2] = 3;
  in[3] = 4;
  Tensor out = pixel_shuffle(in, 2);
  REQUIRE(out.shape() == Shape{1, 2, 2});
  REQUIRE(out[0] == 1.0);  // (0,0) <- channel 0
  REQUIRE(out[1] == 2.0);  // (0,1) <- channel 1
  REQUIRE(out[2] == 3.0);  // (1,0) <- channel 2
  REQUIRE(out[3] == 4.0);  // (1,1) <- channel 3

  Rng rng(9);
  Tensor t = Tensor::randn({8, 3, 5}, rng);
  Tensor r1 = pixel_shuffle(t, 1);
  for (size_t i = 0; i < t.size(); ++i) REQUIRE(r1[i] == t[i]);
  Tensor big = pixel_shuffle(t, 2);
  REQUIRE(big.shape() == Shape{2, 6, 10});
  Tensor back = pixel_unshuffle(big, 2);
  for (size_t i = 0; i < t.size(); ++i) REQUIRE(back[i] == t[i]);

  REQUIRE_THROWS_AS(pixel_shuffle(Tensor({3, 2, 2}), 2), ShapeError);

  PixelShuffleLayer layer(2);
  Batch x{Tensor::randn({4, 3, 3}, rng)};
  check_layer_gradients(layer, x, 1e-8, 19);
}

TEST_CASE("activations") {
  REQUIRE(elu(-1.0) == Catch::Approx(std::exp(-1.0) - 1.0));
  REQUIRE(elu(2.0) == 2.0);
  REQUIRE(elu(0.0) == 0.0);
  REQUIRE(relu(-3.0) == 0.0);
  REQUIRE(relu(3.0) == 3.0);

  Rng rng(106);
  ReluLayer r;
  Batch x{Tensor::randn({2, 4, 4}, rng)};
  check_layer_gradients(r, x, 1e-6, 23);
  EluLayer e;
  Batch y{Tensor::randn({2, 4, 4}, rng)};
  check_layer_gradients(e, y, 1e-6, 29);
}

TEST_CASE("adam single step matches closed form") {
  // oracle: mhat = 2, vhat = 4 after one step; update = lr*2/(2+1e-8)
  Parameter p("w", Tensor({1}));
  p.grad[0] = 2.0;
  adam_step(p, AdamConfig{0.001}, 1);
  REQUIRE(p.value[0] == Catch::Approx(-0.0009999999950000007).margin(1e-15));
}

TEST_CASE("adam edge behavior") {
  Parameter p("w", Tensor({2}, 1.0));
  adam_step(p, AdamConfig{}, 1);  // zero gradient: no movement
  REQUIRE(p.value[0] == 1.0);

  p.grad[0] = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(adam_step(p, AdamConfig{}, 2), TrainingError);

  // Constant positive gradient keeps pushing the value down.
  Parameter q("w", Tensor({1}));
  AdamConfig cfg{0.01};
  double prev = 0.0;
  for (int t = 1; t <= 5; ++t) {
    q.grad[0] = 1.0;
    adam_step(q, cfg, t);
    REQUIRE(q.value[0] < prev);
    prev = q.value[0];
  }
}

TEST_CASE("sequential chain gradients (conv-bn-relu-pool)") {
  Rng rng(107);
  Sequential seq;
  seq.add(std::make_unique<Conv2dLayer>("c", 2, 4, 3, 1, 1, false, rng));
  seq.add(std::make_unique<BatchNorm2dLayer>("b", 4));
  seq.add(std::make_unique<ReluLayer>());
  seq.add(std::make_unique<MaxPool2dLayer>());
  Batch x{Tensor::randn({2, 6, 6}, rng), Tensor::randn({2, 6, 6}, rng)};
  check_layer_gradients(seq, x, 5e-6, 31);
}
