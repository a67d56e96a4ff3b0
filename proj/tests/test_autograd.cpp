#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "vtg/core/random.hpp"
#include "vtg/nn/layers.hpp"
#include "vtg/nn/ops.hpp"

using namespace vtg;
using namespace vtg::nn;
using vtg::testing::grad_check;

namespace {

Var<double> rand_param(Shape shape, uint32_t lane, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  RandomStream rng(3, Purpose::test, 0, lane);
  for (auto& v : t.storage()) v = scale * (2 * rng.uniform() - 1);
  return parameter(std::move(t));
}

Tensor<double> rand_tensor(Shape shape, uint32_t lane) {
  Tensor<double> t(std::move(shape));
  RandomStream rng(4, Purpose::test, 0, lane);
  for (auto& v : t.storage()) v = 2 * rng.uniform() - 1;
  return t;
}

// Projects any output onto a fixed random direction so every element matters.
Var<double> probe(const Var<double>& y, uint32_t lane = 99) {
  return sum(mul_const(y, rand_tensor(y->value.shape(), lane)));
}

constexpr double kTol = 1e-5;

}  // namespace

TEST_CASE("elementwise ops") {
  auto a = rand_param({2, 3, 4}, 1);
  auto b = rand_param({2, 3, 4}, 2);
  CHECK(grad_check([&] { return probe(add(a, b)); }, {a, b}).max_rel_error < kTol);
  CHECK(grad_check([&] { return probe(sub(a, b)); }, {a, b}).max_rel_error < kTol);
  CHECK(grad_check([&] { return probe(mul(a, b)); }, {a, b}).max_rel_error < kTol);
  CHECK(grad_check([&] { return probe(scale(a, 0.3)); }, {a}).max_rel_error < kTol);
  CHECK(grad_check([&] { return probe(silu(a)); }, {a}).max_rel_error < kTol);
  CHECK(grad_check([&] { return probe(gelu(a)); }, {a}).max_rel_error < kTol);
  CHECK(grad_check([&] { return probe(relu(a)); }, {a}).max_rel_error < kTol);
  CHECK(grad_check([&] { return probe(softmax_last(a)); }, {a}).max_rel_error < kTol);
  CHECK(grad_check([&] { return mean(mul(a, a)); }, {a}).max_rel_error < kTol);
}

TEST_CASE("conv2d across strides and paddings") {
  for (auto [k, stride, pad] : {std::tuple{3, 1, 1}, std::tuple{3, 2, 1}, std::tuple{1, 1, 0}, std::tuple{2, 2, 0}}) {
    CAPTURE(k);
    CAPTURE(stride);
    auto x = rand_param({2, 3, 6, 6}, 3);
    auto w = rand_param({4, 3, k, k}, 4);
    auto b = rand_param({4}, 5);
    CHECK(grad_check([&] { return probe(conv2d(x, w, b, stride, pad)); }, {x, w, b}).max_rel_error < kTol);
  }
}

TEST_CASE("conv2d matches a direct convolution") {
  auto x = rand_param({1, 2, 5, 5}, 6);
  auto w = rand_param({3, 2, 3, 3}, 7);
  auto y = conv2d<double>(x, w, nullptr, 2, 1);
  REQUIRE(y->value.shape() == Shape{1, 3, 3, 3});
  for (int o = 0; o < 3; ++o)
    for (int oy = 0; oy < 3; ++oy)
      for (int ox = 0; ox < 3; ++ox) {
        double acc = 0;
        for (int c = 0; c < 2; ++c)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
              if (iy < 0 || iy >= 5 || ix < 0 || ix >= 5) continue;
              acc += x->value.at(0, c, iy, ix) * w->value.at(o, c, ky, kx);
            }
        CHECK(y->value.at(0, o, oy, ox) == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("linear, bmm and attention plumbing") {
  auto x = rand_param({2, 5, 4}, 8);
  auto w = rand_param({3, 4}, 9);
  auto b = rand_param({3}, 10);
  CHECK(grad_check([&] { return probe(linear(x, w, b)); }, {x, w, b}).max_rel_error < kTol);

  auto p = rand_param({2, 3, 4}, 11);
  auto q = rand_param({2, 4, 5}, 12);
  auto qt = rand_param({2, 5, 4}, 13);
  auto pt = rand_param({2, 4, 3}, 14);
  CHECK(grad_check([&] { return probe(bmm(p, q, false, false)); }, {p, q}).max_rel_error < kTol);
  CHECK(grad_check([&] { return probe(bmm(p, qt, false, true)); }, {p, qt}).max_rel_error < kTol);
  CHECK(grad_check([&] { return probe(bmm(pt, q, true, false)); }, {pt, q}).max_rel_error < kTol);
  CHECK(grad_check([&] { return probe(bmm(pt, qt, true, true)); }, {pt, qt}).max_rel_error < kTol);

  auto t = rand_param({2, 6, 8}, 15);
  CHECK(grad_check([&] { return probe(merge_heads(split_heads(t, 2), 2)); }, {t}).max_rel_error < kTol);
  CHECK(grad_check([&] { return probe(split_heads(t, 4)); }, {t}).max_rel_error < kTol);
}

TEST_CASE("normalisation layers") {
  auto x = rand_param({2, 4, 3, 3}, 16, 2.0);
  auto g = rand_param({4}, 17);
  auto b = rand_param({4}, 18);
  CHECK(grad_check([&] { return probe(group_norm(x, 2, g, b)); }, {x, g, b}).max_rel_error < 1e-5);
  auto t = rand_param({3, 5, 6}, 19, 2.0);
  auto lg = rand_param({6}, 20);
  auto lb = rand_param({6}, 21);
  CHECK(grad_check([&] { return probe(layer_norm(t, lg, lb)); }, {t, lg, lb}).max_rel_error < 1e-5);
  auto r = rand_param({3, 7}, 22);
  CHECK(grad_check([&] { return probe(l2_normalize_rows(r)); }, {r}).max_rel_error < kTol);
}

TEST_CASE("spatial reshaping ops") {
  auto x = rand_param({2, 3, 4, 4}, 23);
  auto v = rand_param({2, 3}, 24);
  auto y = rand_param({2, 2, 4, 4}, 25);
  CHECK(grad_check([&] { return probe(max_pool2x2(x)); }, {x}).max_rel_error < kTol);
  CHECK(grad_check([&] { return probe(upsample_nearest2x(x)); }, {x}).max_rel_error < kTol);
  CHECK(grad_check([&] { return probe(global_avg_pool(x)); }, {x}).max_rel_error < kTol);
  CHECK(grad_check([&] { return probe(concat_channels(x, y)); }, {x, y}).max_rel_error < kTol);
  CHECK(grad_check([&] { return probe(add_channel_vector(x, v)); }, {x, v}).max_rel_error < kTol);
  CHECK(grad_check([&] { return probe(tokens_to_nchw(nchw_to_tokens(x), 4, 4)); }, {x}).max_rel_error < kTol);
  CHECK(grad_check([&] { return probe(nchw_to_tokens(x)); }, {x}).max_rel_error < kTol);
}

TEST_CASE("losses") {
  auto pred = rand_param({2, 3, 4, 4}, 26);
  auto target = rand_tensor({2, 3, 4, 4}, 27);
  Tensor<double> mask({2, 1, 4, 4}, 1.0);
  for (int i = 0; i < 10; ++i) mask[i * 3] = 0.0;
  CHECK(grad_check([&] { return masked_mse(pred, target, Tensor<double>()); }, {pred}).max_rel_error < kTol);
  CHECK(grad_check([&] { return masked_mse(pred, target, mask); }, {pred}).max_rel_error < kTol);

  auto a = rand_param({3, 5}, 28);
  auto p = rand_param({3, 5}, 29);
  auto bank = rand_tensor({6, 5}, 30);
  const std::vector<int64_t> slots{4, 0, 2};
  CHECK(grad_check([&] { return sum(infonce_slots(l2_normalize_rows(a), l2_normalize_rows(p), bank, slots, 0.5)); },
                   {a, p})
            .max_rel_error < kTol);
}

TEST_CASE("backward accumulates through shared subgraphs") {
  auto a = rand_param({4}, 31);
  auto loss = sum(mul(a, a));
  backward(loss);
  for (int i = 0; i < 4; ++i) CHECK(a->grad[i] == doctest::Approx(2 * a->value[i]));
}

TEST_CASE("no-grad mode records nothing") {
  auto a = rand_param({4}, 32);
  NoGradGuard guard;
  auto y = mul(a, a);
  CHECK_FALSE(y->requires_grad);
  CHECK(y->parents.empty());
}
