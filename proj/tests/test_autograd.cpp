#include <functional>

#include "doctest.h"
#include "lgvi/nn.hpp"

using namespace lgvi;

namespace {

using D = double;

// Central finite differences against analytic gradients for every element of
// every parameter. Loss function must rebuild the graph on each call.
double max_rel_error(std::vector<Var<D>> params, const std::function<Var<D>()>& loss_fn,
                     double h = 1e-5) {
  auto loss = loss_fn();
  for (auto& p : params) p->zero_grad();
  backward(loss);

  double worst = 0;
  for (auto& p : params) {
    p->ensure_grad();
    for (int64_t i = 0; i < p->value.numel(); ++i) {
      double orig = p->value.data[i];
      p->value.data[i] = orig + h;
      double fp = loss_fn()->value.data[0];
      p->value.data[i] = orig - h;
      double fm = loss_fn()->value.data[0];
      p->value.data[i] = orig;
      double fd = (fp - fm) / (2 * h);
      double an = p->grad.data[i];
      double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
  }
  return worst;
}

Var<D> rand_var(Shape shape, uint64_t seed, double stddev = 1.0) {
  Rng rng(seed);
  return make_leaf(Tensor<D>::randn(std::move(shape), rng, stddev), true);
}

Tensor<D> rand_tensor(Shape shape, uint64_t seed) {
  Rng rng(seed);
  return Tensor<D>::randn(std::move(shape), rng);
}

}  // namespace

TEST_CASE("elementwise ops: values and gradients") {
  auto a = rand_var({4, 5}, 1);
  auto b = rand_var({4, 5}, 2);
  Tensor<D> proj = rand_tensor({4, 5}, 3);

  CHECK(max_rel_error({a, b}, [&] { return dot_const(add(a, b), proj); }) < 1e-6);
  CHECK(max_rel_error({a, b}, [&] { return dot_const(sub(a, b), proj); }) < 1e-6);
  CHECK(max_rel_error({a, b}, [&] { return dot_const(mul(a, b), proj); }) < 1e-6);
  CHECK(max_rel_error({a}, [&] { return dot_const(scale(a, -2.5), proj); }) < 1e-6);
  CHECK(max_rel_error({a}, [&] { return dot_const(silu(a), proj); }) < 1e-6);
  CHECK(max_rel_error({a}, [&] { return dot_const(gelu(a), proj); }) < 1e-6);
  CHECK(max_rel_error({a}, [&] { return dot_const(sigmoid(a), proj); }) < 1e-6);
  CHECK(max_rel_error({a}, [&] { return dot_const(softmax_last(a), proj); }) < 1e-6);
}

TEST_CASE("matmul and linear gradients") {
  auto a = rand_var({3, 4}, 10);
  auto w = rand_var({4, 6}, 11);
  auto bias = rand_var({6}, 12);
  Tensor<D> proj = rand_tensor({3, 6}, 13);

  CHECK(max_rel_error({a, w}, [&] { return dot_const(matmul(a, w), proj); }) < 1e-6);
  CHECK(max_rel_error({a, w, bias}, [&] { return dot_const(linear(a, w, bias), proj); }) < 1e-6);
}

TEST_CASE("bmm matches matmul and has correct gradients") {
  auto a = rand_var({2, 3, 4}, 20);
  auto b = rand_var({2, 4, 5}, 21);
  auto bt = rand_var({2, 5, 4}, 22);
  Tensor<D> proj = rand_tensor({2, 3, 5}, 23);

  // value cross-check against matmul per batch item
  auto y = bmm(a, b);
  for (int i = 0; i < 2; ++i) {
    auto ai = slice(a, 0, i, i + 1);
    auto bi = slice(b, 0, i, i + 1);
    auto mi = matmul(reshape(ai, {3, 4}), reshape(bi, {4, 5}));
    for (int j = 0; j < 15; ++j)
      CHECK(y->value.data[i * 15 + j] == doctest::Approx(mi->value.data[j]).epsilon(1e-12));
  }

  CHECK(max_rel_error({a, b}, [&] { return dot_const(bmm(a, b), proj); }) < 1e-6);
  CHECK(max_rel_error({a, bt}, [&] { return dot_const(bmm(a, bt, true), proj); }) < 1e-6);
}

TEST_CASE("permute is an exact transpose with exact inverse") {
  auto a = rand_var({2, 3, 4, 5}, 30);
  auto p = permute(a, {2, 0, 3, 1});
  CHECK(p->value.shape == Shape{4, 2, 5, 3});
  auto back = permute(p, {1, 3, 0, 2});
  CHECK(back->value.shape == a->value.shape);
  CHECK(back->value.data == a->value.data);

  Tensor<D> proj = rand_tensor({4, 2, 5, 3}, 31);
  CHECK(max_rel_error({a}, [&] { return dot_const(permute(a, {2, 0, 3, 1}), proj); }) < 1e-6);
}

TEST_CASE("concat and slice gradients") {
  auto a = rand_var({2, 3, 4}, 40);
  auto b = rand_var({2, 2, 4}, 41);
  Tensor<D> proj = rand_tensor({2, 5, 4}, 42);
  CHECK(max_rel_error({a, b}, [&] { return dot_const(concat(a, b, 1), proj); }) < 1e-6);

  Tensor<D> proj2 = rand_tensor({2, 2, 4}, 43);
  CHECK(max_rel_error({a}, [&] { return dot_const(slice(a, 1, 1, 3), proj2); }) < 1e-6);
}

TEST_CASE("losses: values and gradients") {
  auto a = rand_var({3, 4}, 50);
  auto b = rand_var({3, 4}, 51);

  SUBCASE("mse") {
    auto z = make_leaf(Tensor<D>::zeros({2, 2}), true);
    auto half = make_leaf(Tensor<D>::full({2, 2}, 0.5), false);
    CHECK(mse_mean(z, half)->value.data[0] == doctest::Approx(0.25));
    CHECK(max_rel_error({a, b}, [&] { return mse_mean(a, b); }) < 1e-6);
  }

  SUBCASE("bce with logits") {
    Tensor<D> targets({3, 4});
    Rng rng(52);
    for (auto& t : targets.data) t = rng.uniform() < 0.5 ? 0.0 : 1.0;
    // logits = 0 -> ln 2 regardless of targets
    auto zero = make_leaf(Tensor<D>::zeros({3, 4}), true);
    CHECK(bce_logits_mean(zero, targets)->value.data[0] == doctest::Approx(std::log(2.0)));
    CHECK(max_rel_error({a}, [&] { return bce_logits_mean(a, targets); }) < 1e-6);
  }

  SUBCASE("cross entropy uniform logits gives ln V") {
    auto logits = make_leaf(Tensor<D>::zeros({5, 16}), true);
    std::vector<int> ids = {0, 3, 7, 15, 2};
    std::vector<int> mask = {1, 1, 1, 1, 1};
    CHECK(cross_entropy_rows(logits, ids, mask)->value.data[0] ==
          doctest::Approx(std::log(16.0)));
  }

  SUBCASE("cross entropy respects mask and has correct gradients") {
    auto logits = rand_var({5, 8}, 53);
    std::vector<int> ids = {1, 2, 3, 4, 5};
    std::vector<int> mask = {1, 0, 1, 1, 0};
    CHECK(max_rel_error({logits}, [&] { return cross_entropy_rows(logits, ids, mask); }) < 1e-6);
    // shift invariance per row
    auto shifted = add_scalar(logits, 3.7);
    CHECK(cross_entropy_rows(shifted, ids, mask)->value.data[0] ==
          doctest::Approx(cross_entropy_rows(logits, ids, mask)->value.data[0]));
  }
}

TEST_CASE("embedding lookup and scatter gradient") {
  auto table = rand_var({10, 4}, 60);
  std::vector<int> ids = {3, 3, 7};
  Tensor<D> proj = rand_tensor({3, 4}, 61);
  auto y = embedding(table, ids);
  for (int j = 0; j < 4; ++j) {
    CHECK(y->value.data[j] == table->value.data[3 * 4 + j]);
    CHECK(y->value.data[4 + j] == table->value.data[3 * 4 + j]);
    CHECK(y->value.data[8 + j] == table->value.data[7 * 4 + j]);
  }
  CHECK(max_rel_error({table}, [&] { return dot_const(embedding(table, ids), proj); }) < 1e-6);
}

TEST_CASE("conv2d value matches a naive direct convolution") {
  Rng rng(70);
  auto x = rand_var({2, 3, 6, 7}, 71);
  auto w = rand_var({4, 3, 3, 3}, 72);
  auto b = rand_var({4}, 73);
  auto y = conv2d(x, w, b, 1, 1);
  CHECK(y->value.shape == Shape{2, 4, 6, 7});

  // independent direct accumulation
  for (int n = 0; n < 2; ++n)
    for (int o = 0; o < 4; ++o)
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 7; ++j) {
          double acc = b->value.data[o];
          for (int c = 0; c < 3; ++c)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                int iy = i - 1 + ky, ix = j - 1 + kx;
                if (iy < 0 || iy >= 6 || ix < 0 || ix >= 7) continue;
                acc += x->value.data[((n * 3 + c) * 6 + iy) * 7 + ix] *
                       w->value.data[((o * 3 + c) * 3 + ky) * 3 + kx];
              }
          CHECK(y->value.data[((n * 4 + o) * 6 + i) * 7 + j] ==
                doctest::Approx(acc).epsilon(1e-10));
        }
}

TEST_CASE("conv2d gradients (stride 1 and stride 2)") {
  auto x = rand_var({2, 3, 6, 6}, 80);
  auto w = rand_var({4, 3, 3, 3}, 81);
  auto b = rand_var({4}, 82);

  Tensor<D> proj1 = rand_tensor({2, 4, 6, 6}, 83);
  CHECK(max_rel_error({x, w, b}, [&] { return dot_const(conv2d(x, w, b, 1, 1), proj1); }) < 1e-6);

  Tensor<D> proj2 = rand_tensor({2, 4, 3, 3}, 84);
  CHECK(max_rel_error({x, w, b}, [&] { return dot_const(conv2d(x, w, b, 2, 1), proj2); }) < 1e-6);
}

TEST_CASE("upsample and avg_pool gradients") {
  auto x = rand_var({2, 3, 4, 4}, 90);
  Tensor<D> proj = rand_tensor({2, 3, 8, 8}, 91);
  CHECK(max_rel_error({x}, [&] { return dot_const(upsample_nearest2x(x), proj); }) < 1e-6);

  Tensor<D> proj2 = rand_tensor({2, 3, 2, 2}, 92);
  CHECK(max_rel_error({x}, [&] { return dot_const(avg_pool2d(x, 2), proj2); }) < 1e-6);
}

TEST_CASE("group_norm: statistics and gradients") {
  auto x = rand_var({2, 8, 3, 3}, 100);
  auto gamma = rand_var({8}, 101);
  auto beta = rand_var({8}, 102);

  auto y = group_norm(x, make_leaf(Tensor<D>::full({8}, 1.0)), make_leaf(Tensor<D>::zeros({8})),
                      4);
  // per (sample, group) mean 0, var 1
  for (int n = 0; n < 2; ++n)
    for (int g = 0; g < 4; ++g) {
      double mean = 0, var = 0;
      for (int c = g * 2; c < g * 2 + 2; ++c)
        for (int i = 0; i < 9; ++i) mean += y->value.data[((n * 8 + c) * 9) + i];
      mean /= 18;
      for (int c = g * 2; c < g * 2 + 2; ++c)
        for (int i = 0; i < 9; ++i) {
          double d = y->value.data[((n * 8 + c) * 9) + i] - mean;
          var += d * d;
        }
      var /= 18;
      CHECK(std::abs(mean) < 1e-9);
      CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }

  Tensor<D> proj = rand_tensor({2, 8, 3, 3}, 103);
  CHECK(max_rel_error({x, gamma, beta},
                      [&] { return dot_const(group_norm(x, gamma, beta, 4), proj); }) < 1e-6);
}

TEST_CASE("layer_norm gradients") {
  auto x = rand_var({5, 8}, 110);
  auto gamma = rand_var({8}, 111);
  auto beta = rand_var({8}, 112);
  Tensor<D> proj = rand_tensor({5, 8}, 113);
  CHECK(max_rel_error({x, gamma, beta},
                      [&] { return dot_const(layer_norm(x, gamma, beta), proj); }) < 1e-6);
}

TEST_CASE("add_time_bias, scale_shift_time and temporal_conv gradients") {
  const int64_t B = 2, T = 3;
  auto x = rand_var({B * T, 4, 2, 2}, 120);
  auto tb = rand_var({B, 4}, 121);
  Tensor<D> proj = rand_tensor({B * T, 4, 2, 2}, 122);
  CHECK(max_rel_error({x, tb}, [&] { return dot_const(add_time_bias(x, tb, T), proj); }) < 1e-6);

  auto ss = rand_var({B, 8}, 126, 0.3);
  CHECK(max_rel_error({x, ss}, [&] { return dot_const(scale_shift_time(x, ss, T), proj); }) <
        1e-6);

  auto w = rand_var({5, 4, 3}, 123);
  auto bias = rand_var({5}, 124);
  Tensor<D> proj2 = rand_tensor({B * T, 5, 2, 2}, 125);
  CHECK(max_rel_error({x, w, bias},
                      [&] { return dot_const(temporal_conv(x, w, bias, T), proj2); }) < 1e-6);
}

TEST_CASE("temporal_conv with T=1 degenerates to a 1x1 frame op") {
  auto x = rand_var({2, 3, 2, 2}, 130);
  auto w = rand_var({3, 3, 3}, 131);
  auto b = rand_var({3}, 132);
  auto y = temporal_conv(x, w, b, 1);
  // only the central tap contributes
  for (int n = 0; n < 2; ++n)
    for (int o = 0; o < 3; ++o)
      for (int i = 0; i < 4; ++i) {
        double acc = b->value.data[o];
        for (int c = 0; c < 3; ++c)
          acc += w->value.data[(o * 3 + c) * 3 + 1] * x->value.data[(n * 3 + c) * 4 + i];
        CHECK(y->value.data[(n * 3 + o) * 4 + i] == doctest::Approx(acc).epsilon(1e-10));
      }
}

TEST_CASE("attention composites: gradients flow") {
  auto x = rand_var({2, 4, 8}, 140, 0.5);
  auto wq = rand_var({8, 8}, 141, 0.35);
  auto wk = rand_var({8, 8}, 142, 0.35);
  auto wv = rand_var({8, 8}, 143, 0.35);
  Tensor<D> proj = rand_tensor({2, 4, 8}, 144);

  CHECK(max_rel_error({x, wq, wk, wv}, [&] {
          return dot_const(attention_batched(x, x, wq, wk, wv, 2), proj);
        }) < 1e-6);

  auto ctx = rand_var({5, 6}, 145, 0.5);
  auto wk2 = rand_var({6, 8}, 146, 0.4);
  auto wv2 = rand_var({6, 8}, 147, 0.4);
  CHECK(max_rel_error({x, ctx, wq, wk2, wv2}, [&] {
          return dot_const(attention_shared_kv(x, ctx, wq, wk2, wv2, 2), proj);
        }) < 1e-6);
}

TEST_CASE("causal attention blocks future positions") {
  auto x = rand_var({1, 5, 8}, 150, 0.5);
  auto wq = rand_var({8, 8}, 151, 0.35);
  auto wk = rand_var({8, 8}, 152, 0.35);
  auto wv = rand_var({8, 8}, 153, 0.35);
  auto y1 = attention_batched(x, x, wq, wk, wv, 2, true);

  // perturb the last position; earlier outputs must be bit-identical
  auto x2v = x->value;
  for (int j = 0; j < 8; ++j) x2v.data[4 * 8 + j] += 1.0;
  auto x2 = make_leaf(x2v, true);
  auto y2 = attention_batched(x2, x2, wq, wk, wv, 2, true);
  for (int i = 0; i < 4 * 8; ++i) CHECK(y1->value.data[i] == y2->value.data[i]);
}

TEST_CASE("no-grad mode builds detached nodes") {
  auto a = rand_var({2, 2}, 160);
  {
    NoGradGuard ng;
    auto y = add(a, a);
    CHECK_FALSE(y->requires_grad);
    CHECK(y->parents.empty());
  }
  auto y = add(a, a);
  CHECK(y->requires_grad);
}

TEST_CASE("backward accumulates across shared subgraphs") {
  auto a = make_leaf(Tensor<D>::full({1}, 3.0), true);
  auto y = mul(a, a);  // y = a^2, dy/da = 2a = 6
  backward(sum_all(y));
  CHECK(a->grad.data[0] == doctest::Approx(6.0));
}
