#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dcpt/nn/graph.hpp"
#include "dcpt/nn/optim.hpp"

using namespace dcpt::nn;

namespace {

Tensor<double> random_tensor(std::vector<int> shape, std::mt19937_64& rng,
                             double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> u(-scale, scale);
  for (long i = 0; i < t.numel(); ++i) t.data[i] = u(rng);
  return t;
}

// central finite differences of a scalar-valued graph w.r.t. one parameter
template <typename BuildFn>
void check_grad_fd(Var<double> param, BuildFn build, double h = 1e-5,
                   double rel_tol = 1e-6, int max_checks = 40) {
  param->grad = Tensor<double>{};  // drop accumulation from earlier checks
  auto loss = build();
  backward(loss);
  REQUIRE(param->grad.numel() == param->val.numel());
  Tensor<double> analytic = param->grad;
  param->grad = Tensor<double>{};

  const long n = param->val.numel();
  const long step = std::max<long>(1, n / max_checks);
  for (long i = 0; i < n; i += step) {
    const double orig = param->val.data[i];
    param->val.data[i] = orig + h;
    const double lp = build()->val.data[0];
    param->val.data[i] = orig - h;
    const double lm = build()->val.data[0];
    param->val.data[i] = orig;
    const double fd = (lp - lm) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(analytic.data[i]), 1e-8});
    CHECK(std::abs(fd - analytic.data[i]) / denom < rel_tol);
  }
}

}  // namespace

TEST_CASE("conv2d forward matches direct convolution") {
  std::mt19937_64 rng(7);
  auto x = constant(random_tensor({1, 2, 5, 5}, rng));
  auto w = parameter(random_tensor({3, 2, 3, 3}, rng));
  auto b = parameter(random_tensor({3}, rng));
  auto y = conv2d(x, w, b);
  REQUIRE(y->val.shape == std::vector<int>({1, 3, 5, 5}));
  // direct evaluation at one position
  const int oc = 1, oh = 2, ow = 3;
  double acc = b->val.data[oc];
  for (int c = 0; c < 2; ++c)
    for (int ki = 0; ki < 3; ++ki)
      for (int kj = 0; kj < 3; ++kj) {
        const int ih = oh - 1 + ki, iw = ow - 1 + kj;
        if (ih < 0 || ih >= 5 || iw < 0 || iw >= 5) continue;
        acc += x->val.data[(c * 5 + ih) * 5 + iw] *
               w->val.data[((oc * 2 + c) * 3 + ki) * 3 + kj];
      }
  CHECK(std::abs(y->val.data[(oc * 5 + oh) * 5 + ow] - acc) < 1e-12);
}

TEST_CASE("conv2d gradients match finite differences") {
  std::mt19937_64 rng(11);
  auto x = parameter(random_tensor({2, 2, 6, 6}, rng));
  auto w = parameter(random_tensor({3, 2, 3, 3}, rng));
  auto b = parameter(random_tensor({3}, rng));
  Tensor<double> target = random_tensor({2, 3, 6, 6}, rng);
  auto build = [&] { return mse_loss(conv2d(x, w, b), target); };
  check_grad_fd(w, build);
  check_grad_fd(b, build);
  check_grad_fd(x, build);
}

TEST_CASE("strided conv2d gradient") {
  std::mt19937_64 rng(13);
  auto x = parameter(random_tensor({1, 2, 8, 8}, rng));
  auto w = parameter(random_tensor({4, 2, 3, 3}, rng));
  auto b = parameter(random_tensor({4}, rng));
  Tensor<double> target = random_tensor({1, 4, 4, 4}, rng);
  auto build = [&] { return mse_loss(conv2d(x, w, b, 2), target); };
  check_grad_fd(x, build);
  check_grad_fd(w, build);
}

TEST_CASE("layer norm gradients match finite differences") {
  std::mt19937_64 rng(17);
  auto x = parameter(random_tensor({2, 4, 3, 3}, rng));
  auto g = parameter(random_tensor({4}, rng, 0.5));
  auto b = parameter(random_tensor({4}, rng, 0.5));
  g->val.data += 1.0;
  Tensor<double> target = random_tensor({2, 4, 3, 3}, rng);
  auto build = [&] { return mse_loss(layer_norm_channels(x, g, b), target); };
  check_grad_fd(x, build, 1e-6, 1e-4);
  check_grad_fd(g, build, 1e-6, 1e-4);
  check_grad_fd(b, build, 1e-6, 1e-4);
}

TEST_CASE("pooling and linear gradients") {
  std::mt19937_64 rng(19);
  auto x = parameter(random_tensor({2, 3, 4, 4}, rng));
  auto w = parameter(random_tensor({5, 3}, rng));
  auto b = parameter(random_tensor({5}, rng));
  Tensor<double> target = random_tensor({2, 5}, rng);
  auto build = [&] {
    return mse_loss(linear(global_avg_pool(avg_pool2d(x, 2)), w, b), target);
  };
  check_grad_fd(x, build);
  check_grad_fd(w, build);
}

TEST_CASE("scale_by gradient equals inner product") {
  std::mt19937_64 rng(23);
  auto x = parameter(random_tensor({1, 2, 4, 4}, rng));
  auto s = parameter(Tensor<double>::scalar(1.3));
  Tensor<double> target = random_tensor({1, 2, 4, 4}, rng);
  auto loss = l1_loss(scale_by(x, s), target);
  backward(loss);
  // dL/ds == <x, dL/dy> where dL/dy = sign(s*x - t)/n
  double expect = 0;
  const long n = x->val.numel();
  for (long i = 0; i < n; ++i) {
    const double d = s->val.data[0] * x->val.data[i] - target.data[i];
    expect += x->val.data[i] * ((d > 0) - (d < 0)) / double(n);
  }
  CHECK(std::abs(s->grad.data[0] - expect) < 1e-12);
  s->grad = Tensor<double>{};
  x->grad = Tensor<double>{};
  check_grad_fd(s, [&] { return mse_loss(scale_by(x, s), target); });
}

TEST_CASE("diamond graphs accumulate gradients once per path") {
  auto x = parameter(Tensor<double>::scalar(2.0));
  auto y = add(x, x);  // y = 2x
  Tensor<double> target = Tensor<double>::scalar(0.0);
  auto loss = l1_loss(y, target);  // |2x|
  backward(loss);
  CHECK(loss->val.data[0] == doctest::Approx(4.0));
  CHECK(x->grad.data[0] == doctest::Approx(2.0));
}

TEST_CASE("no gradient flows into frozen parameters") {
  std::mt19937_64 rng(29);
  auto x = parameter(random_tensor({1, 2, 4, 4}, rng));
  auto w = parameter(random_tensor({2, 2, 3, 3}, rng));
  w->requires_grad = false;
  w->needs_grad = false;
  Tensor<double> target = random_tensor({1, 2, 4, 4}, rng);
  auto loss = l1_loss(conv2d(x, w, parameter(Tensor<double>({2}))), target);
  backward(loss);
  CHECK(w->grad.numel() == 0);
  CHECK(x->grad.numel() == x->val.numel());  // grads still flow through
}

TEST_CASE("adamw minimizes a quadratic") {
  auto x = parameter(Tensor<double>::scalar(5.0));
  AdamW<double> opt({x}, 0.1);
  Tensor<double> target = Tensor<double>::scalar(1.0);
  for (int i = 0; i < 200; ++i) {
    auto loss = l1_loss(x, target);
    backward(loss);
    opt.step();
  }
  CHECK(std::abs(x->val.data[0] - 1.0) < 0.2);
}
