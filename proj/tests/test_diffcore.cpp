#include <cmath>

#include "cardiac/gradcheck.hpp"
#include "cardiac/tensor.hpp"
#include "doctest.h"

using namespace cardiac;
using D = double;

namespace {

Tensor<D> randn(std::vector<int> dims, std::mt19937_64& rng) {
  Tensor<D> t(std::move(dims));
  for (size_t i = 0; i < t.size(); ++i) t.data()[i] = gaussian(rng);
  return t;
}

}  // namespace

TEST_CASE("matmul identity and selector") {
  auto i2 = Tensor<D>::from({2, 2}, {1, 0, 0, 1});
  auto m = Tensor<D>::from({2, 2}, {1, 2, 3, 4});
  auto r = matmul(i2, m);
  for (int i = 0; i < 4; ++i) CHECK(r.data()[i] == m.data()[i]);

  auto sel = Tensor<D>::from({1, 2}, {1, 0});
  auto v = Tensor<D>::from({2, 1}, {7.5, -3.0});
  CHECK(matmul(sel, v).item() == 7.5);
}

TEST_CASE("matmul shape errors") {
  auto a = Tensor<D>::zeros({3, 4});
  auto b = Tensor<D>::zeros({3, 2});
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("matmul gradcheck") {
  for (uint64_t s = 0; s < 5; ++s) {
    std::mt19937_64 rng(splitmix64(100 + s));
    auto rep = gradcheck(
        "matmul", [](std::vector<Tensor<D>>& in) { return sum(matmul(in[0], in[1])); },
        {randn({3, 4}, rng), randn({4, 2}, rng)});
    CHECK(rep.max_rel_error <= 1e-4);
  }
}

TEST_CASE("conv2d zero input gives zero output") {
  std::mt19937_64 rng(7);
  auto k = randn({4, 2, 3, 3}, rng);
  auto out = conv2d(Tensor<D>::zeros({2, 6, 6}), k, 1, 1);
  for (size_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == 0.0);
}

TEST_CASE("conv2d identity kernel reproduces input") {
  std::mt19937_64 rng(9);
  auto img = randn({1, 5, 5}, rng);
  auto k = Tensor<D>::zeros({1, 1, 3, 3});
  k.data()[4] = 1.0;  // center tap
  auto out = conv2d(img, k, 1, 1);
  REQUIRE(out.dims() == img.dims());
  for (size_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == doctest::Approx(img.data()[i]));
}

TEST_CASE("conv2d output extents") {
  auto img = Tensor<D>::zeros({1, 8, 8});
  auto k = Tensor<D>::zeros({2, 1, 3, 3});
  CHECK(conv2d(img, k, 2, 1).dims() == std::vector<int>{2, 4, 4});
  CHECK(conv2d(img, k, 1, 0).dims() == std::vector<int>{2, 6, 6});
  CHECK_THROWS_AS(conv2d(Tensor<D>::zeros({1, 2, 2}), k, 2, 0), ShapeError);
}

TEST_CASE("conv2d gradcheck") {
  for (uint64_t s = 0; s < 5; ++s) {
    std::mt19937_64 rng(splitmix64(200 + s));
    auto rep = gradcheck(
        "conv2d", [](std::vector<Tensor<D>>& in) { return sum(conv2d(in[0], in[1], 1, 1)); },
        {randn({2, 8, 8}, rng), randn({2, 2, 3, 3}, rng)});
    CHECK(rep.max_rel_error <= 1e-4);
  }
}

TEST_CASE("softmax basics") {
  auto r = softmax(Tensor<D>::from({2}, {0, 0}));
  CHECK(r.data()[0] == doctest::Approx(0.5));
  CHECK(r.data()[1] == doctest::Approx(0.5));

  for (double c : {-5.0, 0.0, 3.0, 1000.0}) {
    auto u = softmax(Tensor<D>::full({4}, c));
    for (int i = 0; i < 4; ++i) CHECK(u.data()[i] == doctest::Approx(0.25));
  }
}

TEST_CASE("softmax sums to one and shift invariance") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = randn({8}, rng);
    auto p = softmax(x);
    double total = 0;
    for (size_t i = 0; i < p.size(); ++i) {
      CHECK(p.data()[i] > 0.0);
      total += p.data()[i];
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
    auto shifted = add_scalar(x, 3.7);
    auto p2 = softmax(shifted);
    for (size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p.data()[i] - p2.data()[i]) < 1e-9);
  }
}

TEST_CASE("softmax gradcheck") {
  for (uint64_t s = 0; s < 5; ++s) {
    std::mt19937_64 rng(splitmix64(300 + s));
    auto w = randn({8}, rng);
    auto rep = gradcheck(
        "softmax", [w](std::vector<Tensor<D>>& in) { return sum(mul(softmax(in[0]), w)); },
        {randn({8}, rng)});
    CHECK(rep.max_rel_error <= 1e-4);
  }
}

TEST_CASE("cross entropy values") {
  CHECK(cross_entropy_from_logits(Tensor<D>::from({2}, {0, 0}), 0).item() ==
        doctest::Approx(std::log(2.0)));
  // stability: huge logit gap must not overflow
  auto l = cross_entropy_from_logits(Tensor<D>::from({2}, {1000, 0}), 0);
  CHECK(l.item() >= 0.0);
  CHECK(l.item() < 1e-6);
  CHECK_THROWS_AS(cross_entropy_from_logits(Tensor<D>::from({2}, {0, 0}), 2), ValidationError);
  // uniform logits give ln K
  CHECK(cross_entropy_from_logits(Tensor<D>::full({10}, 1.3), 4).item() ==
        doctest::Approx(std::log(10.0)));
}

TEST_CASE("cross entropy gradcheck") {
  for (uint64_t s = 0; s < 5; ++s) {
    std::mt19937_64 rng(splitmix64(400 + s));
    auto rep = gradcheck(
        "ce", [](std::vector<Tensor<D>>& in) { return cross_entropy_from_logits(in[0], 3); },
        {randn({10}, rng)});
    CHECK(rep.max_rel_error <= 1e-4);
  }
}

TEST_CASE("regression loss values") {
  auto p = Tensor<D>::scalar(55.0);
  for (auto kind : {LossKind::mae, LossKind::mse, LossKind::smooth_l1, LossKind::huber})
    CHECK(regression_loss(p, 55.0, kind).item() == 0.0);
  auto q = Tensor<D>::scalar(57.0);
  CHECK(regression_loss(q, 55.0, LossKind::mae).item() == 2.0);
  CHECK(regression_loss(q, 55.0, LossKind::mse).item() == 4.0);
  // huber with delta=1 at |e|=2: delta*(|e| - delta/2)
  CHECK(regression_loss(q, 55.0, LossKind::huber, 1.0).item() == doctest::Approx(1.5));
  CHECK_THROWS_AS(parse_loss_kind("l3"), ConfigError);
}

TEST_CASE("elementwise and pooling gradchecks") {
  for (uint64_t s = 0; s < 5; ++s) {
    std::mt19937_64 rng(splitmix64(500 + s));
    auto w3 = randn({3}, rng);
    auto rep = gradcheck(
        "gap",
        [w3](std::vector<Tensor<D>>& in) { return sum(mul(global_avg_pool(in[0]), w3)); },
        {randn({3, 4, 4}, rng)});
    CHECK(rep.max_rel_error <= 1e-4);

    auto w2 = randn({2, 2, 2}, rng);
    rep = gradcheck(
        "avg_pool",
        [w2](std::vector<Tensor<D>>& in) { return sum(mul(avg_pool2d(in[0], 2), w2)); },
        {randn({2, 4, 4}, rng)});
    CHECK(rep.max_rel_error <= 1e-4);

    rep = gradcheck(
        "tanh_mul",
        [](std::vector<Tensor<D>>& in) { return sum(mul(tanh(in[0]), in[1])); },
        {randn({6}, rng), randn({6}, rng)});
    CHECK(rep.max_rel_error <= 1e-4);
  }
}

TEST_CASE("forward ops keep finite values finite") {
  std::mt19937_64 rng(21);
  auto x = randn({2, 8, 8}, rng);
  auto k = randn({3, 2, 3, 3}, rng);
  auto out = tanh(conv2d(x, k, 2, 1));
  for (size_t i = 0; i < out.size(); ++i) CHECK(std::isfinite(out.data()[i]));
}

TEST_CASE("empty softmax input impossible by construction") {
  CHECK_THROWS_AS(Tensor<D>::zeros({0}), ShapeError);
}
