#include <algorithm>
#include <cmath>

#include "cardiac/gradcheck.hpp"
#include "cardiac/mfl.hpp"
#include "doctest.h"

using namespace cardiac;
using D = double;

namespace {

Tensor<D> randn(std::vector<int> dims, std::mt19937_64& rng) {
  Tensor<D> t(std::move(dims));
  for (size_t i = 0; i < t.size(); ++i) t.data()[i] = gaussian(rng);
  return t;
}

constexpr int kC = 8;

AggregatorVariant<D> make_variant(AggregatorKind kind, uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed));
  return AggregatorVariant<D>(kind, kC, 6, 4, rng);
}

Tensor<D> permute_rows(const Tensor<D>& f, const std::vector<int>& perm) {
  Tensor<D> out(f.dims());
  const int c = f.dim(1);
  for (size_t i = 0; i < perm.size(); ++i)
    std::copy_n(f.data() + static_cast<size_t>(perm[i]) * c, c, out.data() + i * c);
  return out;
}

}  // namespace

TEST_CASE("score_frames: identical frames get equal scores, W3=0 gives zeros") {
  auto v = make_variant(AggregatorKind::mfl, 1);
  std::mt19937_64 rng(2);
  auto one = randn({1, kC}, rng);
  std::vector<Tensor<D>> rows(4, one);
  auto f = stack_rows(rows);
  auto s = score_frames(f, v.mfl);
  for (int i = 1; i < 4; ++i) CHECK(s.data()[i] == doctest::Approx(s.data()[0]));

  for (auto& x : v.mfl.w3.values()) x = 0.0;
  auto s0 = score_frames(randn({5, kC}, rng), v.mfl);
  for (size_t i = 0; i < s0.size(); ++i) CHECK(s0.data()[i] == 0.0);
}

TEST_CASE("score_frames gradcheck") {
  for (uint64_t s = 0; s < 5; ++s) {
    std::mt19937_64 rng(splitmix64(700 + s));
    auto v = make_variant(AggregatorKind::mfl, 10 + s);
    std::vector<Tensor<D>> inputs = {randn({3, kC}, rng), v.mfl.w1.clone_leaf(false),
                                     v.mfl.w2.clone_leaf(false), v.mfl.w3.clone_leaf(false)};
    auto rep = gradcheck(
        "score_frames",
        [](std::vector<Tensor<D>>& in) {
          MFLParams<D> p;
          p.w1 = in[1];
          p.w2 = in[2];
          p.w3 = in[3];
          return sum(score_frames(in[0], p));
        },
        inputs);
    CHECK(rep.max_rel_error <= 1e-4);
  }
}

TEST_CASE("normalize_weights") {
  auto a = normalize_weights(Tensor<D>::zeros({4}));
  for (int i = 0; i < 4; ++i) CHECK(a.data()[i] == doctest::Approx(0.25));

  for (double c : {-3.0, 0.0, 11.0}) {
    auto b = normalize_weights(Tensor<D>::from({2}, {c + 1, c}));
    const double e = std::exp(1.0);
    CHECK(b.data()[0] == doctest::Approx(e / (e + 1)));
    CHECK(b.data()[1] == doctest::Approx(1 / (e + 1)));
  }

  auto sharp = normalize_weights(Tensor<D>::from({2}, {10, -10}));
  CHECK(sharp.data()[0] >= 1.0 - 1e-8);
}

TEST_CASE("aggregate convexity and one-hot selection") {
  std::mt19937_64 rng(3);
  auto one = randn({1, kC}, rng);
  auto f = stack_rows(std::vector<Tensor<D>>(3, one));
  auto alpha = Tensor<D>::from({3}, {0.2, 0.5, 0.3});
  auto agg = aggregate(f, alpha);
  for (int j = 0; j < kC; ++j) CHECK(agg.data()[j] == doctest::Approx(one.data()[j]));

  auto f2 = randn({3, kC}, rng);
  auto onehot = Tensor<D>::from({3}, {0, 1, 0});
  auto picked = aggregate(f2, onehot);
  for (int j = 0; j < kC; ++j) CHECK(picked.data()[j] == doctest::Approx(f2.data()[kC + j]));

  // brute-force summation oracle
  auto a3 = normalize_weights(randn({3}, rng));
  auto res = aggregate(f2, a3);
  for (int j = 0; j < kC; ++j) {
    double expect = 0;
    for (int i = 0; i < 3; ++i) expect += a3.data()[i] * f2.data()[static_cast<size_t>(i) * kC + j];
    CHECK(std::abs(res.data()[j] - expect) < 1e-12);
  }

  CHECK_THROWS_AS(aggregate(f2, Tensor<D>::zeros({4})), ShapeError);
}

TEST_CASE("mfl_forward trivial cases") {
  std::mt19937_64 rng(4);
  auto one = randn({1, kC}, rng);
  auto f = stack_rows(std::vector<Tensor<D>>(5, one));

  auto mean = make_variant(AggregatorKind::mean_pool, 5);
  auto m = mfl_forward(f, mean);
  for (int j = 0; j < kC; ++j) CHECK(m.data()[j] == doctest::Approx(one.data()[j]));

  // identical frames + mfl -> W_proj f
  auto v = make_variant(AggregatorKind::mfl, 6);
  auto out = mfl_forward(f, v);
  for (int j = 0; j < kC; ++j) {
    double expect = 0;
    for (int i = 0; i < kC; ++i)
      expect += v.mfl.w_proj.data()[static_cast<size_t>(j) * kC + i] * one.data()[i];
    CHECK(out.data()[j] == doctest::Approx(expect));
  }
}

TEST_CASE("permutation invariance of non-recurrent variants") {
  std::mt19937_64 rng(7);
  std::vector<int> perm = {3, 0, 4, 1, 2};
  for (auto kind : {AggregatorKind::mfl, AggregatorKind::mfl_no_proj,
                    AggregatorKind::mfl_nonlinear_proj, AggregatorKind::mean_pool}) {
    auto v = make_variant(kind, 20);
    auto f = randn({5, kC}, rng);
    auto a = mfl_forward(f, v);
    auto b = mfl_forward(permute_rows(f, perm), v);
    for (int j = 0; j < kC; ++j) CHECK(std::abs(a.data()[j] - b.data()[j]) < 1e-9);
  }
}

TEST_CASE("attention weights form a distribution and shifts do not change them") {
  std::mt19937_64 rng(8);
  auto v = make_variant(AggregatorKind::mfl, 21);
  for (int trial = 0; trial < 20; ++trial) {
    auto f = randn({6, kC}, rng);
    auto s = score_frames(f, v.mfl);
    auto alpha = normalize_weights(s);
    double total = 0;
    for (size_t i = 0; i < alpha.size(); ++i) {
      CHECK(alpha.data()[i] > 0.0);
      total += alpha.data()[i];
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
    auto alpha2 = normalize_weights(add_scalar(s, 2.5));
    for (size_t i = 0; i < alpha.size(); ++i)
      CHECK(std::abs(alpha.data()[i] - alpha2.data()[i]) < 1e-9);
  }
}

TEST_CASE("convex hull property of the aggregate") {
  std::mt19937_64 rng(9);
  auto v = make_variant(AggregatorKind::mfl, 22);
  for (int trial = 0; trial < 20; ++trial) {
    auto f = randn({6, kC}, rng);
    auto alpha = normalize_weights(score_frames(f, v.mfl));
    auto agg = aggregate(f, alpha);
    for (int j = 0; j < kC; ++j) {
      double lo = 1e30, hi = -1e30;
      for (int i = 0; i < 6; ++i) {
        lo = std::min(lo, f.data()[static_cast<size_t>(i) * kC + j]);
        hi = std::max(hi, f.data()[static_cast<size_t>(i) * kC + j]);
      }
      CHECK(agg.data()[j] >= lo - 1e-12);
      CHECK(agg.data()[j] <= hi + 1e-12);
    }
  }
}

TEST_CASE("gru and multi-head variants produce the right shapes") {
  std::mt19937_64 rng(10);
  auto f = randn({5, kC}, rng);
  for (auto kind : {AggregatorKind::mfl_gru, AggregatorKind::multi_head,
                    AggregatorKind::multi_head_gru}) {
    auto v = make_variant(kind, 30);
    auto out = mfl_forward(f, v);
    CHECK(out.size() == static_cast<size_t>(kC));
    for (size_t i = 0; i < out.size(); ++i) CHECK(std::isfinite(out.data()[i]));
  }
  CHECK_THROWS_AS(parse_aggregator("bogus"), ConfigError);
}

TEST_CASE("full mfl_forward gradcheck") {
  for (uint64_t s = 0; s < 3; ++s) {
    std::mt19937_64 rng(splitmix64(800 + s));
    auto v = make_variant(AggregatorKind::mfl, 40 + s);
    std::vector<Tensor<D>> inputs = {randn({4, kC}, rng)};
    for (Tensor<D>* p : v.param_list()) inputs.push_back(p->clone_leaf(false));
    auto w = randn({1, kC}, rng);
    auto rep = gradcheck(
        "mfl_forward",
        [w](std::vector<Tensor<D>>& in) {
          std::mt19937_64 dummy(0);
          AggregatorVariant<D> vv(AggregatorKind::mfl, kC, 6, 4, dummy);
          auto slots = vv.param_list();
          for (size_t i = 0; i < slots.size(); ++i) *slots[i] = in[i + 1];
          return sum(mul(mfl_forward(in[0], vv), w));
        },
        inputs);
    CHECK(rep.max_rel_error <= 1e-4);
  }
}
