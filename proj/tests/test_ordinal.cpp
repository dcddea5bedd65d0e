#include <cmath>

#include "cardiac/gradcheck.hpp"
#include "cardiac/ordinal.hpp"
#include "doctest.h"

using namespace cardiac;
using D = double;

namespace {

Tensor<D> randn(std::vector<int> dims, std::mt19937_64& rng) {
  Tensor<D> t(std::move(dims));
  for (size_t i = 0; i < t.size(); ++i) t.data()[i] = gaussian(rng);
  return t;
}

// Independent decoding oracle: plain loops, no tensor ops.
double decode_oracle(const std::vector<double>& p, const std::vector<double>& delta,
                     const BinSpec& bins) {
  double y = 0;
  for (size_t i = 0; i < p.size(); ++i) y += p[i] * bins.center(static_cast<int>(i)) / (1.0 + delta[i]);
  return y;
}

}  // namespace

TEST_CASE("bin spec invariants") {
  auto u = BinSpec::uniform(10);
  u.validate();
  CHECK(u.K() == 10);
  CHECK(u.edges.front() == 0.0);
  CHECK(u.edges.back() == 100.0);
  for (int i = 0; i < u.K(); ++i) {
    CHECK(u.center(i) > u.edges[static_cast<size_t>(i)]);
    CHECK(u.center(i) < u.edges[static_cast<size_t>(i) + 1]);
  }
  BinSpec::clinical4().validate();
}

TEST_CASE("assign_bin") {
  auto u = BinSpec::uniform(10);
  CHECK(assign_bin(55.0, u) == 5);
  CHECK(assign_bin(0.0, u) == 0);
  CHECK(assign_bin(100.0, u) == 9);
  CHECK(assign_bin(9.999, u) == 0);
  CHECK(assign_bin(10.0, u) == 1);
  CHECK_THROWS_AS(assign_bin(-0.1, u), ValidationError);
  CHECK_THROWS_AS(assign_bin(100.5, u), ValidationError);

  // the clinical bin holding EF 45 carries the 45-54% interval in its prompts
  auto c4 = BinSpec::clinical4();
  int bin45 = assign_bin(45.0, c4);
  auto prompts = prompt_variants(c4.edges[static_cast<size_t>(bin45)],
                                 c4.edges[static_cast<size_t>(bin45) + 1]);
  bool found = false;
  for (const auto& p : prompts)
    if (p.find("45-54") != std::string::npos) found = true;
  CHECK(found);
}

TEST_CASE("classify: matching prototype wins at small temperature") {
  const int k = 4, c = 8;
  Tensor<D> protos = Tensor<D>::zeros({k, c});
  // orthogonal prototypes
  for (int j = 0; j < k; ++j) protos.data()[static_cast<size_t>(j) * c + j] = 1.0;
  Tensor<D> feat = Tensor<D>::zeros({c});
  feat.data()[2] = 3.0;
  auto p = classify(feat, protos, 0.05);
  CHECK(p.data()[2] >= 0.99);

  // orthogonal to all prototypes -> uniform
  Tensor<D> ortho = Tensor<D>::zeros({c});
  ortho.data()[6] = 1.0;
  auto pu = classify(ortho, protos, 0.07);
  for (int j = 0; j < k; ++j) CHECK(pu.data()[j] == doctest::Approx(0.25));
}

TEST_CASE("classify is invariant to positive feature rescaling") {
  std::mt19937_64 rng(1);
  auto protos = randn({5, 8}, rng);
  auto feat = randn({8}, rng);
  auto p1 = classify(feat, protos, 0.07);
  auto p2 = classify(scale(feat, 17.5), protos, 0.07);
  for (size_t i = 0; i < p1.size(); ++i) CHECK(std::abs(p1.data()[i] - p2.data()[i]) < 1e-9);
}

TEST_CASE("classify rejects degenerate inputs") {
  std::mt19937_64 rng(2);
  auto protos = randn({5, 8}, rng);
  CHECK_THROWS_AS(classify(Tensor<D>::zeros({8}), protos, 0.07), NumericalError);
  CHECK_THROWS_AS(classify(randn({8}, rng), protos, 0.0), ConfigError);
  auto bad = protos.clone_leaf(false);
  for (int j = 0; j < 8; ++j) bad.data()[static_cast<size_t>(2) * 8 + j] = 0.0;
  CHECK_THROWS_AS(classify(randn({8}, rng), bad, 0.07), NumericalError);
}

TEST_CASE("predict_shifts stays within (-0.5, 0.5)") {
  std::mt19937_64 rng(3);
  RegressorParams<D> reg(8, 6, 10, rng);
  for (int trial = 0; trial < 10; ++trial) {
    auto d = predict_shifts(scale(randn({8}, rng), 25.0), reg);
    CHECK(d.size() == 10);
    for (size_t i = 0; i < d.size(); ++i) {
      CHECK(d.data()[i] > -0.5);
      CHECK(d.data()[i] < 0.5);
    }
  }
}

TEST_CASE("expected_value trivial cases") {
  auto u = BinSpec::uniform(10);
  Tensor<D> p = Tensor<D>::zeros({10});
  p.data()[5] = 1.0;  // center of bin 5 is 55
  auto y = expected_value(p, Tensor<D>::zeros({10}), u);
  CHECK(y.item() == doctest::Approx(55.0));

  BinSpec pair;
  pair.edges = {0.0, 80.0, 100.0};  // centers 40 and 90
  auto phalf = Tensor<D>::from({2}, {0.5, 0.5});
  CHECK(expected_value(phalf, Tensor<D>::zeros({2}), pair).item() == doctest::Approx(65.0));
}

TEST_CASE("expected_value worked example") {
  BinSpec b;
  b.edges = {0.0, 60.0, 80.0, 100.0};  // centers 30, 70, 90
  auto p = Tensor<D>::from({3}, {0.25, 0.75, 0.0});
  auto d = Tensor<D>::from({3}, {0.25, -0.25, 0.0});
  // 0.25*30/1.25 + 0.75*70/0.75 = 6 + 70 = 76
  CHECK(expected_value(p, d, b).item() == doctest::Approx(76.0).epsilon(1e-12));
}

TEST_CASE("expected_value agrees with the brute-force oracle") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 2 + static_cast<int>(rng() % 12);
    // random ascending edges
    BinSpec bins;
    bins.edges.resize(static_cast<size_t>(k) + 1);
    bins.edges[0] = 0.0;
    for (int i = 1; i < k; ++i)
      bins.edges[static_cast<size_t>(i)] = bins.edges[static_cast<size_t>(i) - 1] +
                                           0.5 + uniform01(rng) * (95.0 - bins.edges[static_cast<size_t>(i) - 1]) / k;
    bins.edges[static_cast<size_t>(k)] = 100.0;
    std::vector<double> pv(static_cast<size_t>(k)), dv(static_cast<size_t>(k));
    double z = 0;
    for (auto& x : pv) {
      x = uniform01(rng) + 1e-6;
      z += x;
    }
    for (auto& x : pv) x /= z;
    for (auto& x : dv) x = uniform_range(rng, -0.49, 0.49);
    auto y = expected_value(Tensor<D>::from({k}, std::vector<double>(pv)),
                            Tensor<D>::from({k}, std::vector<double>(dv)), bins);
    CHECK(std::abs(y.item() - decode_oracle(pv, dv, bins)) < 1e-12);
  }
}

TEST_CASE("expected_value convex hull bound") {
  std::mt19937_64 rng(5);
  auto bins = BinSpec::uniform(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> pv(8), dv(8);
    double z = 0;
    for (auto& x : pv) {
      x = uniform01(rng) + 1e-9;
      z += x;
    }
    for (auto& x : pv) x /= z;
    for (auto& x : dv) x = uniform_range(rng, -0.4, 0.4);
    double lo = 1e30, hi = -1e30;
    for (int i = 0; i < 8; ++i) {
      lo = std::min(lo, bins.center(i) / (1 + dv[static_cast<size_t>(i)]));
      hi = std::max(hi, bins.center(i) / (1 + dv[static_cast<size_t>(i)]));
    }
    auto y = expected_value(Tensor<D>::from({8}, std::vector<double>(pv)),
                            Tensor<D>::from({8}, std::vector<double>(dv)), bins);
    CHECK(y.item() >= lo - 1e-9);
    CHECK(y.item() <= hi + 1e-9);
  }
}

TEST_CASE("loss_or values") {
  auto bins = BinSpec::uniform(10);
  // uniform p, y* equal to the label: loss = ln 10
  auto logits = Tensor<D>::zeros({10});
  auto y = Tensor<D>::scalar(55.0);
  auto l = loss_or(logits, y, 55.0, bins, LossKind::mae);
  CHECK(l.item() == doctest::Approx(std::log(10.0)));

  // saturated correct prediction: loss ~ 0
  auto sharp = Tensor<D>::zeros({10});
  sharp.data()[5] = 100.0;
  auto l2 = loss_or(sharp, y, 55.0, bins, LossKind::mae);
  CHECK(l2.item() < 1e-6);

  // random case vs direct-formula oracle
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    auto lg = randn({10}, rng);
    double label = uniform_range(rng, 1.0, 99.0);
    auto yv = Tensor<D>::scalar(uniform_range(rng, 10.0, 90.0));
    OrdinalLossTerms terms;
    auto lo = loss_or(lg, yv, label, bins, LossKind::mae, 1.0, &terms);
    // oracle: manual CE + MAE
    int target = assign_bin(label, bins);
    double m = lg.data()[0];
    for (int i = 1; i < 10; ++i) m = std::max(m, lg.data()[i]);
    double z = 0;
    for (int i = 0; i < 10; ++i) z += std::exp(lg.data()[i] - m);
    double ce = std::log(z) + m - lg.data()[target];
    double mae = std::abs(yv.item() - label);
    CHECK(std::abs(lo.item() - (ce + mae)) < 1e-10);
    CHECK(terms.ce == doctest::Approx(ce));
  }
}

TEST_CASE("loss_or gradcheck through the whole head") {
  for (uint64_t s = 0; s < 3; ++s) {
    std::mt19937_64 rng(splitmix64(900 + s));
    const int c = 8, k = 5;
    BinSpec bins = BinSpec::uniform(k);
    RegressorParams<D> reg(c, 6, k, rng);
    std::vector<Tensor<D>> inputs = {randn({c}, rng), randn({k, c}, rng),
                                     reg.w1.clone_leaf(false), reg.b1.clone_leaf(false),
                                     reg.w2.clone_leaf(false), reg.b2.clone_leaf(false)};
    auto rep = gradcheck(
        "loss_or",
        [bins](std::vector<Tensor<D>>& in) {
          RegressorParams<D> r2;
          r2.w1 = in[2];
          r2.b1 = in[3];
          r2.w2 = in[4];
          r2.b2 = in[5];
          auto logits = class_logits(in[0], in[1], 0.5);
          auto p = softmax(logits);
          auto delta = predict_shifts(in[0], r2);
          auto y = expected_value(p, delta, bins);
          return loss_or(logits, y, 47.3, bins, LossKind::mae);
        },
        inputs);
    CHECK(rep.max_rel_error <= 1e-4);
  }
}
