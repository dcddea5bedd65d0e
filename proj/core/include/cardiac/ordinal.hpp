#pragma once

// Coarse-to-fine ordinal regression head: cosine-similarity classification
// against class prototypes, a small MLP predicting bounded per-bin shifts,
// expected-value decoding, and the combined CE + regression loss.

#include <string>

#include "cardiac/bins.hpp"
#include "cardiac/encoder.hpp"
#include "cardiac/params.hpp"
#include "cardiac/tensor.hpp"

namespace cardiac {

// Classification logits: cosine(video_feat, prototype_j) / tau.
template <class T>
Tensor<T> class_logits(const Tensor<T>& video_feat, const Tensor<T>& prototypes, double tau) {
  if (tau <= 0.0) throw ConfigError("classify: temperature must be positive");
  if (prototypes.rank() != 2) throw ShapeError("classify: prototypes must be K x C");
  const int c = prototypes.dim(1);
  if (static_cast<int>(video_feat.size()) != c)
    throw ShapeError("classify: feature length does not match prototype width");
  Tensor<T> feat = reshape(video_feat, {1, c});

  // forward-value degeneracy check
  double fn = 0.0;
  for (size_t i = 0; i < feat.size(); ++i) fn += static_cast<double>(feat.data()[i]) * feat.data()[i];
  if (fn < 1e-24) throw NumericalError("classify: zero-norm video feature");
  for (int j = 0; j < prototypes.dim(0); ++j) {
    double pn = 0.0;
    for (int i = 0; i < c; ++i) {
      double v = prototypes.data()[static_cast<size_t>(j) * c + i];
      pn += v * v;
    }
    if (pn < 1e-24) throw NumericalError("classify: zero-norm prototype row " + std::to_string(j));
  }

  Tensor<T> dots = matmul(prototypes, transpose(feat));  // K x 1
  Tensor<T> feat_norm = sqrt(sum(mul(feat, feat)));      // scalar
  Tensor<T> ones = Tensor<T>::full({prototypes.dim(0), 1}, T(1));
  Tensor<T> proto_sq = mul(prototypes, prototypes);
  Tensor<T> proto_norms = sqrt(matmul(proto_sq, Tensor<T>::full({c, 1}, T(1))));  // K x 1
  Tensor<T> denom = mul(proto_norms, matmul(ones, reshape(feat_norm, {1, 1})));
  Tensor<T> cosines = div(dots, denom);
  return reshape(scale(cosines, static_cast<T>(1.0 / tau)), {prototypes.dim(0)});
}

template <class T>
Tensor<T> classify(const Tensor<T>& video_feat, const Tensor<T>& prototypes, double tau) {
  return softmax(class_logits(video_feat, prototypes, tau));
}

// Two-layer perceptron C -> hidden -> K with tanh hidden activation. The raw
// output is squashed to (-0.5, 0.5) so 1 + delta stays within (0.5, 1.5).
template <class T>
struct RegressorParams {
  Tensor<T> w1, b1;  // C x hidden, 1 x hidden
  Tensor<T> w2, b2;  // hidden x K, 1 x K

  RegressorParams() = default;
  RegressorParams(int c, int hidden, int k, std::mt19937_64& rng)
      : w1(Tensor<T>::init_uniform({c, hidden}, c, rng)),
        b1(Tensor<T>::init_uniform({1, hidden}, c, rng)),
        w2(Tensor<T>::init_uniform({hidden, k}, hidden, rng)),
        b2(Tensor<T>::init_uniform({1, k}, hidden, rng)) {}

  void register_params(ParamMap<T>& map, const std::string& prefix) {
    map.add(prefix + ".w1", w1);
    map.add(prefix + ".b1", b1);
    map.add(prefix + ".w2", w2);
    map.add(prefix + ".b2", b2);
  }
};

template <class T>
Tensor<T> predict_shifts(const Tensor<T>& video_feat, const RegressorParams<T>& params) {
  const int c = params.w1.dim(0);
  Tensor<T> x = reshape(video_feat, {1, c});
  Tensor<T> h = tanh(add(matmul(x, params.w1), params.b1));
  Tensor<T> raw = add(matmul(h, params.w2), params.b2);
  return reshape(scale(tanh(raw), T(0.5)), {params.w2.dim(1)});
}

// y* = sum_i p_i * b_i / (1 + delta_i)
template <class T>
Tensor<T> expected_value(const Tensor<T>& p, const Tensor<T>& delta, const BinSpec& bins) {
  const int k = bins.K();
  if (static_cast<int>(p.size()) != k || static_cast<int>(delta.size()) != k)
    throw ShapeError("expected_value: p and delta must have K entries");
  for (size_t i = 0; i < delta.size(); ++i)
    if (T(1) + delta.data()[i] <= T(0))
      throw ContractError("expected_value: 1 + delta must be positive");
  auto centers = bins.centers();
  std::vector<T> cv(centers.begin(), centers.end());
  Tensor<T> b = Tensor<T>::from({k}, std::move(cv));
  Tensor<T> pk = reshape(p, {k});
  Tensor<T> dk = reshape(delta, {k});
  return sum(div(mul(pk, b), add_scalar(dk, T(1))));
}

struct OrdinalLossTerms {
  double ce = 0.0;
  double regression = 0.0;
};

// L = CE(logits, bin(label)) + regression_loss(y*, label); unit weights.
template <class T>
Tensor<T> loss_or(const Tensor<T>& logits, const Tensor<T>& y_star, double label_ef,
                  const BinSpec& bins, LossKind kind, T huber_delta = T(1),
                  OrdinalLossTerms* terms = nullptr) {
  const int target = assign_bin(label_ef, bins);
  Tensor<T> ce = cross_entropy_from_logits(logits, target);
  Tensor<T> reg = regression_loss(y_star, static_cast<T>(label_ef), kind, huber_delta);
  if (terms) {
    terms->ce = static_cast<double>(ce.item());
    terms->regression = static_cast<double>(reg.item());
  }
  return add(ce, reg);
}

}  // namespace cardiac
