#pragma once

// Full video-to-EF model: encoder (optionally with EchoZoom) -> aggregation
// -> prototype classification + shift regression -> expected-value decoding.

#include <optional>
#include <string>
#include <vector>

#include "cardiac/data.hpp"
#include "cardiac/echozoom.hpp"
#include "cardiac/encoder.hpp"
#include "cardiac/mfl.hpp"
#include "cardiac/optim.hpp"
#include "cardiac/ordinal.hpp"

namespace cardiac {

struct ModelConfig {
  EncoderConfig encoder;
  int mfl_h1 = 64;
  int mfl_h2 = 32;
  AggregatorKind aggregator = AggregatorKind::mfl;
  bool echozoom = false;
  ZoomConfig zoom;
  BinSpec bins = BinSpec::uniform(10);
  double temperature = 0.07;
  LossKind reg_loss = LossKind::mae;
  double huber_delta = 1.0;
  int regressor_hidden = 32;
  uint64_t seed = 0;
};

template <class T>
class Model {
 public:
  Model() = default;

  explicit Model(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.bins.validate();
    cfg_.zoom.validate();
    std::mt19937_64 rng(splitmix64(cfg.seed ^ 0xc0ffeeULL));
    const int c = cfg_.encoder.feature_dim();
    encoder_ = Encoder<T>(cfg_.encoder, rng);
    aggregator_ = AggregatorVariant<T>(cfg_.aggregator, c, cfg_.mfl_h1, cfg_.mfl_h2, rng);
    prototypes_ = build_prototypes<T>(cfg_.bins, c, cfg_.seed);
    regressor_ = RegressorParams<T>(c, cfg_.regressor_hidden, cfg_.bins.K(), rng);
    encoder_.register_params(params_, "enc");
    aggregator_.register_params(params_, "agg");
    params_.add("proto.weights", prototypes_.weights);
    regressor_.register_params(params_, "reg");
  }

  const ModelConfig& config() const { return cfg_; }
  ParamMap<T>& params() { return params_; }
  const Encoder<T>& encoder() const { return encoder_; }
  const AggregatorVariant<T>& aggregator() const { return aggregator_; }
  const ClassPrototypes<T>& prototypes() const { return prototypes_; }
  const RegressorParams<T>& regressor() const { return regressor_; }

  Tensor<T> video_feature(const std::vector<Tensor<T>>& frames) const {
    std::optional<ZoomConfig> zoom;
    if (cfg_.echozoom) zoom = cfg_.zoom;
    Tensor<T> feats = encode_video(encoder_, frames, zoom);
    return mfl_forward(feats, aggregator_);
  }

  struct Prediction {
    Tensor<T> logits, p, delta, y_star;
  };

  Prediction predict(const std::vector<Tensor<T>>& frames) const {
    Prediction out;
    Tensor<T> feat = video_feature(frames);
    out.logits = class_logits(feat, prototypes_.weights, cfg_.temperature);
    out.p = softmax(out.logits);
    out.delta = predict_shifts(feat, regressor_);
    out.y_star = expected_value(out.p, out.delta, cfg_.bins);
    return out;
  }

  Tensor<T> loss(const std::vector<Tensor<T>>& frames, double ef_label,
                 OrdinalLossTerms* terms = nullptr) const {
    Prediction pred = predict(frames);
    return loss_or(pred.logits, pred.y_star, ef_label, cfg_.bins, cfg_.reg_loss,
                   static_cast<T>(cfg_.huber_delta), terms);
  }

  double predict_value(const std::vector<Tensor<T>>& frames) const {
    return static_cast<double>(predict(frames).y_star.item());
  }

 private:
  ModelConfig cfg_;
  Encoder<T> encoder_;
  AggregatorVariant<T> aggregator_;
  ClassPrototypes<T> prototypes_;
  RegressorParams<T> regressor_;
  ParamMap<T> params_;
};

// Leaf frame tensors (no grad) for the given sampled indices of a clip.
// Pixel values in [0, 1] are centered to [-0.5, 0.5] before the encoder.
template <class T>
std::vector<Tensor<T>> frames_from_clip(const VideoClip& clip, const std::vector<int>& indices) {
  std::vector<Tensor<T>> out;
  out.reserve(indices.size());
  const size_t hw = static_cast<size_t>(clip.h) * clip.w;
  for (int idx : indices) {
    Tensor<T> frame({1, clip.h, clip.w});
    const float* src = clip.frames.data() + static_cast<size_t>(idx) * hw;
    for (size_t i = 0; i < hw; ++i) frame.data()[i] = static_cast<T>(src[i]) - T(0.5);
    out.push_back(std::move(frame));
  }
  return out;
}

}  // namespace cardiac
