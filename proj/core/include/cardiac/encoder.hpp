#pragma once

// Frame encoder: a small stack of stride-2 3x3 conv stages with tanh, plus
// per-class prototype embeddings seeded deterministically from prompt text.

#include <algorithm>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "cardiac/bins.hpp"
#include "cardiac/params.hpp"
#include "cardiac/rng.hpp"
#include "cardiac/tensor.hpp"

namespace cardiac {

struct EncoderConfig {
  int in_channels = 1;
  std::vector<int> stage_channels = {8, 16, 32};
  int base_resolution = 112;
  // Input side lengths encode_frame accepts; each stage halves the extent.
  std::vector<int> allowed_inputs = {112, 56};

  int feature_dim() const { return stage_channels.back(); }
};

template <class T>
class Encoder {
 public:
  Encoder() = default;

  Encoder(EncoderConfig cfg, std::mt19937_64& rng) : cfg_(std::move(cfg)) {
    int cin = cfg_.in_channels;
    for (int cout : cfg_.stage_channels) {
      weights_.push_back(Tensor<T>::init_uniform({cout, cin, 3, 3}, cin * 9, rng));
      biases_.push_back(Tensor<T>::init_uniform({cout}, cin * 9, rng));
      cin = cout;
    }
  }

  const EncoderConfig& config() const { return cfg_; }

  // Returns (last-stage feature map, globally pooled feature vector).
  std::pair<Tensor<T>, Tensor<T>> encode_frame(const Tensor<T>& image) const {
    if (image.rank() != 3 || image.dim(0) != cfg_.in_channels || image.dim(1) != image.dim(2))
      throw ShapeError("encode_frame: expected " + std::to_string(cfg_.in_channels) +
                       " x h x h input");
    const int h = image.dim(1);
    if (std::find(cfg_.allowed_inputs.begin(), cfg_.allowed_inputs.end(), h) ==
        cfg_.allowed_inputs.end())
      throw ShapeError("encode_frame: unsupported resolution " + std::to_string(h));
    Tensor<T> x = image;
    for (size_t s = 0; s < weights_.size(); ++s)
      x = tanh(add_channel_bias(conv2d(x, weights_[s], /*stride=*/2, /*padding=*/1), biases_[s]));
    return {x, global_avg_pool(x)};
  }

  void register_params(ParamMap<T>& map, const std::string& prefix) {
    for (size_t s = 0; s < weights_.size(); ++s) {
      map.add(prefix + ".stage" + std::to_string(s) + ".w", weights_[s]);
      map.add(prefix + ".stage" + std::to_string(s) + ".b", biases_[s]);
    }
  }

  // Parameter slots in registration order.
  std::vector<Tensor<T>*> param_list() {
    std::vector<Tensor<T>*> out;
    for (size_t s = 0; s < weights_.size(); ++s) {
      out.push_back(&weights_[s]);
      out.push_back(&biases_[s]);
    }
    return out;
  }

 private:
  EncoderConfig cfg_;
  std::vector<Tensor<T>> weights_;
  std::vector<Tensor<T>> biases_;
};

// ---------------------------------------------------------------------------
// prompt templates and class prototypes

inline std::string ef_severity(double mid) {
  if (mid < 30.0) return "severely reduced";
  if (mid < 45.0) return "moderately reduced";
  if (mid < 55.0) return "mildly reduced";
  return "normal";
}

// Deterministic prompt templates for a bin covering [lo, hi). The displayed
// interval is inclusive, e.g. [45, 55) renders as "45-54%".
inline std::vector<std::string> prompt_variants(double lo, double hi) {
  char range[32];
  int lo_i = static_cast<int>(lo);
  int hi_i = hi >= 100.0 ? 100 : static_cast<int>(hi) - 1;
  std::snprintf(range, sizeof(range), "%d-%d", lo_i, hi_i);
  const std::string r(range);
  const std::string sev = ef_severity(0.5 * (lo + hi));
  return {
      "The left ventricular ejection fraction is estimated to be " + sev + " LVEF (" + r + "%)",
      "Echocardiography demonstrates an ejection fraction in the " + r + "% range",
      "LVEF between " + std::to_string(lo_i) + "% and " + std::to_string(hi_i) + "%",
      "Left ventricular systolic function is " + sev + " with an ejection fraction of " + r +
          " percent",
  };
}

template <class T>
struct ClassPrototypes {
  Tensor<T> weights;  // K x C, trainable
  std::vector<std::vector<std::string>> prompt_texts;
};

// Each prompt string is hashed (together with the global seed) into a
// deterministic unit-norm C-vector; a bin's initial prototype is the
// re-normalized mean of its variant vectors.
template <class T>
ClassPrototypes<T> build_prototypes(const BinSpec& bins, int feature_dim, uint64_t seed) {
  bins.validate();
  const int k = bins.K();
  ClassPrototypes<T> out;
  out.weights = Tensor<T>({k, feature_dim}, /*requires_grad=*/true);
  out.prompt_texts.resize(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    auto prompts = prompt_variants(bins.edges[static_cast<size_t>(i)],
                                   bins.edges[static_cast<size_t>(i) + 1]);
    std::vector<double> mean(static_cast<size_t>(feature_dim), 0.0);
    for (const auto& p : prompts) {
      std::mt19937_64 rng(splitmix64(fnv1a64(p) ^ splitmix64(seed)));
      std::vector<double> v(static_cast<size_t>(feature_dim));
      double norm = 0.0;
      for (auto& x : v) {
        x = gaussian(rng);
        norm += x * x;
      }
      norm = std::sqrt(norm);
      for (size_t j = 0; j < v.size(); ++j) mean[j] += v[j] / norm;
    }
    double norm = 0.0;
    for (double x : mean) norm += x * x;
    norm = std::sqrt(norm);
    for (int j = 0; j < feature_dim; ++j)
      out.weights.data()[static_cast<size_t>(i) * feature_dim + j] =
          static_cast<T>(mean[static_cast<size_t>(j)] / norm);
    out.prompt_texts[static_cast<size_t>(i)] = std::move(prompts);
  }
  return out;
}

}  // namespace cardiac
