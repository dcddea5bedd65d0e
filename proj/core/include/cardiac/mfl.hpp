#pragma once

// Multi Frame Learning: attention-weighted aggregation of per-frame features
// into a single video representation, plus the alternative aggregators used
// by the ablation grid (mean pooling, GRU preprocessing, multi-head
// self-attention).

#include <string>
#include <vector>

#include "cardiac/params.hpp"
#include "cardiac/rng.hpp"
#include "cardiac/tensor.hpp"

namespace cardiac {

enum class AggregatorKind {
  mfl,
  mfl_no_proj,
  mfl_nonlinear_proj,
  mfl_gru,
  mean_pool,
  multi_head,
  multi_head_gru,
};

inline AggregatorKind parse_aggregator(const std::string& s) {
  if (s == "mfl") return AggregatorKind::mfl;
  if (s == "mfl_no_proj") return AggregatorKind::mfl_no_proj;
  if (s == "mfl_nonlinear_proj") return AggregatorKind::mfl_nonlinear_proj;
  if (s == "mfl_gru") return AggregatorKind::mfl_gru;
  if (s == "mean_pool") return AggregatorKind::mean_pool;
  if (s == "multi_head") return AggregatorKind::multi_head;
  if (s == "multi_head_gru") return AggregatorKind::multi_head_gru;
  throw ConfigError("unknown aggregator kind: " + s);
}

inline std::string aggregator_name(AggregatorKind k) {
  switch (k) {
    case AggregatorKind::mfl: return "mfl";
    case AggregatorKind::mfl_no_proj: return "mfl_no_proj";
    case AggregatorKind::mfl_nonlinear_proj: return "mfl_nonlinear_proj";
    case AggregatorKind::mfl_gru: return "mfl_gru";
    case AggregatorKind::mean_pool: return "mean_pool";
    case AggregatorKind::multi_head: return "multi_head";
    case AggregatorKind::multi_head_gru: return "multi_head_gru";
  }
  return "?";
}

inline bool aggregator_uses_gru(AggregatorKind k) {
  return k == AggregatorKind::mfl_gru || k == AggregatorKind::multi_head_gru;
}

inline bool aggregator_uses_multi_head(AggregatorKind k) {
  return k == AggregatorKind::multi_head || k == AggregatorKind::multi_head_gru;
}

inline bool aggregator_uses_scoring(AggregatorKind k) {
  return k == AggregatorKind::mfl || k == AggregatorKind::mfl_no_proj ||
         k == AggregatorKind::mfl_nonlinear_proj || k == AggregatorKind::mfl_gru;
}

// Scoring chain C -> H1 -> H2 -> 1 plus the square projection. No bias terms.
template <class T>
struct MFLParams {
  Tensor<T> w1;  // C x H1
  Tensor<T> w2;  // H1 x H2
  Tensor<T> w3;  // H2 x 1
  Tensor<T> w_proj;  // C x C

  MFLParams() = default;
  MFLParams(int c, int h1, int h2, std::mt19937_64& rng)
      : w1(Tensor<T>::init_uniform({c, h1}, c, rng)),
        w2(Tensor<T>::init_uniform({h1, h2}, h1, rng)),
        w3(Tensor<T>::init_uniform({h2, 1}, h2, rng)),
        w_proj(Tensor<T>::init_uniform({c, c}, c, rng)) {}

  void register_params(ParamMap<T>& map, const std::string& prefix, bool with_proj) {
    map.add(prefix + ".w1", w1);
    map.add(prefix + ".w2", w2);
    map.add(prefix + ".w3", w3);
    if (with_proj) map.add(prefix + ".w_proj", w_proj);
  }
};

// Single-layer GRU over frames, input and hidden size C.
template <class T>
struct GRUParams {
  Tensor<T> wz, wr, wh;  // input weights, C x C
  Tensor<T> uz, ur, uh;  // hidden weights, C x C
  Tensor<T> bz, br, bh;  // 1 x C

  GRUParams() = default;
  GRUParams(int c, std::mt19937_64& rng)
      : wz(Tensor<T>::init_uniform({c, c}, c, rng)),
        wr(Tensor<T>::init_uniform({c, c}, c, rng)),
        wh(Tensor<T>::init_uniform({c, c}, c, rng)),
        uz(Tensor<T>::init_uniform({c, c}, c, rng)),
        ur(Tensor<T>::init_uniform({c, c}, c, rng)),
        uh(Tensor<T>::init_uniform({c, c}, c, rng)),
        bz(Tensor<T>::init_uniform({1, c}, c, rng)),
        br(Tensor<T>::init_uniform({1, c}, c, rng)),
        bh(Tensor<T>::init_uniform({1, c}, c, rng)) {}

  void register_params(ParamMap<T>& map, const std::string& prefix) {
    map.add(prefix + ".wz", wz);
    map.add(prefix + ".wr", wr);
    map.add(prefix + ".wh", wh);
    map.add(prefix + ".uz", uz);
    map.add(prefix + ".ur", ur);
    map.add(prefix + ".uh", uh);
    map.add(prefix + ".bz", bz);
    map.add(prefix + ".br", br);
    map.add(prefix + ".bh", bh);
  }
};

// 4-head dot-product self-attention, no positional encoding.
template <class T>
struct MultiHeadParams {
  static constexpr int kHeads = 4;
  Tensor<T> wq, wk, wv, wo;  // C x C

  MultiHeadParams() = default;
  MultiHeadParams(int c, std::mt19937_64& rng)
      : wq(Tensor<T>::init_uniform({c, c}, c, rng)),
        wk(Tensor<T>::init_uniform({c, c}, c, rng)),
        wv(Tensor<T>::init_uniform({c, c}, c, rng)),
        wo(Tensor<T>::init_uniform({c, c}, c, rng)) {
    if (c % kHeads != 0) throw ConfigError("multi_head: feature dim must be divisible by 4");
  }

  void register_params(ParamMap<T>& map, const std::string& prefix) {
    map.add(prefix + ".wq", wq);
    map.add(prefix + ".wk", wk);
    map.add(prefix + ".wv", wv);
    map.add(prefix + ".wo", wo);
  }
};

template <class T>
struct AggregatorVariant {
  AggregatorKind kind = AggregatorKind::mfl;
  MFLParams<T> mfl;
  GRUParams<T> gru;
  MultiHeadParams<T> mha;

  AggregatorVariant() = default;
  AggregatorVariant(AggregatorKind k, int c, int h1, int h2, std::mt19937_64& rng) : kind(k) {
    if (aggregator_uses_scoring(k)) mfl = MFLParams<T>(c, h1, h2, rng);
    if (aggregator_uses_gru(k)) gru = GRUParams<T>(c, rng);
    if (aggregator_uses_multi_head(k)) mha = MultiHeadParams<T>(c, rng);
  }

  void register_params(ParamMap<T>& map, const std::string& prefix) {
    if (aggregator_uses_scoring(kind))
      mfl.register_params(map, prefix + ".mfl", kind != AggregatorKind::mfl_no_proj);
    if (aggregator_uses_gru(kind)) gru.register_params(map, prefix + ".gru");
    if (aggregator_uses_multi_head(kind)) mha.register_params(map, prefix + ".mha");
  }

  // Parameter slots in registration order.
  std::vector<Tensor<T>*> param_list() {
    std::vector<Tensor<T>*> out;
    if (aggregator_uses_scoring(kind)) {
      out.push_back(&mfl.w1);
      out.push_back(&mfl.w2);
      out.push_back(&mfl.w3);
      if (kind != AggregatorKind::mfl_no_proj) out.push_back(&mfl.w_proj);
    }
    if (aggregator_uses_gru(kind))
      for (Tensor<T>* t : {&gru.wz, &gru.wr, &gru.wh, &gru.uz, &gru.ur, &gru.uh, &gru.bz,
                           &gru.br, &gru.bh})
        out.push_back(t);
    if (aggregator_uses_multi_head(kind))
      for (Tensor<T>* t : {&mha.wq, &mha.wk, &mha.wv, &mha.wo}) out.push_back(t);
    return out;
  }
};

// s_i = W3^T tanh(W2^T tanh(W1^T f_i)), evaluated for all rows at once.
template <class T>
Tensor<T> score_frames(const Tensor<T>& frame_features, const MFLParams<T>& p) {
  if (frame_features.rank() != 2) throw ShapeError("score_frames: expected B x C features");
  Tensor<T> h = tanh(matmul(frame_features, p.w1));
  h = tanh(matmul(h, p.w2));
  Tensor<T> s = matmul(h, p.w3);  // B x 1
  return reshape(s, {frame_features.dim(0)});
}

template <class T>
Tensor<T> normalize_weights(const Tensor<T>& scores) {
  return softmax(scores);
}

// Convex combination of frame features: alpha^T F.
template <class T>
Tensor<T> aggregate(const Tensor<T>& frame_features, const Tensor<T>& alpha) {
  if (frame_features.rank() != 2) throw ShapeError("aggregate: expected B x C features");
  const int b = frame_features.dim(0);
  if (static_cast<int>(alpha.size()) != b)
    throw ShapeError("aggregate: weight count does not match frame count");
  return matmul(reshape(alpha, {1, b}), frame_features);  // 1 x C
}

template <class T>
Tensor<T> project(const Tensor<T>& f_agg, const AggregatorVariant<T>& v) {
  switch (v.kind) {
    case AggregatorKind::mfl_no_proj:
      return f_agg;
    case AggregatorKind::mfl_nonlinear_proj:
      return tanh(matmul(f_agg, transpose(v.mfl.w_proj)));
    default:
      return matmul(f_agg, transpose(v.mfl.w_proj));
  }
}

template <class T>
Tensor<T> gru_sequence(const Tensor<T>& frame_features, const GRUParams<T>& p) {
  const int b = frame_features.dim(0), c = frame_features.dim(1);
  Tensor<T> h = Tensor<T>::zeros({1, c});
  std::vector<Tensor<T>> outputs;
  outputs.reserve(static_cast<size_t>(b));
  for (int t = 0; t < b; ++t) {
    Tensor<T> x = row(frame_features, t);
    Tensor<T> z = sigmoid(add(add(matmul(x, p.wz), matmul(h, p.uz)), p.bz));
    Tensor<T> r = sigmoid(add(add(matmul(x, p.wr), matmul(h, p.ur)), p.br));
    Tensor<T> cand = tanh(add(add(matmul(x, p.wh), matmul(mul(r, h), p.uh)), p.bh));
    // h' = (1 - z) * h + z * cand
    h = add(mul(sub(Tensor<T>::full({1, c}, T(1)), z), h), mul(z, cand));
    outputs.push_back(h);
  }
  return stack_rows(outputs);
}

template <class T>
Tensor<T> multi_head_attention(const Tensor<T>& frame_features, const MultiHeadParams<T>& p) {
  const int b = frame_features.dim(0), c = frame_features.dim(1);
  const int heads = MultiHeadParams<T>::kHeads;
  const int dh = c / heads;
  Tensor<T> q = matmul(frame_features, p.wq);
  Tensor<T> k = matmul(frame_features, p.wk);
  Tensor<T> v = matmul(frame_features, p.wv);
  std::vector<Tensor<T>> concat_rows;
  std::vector<Tensor<T>> head_outs;
  head_outs.reserve(static_cast<size_t>(heads));
  auto head_slice = [&](const Tensor<T>& m, int hidx) {
    // columns [hidx*dh, (hidx+1)*dh) of a B x C matrix, via spatial slicing
    return reshape(slice_spatial(reshape(m, {1, b, c}), 0, hidx * dh, b, dh), {b, dh});
  };
  for (int hh = 0; hh < heads; ++hh) {
    Tensor<T> qh = head_slice(q, hh);
    Tensor<T> kh = head_slice(k, hh);
    Tensor<T> vh = head_slice(v, hh);
    Tensor<T> att = softmax_rows(scale(matmul(qh, transpose(kh)),
                                       static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)))));
    head_outs.push_back(matmul(att, vh));  // B x dh
  }
  // concatenate head outputs along the feature axis
  std::vector<Tensor<T>> rows_out;
  rows_out.reserve(static_cast<size_t>(b));
  for (int i = 0; i < b; ++i) {
    std::vector<Tensor<T>> parts;
    for (int hh = 0; hh < heads; ++hh) parts.push_back(row(head_outs[static_cast<size_t>(hh)], i));
    rows_out.push_back(reshape(stack_rows(parts), {1, c}));
  }
  return matmul(stack_rows(rows_out), p.wo);  // B x C
}

// Dispatch over the aggregation variant; output is the 1 x C video feature.
template <class T>
Tensor<T> mfl_forward(const Tensor<T>& frame_features, const AggregatorVariant<T>& v) {
  if (frame_features.rank() != 2) throw ShapeError("mfl_forward: expected B x C features");
  const int b = frame_features.dim(0);
  Tensor<T> feats = frame_features;
  if (aggregator_uses_gru(v.kind)) feats = gru_sequence(feats, v.gru);
  if (aggregator_uses_multi_head(v.kind)) {
    Tensor<T> attended = multi_head_attention(feats, v.mha);
    Tensor<T> ones = Tensor<T>::full({1, b}, T(1) / static_cast<T>(b));
    return matmul(ones, attended);  // mean over frames
  }
  if (v.kind == AggregatorKind::mean_pool) {
    Tensor<T> ones = Tensor<T>::full({1, b}, T(1) / static_cast<T>(b));
    return matmul(ones, feats);
  }
  Tensor<T> scores = score_frames(feats, v.mfl);
  Tensor<T> alpha = normalize_weights(scores);
  Tensor<T> agg = aggregate(feats, alpha);
  return project(agg, v);
}

}  // namespace cardiac
