#pragma once

// Multi-resolution representation: upsample the base image 2x, encode the
// four tiles and the base image with the shared encoder, reassemble the tile
// maps, pool back to base size and fuse by elementwise mean. Adds no
// trainable parameters.

#include <array>
#include <optional>
#include <vector>

#include "cardiac/encoder.hpp"
#include "cardiac/tensor.hpp"

namespace cardiac {

enum class UpsampleMode { nearest, bilinear };

struct ZoomConfig {
  int base_res = 112;
  int hi_res = 224;
  UpsampleMode upsample = UpsampleMode::bilinear;

  void validate() const {
    if (hi_res != 2 * base_res) throw ConfigError("ZoomConfig: hi_res must equal 2 * base_res");
  }
};

template <class T>
Tensor<T> upsample(const Tensor<T>& image, const ZoomConfig& cfg) {
  cfg.validate();
  if (image.rank() != 3 || image.dim(1) != cfg.base_res || image.dim(2) != cfg.base_res)
    throw ShapeError("upsample: expected C x base x base input");
  return cfg.upsample == UpsampleMode::nearest ? upsample_nearest2x(image)
                                               : upsample_bilinear2x(image);
}

// Non-overlapping quadrants in row-major order: tl, tr, bl, br.
template <class T>
std::array<Tensor<T>, 4> split_tiles(const Tensor<T>& image, const ZoomConfig& cfg = {}) {
  cfg.validate();
  if (image.rank() != 3 || image.dim(1) != cfg.hi_res || image.dim(2) != cfg.hi_res)
    throw ShapeError("split_tiles: expected C x hi x hi input");
  const int half = cfg.hi_res / 2;
  return {slice_spatial(image, 0, 0, half, half), slice_spatial(image, 0, half, half, half),
          slice_spatial(image, half, 0, half, half),
          slice_spatial(image, half, half, half, half)};
}

template <class T>
Tensor<T> assemble_feature_map(const std::array<Tensor<T>, 4>& tile_feats) {
  return assemble_quadrants(tile_feats[0], tile_feats[1], tile_feats[2], tile_feats[3]);
}

template <class T>
Tensor<T> pool_to_base(const Tensor<T>& map) {
  if (map.rank() != 3) throw ShapeError("pool_to_base: expected C x H x W input");
  if (map.dim(1) % 2 != 0 || map.dim(2) % 2 != 0)
    throw ShapeError("pool_to_base: extents must be even");
  return avg_pool2d(map, 2);
}

// Elementwise mean of the two branches.
template <class T>
Tensor<T> fuse(const Tensor<T>& base, const Tensor<T>& pooled) {
  check_same_shape(base, pooled, "fuse");
  return scale(add(base, pooled), T(0.5));
}

template <class T>
Tensor<T> echozoom_forward(const Tensor<T>& image, const Encoder<T>& encoder,
                           const ZoomConfig& cfg) {
  Tensor<T> base_map = encoder.encode_frame(image).first;
  Tensor<T> hi = upsample(image, cfg);
  auto tiles = split_tiles(hi, cfg);
  std::array<Tensor<T>, 4> tile_maps = {
      encoder.encode_frame(tiles[0]).first, encoder.encode_frame(tiles[1]).first,
      encoder.encode_frame(tiles[2]).first, encoder.encode_frame(tiles[3]).first};
  return fuse(base_map, pool_to_base(assemble_feature_map(tile_maps)));
}

// Per-frame feature rows: EchoZoom-fused map (when configured) or the plain
// encoder map, globally average-pooled.
template <class T>
Tensor<T> encode_video(const Encoder<T>& encoder, const std::vector<Tensor<T>>& frames,
                       const std::optional<ZoomConfig>& zoom) {
  if (frames.empty()) throw ContractError("encode_video: empty clip");
  std::vector<Tensor<T>> rows;
  rows.reserve(frames.size());
  for (const auto& frame : frames) {
    Tensor<T> map = zoom ? echozoom_forward(frame, encoder, *zoom)
                         : encoder.encode_frame(frame).first;
    rows.push_back(global_avg_pool(map));
  }
  return stack_rows(rows);
}

}  // namespace cardiac
