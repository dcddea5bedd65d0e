#pragma once

// Synthetic echo-like clips with analytically known ejection fraction, clip
// frame sampling, the few-shot subset protocol, and dataset I/O.
//
// File formats:
//   manifest: CSV "FileName,EF,Split" (UTF-8, LF)
//   clip:     magic "EFV1", u32 LE T, H, W, then T*H*W LE f32,
//             frame-major row-major

#include <cstdint>
#include <string>
#include <vector>

#include "cardiac/errors.hpp"

namespace cardiac {

struct VideoClip {
  int t = 0, h = 0, w = 0;
  std::vector<float> frames;  // t*h*w, values in [0, 1]
  double ef_label = 0.0;
  std::string id;
};

struct SyntheticConfig {
  int resolution = 112;
  int total_frames = 175;
  int cycle_period = 32;  // frames per cardiac cycle, >= 8
  double ef_min = 10.0;
  double ef_max = 90.0;
  double noise_sigma = 0.02;
  double gain_jitter = 0.0;  // per-frame multiplicative gain spread, [0, 1)
  double decoy = 0.0;        // pulsation amplitude of a small dark decoy blob, [0, 1]
  uint64_t seed = 0;

  void validate() const {
    if (cycle_period < 8) throw ConfigError("SyntheticConfig: cycle_period must be >= 8");
    if (ef_min < 0.0 || ef_max > 100.0 || ef_min > ef_max)
      throw ConfigError("SyntheticConfig: ef range must lie within [0, 100]");
    if (resolution < 16) throw ConfigError("SyntheticConfig: resolution too small");
    if (total_frames < 1) throw ConfigError("SyntheticConfig: total_frames must be >= 1");
    if (gain_jitter < 0.0 || gain_jitter >= 1.0)
      throw ConfigError("SyntheticConfig: gain_jitter must lie in [0, 1)");
    if (decoy < 0.0 || decoy > 1.0)
      throw ConfigError("SyntheticConfig: decoy must lie in [0, 1]");
  }
};

// Dark ellipse ("ventricle") on a speckled bright background; the ellipse
// area oscillates sinusoidally between end-diastolic and end-systolic area
// with ESA = EDA * (1 - ef/100).
VideoClip gen_clip(double ef, const SyntheticConfig& cfg, uint64_t seed);

// Noise-free ventricle coverage mask for frame t of the same clip; the sum of
// the mask is the ventricle area in pixels.
std::vector<float> gen_mask(double ef, const SyntheticConfig& cfg, uint64_t seed, int frame);

// EF measured from the generator's own masks over one cycle:
// (max area - min area) / max area * 100.
double measure_ef_from_masks(double ef, const SyntheticConfig& cfg, uint64_t seed);

// Frame indices offset, offset+stride, ...; wraps modulo T for short clips.
std::vector<int> frame_sample(int total_frames, int length, int stride, int offset);

// Random training offset in [0, T), derived from (seed, clip id, epoch).
int random_offset(int total_frames, uint64_t seed, const std::string& clip_id, int epoch);

struct ManifestRow {
  std::string file_name;
  double ef = 0.0;
  std::string split;  // TRAIN | VAL | TEST
};

struct Manifest {
  std::vector<ManifestRow> rows;
};

Manifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const Manifest& m);

// Per integer EF class (floor, clamped to 1..100) draw min(n_shot, class
// size) TRAIN rows. Draw order per class is fixed by the seed, so smaller
// shot settings are subsets of larger ones.
Manifest few_shot_sample(const Manifest& manifest, int n_shot, uint64_t seed);

void write_clip(const std::string& path, const VideoClip& clip);
VideoClip read_clip(const std::string& path);

// Writes <dir>/FileList.csv plus one clip file per row.
void write_dataset(const std::string& dir, const Manifest& manifest,
                   const std::vector<VideoClip>& clips);
std::pair<Manifest, std::vector<VideoClip>> read_dataset(const std::string& dir);

}  // namespace cardiac
