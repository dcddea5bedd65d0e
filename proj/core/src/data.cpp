#include "cardiac/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "cardiac/rng.hpp"

namespace cardiac {

namespace {

struct EllipseState {
  double cx, cy;       // center
  double a0, b0;       // end-diastolic semi-axes
  double phase;        // cycle phase offset
  double eda_scale;    // per-clip heart-size factor
  // decoy blob: a small dark structure (papillary muscle / near-field artifact)
  // that pulsates with its own random amplitude and phase
  double dcx, dcy, dr, damp, dphase;
};

uint64_t clip_seed(const SyntheticConfig& cfg, uint64_t seed) {
  return splitmix64(cfg.seed ^ splitmix64(seed));
}

EllipseState ellipse_state(const SyntheticConfig& cfg, uint64_t seed) {
  std::mt19937_64 rng(clip_seed(cfg, seed));
  EllipseState s;
  const double r = cfg.resolution;
  s.eda_scale = uniform_range(rng, 0.98, 1.02);
  s.a0 = 0.30 * r * s.eda_scale;
  s.b0 = 0.21 * r * s.eda_scale;
  s.cx = 0.5 * r + uniform_range(rng, -0.03, 0.03) * r;
  s.cy = 0.5 * r + uniform_range(rng, -0.03, 0.03) * r;
  s.phase = uniform_range(rng, 0.0, 2.0 * M_PI);
  const double ang = uniform_range(rng, 0.0, 2.0 * M_PI);
  s.dcx = 0.5 * r + 0.36 * r * std::cos(ang);
  s.dcy = 0.5 * r + 0.36 * r * std::sin(ang);
  s.dr = uniform_range(rng, 0.07, 0.12) * r;
  s.damp = uniform_range(rng, 0.5, 1.0);
  s.dphase = uniform_range(rng, 0.0, 2.0 * M_PI);
  return s;
}

// Axis scale for frame t: area oscillates between EDA and ESA = EDA*(1-ef/100).
double area_fraction(double ef, const SyntheticConfig& cfg, const EllipseState& s, int frame) {
  const double esa_frac = 1.0 - ef / 100.0;
  const double c = 0.5 * (1.0 + std::cos(2.0 * M_PI * frame / cfg.cycle_period + s.phase));
  return esa_frac + (1.0 - esa_frac) * c;
}

// Smooth coverage of the ellipse over one pixel, via a first-order signed
// distance estimate of the implicit function.
float ellipse_coverage(double px, double py, double cx, double cy, double a, double b) {
  const double dx = (px - cx) / a;
  const double dy = (py - cy) / b;
  const double g = dx * dx + dy * dy;
  const double gx = 2.0 * (px - cx) / (a * a);
  const double gy = 2.0 * (py - cy) / (b * b);
  const double grad = std::sqrt(gx * gx + gy * gy) + 1e-12;
  const double d = (g - 1.0) / grad;  // approx signed distance, >0 outside
  return static_cast<float>(std::clamp(0.5 - d, 0.0, 1.0));
}

void splat_ellipse(std::vector<float>& out, int r, double cx, double cy, double a, double b) {
  // bounding box keeps rendering cheap
  const int y0 = std::max(0, static_cast<int>(cy - b) - 2);
  const int y1 = std::min(r - 1, static_cast<int>(cy + b) + 2);
  const int x0 = std::max(0, static_cast<int>(cx - a) - 2);
  const int x1 = std::min(r - 1, static_cast<int>(cx + a) + 2);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      float& px = out[static_cast<size_t>(y) * r + x];
      px = std::max(px, ellipse_coverage(x + 0.5, y + 0.5, cx, cy, a, b));
    }
}

void render_mask(std::vector<float>& out, const SyntheticConfig& cfg, const EllipseState& s,
                 double ef, int frame) {
  const int r = cfg.resolution;
  const double sc = std::sqrt(area_fraction(ef, cfg, s, frame));
  out.assign(static_cast<size_t>(r) * r, 0.0f);
  splat_ellipse(out, r, s.cx, s.cy, s.a0 * sc, s.b0 * sc);
}

// The decoy pulsates like a second, smaller chamber with its own phase and an
// amplitude unrelated to the label; it is part of the rendered pixels but not
// of the analytic ventricle mask.
void render_decoy(std::vector<float>& out, const SyntheticConfig& cfg, const EllipseState& s,
                  int frame) {
  const int r = cfg.resolution;
  const double amp = cfg.decoy * s.damp;
  const double c = 0.5 * (1.0 + std::cos(2.0 * M_PI * frame / cfg.cycle_period + s.dphase));
  const double sc = std::sqrt((1.0 - amp) + amp * c);
  out.assign(static_cast<size_t>(r) * r, 0.0f);
  splat_ellipse(out, r, s.dcx, s.dcy, s.dr * sc, s.dr * sc);
}

}  // namespace

VideoClip gen_clip(double ef, const SyntheticConfig& cfg, uint64_t seed) {
  cfg.validate();
  if (ef < cfg.ef_min || ef > cfg.ef_max)
    throw ValidationError("gen_clip: EF " + std::to_string(ef) + " outside configured range");
  const int r = cfg.resolution;
  const EllipseState s = ellipse_state(cfg, seed);
  std::mt19937_64 noise_rng(splitmix64(clip_seed(cfg, seed) ^ 0x5eedf00dULL));

  VideoClip clip;
  clip.t = cfg.total_frames;
  clip.h = clip.w = r;
  clip.ef_label = ef;
  clip.frames.resize(static_cast<size_t>(cfg.total_frames) * r * r);
  std::vector<float> mask;
  std::vector<float> decoy;
  std::vector<float> speckle(static_cast<size_t>(r) * r);
  const float fg = 0.08f, bg = 0.65f;
  for (int t = 0; t < cfg.total_frames; ++t) {
    // speckle decorrelates frame to frame, as in real echo
    for (auto& v : speckle) v = static_cast<float>(uniform_range(noise_rng, -1.0, 1.0));
    // per-frame gain wobble mimics automatic-gain drift of the scanner
    const float gain = static_cast<float>(
        1.0 + cfg.gain_jitter * uniform_range(noise_rng, -1.0, 1.0));
    render_mask(mask, cfg, s, ef, t);
    if (cfg.decoy > 0.0) {
      render_decoy(decoy, cfg, s, t);
      for (size_t i = 0; i < mask.size(); ++i) mask[i] = std::max(mask[i], decoy[i]);
    }
    float* frame = clip.frames.data() + static_cast<size_t>(t) * r * r;
    for (size_t i = 0; i < mask.size(); ++i) {
      const float base = bg + 0.10f * speckle[i];
      float v = gain * (base * (1.0f - mask[i]) + fg * mask[i]);
      v += static_cast<float>(cfg.noise_sigma * gaussian(noise_rng));
      frame[i] = std::clamp(v, 0.0f, 1.0f);
    }
  }
  return clip;
}

std::vector<float> gen_mask(double ef, const SyntheticConfig& cfg, uint64_t seed, int frame) {
  cfg.validate();
  const EllipseState s = ellipse_state(cfg, seed);
  std::vector<float> mask;
  render_mask(mask, cfg, s, ef, frame);
  return mask;
}

double measure_ef_from_masks(double ef, const SyntheticConfig& cfg, uint64_t seed) {
  const int frames = std::min(cfg.total_frames, cfg.cycle_period + 1);
  double max_a = 0.0, min_a = 1e30;
  std::vector<float> mask;
  const EllipseState s = ellipse_state(cfg, seed);
  for (int t = 0; t < frames; ++t) {
    render_mask(mask, cfg, s, ef, t);
    double area = 0.0;
    for (float v : mask) area += v;
    max_a = std::max(max_a, area);
    min_a = std::min(min_a, area);
  }
  if (max_a <= 0.0) throw NumericalError("measure_ef_from_masks: empty mask");
  return (max_a - min_a) / max_a * 100.0;
}

std::vector<int> frame_sample(int total_frames, int length, int stride, int offset) {
  if (total_frames < 1) throw ContractError("frame_sample: empty clip");
  if (length < 1 || stride < 1) throw ValidationError("frame_sample: length and stride must be >= 1");
  std::vector<int> idx(static_cast<size_t>(length));
  for (int i = 0; i < length; ++i)
    idx[static_cast<size_t>(i)] = (offset + i * stride) % total_frames;
  return idx;
}

int random_offset(int total_frames, uint64_t seed, const std::string& clip_id, int epoch) {
  std::mt19937_64 rng(splitmix64(seed ^ fnv1a64(clip_id) ^ splitmix64(static_cast<uint64_t>(epoch))));
  return static_cast<int>(rng() % static_cast<uint64_t>(total_frames));
}

Manifest read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open manifest: " + path);
  Manifest m;
  std::string line;
  if (!std::getline(f, line)) throw FormatError("empty manifest: " + path);
  // header may carry extra EchoNet columns; FileName, EF, Split must lead
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (!header.empty() && !header[0].empty() && header[0].back() == '\r') header[0].pop_back();
  int fi = -1, ei = -1, si = -1;
  for (size_t i = 0; i < header.size(); ++i) {
    std::string h = header[i];
    if (!h.empty() && h.back() == '\r') h.pop_back();
    if (h == "FileName") fi = static_cast<int>(i);
    if (h == "EF") ei = static_cast<int>(i);
    if (h == "Split") si = static_cast<int>(i);
  }
  if (fi < 0 || ei < 0 || si < 0)
    throw FormatError("manifest header must contain FileName, EF, Split: " + path);
  size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const int need = std::max({fi, ei, si});
    if (static_cast<int>(cells.size()) <= need)
      throw FormatError("manifest line " + std::to_string(lineno) + " has too few columns");
    ManifestRow row;
    row.file_name = cells[static_cast<size_t>(fi)];
    try {
      row.ef = std::stod(cells[static_cast<size_t>(ei)]);
    } catch (const std::exception&) {
      throw FormatError("manifest line " + std::to_string(lineno) + ": bad EF value");
    }
    if (row.ef < 0.0 || row.ef > 100.0)
      throw FormatError("manifest line " + std::to_string(lineno) + ": EF outside [0, 100]");
    row.split = cells[static_cast<size_t>(si)];
    m.rows.push_back(std::move(row));
  }
  return m;
}

void write_manifest(const std::string& path, const Manifest& m) {
  std::ofstream f(path, std::ios::binary);  // binary keeps LF endings
  if (!f) throw FormatError("cannot open manifest for writing: " + path);
  f << "FileName,EF,Split\n";
  for (const auto& r : m.rows) {
    std::ostringstream ef;
    ef.precision(17);
    ef << r.ef;
    f << r.file_name << "," << ef.str() << "," << r.split << "\n";
  }
}

Manifest few_shot_sample(const Manifest& manifest, int n_shot, uint64_t seed) {
  if (n_shot < 1) throw ValidationError("few_shot_sample: n_shot must be >= 1");
  std::map<int, std::vector<size_t>> classes;
  for (size_t i = 0; i < manifest.rows.size(); ++i) {
    const auto& r = manifest.rows[i];
    if (r.split != "TRAIN") continue;
    int cls = std::clamp(static_cast<int>(std::floor(r.ef)), 1, 100);
    classes[cls].push_back(i);
  }
  if (classes.empty()) throw ValidationError("few_shot_sample: empty TRAIN split");
  Manifest out;
  for (auto& [cls, idx] : classes) {
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<uint64_t>(cls) * 0x9e37ULL)));
    // Fisher-Yates with a class-fixed stream: the draw order is independent
    // of n_shot, so smaller shot subsets nest inside larger ones.
    std::vector<size_t> order = idx;
    for (size_t i = 0; i + 1 < order.size(); ++i) {
      size_t j = i + rng() % (order.size() - i);
      std::swap(order[i], order[j]);
    }
    const size_t take = std::min<size_t>(static_cast<size_t>(n_shot), order.size());
    for (size_t i = 0; i < take; ++i) out.rows.push_back(manifest.rows[order[i]]);
  }
  return out;
}

void write_clip(const std::string& path, const VideoClip& clip) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open clip for writing: " + path);
  f.write("EFV1", 4);
  uint32_t dims[3] = {static_cast<uint32_t>(clip.t), static_cast<uint32_t>(clip.h),
                      static_cast<uint32_t>(clip.w)};
  f.write(reinterpret_cast<const char*>(dims), 12);
  f.write(reinterpret_cast<const char*>(clip.frames.data()),
          static_cast<std::streamsize>(clip.frames.size() * 4));
  if (!f) throw FormatError("write failure on clip: " + path);
}

VideoClip read_clip(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open clip: " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, "EFV1", 4) != 0)
    throw FormatError("bad clip magic at byte 0 in " + path);
  uint32_t dims[3];
  if (!f.read(reinterpret_cast<char*>(dims), 12))
    throw FormatError("truncated clip header at byte 4 in " + path);
  VideoClip clip;
  clip.t = static_cast<int>(dims[0]);
  clip.h = static_cast<int>(dims[1]);
  clip.w = static_cast<int>(dims[2]);
  if (clip.t < 1 || clip.h < 1 || clip.w < 1)
    throw FormatError("bad clip dimensions at byte 4 in " + path);
  const size_t count = static_cast<size_t>(clip.t) * clip.h * clip.w;
  clip.frames.resize(count);
  if (!f.read(reinterpret_cast<char*>(clip.frames.data()),
              static_cast<std::streamsize>(count * 4)))
    throw FormatError("truncated clip data at byte 16 in " + path);
  clip.id = std::filesystem::path(path).stem().string();
  return clip;
}

void write_dataset(const std::string& dir, const Manifest& manifest,
                   const std::vector<VideoClip>& clips) {
  if (manifest.rows.size() != clips.size())
    throw ContractError("write_dataset: manifest/clip count mismatch");
  std::filesystem::create_directories(dir);
  write_manifest((std::filesystem::path(dir) / "FileList.csv").string(), manifest);
  for (size_t i = 0; i < clips.size(); ++i)
    write_clip((std::filesystem::path(dir) / manifest.rows[i].file_name).string(), clips[i]);
}

std::pair<Manifest, std::vector<VideoClip>> read_dataset(const std::string& dir) {
  Manifest m = read_manifest((std::filesystem::path(dir) / "FileList.csv").string());
  std::vector<VideoClip> clips;
  clips.reserve(m.rows.size());
  for (const auto& r : m.rows) {
    VideoClip c = read_clip((std::filesystem::path(dir) / r.file_name).string());
    c.ef_label = r.ef;
    c.id = r.file_name;
    clips.push_back(std::move(c));
  }
  return {std::move(m), std::move(clips)};
}

}  // namespace cardiac
