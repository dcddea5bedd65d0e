#pragma once

// Training loop, evaluation, the ablation runner and the gradient-check
// suite.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cardiac/gradcheck.hpp"
#include "cardiac/model.hpp"

namespace cardiac {

struct TrainConfig {
  double lr = 5e-5;
  int epochs = 100;
  int batch_size = 2;
  int clip_length = 48;
  int clip_stride = 2;
  std::string optimizer = "radam";  // radam | adam
  double weight_decay = 0.0;        // off unless configured
  double grad_clip_norm = 0.0;      // 0 disables
  ModelConfig model;
  uint64_t seed = 0;

  void validate() const {
    if (lr <= 0 || epochs < 1 || batch_size < 1 || clip_length < 1 || clip_stride < 1)
      throw ConfigError("TrainConfig: lr, epochs, batch_size, clip_length, clip_stride must be positive");
    if (optimizer != "radam" && optimizer != "adam")
      throw ConfigError("TrainConfig: unknown optimizer " + optimizer);
  }
};

struct MetricsRow {
  std::string setting;
  int shots = 0;
  uint64_t seed = 0;
  double mae = 0.0;
  double rmse = 0.0;
  double wall_seconds = 0.0;
};

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open metrics file for writing: " + path);
  f << "setting,shots,seed,mae,rmse,wall_seconds\n";
  for (const auto& r : rows) {
    std::ostringstream os;
    os.precision(17);
    os << r.setting << "," << r.shots << "," << r.seed << "," << r.mae << "," << r.rmse << ","
       << r.wall_seconds << "\n";
    f << os.str();
  }
}

struct Dataset {
  std::vector<VideoClip> train, val, test;
};

struct EvalResult {
  double mae = 0.0;
  double rmse = 0.0;
};

// Fixed offset-0 sampling; residuals merged in clip-id order.
template <class T>
EvalResult evaluate(const Model<T>& model, const std::vector<VideoClip>& clips, int clip_length,
                    int clip_stride) {
  if (clips.empty()) throw ValidationError("evaluate: empty split");
  std::vector<size_t> order(clips.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return clips[a].id < clips[b].id; });
  double abs_sum = 0.0, sq_sum = 0.0;
  for (size_t i : order) {
    const auto& clip = clips[i];
    auto idx = frame_sample(clip.t, clip_length, clip_stride, /*offset=*/0);
    auto frames = frames_from_clip<T>(clip, idx);
    const double r = model.predict_value(frames) - clip.ef_label;
    abs_sum += std::abs(r);
    sq_sum += r * r;
  }
  EvalResult out;
  out.mae = abs_sum / static_cast<double>(clips.size());
  out.rmse = std::sqrt(sq_sum / static_cast<double>(clips.size()));
  return out;
}

template <class T>
struct TrainResult {
  Model<T> model;
  std::vector<double> epoch_losses;
  int best_epoch = -1;  // set when validation-based selection ran
};

// End-to-end training per the recipe: shuffled clips, random frame offsets,
// batched gradient accumulation, RAdam with a cosine-decayed learning rate.
// Deterministic given cfg.seed. When dataset.val is nonempty the checkpoint
// with the best validation MAE is returned.
template <class T>
TrainResult<T> train(const TrainConfig& cfg, const Dataset& dataset) {
  cfg.validate();
  if (dataset.train.empty()) throw ValidationError("train: empty training subset");
  ModelConfig mc = cfg.model;
  mc.seed = cfg.seed;
  TrainResult<T> out{Model<T>(mc)};
  Model<T>& model = out.model;
  RAdam<T> opt(cfg.lr, 0.9, 0.999, 1e-8, cfg.optimizer == "radam");
  std::mt19937_64 shuffle_rng(splitmix64(cfg.seed ^ 0x7ea1aULL));
  std::vector<size_t> order(dataset.train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_val = 1e30;
  std::vector<std::vector<T>> best_params;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double mult = cosine_lr_mult(epoch, cfg.epochs);
    for (size_t i = 0; i + 1 < order.size(); ++i) {
      size_t j = i + shuffle_rng() % (order.size() - i);
      std::swap(order[i], order[j]);
    }
    double epoch_loss = 0.0;
    size_t step_in_epoch = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      model.params().zero_grad();
      double batch_loss = 0.0;
      for (size_t bi = start; bi < end; ++bi) {
        const VideoClip& clip = dataset.train[order[bi]];
        const int offset = random_offset(clip.t, cfg.seed, clip.id, epoch);
        auto idx = frame_sample(clip.t, cfg.clip_length, cfg.clip_stride, offset);
        auto frames = frames_from_clip<T>(clip, idx);
        Tensor<T> loss = scale(model.loss(frames, clip.ef_label),
                               static_cast<T>(1.0 / static_cast<double>(end - start)));
        const double lv = static_cast<double>(loss.item());
        if (!std::isfinite(lv))
          throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) +
                               ", step " + std::to_string(step_in_epoch));
        batch_loss += lv;
        loss.backward();
      }
      if (cfg.grad_clip_norm > 0.0) {
        double norm_sq = 0.0;
        for (auto& [_, p] : model.params().items)
          for (T g : p.grad()) norm_sq += static_cast<double>(g) * g;
        const double norm = std::sqrt(norm_sq);
        if (norm > cfg.grad_clip_norm) {
          const T s = static_cast<T>(cfg.grad_clip_norm / norm);
          for (auto& [_, p] : model.params().items)
            for (auto& g : p.grad()) g *= s;
        }
      }
      if (cfg.weight_decay > 0.0)
        for (auto& [_, p] : model.params().items)
          for (size_t i = 0; i < p.size(); ++i)
            p.grad()[i] += static_cast<T>(cfg.weight_decay) * p.data()[i];
      opt.step(model.params(), mult);
      epoch_loss += batch_loss;
      ++step_in_epoch;
    }
    out.epoch_losses.push_back(epoch_loss / std::max<size_t>(1, step_in_epoch));

    if (!dataset.val.empty()) {
      EvalResult v = evaluate(model, dataset.val, cfg.clip_length, cfg.clip_stride);
      if (v.mae < best_val) {
        best_val = v.mae;
        out.best_epoch = epoch;
        best_params.clear();
        for (auto& [_, p] : model.params().items) best_params.push_back(p.values());
      }
    }
  }
  if (!best_params.empty())
    for (size_t i = 0; i < model.params().items.size(); ++i)
      model.params().items[i].second.values() = best_params[i];
  return out;
}

// ---------------------------------------------------------------------------
// ablation runner

struct AblationPoint {
  std::string setting;
  TrainConfig config;
  int shots = 0;  // reporting only
};

// Trains and evaluates every (point, seed) pair; failures are recorded as a
// row with NaN metrics rather than aborting the grid. Runs points in
// parallel, one isolated model per point.
template <class T>
std::vector<MetricsRow> ablate(const std::vector<AblationPoint>& grid,
                               const std::vector<uint64_t>& seeds, const Dataset& dataset,
                               int jobs = 0) {
  struct Job {
    size_t point;
    uint64_t seed;
  };
  std::vector<Job> work;
  for (size_t p = 0; p < grid.size(); ++p)
    for (uint64_t s : seeds) work.push_back({p, s});
  std::vector<MetricsRow> rows(work.size());
  if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(work.size())));

  std::atomic<size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const size_t w = next.fetch_add(1);
      if (w >= work.size()) break;
      const AblationPoint& pt = grid[work[w].point];
      MetricsRow row;
      row.setting = pt.setting;
      row.shots = pt.shots;
      row.seed = work[w].seed;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        TrainConfig cfg = pt.config;
        cfg.seed = work[w].seed;
        auto result = train<T>(cfg, dataset);
        const auto& split = dataset.test.empty() ? dataset.train : dataset.test;
        EvalResult ev = evaluate(result.model, split, cfg.clip_length, cfg.clip_stride);
        row.mae = ev.mae;
        row.rmse = ev.rmse;
      } catch (const std::exception&) {
        row.mae = row.rmse = std::nan("");
      }
      row.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      rows[w] = std::move(row);
    }
  };
  std::vector<std::thread> pool;
  for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  // summary row per grid point: mean and stddev over seeds
  std::vector<MetricsRow> out = rows;
  for (size_t p = 0; p < grid.size(); ++p) {
    double mae_sum = 0, rmse_sum = 0, mae_sq = 0, wall = 0;
    int n = 0;
    for (size_t w = 0; w < work.size(); ++w) {
      if (work[w].point != p || std::isnan(rows[w].mae)) continue;
      mae_sum += rows[w].mae;
      mae_sq += rows[w].mae * rows[w].mae;
      rmse_sum += rows[w].rmse;
      wall += rows[w].wall_seconds;
      ++n;
    }
    MetricsRow summary;
    summary.setting = grid[p].setting + ":mean";
    summary.shots = grid[p].shots;
    summary.seed = 0;
    if (n > 0) {
      summary.mae = mae_sum / n;
      summary.rmse = rmse_sum / n;
      summary.wall_seconds = wall;
    } else {
      summary.mae = summary.rmse = std::nan("");
    }
    out.push_back(summary);
  }
  return out;
}

// ---------------------------------------------------------------------------
// gradient-check suite

std::vector<GradCheckReport> gradcheck_all(int seeds_per_op = 5);

}  // namespace cardiac
