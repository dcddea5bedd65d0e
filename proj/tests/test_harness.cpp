#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cardiac/harness.hpp"
#include "doctest.h"

using namespace cardiac;

namespace {

ModelConfig tiny_model(uint64_t seed = 0) {
  ModelConfig mc;
  mc.encoder.stage_channels = {2, 4};
  mc.encoder.allowed_inputs = {16};
  mc.mfl_h1 = 6;
  mc.mfl_h2 = 4;
  mc.regressor_hidden = 6;
  mc.seed = seed;
  return mc;
}

Dataset tiny_dataset(int n_train, uint64_t seed) {
  SyntheticConfig cfg;
  cfg.resolution = 16;
  cfg.total_frames = 16;
  cfg.cycle_period = 8;
  cfg.seed = seed;
  Dataset ds;
  for (int i = 0; i < n_train; ++i) {
    auto clip = gen_clip(20.0 + 60.0 * i / std::max(1, n_train - 1), cfg, static_cast<uint64_t>(i));
    clip.id = "train_" + std::to_string(i);
    ds.train.push_back(std::move(clip));
  }
  return ds;
}

}  // namespace

TEST_CASE("cosine schedule endpoints") {
  CHECK(cosine_lr_mult(0, 100) == doctest::Approx(1.0));
  CHECK(std::abs(cosine_lr_mult(100, 100)) < 1e-12);
  CHECK(cosine_lr_mult(50, 100) == doctest::Approx(0.5));
  // monotone non-increasing over the run
  double prev = 2.0;
  for (int e = 0; e <= 100; ++e) {
    double m = cosine_lr_mult(e, 100);
    CHECK(m <= prev + 1e-15);
    prev = m;
  }
}

TEST_CASE("optimizer leaves parameters untouched on zero gradients") {
  ParamMap<double> params;
  params.add("w", Tensor<double>::from({3}, {1.0, -2.0, 0.5}, true));
  params.zero_grad();
  auto before = params.items[0].second.values();
  RAdam<double> opt(0.1);
  opt.step(params);
  CHECK(params.items[0].second.values() == before);
}

TEST_CASE("early steps use the momentum-only fallback") {
  // rho_1 = rho_inf - 2*beta2/(1-beta2); with beta2 = 0.999 this is ~ -0.0005,
  // well below 4, so the first update must be lr * m_hat = lr * g.
  ParamMap<double> params;
  params.add("w", Tensor<double>::from({1}, {1.0}, true));
  params.zero_grad();
  params.items[0].second.grad()[0] = 2.0;
  RAdam<double> opt(0.01);
  opt.step(params);
  CHECK(params.items[0].second.data()[0] == doctest::Approx(1.0 - 0.01 * 2.0).epsilon(1e-12));
}

TEST_CASE("constant gradient drives the parameter monotonically down") {
  ParamMap<double> params;
  params.add("w", Tensor<double>::from({1}, {5.0}, true));
  RAdam<double> opt(0.05);
  double prev = 5.0;
  for (int step = 0; step < 50; ++step) {
    params.zero_grad();
    params.items[0].second.grad()[0] = 1.0;
    opt.step(params);
    const double cur = params.items[0].second.data()[0];
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("optimizer rejects non-finite gradients") {
  ParamMap<double> params;
  params.add("w", Tensor<double>::from({1}, {1.0}, true));
  params.zero_grad();
  params.items[0].second.grad()[0] = std::nan("");
  RAdam<double> opt(0.01);
  CHECK_THROWS_AS(opt.step(params), NumericalError);
}

TEST_CASE("plain adam differs from the rectified variant after warmup") {
  auto run = [](bool rectified) {
    ParamMap<double> params;
    params.add("w", Tensor<double>::from({1}, {1.0}, true));
    RAdam<double> opt(0.01, 0.9, 0.999, 1e-8, rectified);
    for (int step = 0; step < 10; ++step) {
      params.zero_grad();
      params.items[0].second.grad()[0] = 0.5;
      opt.step(params);
    }
    return params.items[0].second.data()[0];
  };
  CHECK(run(true) != run(false));
}

TEST_CASE("evaluate computes MAE and RMSE from residuals") {
  // A model stub is impractical here, so check the algebra on a real model by
  // overriding labels: residuals shift with the label by exactly -1.
  auto ds = tiny_dataset(2, 1);
  Model<double> model(tiny_model(3));
  auto base = evaluate(model, ds.train, 4, 2);
  CHECK(base.rmse >= base.mae - 1e-12);

  // perfect labels: MAE and RMSE both zero
  auto clips = ds.train;
  for (auto& c : clips) {
    auto idx = frame_sample(c.t, 4, 2, 0);
    c.ef_label = model.predict_value(frames_from_clip<double>(c, idx));
  }
  auto perfect = evaluate(model, clips, 4, 2);
  CHECK(perfect.mae < 1e-9);
  CHECK(perfect.rmse < 1e-9);

  // residuals [+2, -2]: MAE 2, RMSE 2
  auto shifted = clips;
  shifted[0].ef_label -= 2.0;
  shifted[1].ef_label += 2.0;
  auto ev = evaluate(model, shifted, 4, 2);
  CHECK(ev.mae == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(ev.rmse == doctest::Approx(2.0).epsilon(1e-9));

  // residuals [0, 4]: MAE 2, RMSE sqrt(8)
  auto skew = clips;
  skew[1].ef_label -= 4.0;
  auto ev2 = evaluate(model, skew, 4, 2);
  CHECK(ev2.mae == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(ev2.rmse == doctest::Approx(std::sqrt(8.0)).epsilon(1e-9));

  CHECK_THROWS_AS(evaluate(model, std::vector<VideoClip>{}, 4, 2), ValidationError);
}

TEST_CASE("evaluation order does not depend on clip storage order") {
  auto ds = tiny_dataset(4, 2);
  Model<double> model(tiny_model(4));
  auto a = evaluate(model, ds.train, 4, 2);
  auto reversed = ds.train;
  std::reverse(reversed.begin(), reversed.end());
  auto b = evaluate(model, reversed, 4, 2);
  CHECK(a.mae == b.mae);
  CHECK(a.rmse == b.rmse);
}

TEST_CASE("training is deterministic and reduces the loss") {
  auto ds = tiny_dataset(6, 3);
  TrainConfig cfg;
  cfg.model = tiny_model();
  cfg.lr = 3e-3;
  cfg.epochs = 8;
  cfg.batch_size = 2;
  cfg.clip_length = 4;
  cfg.clip_stride = 2;
  cfg.seed = 11;

  auto r1 = train<double>(cfg, ds);
  auto r2 = train<double>(cfg, ds);
  REQUIRE(r1.epoch_losses.size() == 8);
  CHECK(r1.epoch_losses == r2.epoch_losses);
  for (size_t i = 0; i < r1.model.params().items.size(); ++i)
    CHECK(r1.model.params().items[i].second.values() ==
          r2.model.params().items[i].second.values());

  CHECK(r1.epoch_losses.back() < r1.epoch_losses.front());

  TrainConfig other = cfg;
  other.seed = 12;
  auto r3 = train<double>(other, ds);
  CHECK(r3.epoch_losses != r1.epoch_losses);
}

TEST_CASE("validation split selects the best checkpoint") {
  auto ds = tiny_dataset(6, 4);
  ds.val.push_back(ds.train.back());
  TrainConfig cfg;
  cfg.model = tiny_model();
  cfg.lr = 3e-3;
  cfg.epochs = 5;
  cfg.batch_size = 2;
  cfg.clip_length = 4;
  cfg.clip_stride = 2;
  cfg.seed = 13;
  auto r = train<double>(cfg, ds);
  CHECK(r.best_epoch >= 0);
  CHECK(r.best_epoch < 5);
}

TEST_CASE("train rejects bad configs") {
  auto ds = tiny_dataset(2, 5);
  TrainConfig cfg;
  cfg.model = tiny_model();
  cfg.epochs = 0;
  CHECK_THROWS_AS(train<double>(cfg, ds), ConfigError);
  cfg.epochs = 1;
  cfg.optimizer = "sgd";
  CHECK_THROWS_AS(train<double>(cfg, ds), ConfigError);
  cfg.optimizer = "radam";
  CHECK_THROWS_AS(train<double>(cfg, Dataset{}), ValidationError);
}

TEST_CASE("metrics CSV layout") {
  auto path = (std::filesystem::temp_directory_path() / "metrics_test.csv").string();
  std::vector<MetricsRow> rows = {{"full", 1, 42, 7.25, 9.5, 12.0},
                                  {"base", 1, 42, 8.5, 10.25, 11.0}};
  write_metrics_csv(path, rows);
  std::ifstream f(path);
  std::string line;
  REQUIRE(std::getline(f, line));
  CHECK(line == "setting,shots,seed,mae,rmse,wall_seconds");
  REQUIRE(std::getline(f, line));
  CHECK(line == "full,1,42,7.25,9.5,12");
  REQUIRE(std::getline(f, line));
  CHECK(line.rfind("base,1,42,", 0) == 0);
  std::filesystem::remove(path);
}

TEST_CASE("ablation grid reports one row per pair plus summaries") {
  auto ds = tiny_dataset(4, 6);
  ds.test = ds.train;
  TrainConfig cfg;
  cfg.model = tiny_model();
  cfg.lr = 3e-3;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.clip_length = 4;
  cfg.clip_stride = 2;

  TrainConfig mean_cfg = cfg;
  mean_cfg.model.aggregator = AggregatorKind::mean_pool;
  std::vector<AblationPoint> grid = {{"mfl", cfg, 1}, {"mean_pool", mean_cfg, 1}};
  auto rows = ablate<double>(grid, {1, 2}, ds, 2);
  REQUIRE(rows.size() == 6);  // 2 points x 2 seeds + 2 summaries
  int summaries = 0;
  for (const auto& r : rows) {
    if (r.setting.find(":mean") != std::string::npos) {
      ++summaries;
      continue;
    }
    CHECK(std::isfinite(r.mae));
    CHECK(std::isfinite(r.rmse));
    CHECK(r.rmse >= r.mae - 1e-12);
    CHECK(r.wall_seconds > 0.0);
  }
  CHECK(summaries == 2);

  // summary means match the per-seed rows
  for (size_t p = 0; p < grid.size(); ++p) {
    double mae = 0;
    for (const auto& r : rows)
      if (r.setting == grid[p].setting) mae += r.mae;
    mae /= 2.0;
    for (const auto& r : rows)
      if (r.setting == grid[p].setting + ":mean") CHECK(r.mae == doctest::Approx(mae));
  }
}
