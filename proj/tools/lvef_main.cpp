// lvef: command-line front end for the ejection-fraction pipeline.
//
// Subcommands: synth-gen, train, eval, ablate, gradcheck, fewshot-split.
// Exit codes: 0 success, 2 validation/config error, 3 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cardiac/checkpoint.hpp"
#include "cardiac/harness.hpp"
#include "json.hpp"

using namespace cardiac;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json bins_to_json(const BinSpec& b) { return json(b.edges); }

BinSpec bins_from_json(const json& j) {
  BinSpec b;
  b.edges = j.get<std::vector<double>>();
  b.validate();
  return b;
}

json train_config_to_json(const TrainConfig& cfg) {
  json j;
  j["lr"] = cfg.lr;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["clip_length"] = cfg.clip_length;
  j["clip_stride"] = cfg.clip_stride;
  j["optimizer"] = cfg.optimizer;
  j["weight_decay"] = cfg.weight_decay;
  j["grad_clip_norm"] = cfg.grad_clip_norm;
  j["seed"] = cfg.seed;
  json m;
  m["stage_channels"] = cfg.model.encoder.stage_channels;
  m["allowed_inputs"] = cfg.model.encoder.allowed_inputs;
  m["base_resolution"] = cfg.model.encoder.base_resolution;
  m["mfl_h1"] = cfg.model.mfl_h1;
  m["mfl_h2"] = cfg.model.mfl_h2;
  m["aggregator"] = aggregator_name(cfg.model.aggregator);
  m["echozoom"] = cfg.model.echozoom;
  m["zoom_base_res"] = cfg.model.zoom.base_res;
  m["zoom_hi_res"] = cfg.model.zoom.hi_res;
  m["zoom_upsample"] = cfg.model.zoom.upsample == UpsampleMode::nearest ? "nearest" : "bilinear";
  m["bin_edges"] = bins_to_json(cfg.model.bins);
  m["temperature"] = cfg.model.temperature;
  m["reg_loss"] = loss_kind_name(cfg.model.reg_loss);
  m["huber_delta"] = cfg.model.huber_delta;
  m["regressor_hidden"] = cfg.model.regressor_hidden;
  j["model"] = m;
  return j;
}

void train_config_from_json(const json& j, TrainConfig& cfg) {
  if (j.contains("lr")) cfg.lr = j["lr"].get<double>();
  if (j.contains("epochs")) cfg.epochs = j["epochs"].get<int>();
  if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<int>();
  if (j.contains("clip_length")) cfg.clip_length = j["clip_length"].get<int>();
  if (j.contains("clip_stride")) cfg.clip_stride = j["clip_stride"].get<int>();
  if (j.contains("optimizer")) cfg.optimizer = j["optimizer"].get<std::string>();
  if (j.contains("weight_decay")) cfg.weight_decay = j["weight_decay"].get<double>();
  if (j.contains("grad_clip_norm")) cfg.grad_clip_norm = j["grad_clip_norm"].get<double>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
  if (!j.contains("model")) return;
  const json& m = j["model"];
  ModelConfig& mc = cfg.model;
  if (m.contains("stage_channels")) mc.encoder.stage_channels = m["stage_channels"].get<std::vector<int>>();
  if (m.contains("allowed_inputs")) mc.encoder.allowed_inputs = m["allowed_inputs"].get<std::vector<int>>();
  if (m.contains("base_resolution")) mc.encoder.base_resolution = m["base_resolution"].get<int>();
  if (m.contains("mfl_h1")) mc.mfl_h1 = m["mfl_h1"].get<int>();
  if (m.contains("mfl_h2")) mc.mfl_h2 = m["mfl_h2"].get<int>();
  if (m.contains("aggregator")) mc.aggregator = parse_aggregator(m["aggregator"].get<std::string>());
  if (m.contains("echozoom")) mc.echozoom = m["echozoom"].get<bool>();
  if (m.contains("zoom_base_res")) mc.zoom.base_res = m["zoom_base_res"].get<int>();
  if (m.contains("zoom_hi_res")) mc.zoom.hi_res = m["zoom_hi_res"].get<int>();
  if (m.contains("zoom_upsample"))
    mc.zoom.upsample = m["zoom_upsample"].get<std::string>() == "nearest" ? UpsampleMode::nearest
                                                                          : UpsampleMode::bilinear;
  if (m.contains("bin_edges")) mc.bins = bins_from_json(m["bin_edges"]);
  if (m.contains("temperature")) mc.temperature = m["temperature"].get<double>();
  if (m.contains("reg_loss")) mc.reg_loss = parse_loss_kind(m["reg_loss"].get<std::string>());
  if (m.contains("huber_delta")) mc.huber_delta = m["huber_delta"].get<double>();
  if (m.contains("regressor_hidden")) mc.regressor_hidden = m["regressor_hidden"].get<int>();
}

json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw ConfigError("bad JSON in " + path + ": " + e.what());
  }
  return j;
}

// Flags shared by train and ablate. Values recorded only when the user passed
// the flag, so they override --config rather than being clobbered by it.
struct CommonFlags {
  CLI::Option *agg = nullptr, *zoom = nullptr, *bins = nullptr, *scheme = nullptr,
              *reg = nullptr, *temp = nullptr, *lr = nullptr, *epochs = nullptr,
              *batch = nullptr, *length = nullptr, *stride = nullptr, *opt = nullptr;
  std::string aggregator = "mfl", echozoom = "off", bin_scheme = "uniform", reg_loss = "mae",
              optimizer = "radam";
  int bin_count = 10, epochs_v = 100, batch_v = 2, length_v = 48, stride_v = 2;
  double temperature = 0.07, lr_v = 5e-5;

  void attach(CLI::App* cmd) {
    agg = cmd->add_option("--aggregator", aggregator,
                          "mfl|mfl_no_proj|mfl_nonlinear_proj|mfl_gru|mean_pool|multi_head|"
                          "multi_head_gru");
    zoom = cmd->add_option("--echozoom", echozoom, "on|off")
               ->check(CLI::IsMember({"on", "off"}));
    bins = cmd->add_option("--bins", bin_count, "number of uniform EF bins");
    scheme = cmd->add_option("--bin-scheme", bin_scheme, "uniform|clinical4")
                 ->check(CLI::IsMember({"uniform", "clinical4"}));
    reg = cmd->add_option("--reg-loss", reg_loss, "mae|mse|smooth_l1|huber");
    temp = cmd->add_option("--temperature", temperature, "similarity temperature");
    lr = cmd->add_option("--lr", lr_v, "learning rate");
    epochs = cmd->add_option("--epochs", epochs_v, "training epochs");
    batch = cmd->add_option("--batch-size", batch_v, "clips per optimizer step");
    length = cmd->add_option("--clip-length", length_v, "frames per sampled clip");
    stride = cmd->add_option("--clip-stride", stride_v, "frame sampling stride");
    opt = cmd->add_option("--optimizer", optimizer, "radam|adam")
              ->check(CLI::IsMember({"radam", "adam"}));
  }

  void apply(TrainConfig& cfg) const {
    if (agg->count()) cfg.model.aggregator = parse_aggregator(aggregator);
    if (zoom->count()) cfg.model.echozoom = echozoom == "on";
    if (bins->count() || scheme->count()) {
      cfg.model.bins = bin_scheme == "clinical4" ? BinSpec::clinical4()
                                                 : BinSpec::uniform(bin_count);
    }
    if (reg->count()) cfg.model.reg_loss = parse_loss_kind(reg_loss);
    if (temp->count()) cfg.model.temperature = temperature;
    if (lr->count()) cfg.lr = lr_v;
    if (epochs->count()) cfg.epochs = epochs_v;
    if (batch->count()) cfg.batch_size = batch_v;
    if (length->count()) cfg.clip_length = length_v;
    if (stride->count()) cfg.clip_stride = stride_v;
    if (opt->count()) cfg.optimizer = optimizer;
  }
};

Dataset load_dataset(const std::string& dir, int shots, uint64_t seed) {
  auto [manifest, clips] = read_dataset(dir);
  Dataset ds;
  std::vector<std::string> train_names;
  if (shots > 0) {
    Manifest sub = few_shot_sample(manifest, shots, seed);
    for (const auto& r : sub.rows) train_names.push_back(r.file_name);
  }
  for (size_t i = 0; i < manifest.rows.size(); ++i) {
    const auto& row = manifest.rows[i];
    if (row.split == "TRAIN") {
      if (shots > 0 && std::find(train_names.begin(), train_names.end(), row.file_name) ==
                           train_names.end())
        continue;
      ds.train.push_back(clips[i]);
    } else if (row.split == "VAL") {
      ds.val.push_back(clips[i]);
    } else if (row.split == "TEST") {
      ds.test.push_back(clips[i]);
    } else {
      throw ValidationError("unknown split '" + row.split + "' for " + row.file_name);
    }
  }
  return ds;
}

template <class T>
void save_model(const std::string& path, Model<T>& model, const TrainConfig& cfg) {
  save_checkpoint(path, model.params());
  std::ofstream f(path + ".json");
  if (!f) throw FormatError("cannot write config sidecar: " + path + ".json");
  f << train_config_to_json(cfg).dump(2) << "\n";
}

template <class T>
int run_train(const TrainConfig& cfg, const std::string& data_dir, int shots,
              const std::string& out, const std::string& metrics_out) {
  Dataset ds = load_dataset(data_dir, shots, cfg.seed);
  std::cerr << "train: " << ds.train.size() << " train / " << ds.val.size() << " val / "
            << ds.test.size() << " test clips\n";
  const auto t0 = std::chrono::steady_clock::now();
  auto result = train<T>(cfg, ds);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto& split = ds.test.empty() ? ds.train : ds.test;
  EvalResult ev = evaluate(result.model, split, cfg.clip_length, cfg.clip_stride);
  std::cout << "mae " << ev.mae << " rmse " << ev.rmse << " wall_seconds " << wall << "\n";
  if (!out.empty()) save_model(out, result.model, cfg);
  if (!metrics_out.empty()) {
    MetricsRow row{aggregator_name(cfg.model.aggregator) +
                       std::string(cfg.model.echozoom ? "+echozoom" : ""),
                   shots, cfg.seed, ev.mae, ev.rmse, wall};
    write_metrics_csv(metrics_out, {row});
  }
  return 0;
}

template <class T>
int run_eval(const std::string& checkpoint, const std::string& data_dir,
             const std::string& metrics_out) {
  TrainConfig cfg;
  train_config_from_json(load_json(checkpoint + ".json"), cfg);
  Model<T> model(cfg.model);
  load_into(checkpoint, model.params());
  Dataset ds = load_dataset(data_dir, /*shots=*/0, cfg.seed);
  const auto& split = ds.test.empty() ? ds.train : ds.test;
  const auto t0 = std::chrono::steady_clock::now();
  EvalResult ev = evaluate(model, split, cfg.clip_length, cfg.clip_stride);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "mae " << ev.mae << " rmse " << ev.rmse << "\n";
  if (!metrics_out.empty()) {
    MetricsRow row{"eval", 0, cfg.seed, ev.mae, ev.rmse, wall};
    write_metrics_csv(metrics_out, {row});
  }
  return 0;
}

template <class T>
int run_ablate(const TrainConfig& base_cfg, const std::string& data_dir, int shots,
               const std::vector<uint64_t>& seeds, const std::string& metrics_out, int jobs) {
  Dataset ds = load_dataset(data_dir, shots, seeds.empty() ? 0 : seeds.front());
  TrainConfig base = base_cfg;
  base.model.aggregator = AggregatorKind::mean_pool;
  base.model.echozoom = false;
  TrainConfig mfl = base;
  mfl.model.aggregator = AggregatorKind::mfl;
  TrainConfig zoom = base;
  zoom.model.echozoom = true;
  TrainConfig full = mfl;
  full.model.echozoom = true;
  std::vector<AblationPoint> grid = {{"base", base, shots},
                                     {"mfl", mfl, shots},
                                     {"echozoom", zoom, shots},
                                     {"full", full, shots}};
  auto rows = ablate<T>(grid, seeds, ds, jobs);
  write_metrics_csv(metrics_out, rows);
  for (const auto& r : rows)
    if (r.setting.find(":mean") != std::string::npos)
      std::cout << r.setting << " mae " << r.mae << " rmse " << r.rmse << "\n";
  return 0;
}

int run_synth_gen(const std::string& out, int clips_per_class, double ef_min, double ef_max,
                  uint64_t seed, SyntheticConfig cfg, int test_per_class, int val_per_class) {
  cfg.ef_min = ef_min;
  cfg.ef_max = ef_max;
  cfg.seed = seed;
  cfg.validate();
  if (clips_per_class < 1) throw ValidationError("synth-gen: --clips-per-class must be >= 1");
  Manifest manifest;
  std::vector<VideoClip> clips;
  uint64_t clip_seed = 0;
  auto emit = [&](int ef, int copy, const char* split) {
    VideoClip clip = gen_clip(static_cast<double>(ef), cfg, clip_seed++);
    std::string name = std::string(split) + "_ef" + std::to_string(ef) + "_" +
                       std::to_string(copy) + ".efv";
    // lower-case split tag in the name, canonical tag in the manifest
    for (auto& ch : name) ch = static_cast<char>(std::tolower(ch));
    clip.id = name;
    manifest.rows.push_back({name, clip.ef_label, split});
    clips.push_back(std::move(clip));
  };
  for (int ef = static_cast<int>(std::ceil(ef_min)); ef <= static_cast<int>(ef_max); ++ef) {
    for (int c = 0; c < clips_per_class; ++c) emit(ef, c, "TRAIN");
    for (int c = 0; c < val_per_class; ++c) emit(ef, c, "VAL");
    for (int c = 0; c < test_per_class; ++c) emit(ef, c, "TEST");
  }
  write_dataset(out, manifest, clips);
  std::cout << "wrote " << clips.size() << " clips to " << out << "\n";
  return 0;
}

int run_gradcheck(int seeds_per_op) {
  auto reports = gradcheck_all(seeds_per_op);
  double worst = 0.0;
  for (const auto& r : reports) {
    std::cout << r.op_name << " max_rel_error " << r.max_rel_error << "\n";
    worst = std::max(worst, r.max_rel_error);
  }
  if (worst > 1e-4) {
    std::cerr << "gradcheck failed: worst max_rel_error " << worst << "\n";
    return 3;
  }
  std::cout << "gradcheck passed (" << reports.size() << " checks, worst " << worst << ")\n";
  return 0;
}

int run_fewshot_split(const std::string& manifest_path, int shots, uint64_t seed,
                      const std::string& out) {
  Manifest m = read_manifest(manifest_path);
  Manifest sub = few_shot_sample(m, shots, seed);
  if (!out.empty()) write_manifest(out, sub);
  std::cout << "selected " << sub.rows.size() << " clips (" << shots << "-shot)\n";
  return 0;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"few-shot ejection-fraction pipeline"};
  app.require_subcommand(1);

  // synth-gen
  auto* sg = app.add_subcommand("synth-gen", "generate a synthetic dataset directory");
  std::string sg_out;
  int sg_per_class = 1, sg_test = 0, sg_val = 0;
  double sg_ef_min = 20.0, sg_ef_max = 80.0;
  uint64_t sg_seed = 0;
  SyntheticConfig sg_cfg;
  sg->add_option("--out", sg_out, "output directory")->required();
  sg->add_option("--clips-per-class", sg_per_class, "TRAIN clips per integer EF class");
  sg->add_option("--test-per-class", sg_test, "TEST clips per class");
  sg->add_option("--val-per-class", sg_val, "VAL clips per class");
  sg->add_option("--ef-min", sg_ef_min, "lowest EF class");
  sg->add_option("--ef-max", sg_ef_max, "highest EF class");
  sg->add_option("--seed", sg_seed, "generator seed");
  sg->add_option("--resolution", sg_cfg.resolution, "frame side length");
  sg->add_option("--frames", sg_cfg.total_frames, "frames per clip");
  sg->add_option("--cycle-period", sg_cfg.cycle_period, "frames per cardiac cycle");
  sg->add_option("--noise-sigma", sg_cfg.noise_sigma, "additive noise level");
  sg->add_option("--gain-jitter", sg_cfg.gain_jitter, "per-frame gain spread");
  sg->add_option("--decoy", sg_cfg.decoy, "decoy blob pulsation amplitude");

  // shared train/ablate options
  std::string config_path, data_dir, metrics_out;
  uint64_t seed = 0;
  int shots = 0;
  bool f64 = false;

  auto* tr = app.add_subcommand("train", "train a model and report test MAE/RMSE");
  CommonFlags tr_flags;
  std::string tr_out;
  tr->add_option("--data", data_dir, "dataset directory")->required();
  tr->add_option("--config", config_path, "JSON config file");
  tr->add_option("--out", tr_out, "checkpoint output path");
  tr->add_option("--metrics-out", metrics_out, "metrics CSV path");
  tr->add_option("--shots", shots, "few-shot subset size")->check(CLI::IsMember({1, 2, 4, 8}));
  tr->add_option("--seed", seed, "training seed");
  tr->add_flag("--f64", f64, "train in 64-bit floating point");
  tr_flags.attach(tr);

  auto* ev = app.add_subcommand("eval", "evaluate a saved checkpoint");
  std::string ev_ckpt;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint path (expects <path>.json sidecar)")
      ->required();
  ev->add_option("--data", data_dir, "dataset directory")->required();
  ev->add_option("--metrics-out", metrics_out, "metrics CSV path");
  ev->add_flag("--f64", f64, "evaluate in 64-bit floating point");

  auto* ab = app.add_subcommand("ablate", "run the module ablation grid");
  CommonFlags ab_flags;
  std::string ab_seeds = "1,2,3";
  int ab_jobs = 0;
  ab->add_option("--data", data_dir, "dataset directory")->required();
  ab->add_option("--config", config_path, "JSON config file");
  ab->add_option("--metrics-out", metrics_out, "metrics CSV path")->required();
  ab->add_option("--shots", shots, "few-shot subset size")->check(CLI::IsMember({1, 2, 4, 8}));
  ab->add_option("--seeds", ab_seeds, "comma-separated training seeds");
  ab->add_option("--jobs", ab_jobs, "parallel grid workers (0 = hardware)");
  ab->add_flag("--f64", f64, "train in 64-bit floating point");
  ab_flags.attach(ab);

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  int gc_seeds = 5;
  gc->add_option("--seeds-per-op", gc_seeds, "random draws per operation");

  auto* fs_cmd = app.add_subcommand("fewshot-split", "write a few-shot manifest subset");
  std::string fw_manifest, fw_out;
  fs_cmd->add_option("--manifest", fw_manifest, "input manifest CSV")->required();
  fs_cmd->add_option("--shots", shots, "examples per class")->required();
  fs_cmd->add_option("--seed", seed, "sampling seed");
  fs_cmd->add_option("--out", fw_out, "output manifest CSV");

  CLI11_PARSE(app, argc, argv);

  if (sg->parsed())
    return run_synth_gen(sg_out, sg_per_class, sg_ef_min, sg_ef_max, sg_seed, sg_cfg, sg_test,
                         sg_val);
  if (gc->parsed()) return run_gradcheck(gc_seeds);
  if (fs_cmd->parsed()) return run_fewshot_split(fw_manifest, shots, seed, fw_out);

  TrainConfig cfg;
  if (!config_path.empty()) train_config_from_json(load_json(config_path), cfg);
  if (tr->parsed()) {
    tr_flags.apply(cfg);
    cfg.seed = seed;
    cfg.validate();
    return f64 ? run_train<double>(cfg, data_dir, shots, tr_out, metrics_out)
               : run_train<float>(cfg, data_dir, shots, tr_out, metrics_out);
  }
  if (ev->parsed())
    return f64 ? run_eval<double>(ev_ckpt, data_dir, metrics_out)
               : run_eval<float>(ev_ckpt, data_dir, metrics_out);
  if (ab->parsed()) {
    ab_flags.apply(cfg);
    cfg.validate();
    std::vector<uint64_t> seeds;
    std::stringstream ss(ab_seeds);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) seeds.push_back(std::stoull(tok));
    if (seeds.empty()) throw ValidationError("ablate: --seeds must name at least one seed");
    return f64 ? run_ablate<double>(cfg, data_dir, shots, seeds, metrics_out, ab_jobs)
               : run_ablate<float>(cfg, data_dir, shots, seeds, metrics_out, ab_jobs);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
