#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hazeforge/trainer.hpp"
#include "hazeforge/weights_io.hpp"

namespace hazeforge {

struct ExperimentConfig {
  uint64_t seed = 1;
  std::string output_dir;
  DatasetConfig dataset;  // dataset.seed is derived from the top-level seed
  IENetConfig ienet;      // ienet.seed is derived per branch
  IFNetConfig ifnet;      // ifnet.seed is derived; n_branches follows dataset.n_bins
  int stage2_homog_per_bin = 50;
  TrainConfig train;
};

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok) throw ConfigError(where + ": unknown key \"" + it.key() + "\"");
  }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config key \"") + key + "\" has the wrong type");
  }
}

}  // namespace detail

inline DatasetConfig parse_dataset_block(const nlohmann::json& j) {
  detail::check_keys(j,
                     {"n_bins", "t_min", "t_max", "train_per_bin", "test_per_bin", "nonhomog_train",
                      "nonhomog_test", "height", "width", "a_min", "a_max", "smoothness"},
                     "dataset");
  DatasetConfig d;
  d.n_bins = detail::get_or(j, "n_bins", d.n_bins);
  d.t_min = detail::get_or(j, "t_min", d.t_min);
  d.t_max = detail::get_or(j, "t_max", d.t_max);
  d.train_per_bin = detail::get_or(j, "train_per_bin", d.train_per_bin);
  d.test_per_bin = detail::get_or(j, "test_per_bin", d.test_per_bin);
  d.nonhomog_train = detail::get_or(j, "nonhomog_train", d.nonhomog_train);
  d.nonhomog_test = detail::get_or(j, "nonhomog_test", d.nonhomog_test);
  d.height = detail::get_or(j, "height", d.height);
  d.width = detail::get_or(j, "width", d.width);
  d.a_min = detail::get_or(j, "a_min", d.a_min);
  d.a_max = detail::get_or(j, "a_max", d.a_max);
  d.smoothness = detail::get_or(j, "smoothness", d.smoothness);
  return d;
}

inline IENetConfig parse_ienet_block(const nlohmann::json& j) {
  detail::check_keys(j, {"variant", "num_residual_modules", "base_channels"}, "ienet");
  IENetConfig c;
  c.variant = parse_ienet_variant(detail::get_or<std::string>(j, "variant", "res"));
  c.num_residual_modules = detail::get_or(j, "num_residual_modules", c.num_residual_modules);
  c.base_channels = detail::get_or(j, "base_channels", c.base_channels);
  return c;
}

inline IFNetConfig parse_ifnet_block(const nlohmann::json& j) {
  detail::check_keys(j, {"fusion_mode", "base_channels"}, "ifnet");
  IFNetConfig c;
  c.fusion_mode = parse_fusion_mode(detail::get_or<std::string>(j, "fusion_mode", "stacking"));
  c.base_channels = detail::get_or(j, "base_channels", c.base_channels);
  return c;
}

inline TrainConfig parse_train_block(const nlohmann::json& train, const nlohmann::json& loss) {
  detail::check_keys(train, {"epochs", "batch_size", "lr0", "lr_halve_every", "beta1", "beta2", "eps"},
                     "train");
  detail::check_keys(loss, {"lambda_m", "lambda_p", "lambda_s", "lambda_c"}, "loss");
  TrainConfig t;
  t.epochs = detail::get_or(train, "epochs", t.epochs);
  t.batch_size = detail::get_or(train, "batch_size", t.batch_size);
  t.lr0 = detail::get_or(train, "lr0", t.lr0);
  t.lr_halve_every = detail::get_or(train, "lr_halve_every", t.lr_halve_every);
  t.adam.beta1 = detail::get_or(train, "beta1", t.adam.beta1);
  t.adam.beta2 = detail::get_or(train, "beta2", t.adam.beta2);
  t.adam.eps = detail::get_or(train, "eps", t.adam.eps);
  t.loss.lambda_m = detail::get_or(loss, "lambda_m", t.loss.lambda_m);
  t.loss.lambda_p = detail::get_or(loss, "lambda_p", t.loss.lambda_p);
  t.loss.lambda_s = detail::get_or(loss, "lambda_s", t.loss.lambda_s);
  t.loss.lambda_c = detail::get_or(loss, "lambda_c", t.loss.lambda_c);
  return t;
}

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  detail::check_keys(j, {"seed", "output_dir", "dataset", "ienet", "ifnet", "stage2_homog_per_bin", "train", "loss"},
                     "experiment config");
  ExperimentConfig cfg;
  if (!j.contains("seed")) throw ConfigError("experiment config: missing \"seed\"");
  if (!j.contains("output_dir")) throw ConfigError("experiment config: missing \"output_dir\"");
  cfg.seed = detail::get_or<uint64_t>(j, "seed", 1);
  cfg.output_dir = detail::get_or<std::string>(j, "output_dir", "");
  if (cfg.output_dir.empty()) throw ConfigError("experiment config: output_dir must be non-empty");
  cfg.dataset = parse_dataset_block(j.contains("dataset") ? j.at("dataset") : nlohmann::json::object());
  cfg.ienet = parse_ienet_block(j.contains("ienet") ? j.at("ienet") : nlohmann::json::object());
  cfg.ifnet = parse_ifnet_block(j.contains("ifnet") ? j.at("ifnet") : nlohmann::json::object());
  cfg.stage2_homog_per_bin = detail::get_or(j, "stage2_homog_per_bin", cfg.stage2_homog_per_bin);
  cfg.train = parse_train_block(j.contains("train") ? j.at("train") : nlohmann::json::object(),
                                j.contains("loss") ? j.at("loss") : nlohmann::json::object());
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  return parse_experiment_config(j);
}

// Seed streams hanging off the experiment seed.
namespace detail {
enum ExperimentStream : uint64_t {
  kDatasetStream = 1,
  kStage1Stream = 2,
  kStage2Stream = 3,
};
}  // namespace detail

// Dataset on disk plus everything loaded back for training and evaluation.
struct ExperimentEnv {
  ExperimentConfig cfg;
  BuiltDataset built;
  DatasetManifest train_manifest;
  DatasetManifest test_manifest;
  DatasetManifest train_nh_manifest;
  DatasetManifest test_nh_manifest;
  FeatureExtractor extractor;
};

inline ExperimentEnv prepare_experiment(const ExperimentConfig& cfg) {
  ExperimentEnv env;
  env.cfg = cfg;
  DatasetConfig ds = cfg.dataset;
  ds.seed = derive_seed(cfg.seed, detail::kDatasetStream);
  env.built = build_dataset(ds, (std::filesystem::path(cfg.output_dir) / "dataset").string());
  env.train_manifest = read_manifest(env.built.train_manifest);
  env.test_manifest = read_manifest(env.built.test_manifest);
  env.train_nh_manifest = read_manifest(env.built.train_nh_manifest);
  env.test_nh_manifest = read_manifest(env.built.test_nh_manifest);
  return env;
}

// Stage 1: one IENet per concentration bin, each trained on its own subset.
inline std::vector<IENetModel> run_stage1(const ExperimentEnv& env, std::vector<TrainLog>* logs = nullptr) {
  const uint64_t stage_seed = derive_seed(env.cfg.seed, detail::kStage1Stream);
  std::vector<IENetModel> branches;
  for (int bin = 1; bin <= env.cfg.dataset.n_bins; ++bin) {
    const uint64_t branch_seed = derive_seed(stage_seed, static_cast<uint64_t>(bin));
    IENetConfig mc = env.cfg.ienet;
    mc.seed = derive_seed(branch_seed, 1);
    IENetModel model(mc);
    TrainConfig tc = env.cfg.train;
    tc.seed = derive_seed(branch_seed, 2);
    const std::vector<Sample> subset = load_samples(env.train_manifest, bin);
    TrainLog log = train_ienet(model, subset, tc, env.extractor);
    if (logs) logs->push_back(std::move(log));
    branches.push_back(std::move(model));
  }
  return branches;
}

// Stage-2 corpus: the first stage2_homog_per_bin homogeneous training
// records of every bin plus all non-homogeneous training records.
inline std::vector<Sample> stage2_corpus(const ExperimentEnv& env) {
  std::vector<Sample> data;
  for (int bin = 1; bin <= env.cfg.dataset.n_bins; ++bin) {
    std::vector<Sample> subset = load_samples(env.train_manifest, bin);
    const std::size_t keep = std::min<std::size_t>(subset.size(), static_cast<std::size_t>(env.cfg.stage2_homog_per_bin));
    for (std::size_t i = 0; i < keep; ++i) data.push_back(std::move(subset[i]));
  }
  std::vector<Sample> nh = load_samples(env.train_nh_manifest);
  for (auto& s : nh) data.push_back(std::move(s));
  return data;
}

// Stage 2: fusion training on frozen branches. The seed stream is shared by
// both fusion modes so mode comparisons hold everything else equal.
inline IFNetModel run_stage2(const ExperimentEnv& env, const std::vector<IENetModel>& branches,
                             FusionMode mode, TrainLog* log = nullptr) {
  const uint64_t stage_seed = derive_seed(env.cfg.seed, detail::kStage2Stream);
  IFNetConfig fc = env.cfg.ifnet;
  fc.fusion_mode = mode;
  fc.n_branches = static_cast<int>(branches.size());
  fc.seed = derive_seed(stage_seed, 1);
  IFNetModel model(fc);
  TrainConfig tc = env.cfg.train;
  tc.seed = derive_seed(stage_seed, 2);
  TrainLog l = train_ifnet(model, branches, stage2_corpus(env), tc, env.extractor);
  if (log) *log = std::move(l);
  return model;
}

inline CrossEvalMatrix run_cross_eval(const ExperimentEnv& env, const std::vector<IENetModel>& branches) {
  std::vector<std::vector<Sample>> bin_sets;
  for (int bin = 1; bin <= env.cfg.dataset.n_bins; ++bin) {
    bin_sets.push_back(load_samples(env.test_manifest, bin));
  }
  return cross_eval(branches, bin_sets);
}

// Per-image pipeline scores on the non-homogeneous test set.
struct FusionEvalRow {
  std::string id;
  double psnr_input = 0.0;
  std::vector<double> psnr_branch;
  double psnr_fused = 0.0;
  double ssim_fused = 0.0;
  double density_input = 0.0;
  double density_fused = 0.0;
};

struct FusionEval {
  std::vector<FusionEvalRow> rows;
  double mean_psnr_input = 0.0;
  std::vector<double> mean_psnr_branch;
  double mean_psnr_fused = 0.0;
  double mean_ssim_fused = 0.0;
  double frac_density_reduced = 0.0;

  EvalReport to_eval_report() const {
    EvalReport rep;
    for (const auto& r : rows) rep.rows.push_back({r.id, r.psnr_fused, r.ssim_fused, r.density_input, r.density_fused});
    return rep;
  }
};

inline FusionEval run_fusion_eval(const ExperimentEnv& env, const std::vector<IENetModel>& branches,
                                  const IFNetModel& ifnet) {
  const auto& manifest = env.test_nh_manifest;
  if (manifest.records.empty()) throw ConfigError("fusion eval: non-homogeneous test set is empty");
  const int n = static_cast<int>(branches.size());
  FusionEval ev;
  ev.rows.resize(manifest.records.size());
  parallel_for(manifest.records.size(), [&](std::size_t i) {
    const auto& rec = manifest.records[i];
    const Image hazy = read_ppm(resolve_path(manifest, rec.hazy_path));
    const Image clean = read_ppm(resolve_path(manifest, rec.clean_path));
    DehazeResult out = dehaze_pipeline(branches, ifnet, hazy);
    FusionEvalRow& row = ev.rows[i];
    row.id = std::filesystem::path(rec.hazy_path).stem().string();
    row.psnr_input = psnr(hazy, clean);
    row.psnr_branch.resize(static_cast<std::size_t>(n));
    for (int b = 0; b < n; ++b) row.psnr_branch[static_cast<std::size_t>(b)] = psnr(out.branches[static_cast<std::size_t>(b)], clean);
    row.psnr_fused = psnr(out.fused, clean);
    row.ssim_fused = ssim_metric(out.fused, clean);
    row.density_input = haze_density_proxy(hazy);
    row.density_fused = haze_density_proxy(out.fused);
  });
  const double inv = 1.0 / static_cast<double>(ev.rows.size());
  ev.mean_psnr_branch.assign(static_cast<std::size_t>(n), 0.0);
  std::size_t reduced = 0;
  for (const auto& r : ev.rows) {
    ev.mean_psnr_input += r.psnr_input * inv;
    for (int b = 0; b < n; ++b) ev.mean_psnr_branch[static_cast<std::size_t>(b)] += r.psnr_branch[static_cast<std::size_t>(b)] * inv;
    ev.mean_psnr_fused += r.psnr_fused * inv;
    ev.mean_ssim_fused += r.ssim_fused * inv;
    if (r.density_fused < r.density_input) ++reduced;
  }
  ev.frac_density_reduced = static_cast<double>(reduced) / static_cast<double>(ev.rows.size());
  return ev;
}

// id, psnr_input, psnr_branch{i}..., psnr_fused per test image, MEAN last.
inline void write_fusion_report(const std::string& path, const FusionEval& ev) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  const std::size_t n = ev.mean_psnr_branch.size();
  f << "#id\tpsnr_input";
  for (std::size_t b = 0; b < n; ++b) f << "\tpsnr_branch" << (b + 1);
  f << "\tpsnr_fused\n";
  char buf[64];
  auto put = [&](double v, char sep) {
    std::snprintf(buf, sizeof(buf), "%.17g%c", v, sep);
    f << buf;
  };
  for (const auto& r : ev.rows) {
    f << r.id << '\t';
    put(r.psnr_input, '\t');
    for (std::size_t b = 0; b < n; ++b) put(r.psnr_branch[b], '\t');
    put(r.psnr_fused, '\n');
  }
  f << "MEAN\t";
  put(ev.mean_psnr_input, '\t');
  for (std::size_t b = 0; b < n; ++b) put(ev.mean_psnr_branch[b], '\t');
  put(ev.mean_psnr_fused, '\n');
  if (!f) throw IoError("write failed: " + path);
}

struct ExperimentResult {
  BuiltDataset dataset;
  std::vector<IENetModel> branches;
  std::optional<IFNetModel> ifnet;
  CrossEvalMatrix cross;
  FusionEval fusion;
};

// Full driver: dataset -> stage 1 -> stage 2 -> cross-eval + fusion eval,
// with every artifact written under cfg.output_dir.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path root(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(root / "weights", ec);
  fs::create_directories(root / "curves", ec);
  fs::create_directories(root / "reports", ec);

  ExperimentEnv env = prepare_experiment(cfg);
  ExperimentResult result;
  result.dataset = env.built;

  std::vector<TrainLog> stage1_logs;
  result.branches = run_stage1(env, &stage1_logs);
  for (std::size_t b = 0; b < result.branches.size(); ++b) {
    save_cpw((root / "weights" / ("ienet_bin" + std::to_string(b + 1) + ".cpw")).string(),
             result.branches[b].params());
    write_loss_curve((root / "curves" / ("stage1_bin" + std::to_string(b + 1) + ".tsv")).string(),
                     stage1_logs[b]);
  }

  TrainLog stage2_log;
  result.ifnet = run_stage2(env, result.branches, cfg.ifnet.fusion_mode, &stage2_log);
  save_cpw((root / "weights" / "ifnet.cpw").string(), result.ifnet->params());
  write_loss_curve((root / "curves" / "stage2.tsv").string(), stage2_log);

  result.cross = run_cross_eval(env, result.branches);
  write_cross_eval((root / "reports" / "cross_eval.tsv").string(), result.cross);

  result.fusion = run_fusion_eval(env, result.branches, *result.ifnet);
  write_fusion_report((root / "reports" / "fusion_report.tsv").string(), result.fusion);
  write_eval_report((root / "reports" / "eval_fused.tsv").string(), result.fusion.to_eval_report());
  return result;
}

}  // namespace hazeforge
