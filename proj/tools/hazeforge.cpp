// hazeforge: concentration-partitioned dehazing workbench.
//
// Subcommands cover the full pipeline: synthetic data (gen-clean, synth,
// partition), training (train-ienet, train-ifnet, run-experiment),
// inference (dehaze), and verification (eval, cross-eval, gradcheck).
//
// Exit codes: 0 success, 1 usage error, 2 runtime/IO error, 3 failed
// verification.

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hazeforge/experiment.hpp"
#include "hazeforge/gradcheck_battery.hpp"

namespace hf = hazeforge;

namespace {

std::vector<hf::IENetModel> load_branches(const std::vector<std::string>& paths) {
  std::vector<hf::IENetModel> models;
  models.reserve(paths.size());
  for (const auto& p : paths) models.push_back(hf::IENetModel::from_params(hf::load_cpw(p)));
  return models;
}

std::optional<hf::FusionMode> parse_mode_flag(const std::string& mode) {
  if (mode.empty()) return std::nullopt;
  return hf::parse_fusion_mode(mode);
}

// Shared trainer flag set; config-file values are overridden by flags.
struct TrainFlags {
  std::string config_path;
  int epochs = -1;
  int batch_size = -1;
  double lr0 = -1.0;
  int lr_halve_every = -1;
  uint64_t seed = 0;
  bool seed_set = false;
  double lambda_m = -1.0, lambda_p = -1.0, lambda_s = -1.0, lambda_c = -1.0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config; flags override its values");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--batch-size", batch_size, "mini-batch size");
    cmd->add_option("--lr0", lr0, "initial learning rate");
    cmd->add_option("--lr-halve-every", lr_halve_every, "epochs between learning-rate halvings");
    cmd->add_option("--seed", seed, "training seed")->each([this](const std::string&) { seed_set = true; });
    cmd->add_option("--lambda-m", lambda_m, "reconstruction loss weight");
    cmd->add_option("--lambda-p", lambda_p, "perceptual loss weight");
    cmd->add_option("--lambda-s", lambda_s, "structural loss weight");
    cmd->add_option("--lambda-c", lambda_c, "color loss weight");
  }

  hf::TrainConfig resolve(const nlohmann::json* cfg_json) const {
    hf::TrainConfig tc;
    if (cfg_json) {
      tc = hf::parse_train_block(cfg_json->contains("train") ? cfg_json->at("train") : nlohmann::json::object(),
                                 cfg_json->contains("loss") ? cfg_json->at("loss") : nlohmann::json::object());
    }
    if (epochs >= 0) tc.epochs = epochs;
    if (batch_size >= 0) tc.batch_size = batch_size;
    if (lr0 >= 0) tc.lr0 = lr0;
    if (lr_halve_every >= 0) tc.lr_halve_every = lr_halve_every;
    if (seed_set) tc.seed = seed;
    if (lambda_m >= 0) tc.loss.lambda_m = lambda_m;
    if (lambda_p >= 0) tc.loss.lambda_p = lambda_p;
    if (lambda_s >= 0) tc.loss.lambda_s = lambda_s;
    if (lambda_c >= 0) tc.loss.lambda_c = lambda_c;
    return tc;
  }
};

nlohmann::json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw hf::IoError("cannot open config: " + path);
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw hf::ConfigError(path + ": invalid JSON: " + std::string(e.what()));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hazeforge: concentration-partitioned image dehazing workbench"};
  app.require_subcommand(1);
  std::function<int()> run;

  // ---- gen-clean ----------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("gen-clean", "generate a procedural haze-free image");
    auto seed = std::make_shared<uint64_t>(0);
    auto height = std::make_shared<int>(32);
    auto width = std::make_shared<int>(32);
    auto out = std::make_shared<std::string>();
    cmd->add_option("--seed", *seed, "generator seed")->required();
    cmd->add_option("--height", *height, "image height")->check(CLI::PositiveNumber);
    cmd->add_option("--width", *width, "image width")->check(CLI::PositiveNumber);
    cmd->add_option("--out", *out, "output PPM path")->required();
    cmd->callback([&run, seed, height, width, out] {
      run = [=]() {
        hf::write_ppm(*out, hf::gen_clean_image(*height, *width, *seed));
        return 0;
      };
    });
  }

  // ---- synth --------------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("synth", "synthesize haze over a clean image");
    auto in = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto air = std::make_shared<double>(0.9);
    auto t = std::make_shared<double>(0.0);
    auto t_seed = std::make_shared<uint64_t>(0);
    auto t_lo = std::make_shared<double>(0.3);
    auto t_hi = std::make_shared<double>(0.9);
    auto t_smooth = std::make_shared<int>(4);
    cmd->add_option("--in", *in, "clean input PPM")->required();
    cmd->add_option("--out", *out, "hazy output PPM")->required();
    cmd->add_option("--a", *air, "global atmospheric light in (0,1]")->required();
    auto* opt_t = cmd->add_option("--t", *t, "homogeneous transmittance");
    auto* opt_seed = cmd->add_option("--t-seed", *t_seed, "seed for a non-homogeneous field");
    opt_t->excludes(opt_seed);
    opt_seed->excludes(opt_t);
    cmd->add_option("--t-lo", *t_lo, "field minimum transmittance")->needs(opt_seed);
    cmd->add_option("--t-hi", *t_hi, "field maximum transmittance")->needs(opt_seed);
    cmd->add_option("--t-smooth", *t_smooth, "field smoothing passes")->needs(opt_seed);
    cmd->callback([&run, cmd, in, out, air, t, t_seed, t_lo, t_hi, t_smooth] {
      const bool homogeneous = cmd->count("--t") > 0;
      if (!homogeneous && cmd->count("--t-seed") == 0) {
        throw CLI::RequiredError("synth: exactly one of --t or --t-seed");
      }
      run = [=]() {
        hf::Image clean = hf::read_ppm(*in);
        hf::TransmissionField field =
            homogeneous ? hf::make_homogeneous_field(clean.height(), clean.width(), *t)
                        : hf::gen_t_field(clean.height(), clean.width(), *t_seed, *t_lo, *t_hi, *t_smooth);
        hf::write_ppm(*out, hf::synthesize(clean, hf::AtmosphericLight(*air), field));
        return 0;
      };
    });
  }

  // ---- partition ----------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("partition", "print equal-width concentration bins");
    auto n = std::make_shared<int>(2);
    auto t_min = std::make_shared<double>(0.3);
    auto t_max = std::make_shared<double>(0.9);
    auto assign = std::make_shared<double>(-1.0);
    cmd->add_option("--n", *n, "number of bins")->required()->check(CLI::PositiveNumber);
    cmd->add_option("--t-min", *t_min, "global minimum transmittance");
    cmd->add_option("--t-max", *t_max, "global maximum transmittance");
    cmd->add_option("--assign", *assign, "print the bin containing this t");
    cmd->callback([&run, cmd, n, t_min, t_max, assign] {
      const bool do_assign = cmd->count("--assign") > 0;
      run = [=]() {
        auto bins = hf::partition_bins(*n, *t_min, *t_max);
        for (const auto& b : bins) {
          std::printf("bin %d\t%.17g\t%.17g\n", b.index, b.t_lo, b.t_hi);
        }
        if (do_assign) std::printf("assign %.17g -> bin %d\n", *assign, hf::assign_bin(*assign, bins));
        return 0;
      };
    });
  }

  // ---- train-ienet --------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("train-ienet", "train one enhancement branch on a bin subset");
    auto manifest = std::make_shared<std::string>();
    auto bin = std::make_shared<int>(1);
    auto out = std::make_shared<std::string>();
    auto curve = std::make_shared<std::string>();
    auto variant = std::make_shared<std::string>();
    auto modules = std::make_shared<int>(-1);
    auto channels = std::make_shared<int>(-1);
    auto flags = std::make_shared<TrainFlags>();
    cmd->add_option("--train-manifest", *manifest, "training manifest TSV")->required();
    cmd->add_option("--bin", *bin, "concentration bin index")->required()->check(CLI::PositiveNumber);
    cmd->add_option("--out", *out, "output CPW1 weights path")->required();
    cmd->add_option("--curve", *curve, "optional per-step loss curve TSV");
    cmd->add_option("--variant", *variant, "architecture variant: res|k3|k5|k7|k9");
    cmd->add_option("--modules", *modules, "residual module count");
    cmd->add_option("--channels", *channels, "feature channels");
    flags->attach(cmd);
    cmd->callback([&run, manifest, bin, out, curve, variant, modules, channels, flags] {
      run = [=]() {
        std::optional<nlohmann::json> cfg_json;
        if (!flags->config_path.empty()) cfg_json = load_json(flags->config_path);
        hf::IENetConfig mc;
        if (cfg_json && cfg_json->contains("ienet")) mc = hf::parse_ienet_block(cfg_json->at("ienet"));
        if (!variant->empty()) mc.variant = hf::parse_ienet_variant(*variant);
        if (*modules > 0) mc.num_residual_modules = *modules;
        if (*channels > 0) mc.base_channels = *channels;
        hf::TrainConfig tc = flags->resolve(cfg_json ? &*cfg_json : nullptr);
        mc.seed = hf::derive_seed(tc.seed, 1);
        tc.seed = hf::derive_seed(tc.seed, 2);

        auto samples = hf::load_samples(hf::read_manifest(*manifest), *bin);
        if (samples.empty()) {
          throw hf::ConfigError("no records for bin " + std::to_string(*bin) + " in " + *manifest);
        }
        hf::IENetModel model(mc);
        hf::FeatureExtractor ext;
        hf::TrainLog log = hf::train_ienet(model, samples, tc, ext);
        hf::save_cpw(*out, model.params());
        if (!curve->empty()) hf::write_loss_curve(*curve, log);
        std::printf("trained %s on %zu samples; loss %.6g -> %.6g\n", hf::to_string(mc.variant),
                    samples.size(), log.epoch_mean_loss.front(), log.epoch_mean_loss.back());
        return 0;
      };
    });
  }

  // ---- train-ifnet --------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("train-ifnet", "train the fusion network on frozen branches");
    auto manifests = std::make_shared<std::vector<std::string>>();
    auto ienets = std::make_shared<std::vector<std::string>>();
    auto mode = std::make_shared<std::string>("stacking");
    auto out = std::make_shared<std::string>();
    auto curve = std::make_shared<std::string>();
    auto channels = std::make_shared<int>(-1);
    auto flags = std::make_shared<TrainFlags>();
    cmd->add_option("--manifest", *manifests, "training manifest TSV (repeatable; records concatenate)")
        ->required();
    cmd->add_option("--ienet", *ienets, "frozen branch weights, in bin order (repeatable)")->required();
    cmd->add_option("--mode", *mode, "fusion mode: stacking|weighted");
    cmd->add_option("--out", *out, "output CPW1 weights path")->required();
    cmd->add_option("--curve", *curve, "optional per-step loss curve TSV");
    cmd->add_option("--channels", *channels, "feature channels");
    flags->attach(cmd);
    cmd->callback([&run, manifests, ienets, mode, out, curve, channels, flags] {
      run = [=]() {
        std::optional<nlohmann::json> cfg_json;
        if (!flags->config_path.empty()) cfg_json = load_json(flags->config_path);
        hf::IFNetConfig fc;
        if (cfg_json && cfg_json->contains("ifnet")) fc = hf::parse_ifnet_block(cfg_json->at("ifnet"));
        fc.fusion_mode = hf::parse_fusion_mode(*mode);
        if (*channels > 0) fc.base_channels = *channels;
        hf::TrainConfig tc = flags->resolve(cfg_json ? &*cfg_json : nullptr);
        fc.seed = hf::derive_seed(tc.seed, 1);
        tc.seed = hf::derive_seed(tc.seed, 2);

        std::vector<hf::Sample> data;
        for (const auto& m : *manifests) {
          auto part = hf::load_samples(hf::read_manifest(m));
          for (auto& s : part) data.push_back(std::move(s));
        }
        auto branches = load_branches(*ienets);
        fc.n_branches = static_cast<int>(branches.size());
        hf::IFNetModel model(fc);
        hf::FeatureExtractor ext;
        hf::TrainLog log = hf::train_ifnet(model, branches, data, tc, ext);
        hf::save_cpw(*out, model.params());
        if (!curve->empty()) hf::write_loss_curve(*curve, log);
        std::printf("trained %s fusion of %zu branches on %zu samples; loss %.6g -> %.6g\n",
                    hf::to_string(fc.fusion_mode), branches.size(), data.size(),
                    log.epoch_mean_loss.front(), log.epoch_mean_loss.back());
        return 0;
      };
    });
  }

  // ---- dehaze -------------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("dehaze", "run the full pipeline on one image");
    auto ienets = std::make_shared<std::vector<std::string>>();
    auto ifnet_path = std::make_shared<std::string>();
    auto in = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto dump = std::make_shared<std::string>();
    auto mode = std::make_shared<std::string>();
    cmd->add_option("--ienet", *ienets, "branch weights, in bin order (repeatable)")->required();
    cmd->add_option("--ifnet", *ifnet_path, "fusion weights")->required();
    cmd->add_option("--in", *in, "hazy input PPM")->required();
    cmd->add_option("--out", *out, "dehazed output PPM")->required();
    cmd->add_option("--dump-branches", *dump, "also write each branch output to PREFIX<i>.ppm");
    cmd->add_option("--fusion-mode", *mode, "disambiguates the fusion head when n == 3");
    cmd->callback([&run, ienets, ifnet_path, in, out, dump, mode] {
      run = [=]() {
        auto branches = load_branches(*ienets);
        hf::IFNetModel ifnet = hf::IFNetModel::from_params(hf::load_cpw(*ifnet_path), parse_mode_flag(*mode));
        hf::DehazeResult result = hf::dehaze_pipeline(branches, ifnet, hf::read_ppm(*in));
        hf::write_ppm(*out, result.fused);
        if (!dump->empty()) {
          for (std::size_t i = 0; i < result.branches.size(); ++i) {
            hf::write_ppm(*dump + std::to_string(i + 1) + ".ppm", result.branches[i]);
          }
        }
        return 0;
      };
    });
  }

  // ---- eval ---------------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("eval", "per-image PSNR/SSIM/density report over a manifest");
    auto manifest = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto ienets = std::make_shared<std::vector<std::string>>();
    auto ifnet_path = std::make_shared<std::string>();
    auto mode = std::make_shared<std::string>();
    cmd->add_option("--manifest", *manifest, "manifest TSV with hazy/clean pairs")->required();
    cmd->add_option("--out", *out, "output report TSV")->required();
    auto* opt_ie = cmd->add_option("--ienet", *ienets, "branch weights (evaluates the pipeline)");
    auto* opt_if = cmd->add_option("--ifnet", *ifnet_path, "fusion weights");
    opt_if->needs(opt_ie);
    opt_ie->needs(opt_if);
    cmd->add_option("--fusion-mode", *mode, "disambiguates the fusion head when n == 3")->needs(opt_if);
    cmd->callback([&run, cmd, manifest, out, ienets, ifnet_path, mode] {
      const bool with_pipeline = cmd->count("--ifnet") > 0;
      run = [=]() {
        hf::DatasetManifest m = hf::read_manifest(*manifest);
        std::optional<hf::IFNetModel> ifnet;
        std::vector<hf::IENetModel> branches;
        if (with_pipeline) {
          branches = load_branches(*ienets);
          ifnet = hf::IFNetModel::from_params(hf::load_cpw(*ifnet_path), parse_mode_flag(*mode));
        }
        hf::EvalReport report;
        for (const auto& rec : m.records) {
          hf::Image hazy = hf::read_ppm(hf::resolve_path(m, rec.hazy_path));
          hf::Image clean = hf::read_ppm(hf::resolve_path(m, rec.clean_path));
          hf::Image output = with_pipeline ? hf::dehaze_pipeline(branches, *ifnet, hazy).fused : hazy;
          hf::EvalRow row;
          row.id = std::filesystem::path(rec.hazy_path).stem().string();
          row.psnr = hf::psnr(output, clean);
          row.ssim = hf::ssim_metric(output, clean);
          row.density_hazy = hf::haze_density_proxy(hazy);
          row.density_output = hf::haze_density_proxy(output);
          report.rows.push_back(std::move(row));
        }
        hf::write_eval_report(*out, report);
        std::printf("evaluated %zu images: mean PSNR %.3f dB, mean SSIM %.4f\n", report.rows.size(),
                    report.mean_psnr(), report.mean_ssim());
        return 0;
      };
    });
  }

  // ---- cross-eval ---------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("cross-eval", "PSNR matrix of branch models across bins");
    auto manifest = std::make_shared<std::string>();
    auto ienets = std::make_shared<std::vector<std::string>>();
    auto out = std::make_shared<std::string>();
    cmd->add_option("--manifest", *manifest, "held-out homogeneous test manifest")->required();
    cmd->add_option("--ienet", *ienets, "branch weights, model i for bin i (repeatable)")->required();
    cmd->add_option("--out", *out, "output matrix TSV");
    cmd->callback([&run, manifest, ienets, out] {
      run = [=]() {
        auto models = load_branches(*ienets);
        hf::DatasetManifest m = hf::read_manifest(*manifest);
        std::vector<std::vector<hf::Sample>> sets;
        for (int bin = 1; bin <= static_cast<int>(models.size()); ++bin) {
          sets.push_back(hf::load_samples(m, bin));
        }
        hf::CrossEvalMatrix matrix = hf::cross_eval(models, sets);
        for (int i = 0; i < matrix.n; ++i) {
          for (int j = 0; j < matrix.n; ++j) {
            std::printf("%8.3f%c", matrix.at(i, j), j + 1 == matrix.n ? '\n' : ' ');
          }
        }
        if (!out->empty()) hf::write_cross_eval(*out, matrix);
        return 0;
      };
    });
  }

  // ---- gradcheck ----------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("gradcheck", "finite-difference check of every op and network");
    auto seed = std::make_shared<uint64_t>(0x9a2dc0deull);
    cmd->add_option("--seed", *seed, "battery seed");
    cmd->callback([&run, seed] {
      run = [=]() {
        auto results = hf::run_gradcheck_battery(*seed);
        bool all_pass = true;
        std::printf("%-24s %8s %14s %10s  %s\n", "op", "probes", "max_rel_err", "tol", "status");
        for (const auto& r : results) {
          std::size_t probes = 0;
          for (const auto& e : r.report.entries) probes += e.probes;
          all_pass = all_pass && r.pass();
          std::printf("%-24s %8zu %14.3e %10.0e  %s\n", r.name.c_str(), probes, r.report.max_rel_err,
                      r.tol, r.pass() ? "PASS" : "FAIL");
        }
        return all_pass ? 0 : 3;
      };
    });
  }

  // ---- run-experiment -----------------------------------------------------
  {
    auto* cmd = app.add_subcommand("run-experiment", "dataset -> stage 1 -> stage 2 -> reports");
    auto config = std::make_shared<std::string>();
    cmd->add_option("--config", *config, "experiment JSON config")->required();
    cmd->callback([&run, config] {
      run = [=]() {
        hf::ExperimentConfig cfg = hf::load_experiment_config(*config);
        hf::ExperimentResult result = hf::run_experiment(cfg);
        std::printf("cross-eval (rows: models, cols: bins):\n");
        for (int i = 0; i < result.cross.n; ++i) {
          for (int j = 0; j < result.cross.n; ++j) {
            std::printf("%8.3f%c", result.cross.at(i, j), j + 1 == result.cross.n ? '\n' : ' ');
          }
        }
        std::printf("non-homogeneous test: input %.3f dB", result.fusion.mean_psnr_input);
        for (std::size_t b = 0; b < result.fusion.mean_psnr_branch.size(); ++b) {
          std::printf(", branch%zu %.3f dB", b + 1, result.fusion.mean_psnr_branch[b]);
        }
        std::printf(", fused %.3f dB (SSIM %.4f)\n", result.fusion.mean_psnr_fused,
                    result.fusion.mean_ssim_fused);
        std::printf("density proxy reduced on %.0f%% of test images\n",
                    100.0 * result.fusion.frac_density_reduced);
        std::printf("artifacts under %s\n", cfg.output_dir.c_str());
        return 0;
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 1;
  }

  try {
    return run ? run() : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
