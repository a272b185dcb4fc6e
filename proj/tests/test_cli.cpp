#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "hazeforge/dataset.hpp"

using namespace hazeforge;
namespace fs = std::filesystem;

namespace {

std::string bin_path() {
  const char* p = std::getenv("HAZEFORGE_BIN");
  REQUIRE(p != nullptr);
  return p;
}

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path dir = fs::temp_directory_path() / "hazeforge_cli_io";
  fs::create_directories(dir);
  const std::string out_file = (dir / ("out" + std::to_string(counter) + ".txt")).string();
  const std::string err_file = (dir / ("err" + std::to_string(counter) + ".txt")).string();
  ++counter;
  const std::string cmd = bin_path() + " " + args + " > " + out_file + " 2> " + err_file;
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  auto slurp = [](const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  };
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

std::string slurp_file(const std::string& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

struct Workspace {
  fs::path root;
  Workspace() {
    root = fs::temp_directory_path() / "hazeforge_cli_ws";
    fs::remove_all(root);
    fs::create_directories(root);
  }
  std::string str(const std::string& rel) const { return (root / rel).string(); }
};

}  // namespace

TEST_CASE("no arguments yields exit 1 and usage text", "[cli]") {
  RunResult r = run_cli("");
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("Usage:") != std::string::npos);
  CHECK(r.err.find("gradcheck") != std::string::npos);
  CHECK(r.out.empty());
}

TEST_CASE("help exits 0", "[cli]") {
  RunResult r = run_cli("--help");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("Usage:") != std::string::npos);
}

TEST_CASE("gen-clean and synth are idempotent and validate flags", "[cli]") {
  Workspace ws;
  CHECK(run_cli("gen-clean --seed 7 --height 16 --width 16 --out " + ws.str("c.ppm")).exit_code == 0);
  CHECK(run_cli("gen-clean --seed 7 --height 16 --width 16 --out " + ws.str("c2.ppm")).exit_code == 0);
  CHECK(slurp_file(ws.str("c.ppm")) == slurp_file(ws.str("c2.ppm")));
  CHECK(slurp_file(ws.str("c.ppm")).substr(0, 2) == "P6");

  CHECK(run_cli("synth --in " + ws.str("c.ppm") + " --out " + ws.str("h.ppm") + " --a 0.9 --t 0.5").exit_code == 0);
  CHECK(run_cli("synth --in " + ws.str("c.ppm") + " --out " + ws.str("hn.ppm") +
                " --a 0.9 --t-seed 3 --t-lo 0.3 --t-hi 0.9")
            .exit_code == 0);
  // --t and --t-seed conflict -> usage error
  CHECK(run_cli("synth --in " + ws.str("c.ppm") + " --out x.ppm --a 0.9 --t 0.5 --t-seed 3").exit_code == 1);
  // neither given -> usage error
  CHECK(run_cli("synth --in " + ws.str("c.ppm") + " --out x.ppm --a 0.9").exit_code == 1);
  // out-of-range airlight -> runtime error
  CHECK(run_cli("synth --in " + ws.str("c.ppm") + " --out x.ppm --a 1.5 --t 0.5").exit_code == 2);
  // missing input -> IO error
  CHECK(run_cli("synth --in " + ws.str("nope.ppm") + " --out x.ppm --a 0.9 --t 0.5").exit_code == 2);
}

TEST_CASE("partition prints bins and assignment", "[cli]") {
  RunResult r = run_cli("partition --n 2 --t-min 0.3 --t-max 0.9 --assign 0.45");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("bin 1") != std::string::npos);
  CHECK(r.out.find("bin 2") != std::string::npos);
  CHECK(r.out.find("-> bin 1") != std::string::npos);
  CHECK(run_cli("partition --n 0").exit_code == 1);  // range-checked flag
}

TEST_CASE("training, dehazing, and eval round-trip through the CLI", "[cli][slow]") {
  Workspace ws;
  // fixture dataset via the library (the CLI builds corpora via run-experiment)
  DatasetConfig dc;
  dc.n_bins = 2;
  dc.train_per_bin = 6;
  dc.test_per_bin = 2;
  dc.nonhomog_train = 4;
  dc.nonhomog_test = 2;
  dc.height = 16;
  dc.width = 16;
  dc.seed = 5;
  BuiltDataset built = build_dataset(dc, ws.str("data"));

  const std::string train_flags = " --epochs 2 --batch-size 4 --modules 1 --seed 11";
  CHECK(run_cli("train-ienet --train-manifest " + built.train_manifest + " --bin 1 --out " + ws.str("w1.cpw") +
                " --curve " + ws.str("c1.tsv") + train_flags)
            .exit_code == 0);
  CHECK(run_cli("train-ienet --train-manifest " + built.train_manifest + " --bin 2 --out " + ws.str("w2.cpw") +
                train_flags)
            .exit_code == 0);
  CHECK(fs::exists(ws.str("w1.cpw")));
  CHECK(slurp_file(ws.str("c1.tsv")).find("#step") == 0);

  // missing bin -> runtime config error
  CHECK(run_cli("train-ienet --train-manifest " + built.train_manifest + " --bin 9 --out x.cpw" + train_flags)
            .exit_code == 2);

  CHECK(run_cli("train-ifnet --manifest " + built.train_manifest + " --manifest " + built.train_nh_manifest +
                " --ienet " + ws.str("w1.cpw") + " --ienet " + ws.str("w2.cpw") + " --out " + ws.str("f.cpw") +
                train_flags)
            .exit_code == 0);

  // dehaze a synthesized image; output size must match input
  CHECK(run_cli("gen-clean --seed 9 --height 20 --width 24 --out " + ws.str("clean.ppm")).exit_code == 0);
  CHECK(run_cli("synth --in " + ws.str("clean.ppm") + " --out " + ws.str("hazy.ppm") +
                " --a 0.85 --t-seed 4 --t-lo 0.3 --t-hi 0.9")
            .exit_code == 0);
  const std::string dehaze_cmd = "dehaze --ienet " + ws.str("w1.cpw") + " --ienet " + ws.str("w2.cpw") +
                                 " --ifnet " + ws.str("f.cpw") + " --in " + ws.str("hazy.ppm") + " --out " +
                                 ws.str("out.ppm") + " --dump-branches " + ws.str("branch");
  CHECK(run_cli(dehaze_cmd).exit_code == 0);
  CHECK(fs::exists(ws.str("branch1.ppm")));
  CHECK(fs::exists(ws.str("branch2.ppm")));
  {
    Image in = read_ppm(ws.str("hazy.ppm"));
    Image out = read_ppm(ws.str("out.ppm"));
    CHECK(out.height() == in.height());
    CHECK(out.width() == in.width());
  }
  // idempotent re-run
  const std::string first = slurp_file(ws.str("out.ppm"));
  CHECK(run_cli(dehaze_cmd).exit_code == 0);
  CHECK(slurp_file(ws.str("out.ppm")) == first);

  // branch-count mismatch -> exit 2 with the counts in the message
  RunResult mismatch = run_cli("dehaze --ienet " + ws.str("w1.cpw") + " --ifnet " + ws.str("f.cpw") +
                               " --in " + ws.str("hazy.ppm") + " --out " + ws.str("bad.ppm"));
  CHECK(mismatch.exit_code == 2);
  CHECK(mismatch.err.find("2") != std::string::npos);
  CHECK(mismatch.err.find("1") != std::string::npos);

  // eval: input-only and full-pipeline reports
  CHECK(run_cli("eval --manifest " + built.test_nh_manifest + " --out " + ws.str("eval_in.tsv")).exit_code == 0);
  CHECK(run_cli("eval --manifest " + built.test_nh_manifest + " --out " + ws.str("eval_out.tsv") + " --ienet " +
                ws.str("w1.cpw") + " --ienet " + ws.str("w2.cpw") + " --ifnet " + ws.str("f.cpw"))
            .exit_code == 0);
  CHECK(slurp_file(ws.str("eval_in.tsv")).find("MEAN\t") != std::string::npos);
  // --ienet without --ifnet is a usage error
  CHECK(run_cli("eval --manifest " + built.test_nh_manifest + " --out x.tsv --ienet " + ws.str("w1.cpw"))
            .exit_code == 1);

  // cross-eval prints an n x n matrix and writes the TSV
  RunResult cross = run_cli("cross-eval --manifest " + built.test_manifest + " --ienet " + ws.str("w1.cpw") +
                            " --ienet " + ws.str("w2.cpw") + " --out " + ws.str("cross.tsv"));
  CHECK(cross.exit_code == 0);
  CHECK(fs::exists(ws.str("cross.tsv")));
}

TEST_CASE("gradcheck command reports a table and exit 0", "[cli][slow]") {
  RunResult r = run_cli("gradcheck --seed 7");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("max_rel_err") != std::string::npos);
  CHECK(r.out.find("conv2d") != std::string::npos);
  CHECK(r.out.find("ienet_res_mean") != std::string::npos);
  CHECK(r.out.find("FAIL") == std::string::npos);
}

TEST_CASE("run-experiment produces reports and reproduces them bitwise", "[cli][slow]") {
  Workspace ws;
  auto write_config = [&](const std::string& path, const std::string& out_dir) {
    std::ofstream f(path);
    f << R"({
  "seed": 3,
  "output_dir": ")" << out_dir << R"(",
  "dataset": {"n_bins": 2, "train_per_bin": 6, "test_per_bin": 2, "nonhomog_train": 4,
               "nonhomog_test": 2, "height": 16, "width": 16},
  "ienet": {"num_residual_modules": 1},
  "stage2_homog_per_bin": 3,
  "train": {"epochs": 2, "batch_size": 4}
})";
  };
  write_config(ws.str("exp.json"), ws.str("run1"));
  RunResult r1 = run_cli("run-experiment --config " + ws.str("exp.json"));
  CHECK(r1.exit_code == 0);
  CHECK(r1.out.find("cross-eval") != std::string::npos);
  CHECK(fs::exists(ws.str("run1/reports/cross_eval.tsv")));
  CHECK(fs::exists(ws.str("run1/reports/fusion_report.tsv")));
  CHECK(fs::exists(ws.str("run1/reports/eval_fused.tsv")));
  CHECK(fs::exists(ws.str("run1/weights/ienet_bin1.cpw")));
  CHECK(fs::exists(ws.str("run1/weights/ifnet.cpw")));
  CHECK(fs::exists(ws.str("run1/curves/stage2.tsv")));

  write_config(ws.str("exp2.json"), ws.str("run2"));
  CHECK(run_cli("run-experiment --config " + ws.str("exp2.json")).exit_code == 0);
  CHECK(slurp_file(ws.str("run1/reports/cross_eval.tsv")) == slurp_file(ws.str("run2/reports/cross_eval.tsv")));
  CHECK(slurp_file(ws.str("run1/reports/fusion_report.tsv")) ==
        slurp_file(ws.str("run2/reports/fusion_report.tsv")));
  CHECK(slurp_file(ws.str("run1/reports/eval_fused.tsv")) == slurp_file(ws.str("run2/reports/eval_fused.tsv")));
  CHECK(slurp_file(ws.str("run1/weights/ifnet.cpw")) == slurp_file(ws.str("run2/weights/ifnet.cpw")));

  // unknown config keys are rejected
  {
    std::ofstream f(ws.str("bad.json"));
    f << R"({"seed": 1, "output_dir": "x", "datasets": {}})";
  }
  CHECK(run_cli("run-experiment --config " + ws.str("bad.json")).exit_code == 2);
}
