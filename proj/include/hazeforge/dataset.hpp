#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hazeforge/haze.hpp"
#include "hazeforge/image.hpp"

namespace hazeforge {

struct ManifestRecord {
  std::string hazy_path;   // relative to the manifest directory
  std::string clean_path;  // relative to the manifest directory
  int bin_index = 0;       // 0 marks non-homogeneous records (no bin)
  double t_mean = 0.0;
  uint64_t seed = 0;
};

struct DatasetManifest {
  std::string base_dir;
  std::vector<ManifestRecord> records;
};

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// UTF-8 TSV, one record per line: hazy_path, clean_path, bin_index, t_mean,
// seed. Header line starts with '#'.
inline void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "#hazy_path\tclean_path\tbin_index\tt_mean\tseed\n";
  for (const auto& r : records) {
    f << r.hazy_path << '\t' << r.clean_path << '\t' << r.bin_index << '\t' << format_double(r.t_mean)
      << '\t' << r.seed << '\n';
  }
  if (!f) throw IoError("write failed: " + path);
}

inline DatasetManifest read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  DatasetManifest m;
  m.base_dir = std::filesystem::path(path).parent_path().string();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    ManifestRecord r;
    std::string bin, t_mean, seed;
    if (!std::getline(ss, r.hazy_path, '\t') || !std::getline(ss, r.clean_path, '\t') ||
        !std::getline(ss, bin, '\t') || !std::getline(ss, t_mean, '\t') || !std::getline(ss, seed, '\t')) {
      throw IoError(path + ":" + std::to_string(lineno) + ": malformed manifest line");
    }
    try {
      r.bin_index = std::stoi(bin);
      r.t_mean = std::stod(t_mean);
      r.seed = std::stoull(seed);
    } catch (const std::exception&) {
      throw IoError(path + ":" + std::to_string(lineno) + ": malformed manifest fields");
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

inline std::string resolve_path(const DatasetManifest& m, const std::string& rel) {
  std::filesystem::path p(rel);
  if (p.is_absolute() || m.base_dir.empty()) return rel;
  return (std::filesystem::path(m.base_dir) / p).string();
}

struct Sample {
  Image hazy;
  Image clean;
  int bin_index = 0;
  double t_mean = 0.0;
};

// Loads records into memory; bin_filter < 0 loads everything.
inline std::vector<Sample> load_samples(const DatasetManifest& m, int bin_filter = -1) {
  std::vector<Sample> out;
  for (const auto& r : m.records) {
    if (bin_filter >= 0 && r.bin_index != bin_filter) continue;
    Sample s;
    s.hazy = read_ppm(resolve_path(m, r.hazy_path));
    s.clean = read_ppm(resolve_path(m, r.clean_path));
    s.bin_index = r.bin_index;
    s.t_mean = r.t_mean;
    out.push_back(std::move(s));
  }
  return out;
}

struct DatasetConfig {
  int n_bins = 2;
  double t_min = 0.3;
  double t_max = 0.9;
  int train_per_bin = 100;
  int test_per_bin = 40;
  int nonhomog_train = 60;
  int nonhomog_test = 40;
  int height = 32;
  int width = 32;
  double a_min = 0.7;
  double a_max = 1.0;
  int smoothness = 4;
  uint64_t seed = 1;
};

struct BuiltDataset {
  std::string train_manifest;
  std::string test_manifest;
  std::string train_nh_manifest;
  std::string test_nh_manifest;
};

namespace detail {

enum SplitTag : uint64_t { kTrainSplit = 101, kTestSplit = 102, kTrainNhSplit = 103, kTestNhSplit = 104 };

inline std::string record_stem(const char* split, int bin, int i) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%s_b%d_%04d", split, bin, i);
  return buf;
}

}  // namespace detail

// Synthesizes the full corpus: homogeneous train/test pairs per bin, plus
// non-homogeneous train/test pairs spanning the whole transmittance range.
// Everything is a pure function of (config, seed); record order is fixed.
inline BuiltDataset build_dataset(const DatasetConfig& cfg, const std::string& out_dir) {
  if (cfg.train_per_bin < 1 || cfg.test_per_bin < 0 || cfg.nonhomog_train < 0 || cfg.nonhomog_test < 0) {
    throw ConfigError("build_dataset: counts must be non-negative (train_per_bin >= 1)");
  }
  if (!(cfg.a_min > 0.0 && cfg.a_min <= cfg.a_max && cfg.a_max <= 1.0)) {
    throw ConfigError("build_dataset: need 0 < a_min <= a_max <= 1");
  }
  const auto bins = partition_bins(cfg.n_bins, cfg.t_min, cfg.t_max);
  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  std::error_code ec;
  fs::create_directories(root / "images", ec);
  if (ec) throw IoError("cannot create dataset directory " + (root / "images").string() + ": " + ec.message());

  auto emit_homogeneous = [&](detail::SplitTag tag, const char* split, int per_bin) {
    std::vector<ManifestRecord> records;
    const uint64_t split_seed = derive_seed(cfg.seed, tag);
    for (const auto& bin : bins) {
      const uint64_t bin_seed = derive_seed(split_seed, static_cast<uint64_t>(bin.index));
      for (int i = 0; i < per_bin; ++i) {
        const uint64_t rec_seed = derive_seed(bin_seed, static_cast<uint64_t>(i));
        Rng r(rec_seed);
        const uint64_t clean_seed = r.next_u64();
        const double t = r.uniform(bin.t_lo, bin.t_hi);
        const double a = r.uniform(cfg.a_min, cfg.a_max);
        const Image clean = gen_clean_image(cfg.height, cfg.width, clean_seed);
        const Image hazy = synthesize(clean, AtmosphericLight(a), make_homogeneous_field(cfg.height, cfg.width, t));
        const std::string stem = detail::record_stem(split, bin.index, i);
        ManifestRecord rec;
        rec.hazy_path = "images/" + stem + "_hazy.ppm";
        rec.clean_path = "images/" + stem + "_clean.ppm";
        rec.bin_index = bin.index;
        rec.t_mean = t;
        rec.seed = rec_seed;
        if (rec.t_mean < bin.t_lo || rec.t_mean > bin.t_hi) {
          throw ContractError("build_dataset: record fell outside its bin");
        }
        write_ppm((root / rec.hazy_path).string(), hazy);
        write_ppm((root / rec.clean_path).string(), clean);
        records.push_back(std::move(rec));
      }
    }
    return records;
  };

  auto emit_nonhomogeneous = [&](detail::SplitTag tag, const char* split, int count) {
    std::vector<ManifestRecord> records;
    const uint64_t split_seed = derive_seed(cfg.seed, tag);
    for (int i = 0; i < count; ++i) {
      const uint64_t rec_seed = derive_seed(split_seed, static_cast<uint64_t>(i));
      Rng r(rec_seed);
      const uint64_t clean_seed = r.next_u64();
      const uint64_t field_seed = r.next_u64();
      const double a = r.uniform(cfg.a_min, cfg.a_max);
      const Image clean = gen_clean_image(cfg.height, cfg.width, clean_seed);
      const TransmissionField field = gen_t_field(cfg.height, cfg.width, field_seed, cfg.t_min, cfg.t_max, cfg.smoothness);
      const Image hazy = synthesize(clean, AtmosphericLight(a), field);
      const std::string stem = detail::record_stem(split, 0, i);
      ManifestRecord rec;
      rec.hazy_path = "images/" + stem + "_hazy.ppm";
      rec.clean_path = "images/" + stem + "_clean.ppm";
      rec.bin_index = 0;
      rec.t_mean = field.mean();
      rec.seed = rec_seed;
      write_ppm((root / rec.hazy_path).string(), hazy);
      write_ppm((root / rec.clean_path).string(), clean);
      records.push_back(std::move(rec));
    }
    return records;
  };

  BuiltDataset built;
  built.train_manifest = (root / "train.tsv").string();
  built.test_manifest = (root / "test.tsv").string();
  built.train_nh_manifest = (root / "train_nh.tsv").string();
  built.test_nh_manifest = (root / "test_nh.tsv").string();
  write_manifest(built.train_manifest, emit_homogeneous(detail::kTrainSplit, "train", cfg.train_per_bin));
  write_manifest(built.test_manifest, emit_homogeneous(detail::kTestSplit, "test", cfg.test_per_bin));
  write_manifest(built.train_nh_manifest, emit_nonhomogeneous(detail::kTrainNhSplit, "train_nh", cfg.nonhomog_train));
  write_manifest(built.test_nh_manifest, emit_nonhomogeneous(detail::kTestNhSplit, "test_nh", cfg.nonhomog_test));
  return built;
}

}  // namespace hazeforge
