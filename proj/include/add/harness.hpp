#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "add/editing.hpp"
#include "add/error.hpp"
#include "add/encode.hpp"
#include "add/imgio.hpp"
#include "add/kdes.hpp"

namespace add {

// ---------------------------------------------------------------------------
// Datasets

struct DatasetEntry {
  std::string path;
  int label = 0;
  std::string split;  // "", "train" or "test"
  std::string style;  // style spec applied to produce this file, if any
};

struct Dataset {
  std::vector<DatasetEntry> entries;
  std::vector<std::string> class_names;
  std::string provenance = "directory";  // "synthetic" or "directory"

  int class_count() const { return static_cast<int>(class_names.size()); }
  std::vector<int> labels() const;
  // >= 2 classes, >= 2 images per class, labels dense in 0..K-1.
  void validate() const;
};

// Manifest: JSON {"provenance", "classes": [...], "images": [{"path", "label",
// "split", "style"}]}; relative paths resolve against the manifest directory.
void save_manifest(const Dataset& ds, const std::filesystem::path& path);
Dataset load_manifest(const std::filesystem::path& path);

// One subdirectory per class holding .pgm/.ppm files, sorted by name.
Dataset scan_directory(const std::filesystem::path& root);

// Shapes in class order; synth_dataset supports 2..8 classes.
inline constexpr std::array<const char*, 8> kShapeNames = {
    "disk", "square", "triangle", "cross", "ring", "diamond", "hbar", "ellipse"};

struct SynthRender {
  Image clean;                      // before noise
  Image noisy;                      // clamped, with additive noise
  std::vector<std::uint8_t> mask;   // 1 inside the shape
  double foreground = 0.0;          // base object intensity
};

// Renders one textured shape with position and scale jitter over a linear
// background gradient; additive Gaussian noise sigma = 0.02.
SynthRender render_synthetic(int shape, int size, std::uint64_t seed);

// Writes `per_class` PGM files per class plus dataset.json into `out_dir`.
Dataset synth_dataset(int classes, int per_class, int size, std::uint64_t seed,
                      const std::filesystem::path& out_dir);

// ---------------------------------------------------------------------------
// Style mixtures

enum class MixtureMode { SingleStyle, PairwiseMix, AllMix };
std::string_view to_string(MixtureMode m);
MixtureMode parse_mixture(std::string_view name);

// Index into `pool` for every dataset entry. Single-style uses pool[0];
// the mixes draw uniformly per image.
std::vector<int> assign_styles(const Dataset& ds, std::span<const StyleFilter> pool,
                               MixtureMode mode, std::uint64_t seed);

// Applies the assignment and writes one styled file per image to out_dir.
Dataset write_styled(const Dataset& ds, std::span<const StyleFilter> pool,
                     std::span<const int> assignment, const std::filesystem::path& out_dir);

struct Split {
  std::vector<int> train;
  std::vector<int> test;
};

// Per class: shuffle, take train_per_class for training and test_per_class
// (or the remainder when negative) for testing. Indices are sorted.
Split stratified_split(std::span<const int> labels, int train_per_class, int test_per_class,
                       std::uint64_t seed);

// ---------------------------------------------------------------------------
// Experiments

struct DatasetSpec {
  std::string kind = "synthetic";  // "synthetic", "manifest" or "directory"
  std::string path;
  int classes = 4;
  int per_class = 40;
  int size = 64;
  std::uint64_t seed = 7;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  std::vector<std::string> style_pool = {"identity"};
  MixtureMode mixture = MixtureMode::SingleStyle;
  int train_per_class = 20;
  int test_per_class = 20;
  EncoderKind encoder = EncoderKind::Emk;
  KdesParams kdes;
  int codebook_size = 200;
  int codebook_samples_per_variant = 1500;
  double gamma_e = 1.0;
  double C = 10.0;
  double lambda_d = 1e-2;
  std::vector<std::string> methods = {"standard", "add_ak", "add_gmkl"};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string output_dir = "experiment_out";
  unsigned threads = 0;

  void validate() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);

struct SeedResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::optional<ErrorKind> error_kind;
  std::map<std::string, double> accuracy;
  std::vector<double> learned_weights;
  std::string gmkl_status;
  std::vector<int> style_counts;       // images per pool entry
  std::vector<int> style_assignment;   // pool index per dataset entry
  std::size_t codebook_test_samples = 0;
  std::vector<std::string> log;
  double seconds = 0.0;
};

struct MethodSummary {
  std::string method;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation over successful seeds
  std::vector<double> per_seed;
};

struct Report {
  nlohmann::json config;
  std::vector<MethodSummary> methods;
  std::vector<SeedResult> seeds;
  double seconds = 0.0;

  const MethodSummary* method(const std::string& name) const;
  // Everything but timing; identical configs produce identical documents.
  nlohmann::json to_json() const;
  std::string to_csv() const;
  std::string to_table() const;
};

// Resolves the dataset (synthesizing it under output_dir when requested) and
// runs every seed.
Report run_pipeline(const ExperimentConfig& cfg);

// Writes report.csv, report.json, timing.json and seed_<n>.log.
void write_report(const Report& report, const std::filesystem::path& directory);

// ---------------------------------------------------------------------------
// Descriptor drift under a filter

struct DriftReport {
  std::vector<double> drifts;  // relative L1 difference per patch
  double mean = 0.0;
  double max = 0.0;
  std::optional<double> flip_rate;  // nearest-codeword changes, when a codebook is given
  std::size_t patches = 0;

  nlohmann::json to_json() const;
};

using ImageFilter = std::function<Image(const Image&)>;

// Compares identity-variant KDES descriptors of each image and its filtered
// version, patch by patch.
DriftReport drift_analysis(std::span<const Image> images, const ImageFilter& filter,
                           const KdesParams& params, const Codebook* codebook = nullptr);
DriftReport drift_analysis(std::span<const Image> images, const StyleFilter& filter,
                           const KdesParams& params, const Codebook* codebook = nullptr);

}  // namespace add
