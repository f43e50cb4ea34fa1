#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "add/error.hpp"
#include "add/harness.hpp"
#include "add/mkl.hpp"
#include "add/parallel.hpp"
#include "util.hpp"

namespace add {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kMethods = {"standard", "add_ak", "add_gmkl"};

// Stream identifiers for the per-seed random sources.
enum Stream : std::uint64_t { kStyles = 1, kSplit = 2, kSampling = 3, kClustering = 4 };

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  require(j.is_object(), ErrorKind::Config, where + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    require(allowed.count(key) > 0, ErrorKind::Config,
            "unknown key '" + key + "' in " + where);
}

std::vector<StyleFilter> parse_pool(const std::vector<std::string>& specs) {
  std::vector<StyleFilter> pool;
  for (const auto& s : specs) {
    try {
      pool.push_back(StyleFilter::parse(s));
    } catch (const Error& e) {
      fail(ErrorKind::Config, "bad style '" + s + "': " + e.what());
    }
  }
  return pool;
}

}  // namespace

void ExperimentConfig::validate() const {
  require(dataset.kind == "synthetic" || dataset.kind == "manifest" ||
              dataset.kind == "directory",
          ErrorKind::Config, "dataset kind must be synthetic, manifest or directory");
  if (dataset.kind == "synthetic") {
    require(dataset.classes >= 2 && dataset.classes <= 8, ErrorKind::Config,
            "synthetic datasets support 2 to 8 classes");
    require(dataset.size >= kdes.patch_size, ErrorKind::Config,
            "synthetic image size is smaller than one patch");
    require(train_per_class < dataset.per_class, ErrorKind::Config,
            "train count must be below the class size");
    require(test_per_class < 0 || train_per_class + test_per_class <= dataset.per_class,
            ErrorKind::Config, "train and test counts exceed the class size");
  } else {
    require(!dataset.path.empty(), ErrorKind::Config, "dataset path is required");
  }
  require(!style_pool.empty(), ErrorKind::Config, "style pool is empty");
  parse_pool(style_pool);
  if (mixture == MixtureMode::PairwiseMix)
    require(style_pool.size() == 2, ErrorKind::Config, "pairwise-mix needs exactly two styles");
  require(train_per_class >= 1, ErrorKind::Config, "train count per class must be positive");
  require(test_per_class != 0, ErrorKind::Config, "test count per class must be positive");
  try {
    kdes.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, std::string("kdes: ") + e.what());
  }
  require(codebook_size >= 1, ErrorKind::Config, "codebook size must be positive");
  require(codebook_samples_per_variant >= 1, ErrorKind::Config,
          "codebook sample count must be positive");
  require(gamma_e > 0.0, ErrorKind::Config, "gamma_e must be positive");
  require(C > 0.0, ErrorKind::Config, "C must be positive");
  require(lambda_d >= 0.0, ErrorKind::Config, "lambda_d must be non-negative");
  require(!methods.empty(), ErrorKind::Config, "no methods requested");
  for (const auto& m : methods)
    require(kMethods.count(m) > 0, ErrorKind::Config, "unknown method '" + m + "'");
  require(!seeds.empty(), ErrorKind::Config, "seed list is empty");
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig cfg;
  try {
    check_keys(j,
               {"dataset", "style_pool", "mixture", "train_per_class", "test_per_class",
                "encoder", "kdes", "codebook_size", "codebook_samples_per_variant", "gamma_e",
                "C", "lambda_d", "methods", "seeds", "output_dir", "threads"},
               "config");
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      check_keys(d, {"kind", "path", "classes", "per_class", "size", "seed"}, "dataset");
      read_field(d, "kind", cfg.dataset.kind);
      read_field(d, "path", cfg.dataset.path);
      read_field(d, "classes", cfg.dataset.classes);
      read_field(d, "per_class", cfg.dataset.per_class);
      read_field(d, "size", cfg.dataset.size);
      read_field(d, "seed", cfg.dataset.seed);
    }
    read_field(j, "style_pool", cfg.style_pool);
    if (j.contains("mixture")) cfg.mixture = parse_mixture(j.at("mixture").get<std::string>());
    read_field(j, "train_per_class", cfg.train_per_class);
    read_field(j, "test_per_class", cfg.test_per_class);
    if (j.contains("encoder")) {
      try {
        cfg.encoder = parse_encoder(j.at("encoder").get<std::string>());
      } catch (const Error& e) {
        fail(ErrorKind::Config, e.what());
      }
    }
    if (j.contains("kdes")) {
      const auto& k = j.at("kdes");
      check_keys(k,
                 {"patch_size", "stride", "gamma_o", "gamma_p", "orientation_basis",
                  "position_basis", "epsilon_g", "whiten"},
                 "kdes");
      read_field(k, "patch_size", cfg.kdes.patch_size);
      read_field(k, "stride", cfg.kdes.stride);
      read_field(k, "gamma_o", cfg.kdes.gamma_o);
      read_field(k, "gamma_p", cfg.kdes.gamma_p);
      read_field(k, "orientation_basis", cfg.kdes.orientation_basis);
      read_field(k, "position_basis", cfg.kdes.position_basis);
      read_field(k, "epsilon_g", cfg.kdes.epsilon_g);
      read_field(k, "whiten", cfg.kdes.whiten);
    }
    read_field(j, "codebook_size", cfg.codebook_size);
    read_field(j, "codebook_samples_per_variant", cfg.codebook_samples_per_variant);
    read_field(j, "gamma_e", cfg.gamma_e);
    read_field(j, "C", cfg.C);
    read_field(j, "lambda_d", cfg.lambda_d);
    read_field(j, "methods", cfg.methods);
    read_field(j, "seeds", cfg.seeds);
    read_field(j, "output_dir", cfg.output_dir);
    read_field(j, "threads", cfg.threads);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

json ExperimentConfig::to_json() const {
  return {
      {"dataset",
       {{"kind", dataset.kind},
        {"path", dataset.path},
        {"classes", dataset.classes},
        {"per_class", dataset.per_class},
        {"size", dataset.size},
        {"seed", dataset.seed}}},
      {"style_pool", style_pool},
      {"mixture", std::string(add::to_string(mixture))},
      {"train_per_class", train_per_class},
      {"test_per_class", test_per_class},
      {"encoder", std::string(add::to_string(encoder))},
      {"kdes",
       {{"patch_size", kdes.patch_size},
        {"stride", kdes.stride},
        {"gamma_o", kdes.gamma_o},
        {"gamma_p", kdes.gamma_p},
        {"orientation_basis", kdes.orientation_basis},
        {"position_basis", kdes.position_basis},
        {"epsilon_g", kdes.epsilon_g},
        {"whiten", kdes.whiten}}},
      {"codebook_size", codebook_size},
      {"codebook_samples_per_variant", codebook_samples_per_variant},
      {"gamma_e", gamma_e},
      {"C", C},
      {"lambda_d", lambda_d},
      {"methods", methods},
      {"seeds", seeds},
      {"output_dir", output_dir},
      {"threads", threads},
  };
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  ExperimentConfig cfg = ExperimentConfig::from_json(j);
  // Dataset paths are relative to the config file.
  if (!cfg.dataset.path.empty() && fs::path(cfg.dataset.path).is_relative())
    cfg.dataset.path = (path.parent_path() / cfg.dataset.path).lexically_normal().string();
  return cfg;
}

// ---------------------------------------------------------------------------

const MethodSummary* Report::method(const std::string& name) const {
  for (const auto& m : methods)
    if (m.method == name) return &m;
  return nullptr;
}

json Report::to_json() const {
  json j;
  j["config"] = config;
  j["codebook_policy"] = "rebuilt per seed from that seed's training images";
  j["methods"] = json::array();
  for (const auto& m : methods)
    j["methods"].push_back(
        {{"method", m.method}, {"mean", m.mean}, {"stddev", m.stddev}, {"per_seed", m.per_seed}});
  j["seeds"] = json::array();
  for (const auto& s : seeds) {
    json e = {{"seed", s.seed},
              {"ok", s.ok},
              {"accuracy", s.accuracy},
              {"learned_weights", s.learned_weights},
              {"gmkl_status", s.gmkl_status},
              {"style_counts", s.style_counts},
              {"style_assignment", s.style_assignment},
              {"codebook_test_samples", s.codebook_test_samples}};
    if (!s.ok) {
      e["error"] = s.error;
      e["error_kind"] = s.error_kind ? add::to_string(*s.error_kind) : "unknown";
    }
    j["seeds"].push_back(std::move(e));
  }
  return j;
}

std::string Report::to_csv() const {
  // record,method,seed,index,value; index is the kernel index for weights.
  std::ostringstream out;
  out << "record,method,seed,index,value\n";
  for (const auto& m : methods) {
    out << "mean," << m.method << ",,," << detail::format_double(m.mean) << '\n';
    out << "stddev," << m.method << ",,," << detail::format_double(m.stddev) << '\n';
  }
  for (const auto& s : seeds) {
    if (!s.ok) {
      out << "failed,," << s.seed << ",,\n";
      continue;
    }
    for (const auto& [name, acc] : s.accuracy)
      out << "accuracy," << name << ',' << s.seed << ",," << detail::format_double(acc) << '\n';
    for (std::size_t m = 0; m < s.learned_weights.size(); ++m)
      out << "weight,add_gmkl," << s.seed << ',' << m << ','
          << detail::format_double(s.learned_weights[m]) << '\n';
  }
  return out.str();
}

std::string Report::to_table() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << std::left << std::setw(10) << "method" << std::right << std::setw(10) << "mean %"
      << std::setw(10) << "std %";
  for (const auto& s : seeds) out << std::setw(10) << ("seed " + std::to_string(s.seed));
  out << '\n';
  for (const auto& m : methods) {
    out << std::left << std::setw(10) << m.method << std::right << std::setw(10)
        << 100.0 * m.mean << std::setw(10) << 100.0 * m.stddev;
    for (const auto& s : seeds) {
      const auto it = s.accuracy.find(m.method);
      if (s.ok && it != s.accuracy.end())
        out << std::setw(10) << 100.0 * it->second;
      else
        out << std::setw(10) << "failed";
    }
    out << '\n';
  }
  for (const auto& s : seeds) {
    if (!s.ok) {
      out << "\nseed " << s.seed << " failed: " << s.error << '\n';
      continue;
    }
    if (s.learned_weights.empty()) continue;
    const int n = static_cast<int>(std::lround(std::sqrt(s.learned_weights.size())));
    out << "\nseed " << s.seed << " learned weights d(i,j) (" << s.gmkl_status << "):\n";
    out << std::setprecision(4);
    for (int i = 0; i < n; ++i) {
      out << "  ";
      for (int j = 0; j < n; ++j) out << std::setw(9) << s.learned_weights[i * n + j];
      out << '\n';
    }
    out << std::setprecision(2);
  }
  return out.str();
}

// ---------------------------------------------------------------------------

namespace {

Dataset resolve_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset.kind == "synthetic")
    return synth_dataset(cfg.dataset.classes, cfg.dataset.per_class, cfg.dataset.size,
                         cfg.dataset.seed, fs::path(cfg.output_dir) / "dataset");
  if (cfg.dataset.kind == "manifest") return load_manifest(cfg.dataset.path);
  return scan_directory(cfg.dataset.path);
}

std::vector<int> pick(std::span<const int> values, std::span<const int> index) {
  std::vector<int> out;
  out.reserve(index.size());
  for (int k : index) out.push_back(values[k]);
  return out;
}

SeedResult run_seed(const ExperimentConfig& cfg, const Dataset& ds,
                    const std::vector<Image>& images, const std::vector<StyleFilter>& pool,
                    const KdesBasis& basis, std::uint64_t seed) {
  SeedResult r;
  r.seed = seed;
  auto log = [&](std::string line) { r.log.push_back(std::move(line)); };
  const auto labels = ds.labels();
  const int variants = static_cast<int>(kDefaultBasis.size());

  r.style_assignment = assign_styles(ds, pool, cfg.mixture, detail::mix_seed(seed, kStyles));
  r.style_counts.assign(pool.size(), 0);
  for (int s : r.style_assignment) ++r.style_counts[s];
  {
    std::string line = "styles:";
    for (std::size_t s = 0; s < pool.size(); ++s)
      line += " " + pool[s].to_string() + "=" + std::to_string(r.style_counts[s]);
    log(line);
  }

  const Split split = stratified_split(labels, cfg.train_per_class, cfg.test_per_class,
                                       detail::mix_seed(seed, kSplit));
  log("split: " + std::to_string(split.train.size()) + " train, " +
      std::to_string(split.test.size()) + " test");

  std::vector<int> used = split.train;
  used.insert(used.end(), split.test.begin(), split.test.end());
  std::vector<std::vector<DescriptorSet>> sets(ds.entries.size());
  parallel_for(
      used.size(),
      [&](std::size_t k) {
        const int idx = used[k];
        const Image styled = apply_style(pool[r.style_assignment[idx]], images[idx]);
        sets[idx] = extract_descriptors(styled, basis, kDefaultBasis, std::to_string(idx));
      },
      cfg.threads);
  log("descriptors: " + std::to_string(sets[used[0]][0].size()) + " patches per image, " +
      std::to_string(variants) + " variants, dimension " + std::to_string(basis.dimension()));

  std::vector<std::vector<DescriptorSet>> train_sets;
  train_sets.reserve(split.train.size());
  for (int idx : split.train) train_sets.push_back(sets[idx]);
  const CodebookSample sample = sample_for_codebook(
      train_sets, cfg.codebook_samples_per_variant, detail::mix_seed(seed, kSampling));
  const std::set<std::string> train_ids = [&] {
    std::set<std::string> ids;
    for (int idx : split.train) ids.insert(std::to_string(idx));
    return ids;
  }();
  for (const auto& tag : sample.tags)
    if (!train_ids.count(tag.image_id)) ++r.codebook_test_samples;
  require(r.codebook_test_samples == 0, ErrorKind::Data,
          "codebook sample contains descriptors from non-training images");

  const int clusters = cfg.codebook_size;
  const KMeansResult km =
      kmeans(sample.samples, clusters, detail::mix_seed(seed, kClustering));
  const Codebook codebook = build_projection(km.codebook, cfg.gamma_e);
  log("codebook: " + std::to_string(clusters) + " words from " +
      std::to_string(sample.samples.rows()) + " samples, " + std::to_string(km.iterations) +
      " k-means iterations, inertia " + detail::format_double(km.inertia));

  FeatureTable features(ds.entries.size());
  parallel_for(
      used.size(),
      [&](std::size_t k) {
        const int idx = used[k];
        auto& row = features[idx];
        row.reserve(variants);
        for (const auto& set : sets[idx]) row.push_back(encode(cfg.encoder, set, codebook).values);
      },
      cfg.threads);

  const BaseKernelSet ks = base_grams(features, split.train, split.test);
  const auto train_labels = pick(labels, split.train);
  const auto test_labels = pick(labels, split.test);
  log("kernels: " + std::to_string(ks.size()) + " base Grams");

  MklOptions options;
  options.C = cfg.C;
  options.lambda_d = cfg.lambda_d;
  for (const auto& method : cfg.methods) {
    double acc = 0.0;
    if (method == "standard") {
      const std::vector<int> keep = {pair_index(0, 0, variants)};
      const BaseKernelSet single = ks.select(keep);
      const std::vector<double> w = {1.0};
      const MklModel model = train_fixed(single, train_labels, w, options);
      acc = accuracy(predict(model, single).labels, test_labels);
      for (const auto& w : model.warnings) log("standard warning: " + w);
    } else if (method == "add_ak") {
      const std::vector<double> w(ks.size(), 1.0 / static_cast<double>(ks.size()));
      const MklModel model = train_fixed(ks, train_labels, w, options);
      acc = accuracy(predict(model, ks).labels, test_labels);
      for (const auto& w : model.warnings) log("add_ak warning: " + w);
    } else {
      const MklModel model = gmkl_train(ks, train_labels, options);
      acc = accuracy(predict(model, ks).labels, test_labels);
      r.learned_weights = model.weights;
      r.gmkl_status = std::string(to_string(model.status));
      log("add_gmkl: " + std::to_string(model.objective_trace.size() - 1) +
          " accepted steps, status " + r.gmkl_status + ", objective " +
          detail::format_double(model.objective_trace.back()));
      log("add_gmkl weights: " + detail::join_doubles(model.weights));
      for (const auto& w : model.warnings) log("add_gmkl warning: " + w);
    }
    r.accuracy[method] = acc;
    log(method + " accuracy: " + detail::format_double(acc));
  }
  r.ok = true;
  return r;
}

}  // namespace

Report run_pipeline(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const Dataset ds = resolve_dataset(cfg);
  const auto pool = parse_pool(cfg.style_pool);

  std::vector<Image> images(ds.entries.size());
  parallel_for(
      ds.entries.size(), [&](std::size_t k) { images[k] = load_image(ds.entries[k].path); },
      cfg.threads);
  const KdesBasis basis(cfg.kdes);

  Report report;
  report.config = cfg.to_json();
  for (std::uint64_t seed : cfg.seeds) {
    const auto t0 = std::chrono::steady_clock::now();
    SeedResult r;
    try {
      r = run_seed(cfg, ds, images, pool, basis, seed);
    } catch (const Error& e) {
      r = SeedResult{};
      r.seed = seed;
      r.error = e.what();
      r.error_kind = e.kind();
      r.log.push_back(std::string("failed (") + to_string(e.kind()) + "): " + e.what());
    } catch (const std::exception& e) {
      r = SeedResult{};
      r.seed = seed;
      r.error = e.what();
      r.log.push_back(std::string("failed: ") + e.what());
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.seeds.push_back(std::move(r));
  }

  for (const auto& method : cfg.methods) {
    MethodSummary m;
    m.method = method;
    for (const auto& s : report.seeds)
      if (s.ok) m.per_seed.push_back(s.accuracy.at(method));
    const auto n = static_cast<double>(m.per_seed.size());
    if (n > 0) {
      for (double a : m.per_seed) m.mean += a;
      m.mean /= n;
    }
    if (n > 1) {
      double ss = 0.0;
      for (double a : m.per_seed) ss += (a - m.mean) * (a - m.mean);
      m.stddev = std::sqrt(ss / (n - 1.0));
    }
    report.methods.push_back(std::move(m));
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

void write_report(const Report& report, const fs::path& directory) {
  fs::create_directories(directory);
  auto write = [&](const fs::path& name, const std::string& text) {
    std::ofstream out(directory / name);
    if (!out) fail(ErrorKind::Io, "cannot write " + (directory / name).string());
    out << text;
  };
  write("report.json", report.to_json().dump(2) + "\n");
  write("report.csv", report.to_csv());
  write("report.txt", report.to_table());
  json timing = {{"total_seconds", report.seconds}, {"seeds", json::array()}};
  for (const auto& s : report.seeds) {
    timing["seeds"].push_back({{"seed", s.seed}, {"seconds", s.seconds}});
    std::string text;
    for (const auto& line : s.log) text += line + '\n';
    write("seed_" + std::to_string(s.seed) + ".log", text);
  }
  write("timing.json", timing.dump(2) + "\n");
}

}  // namespace add
