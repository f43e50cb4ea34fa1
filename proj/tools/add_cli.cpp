// Command-line front end: dataset synthesis, the stepwise pipeline, full
// experiments and drift analysis.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "add/editing.hpp"
#include "add/encode.hpp"
#include "add/error.hpp"
#include "add/harness.hpp"
#include "add/imgio.hpp"
#include "add/kdes.hpp"
#include "add/mkl.hpp"
#include "add/parallel.hpp"

namespace fs = std::filesystem;
using namespace add;

namespace {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Parameter:
      return 1;
    case ErrorKind::Solver:
      return 3;
    default:
      return 2;
  }
}

void add_kdes_options(CLI::App* cmd, KdesParams& p) {
  cmd->add_option("--patch", p.patch_size, "Patch side in pixels");
  cmd->add_option("--stride", p.stride, "Grid stride in pixels");
  cmd->add_option("--gamma-o", p.gamma_o, "Orientation kernel bandwidth");
  cmd->add_option("--gamma-p", p.gamma_p, "Position kernel bandwidth");
  cmd->add_option("--orient-basis", p.orientation_basis, "Orientation basis size G_o");
  cmd->add_option("--pos-basis", p.position_basis, "Position grid side G_p");
  cmd->add_option("--epsilon-g", p.epsilon_g, "Magnitude normalization epsilon");
  cmd->add_flag("!--no-whiten", p.whiten, "Use raw basis responses");
}

Dataset read_dataset(const std::string& source) {
  return fs::is_directory(source) ? scan_directory(source) : load_manifest(source);
}

fs::path indexed(const fs::path& dir, std::size_t k) {
  return dir / (std::to_string(k) + ".addf");
}

std::vector<std::vector<DescriptorSet>> read_descriptors(const fs::path& dir, std::size_t n) {
  std::vector<std::vector<DescriptorSet>> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = descriptors_from_blob(read_blob(indexed(dir, k)));
  return out;
}

// Train/test indices from the manifest split tags, or a fresh stratified split.
Split resolve_split(const Dataset& ds, int train_per_class, int test_per_class,
                    std::uint64_t seed) {
  Split split;
  for (std::size_t k = 0; k < ds.entries.size(); ++k) {
    if (ds.entries[k].split == "train") split.train.push_back(static_cast<int>(k));
    if (ds.entries[k].split == "test") split.test.push_back(static_cast<int>(k));
  }
  if (!split.train.empty()) {
    require(!split.test.empty(), ErrorKind::Data, "manifest has no test images");
    return split;
  }
  require(train_per_class > 0, ErrorKind::Config,
          "manifest carries no split; pass --train-per-class");
  return stratified_split(ds.labels(), train_per_class, test_per_class, seed);
}

void print_json(const nlohmann::json& j, const std::string& path) {
  if (path.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive descriptor design: kernel descriptors over edited image variants"};
  app.require_subcommand(1);

  // synth
  struct {
    int classes = 4, per_class = 40, size = 64;
    std::uint64_t seed = 7;
    std::string out;
  } synth;
  auto* synth_cmd = app.add_subcommand("synth", "Render a synthetic shape dataset");
  synth_cmd->add_option("--classes", synth.classes, "Number of classes (2-8)");
  synth_cmd->add_option("--per-class", synth.per_class, "Images per class");
  synth_cmd->add_option("--size", synth.size, "Image side in pixels");
  synth_cmd->add_option("--seed", synth.seed, "Random seed");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();

  // styles apply
  struct {
    std::string dataset, out, mode = "single-style";
    std::vector<std::string> pool;
    std::uint64_t seed = 1;
  } styles;
  auto* styles_cmd = app.add_subcommand("styles", "Style mixtures");
  styles_cmd->require_subcommand(1);
  auto* apply_cmd = styles_cmd->add_subcommand("apply", "Write a styled copy of a dataset");
  apply_cmd->add_option("--dataset", styles.dataset, "Manifest or class directory")->required();
  apply_cmd->add_option("--style", styles.pool, "Style spec, repeatable")->required();
  apply_cmd->add_option("--mode", styles.mode, "single-style, pairwise-mix or all-mix");
  apply_cmd->add_option("--seed", styles.seed, "Assignment seed");
  apply_cmd->add_option("--out", styles.out, "Output directory")->required();

  // extract
  struct {
    std::string dataset, out;
    KdesParams params;
    unsigned threads = 0;
  } extract;
  auto* extract_cmd = app.add_subcommand("extract", "Dense 4-variant KDES descriptors");
  extract_cmd->add_option("--dataset", extract.dataset, "Manifest or class directory")
      ->required();
  extract_cmd->add_option("--out", extract.out, "Descriptor directory")->required();
  extract_cmd->add_option("--threads", extract.threads, "Worker threads (0 = all cores)");
  add_kdes_options(extract_cmd, extract.params);

  // codebook
  struct {
    std::string dataset, descriptors, out;
    int size = 200, samples = 1500;
    double gamma_e = 1.0;
    std::uint64_t seed = 1;
  } cb;
  auto* codebook_cmd = app.add_subcommand(
      "codebook", "k-means codebook from training descriptors (split=train, else all)");
  codebook_cmd->add_option("--dataset", cb.dataset, "Manifest or class directory")->required();
  codebook_cmd->add_option("--descriptors", cb.descriptors, "Descriptor directory")->required();
  codebook_cmd->add_option("--size", cb.size, "Number of codewords");
  codebook_cmd->add_option("--samples-per-variant", cb.samples, "Descriptors per variant");
  codebook_cmd->add_option("--gamma-e", cb.gamma_e, "EMK patch kernel bandwidth");
  codebook_cmd->add_option("--seed", cb.seed, "Sampling and seeding seed");
  codebook_cmd->add_option("--out", cb.out, "Codebook blob")->required();

  // encode
  struct {
    std::string dataset, descriptors, codebook, out, encoder = "emk";
    bool pyramid = false;
  } enc;
  auto* encode_cmd = app.add_subcommand("encode", "Image-level features per variant");
  encode_cmd->add_option("--dataset", enc.dataset, "Manifest or class directory")->required();
  encode_cmd->add_option("--descriptors", enc.descriptors, "Descriptor directory")->required();
  encode_cmd->add_option("--codebook", enc.codebook, "Codebook blob")->required();
  encode_cmd->add_option("--encoder", enc.encoder, "emk or bow");
  encode_cmd->add_flag("--pyramid", enc.pyramid, "Add 2x2 spatial pooling cells");
  encode_cmd->add_option("--out", enc.out, "Feature directory")->required();

  // grams
  struct {
    std::string dataset, features, out;
    int train_per_class = 0, test_per_class = -1;
    std::uint64_t seed = 1;
    bool no_normalize = false;
  } grams;
  auto* grams_cmd = app.add_subcommand("grams", "The N^2 base kernels over a split");
  grams_cmd->add_option("--dataset", grams.dataset, "Manifest or class directory")->required();
  grams_cmd->add_option("--features", grams.features, "Feature directory")->required();
  grams_cmd->add_option("--train-per-class", grams.train_per_class,
                        "Split size when the manifest has no split tags");
  grams_cmd->add_option("--test-per-class", grams.test_per_class, "-1 keeps the remainder");
  grams_cmd->add_option("--seed", grams.seed, "Split seed");
  grams_cmd->add_flag("--no-normalize", grams.no_normalize, "Skip trace normalization");
  grams_cmd->add_option("--out", grams.out, "Kernel directory")->required();

  // train
  struct {
    std::string kernels, out, method = "add_gmkl";
    double C = 10.0, lambda_d = 1e-2;
  } train;
  auto* train_cmd = app.add_subcommand("train", "Train standard, add_ak or add_gmkl");
  train_cmd->add_option("--kernels", train.kernels, "Kernel directory")->required();
  train_cmd->add_option("--method", train.method, "standard, add_ak or add_gmkl");
  train_cmd->add_option("--C", train.C, "SVM box constraint");
  train_cmd->add_option("--lambda-d", train.lambda_d, "Weight regularizer");
  train_cmd->add_option("--out", train.out, "Model directory")->required();

  // eval
  struct {
    std::string kernels, model, json;
  } eval;
  auto* eval_cmd = app.add_subcommand("eval", "Accuracy of a model on the test kernels");
  eval_cmd->add_option("--kernels", eval.kernels, "Kernel directory")->required();
  eval_cmd->add_option("--model", eval.model, "Model directory")->required();
  eval_cmd->add_option("--json", eval.json, "Write the result here instead of stdout");

  // experiment run
  struct {
    std::string config, out;
  } exp;
  auto* exp_cmd = app.add_subcommand("experiment", "Full multi-seed experiments");
  exp_cmd->require_subcommand(1);
  auto* run_cmd = exp_cmd->add_subcommand("run", "Run an experiment config");
  run_cmd->add_option("config", exp.config, "JSON config")->required();
  run_cmd->add_option("--out", exp.out, "Override output_dir");

  // drift
  struct {
    std::string dataset, filter, codebook, json;
    KdesParams params;
  } drift;
  auto* drift_cmd = app.add_subcommand("drift", "Descriptor drift under a style filter");
  drift_cmd->add_option("--dataset", drift.dataset, "Manifest or class directory")->required();
  drift_cmd->add_option("--filter", drift.filter, "Style spec")->required();
  drift_cmd->add_option("--codebook", drift.codebook, "Codebook for the flip rate");
  drift_cmd->add_option("--json", drift.json, "Write the report here instead of stdout");
  add_kdes_options(drift_cmd, drift.params);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth_cmd->parsed()) {
      const Dataset ds =
          synth_dataset(synth.classes, synth.per_class, synth.size, synth.seed, synth.out);
      std::cout << "wrote " << ds.entries.size() << " images to " << synth.out << '\n';
    } else if (apply_cmd->parsed()) {
      const Dataset ds = read_dataset(styles.dataset);
      std::vector<StyleFilter> pool;
      for (const auto& s : styles.pool) pool.push_back(StyleFilter::parse(s));
      const auto assignment = assign_styles(ds, pool, parse_mixture(styles.mode), styles.seed);
      write_styled(ds, pool, assignment, styles.out);
      std::cout << "wrote " << ds.entries.size() << " styled images to " << styles.out << '\n';
    } else if (extract_cmd->parsed()) {
      const Dataset ds = read_dataset(extract.dataset);
      extract.params.validate();
      const KdesBasis basis(extract.params);
      fs::create_directories(extract.out);
      parallel_for(
          ds.entries.size(),
          [&](std::size_t k) {
            const auto sets = extract_descriptors(load_image(ds.entries[k].path), basis,
                                                  kDefaultBasis, std::to_string(k));
            write_blob(descriptors_to_blob(sets, extract.params), indexed(extract.out, k));
          },
          extract.threads);
      std::cout << "wrote descriptors for " << ds.entries.size() << " images\n";
    } else if (codebook_cmd->parsed()) {
      const Dataset ds = read_dataset(cb.dataset);
      const auto all = read_descriptors(cb.descriptors, ds.entries.size());
      std::vector<std::vector<DescriptorSet>> train;
      for (std::size_t k = 0; k < ds.entries.size(); ++k)
        if (ds.entries[k].split == "train") train.push_back(all[k]);
      if (train.empty()) train = all;
      const auto sample = sample_for_codebook(train, cb.samples, cb.seed);
      const auto km = kmeans(sample.samples, cb.size, cb.seed);
      const Codebook codebook = build_projection(km.codebook, cb.gamma_e);
      const auto params = read_blob(indexed(cb.descriptors, 0)).metadata.at("params");
      write_blob(codebook_to_blob(codebook, cb.seed, params), cb.out);
      std::cout << "codebook: " << codebook.size() << " words, " << km.iterations
                << " iterations, inertia " << km.inertia << '\n';
    } else if (encode_cmd->parsed()) {
      const Dataset ds = read_dataset(enc.dataset);
      const Codebook codebook = codebook_from_blob(read_blob(enc.codebook));
      const EncoderKind kind = parse_encoder(enc.encoder);
      const Pooling pooling = enc.pyramid ? Pooling::Pyramid : Pooling::Global;
      fs::create_directories(enc.out);
      for (std::size_t k = 0; k < ds.entries.size(); ++k) {
        const auto sets = descriptors_from_blob(read_blob(indexed(enc.descriptors, k)));
        TensorBlob blob;
        std::vector<Eigen::VectorXd> rows;
        for (const auto& set : sets) rows.push_back(encode(kind, set, codebook, pooling).values);
        blob.shape = {rows.size(), static_cast<std::uint64_t>(rows[0].size())};
        for (const auto& r : rows)
          for (double v : r) blob.values.push_back(static_cast<float>(v));
        blob.metadata = {{"kind", "image_features"}, {"encoder", enc.encoder}};
        write_blob(blob, indexed(enc.out, k));
      }
      std::cout << "encoded " << ds.entries.size() << " images\n";
    } else if (grams_cmd->parsed()) {
      const Dataset ds = read_dataset(grams.dataset);
      FeatureTable features(ds.entries.size());
      for (std::size_t k = 0; k < ds.entries.size(); ++k) {
        const TensorBlob blob = read_blob(indexed(grams.features, k));
        require(blob.shape.size() == 2, ErrorKind::Format, "feature blob must be rank 2");
        const auto dim = static_cast<Eigen::Index>(blob.shape[1]);
        for (std::uint64_t v = 0; v < blob.shape[0]; ++v) {
          Eigen::VectorXd f(dim);
          for (Eigen::Index d = 0; d < dim; ++d) f(d) = blob.values[v * dim + d];
          features[k].push_back(std::move(f));
        }
      }
      const Split split =
          resolve_split(ds, grams.train_per_class, grams.test_per_class, grams.seed);
      GramOptions options;
      options.normalize = !grams.no_normalize;
      BaseKernelSet ks = base_grams(features, split.train, split.test, options);
      const auto labels = ds.labels();
      for (int k : split.train) ks.train_labels.push_back(labels[k]);
      for (int k : split.test) ks.test_labels.push_back(labels[k]);
      save_kernels(ks, grams.out);
      std::cout << "wrote " << ks.size() << " base kernels (" << split.train.size()
                << " train, " << split.test.size() << " test)\n";
    } else if (train_cmd->parsed()) {
      const BaseKernelSet ks = load_kernels(train.kernels);
      MklOptions options;
      options.C = train.C;
      options.lambda_d = train.lambda_d;
      MklModel model;
      if (train.method == "standard") {
        const std::vector<int> keep = {pair_index(0, 0, ks.variants)};
        model = train_fixed(ks.select(keep), ks.train_labels, std::vector<double>{1.0}, options);
      } else if (train.method == "add_ak") {
        const std::vector<double> w(ks.size(), 1.0 / static_cast<double>(ks.size()));
        model = train_fixed(ks, ks.train_labels, w, options);
      } else if (train.method == "add_gmkl") {
        model = gmkl_train(ks, ks.train_labels, options);
      } else {
        fail(ErrorKind::Config, "unknown method '" + train.method + "'");
      }
      save_model(model, train.out);
      for (const auto& w : model.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << "status " << to_string(model.status) << ", objective "
                << model.objective_trace.back() << '\n';
    } else if (eval_cmd->parsed()) {
      const BaseKernelSet all = load_kernels(eval.kernels);
      const MklModel model = load_model(eval.model);
      // A single-kernel model was trained on the matching subset of pairs.
      BaseKernelSet ks = all;
      if (model.pairs.size() != all.pairs.size()) {
        std::vector<int> keep;
        for (const auto& p : model.pairs) keep.push_back(pair_index(p.i, p.j, all.variants));
        ks = all.select(keep);
      }
      const Prediction pred = predict(model, ks);
      const double acc = accuracy(pred.labels, all.test_labels);
      print_json({{"accuracy", acc}, {"weights", model.weights}, {"predicted", pred.labels}},
                 eval.json);
    } else if (run_cmd->parsed()) {
      ExperimentConfig cfg = load_config(exp.config);
      if (!exp.out.empty()) cfg.output_dir = exp.out;
      const Report report = run_pipeline(cfg);
      write_report(report, cfg.output_dir);
      std::cout << report.to_table();
      for (const auto& s : report.seeds)
        if (!s.ok) return s.error_kind ? exit_code(*s.error_kind) : 2;
    } else if (drift_cmd->parsed()) {
      const Dataset ds = read_dataset(drift.dataset);
      std::vector<Image> images;
      for (const auto& e : ds.entries) images.push_back(load_image(e.path));
      Codebook codebook;
      if (!drift.codebook.empty()) codebook = codebook_from_blob(read_blob(drift.codebook));
      const DriftReport report =
          drift_analysis(images, StyleFilter::parse(drift.filter), drift.params,
                         drift.codebook.empty() ? nullptr : &codebook);
      print_json(report.to_json(), drift.json);
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
