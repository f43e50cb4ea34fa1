#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "add/error.hpp"
#include "add/harness.hpp"
#include "support.hpp"

using namespace add;
using testing::kind_of;
using testing::TempDir;

namespace {

Dataset fake_dataset(int classes, int per_class) {
  Dataset ds;
  for (int c = 0; c < classes; ++c) {
    ds.class_names.push_back("c" + std::to_string(c));
    for (int k = 0; k < per_class; ++k) ds.entries.push_back({"x.pgm", c, "", ""});
  }
  return ds;
}

ExperimentConfig tiny_config(const std::filesystem::path& out) {
  ExperimentConfig cfg;
  cfg.dataset.classes = 2;
  cfg.dataset.per_class = 8;
  cfg.dataset.size = 32;
  cfg.dataset.seed = 3;
  cfg.style_pool = {"identity", "gamma:0.5"};
  cfg.mixture = MixtureMode::AllMix;
  cfg.train_per_class = 5;
  cfg.test_per_class = 3;
  cfg.codebook_size = 12;
  cfg.codebook_samples_per_variant = 40;
  cfg.seeds = {1, 2};
  cfg.output_dir = out.string();
  return cfg;
}

}  // namespace

TEST_CASE("synthetic rendering") {
  SUBCASE("deterministic per seed") {
    const SynthRender a = render_synthetic(0, 48, 17);
    const SynthRender b = render_synthetic(0, 48, 17);
    CHECK(a.noisy == b.noisy);
    CHECK(a.mask == b.mask);
    CHECK_FALSE(render_synthetic(0, 48, 18).noisy == a.noisy);
  }
  SUBCASE("objects stand out from the background") {
    for (int shape = 0; shape < 8; ++shape) {
      CAPTURE(kShapeNames[shape]);
      const SynthRender r = render_synthetic(shape, 64, 100 + shape);
      double in = 0.0, out = 0.0;
      int n_in = 0, n_out = 0;
      for (std::size_t k = 0; k < r.mask.size(); ++k) {
        if (r.mask[k]) {
          in += r.clean.data[k];
          ++n_in;
        } else {
          out += r.clean.data[k];
          ++n_out;
        }
      }
      REQUIRE(n_in > 50);
      REQUIRE(n_out > 50);
      CHECK(in / n_in - out / n_out >= 0.3);
      CHECK(r.noisy.in_unit_range());
    }
  }
  SUBCASE("additive noise has the configured spread") {
    const SynthRender r = render_synthetic(1, 64, 5);
    double s2 = 0.0;
    int n = 0;
    for (std::size_t k = 0; k < r.clean.data.size(); ++k) {
      const double c = r.clean.data[k];
      if (c < 0.1 || c > 0.9) continue;  // away from clamping
      const double d = r.noisy.data[k] - c;
      s2 += d * d;
      ++n;
    }
    CHECK(std::sqrt(s2 / n) == doctest::Approx(0.02).epsilon(0.1));
  }
  CHECK(kind_of([] { render_synthetic(8, 32, 1); }) == ErrorKind::Parameter);
  CHECK(kind_of([] { render_synthetic(0, 8, 1); }) == ErrorKind::Parameter);
}

TEST_CASE("synthetic datasets on disk") {
  TempDir dir("synth");
  const Dataset ds = synth_dataset(2, 10, 32, 9, dir.path());
  CHECK(ds.entries.size() == 20);
  CHECK(ds.provenance == "synthetic");
  int files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.path()))
    if (e.path().extension() == ".pgm") ++files;
  CHECK(files == 20);

  const Dataset back = load_manifest(dir / "dataset.json");
  REQUIRE(back.entries.size() == 20);
  CHECK(back.class_names == ds.class_names);
  CHECK(back.labels() == ds.labels());
  CHECK(load_image(back.entries[3].path) == load_image(ds.entries[3].path));

  TempDir again("synth");
  const Dataset ds2 = synth_dataset(2, 10, 32, 9, again.path());
  for (std::size_t k = 0; k < 20; ++k)
    CHECK(testing::read_bytes(ds.entries[k].path) == testing::read_bytes(ds2.entries[k].path));

  CHECK(kind_of([&] { synth_dataset(1, 10, 32, 9, dir.path()); }) == ErrorKind::Parameter);
  CHECK(kind_of([&] { synth_dataset(9, 10, 32, 9, dir.path()); }) == ErrorKind::Parameter);
  CHECK(kind_of([&] { synth_dataset(2, 1, 32, 9, dir.path()); }) == ErrorKind::Parameter);
}

TEST_CASE("manifests and directory scans") {
  TempDir dir("manifest");
  std::filesystem::create_directories(dir / "cats");
  std::filesystem::create_directories(dir / "dogs");
  for (const char* name : {"cats/b.pgm", "cats/a.pgm", "dogs/x.ppm", "dogs/y.pgm"})
    save_image(Image(4, 4, std::string(name).ends_with("ppm") ? 3 : 1, 0.5), dir / name);
  testing::write_bytes(dir / "cats" / "notes.txt", "ignored");
  const Dataset ds = scan_directory(dir.path());
  CHECK(ds.class_names == std::vector<std::string>{"cats", "dogs"});
  REQUIRE(ds.entries.size() == 4);
  CHECK(std::filesystem::path(ds.entries[0].path).filename() == "a.pgm");
  CHECK(ds.entries[3].label == 1);
  CHECK_NOTHROW(ds.validate());

  save_manifest(ds, dir / "m.json");
  CHECK(load_manifest(dir / "m.json").entries.size() == 4);

  testing::write_bytes(dir / "bad.json", "{ not json");
  CHECK(kind_of([&] { load_manifest(dir / "bad.json"); }) == ErrorKind::Format);
  CHECK(kind_of([&] { load_manifest(dir / "none.json"); }) == ErrorKind::Io);
  CHECK(kind_of([&] { scan_directory(dir / "missing"); }) == ErrorKind::Io);

  CHECK(kind_of([] { fake_dataset(1, 5).validate(); }) == ErrorKind::Data);
  CHECK(kind_of([] { fake_dataset(3, 1).validate(); }) == ErrorKind::Data);
}

TEST_CASE("style assignment") {
  const Dataset ds = fake_dataset(4, 100);
  const std::vector<StyleFilter> pool{StyleFilter::identity(), StyleFilter::gamma(0.5),
                                      StyleFilter::lomo_like(), StyleFilter::scurve()};
  SUBCASE("all-mix counts stay within four binomial deviations") {
    const auto a = assign_styles(ds, pool, MixtureMode::AllMix, 77);
    std::vector<int> counts(4, 0);
    for (int s : a) ++counts[s];
    const double bound = 4.0 * std::sqrt(400.0 * 0.25 * 0.75);
    for (int c : counts) CHECK(std::abs(c - 100.0) <= bound);
    CHECK(assign_styles(ds, pool, MixtureMode::AllMix, 77) == a);
  }
  SUBCASE("single style uses the first pool entry") {
    for (int s : assign_styles(ds, pool, MixtureMode::SingleStyle, 1)) CHECK(s == 0);
  }
  SUBCASE("pairwise mix") {
    const std::vector<StyleFilter> two{pool[0], pool[1]};
    const auto a = assign_styles(ds, two, MixtureMode::PairwiseMix, 3);
    const std::set<int> used(a.begin(), a.end());
    CHECK(used == std::set<int>{0, 1});
    CHECK(kind_of([&] { assign_styles(ds, pool, MixtureMode::PairwiseMix, 3); }) ==
          ErrorKind::Config);
  }
  CHECK(kind_of([&] { assign_styles(ds, {}, MixtureMode::AllMix, 3); }) == ErrorKind::Config);
  CHECK(parse_mixture(to_string(MixtureMode::PairwiseMix)) == MixtureMode::PairwiseMix);
  CHECK(parse_mixture("all-mix") == MixtureMode::AllMix);
  CHECK(kind_of([] { parse_mixture("some"); }) == ErrorKind::Config);
}

TEST_CASE("styled copies are written with their style recorded") {
  TempDir dir("styled");
  const Dataset ds = synth_dataset(2, 2, 24, 4, dir / "src");
  const std::vector<StyleFilter> pool{StyleFilter::identity(), StyleFilter::gamma(2.0)};
  const std::vector<int> assignment{0, 1, 1, 0};
  const Dataset out = write_styled(ds, pool, assignment, dir / "out");
  CHECK(out.entries[1].style == "gamma:2");
  const Image src = load_image(ds.entries[1].path);
  const Image styled = load_image(out.entries[1].path);
  for (std::size_t k = 0; k < src.data.size(); ++k)
    CHECK(std::abs(styled.data[k] - src.data[k] * src.data[k]) <= 1.0 / 255.0);
  CHECK(load_manifest(dir / "out" / "dataset.json").entries[1].style == "gamma:2");
}

TEST_CASE("stratified split") {
  std::vector<int> labels;
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 10; ++k) labels.push_back(c);
  const Split s = stratified_split(labels, 4, 3, 5);
  CHECK(s.train.size() == 12);
  CHECK(s.test.size() == 9);
  std::set<int> all(s.train.begin(), s.train.end());
  for (int t : s.test) CHECK(all.insert(t).second);
  std::vector<int> per_class(3, 0);
  for (int t : s.train) ++per_class[labels[t]];
  CHECK(per_class == std::vector<int>{4, 4, 4});
  CHECK(std::is_sorted(s.train.begin(), s.train.end()));

  CHECK(stratified_split(labels, 4, -1, 5).test.size() == 18);
  CHECK(stratified_split(labels, 4, 3, 5).train == s.train);
  CHECK(stratified_split(labels, 4, 3, 6).train != s.train);
  CHECK(kind_of([&] { stratified_split(labels, 10, -1, 5); }) == ErrorKind::Config);
  CHECK(kind_of([&] { stratified_split(labels, 8, 3, 5); }) == ErrorKind::Config);
  CHECK(kind_of([&] { stratified_split(labels, 0, 3, 5); }) == ErrorKind::Config);
}

TEST_CASE("experiment configuration") {
  const ExperimentConfig def;
  CHECK_NOTHROW(def.validate());
  const ExperimentConfig round = ExperimentConfig::from_json(def.to_json());
  CHECK(round.to_json() == def.to_json());

  auto config_error = [](const std::string& text) {
    return kind_of([&] { ExperimentConfig::from_json(nlohmann::json::parse(text)); });
  };
  CHECK(config_error(R"({"unknown": 1})") == ErrorKind::Config);
  CHECK(config_error(R"({"kdes": {"patch": 16}})") == ErrorKind::Config);
  CHECK(config_error(R"({"C": "ten"})") == ErrorKind::Config);
  CHECK(config_error(R"({"methods": ["svm"]})") == ErrorKind::Config);
  CHECK(config_error(R"({"mixture": "pairwise-mix", "style_pool": ["identity"]})") ==
        ErrorKind::Config);
  CHECK(config_error(R"({"style_pool": ["sepia"]})") == ErrorKind::Config);
  CHECK(config_error(R"({"train_per_class": 40})") == ErrorKind::Config);
  CHECK(config_error(R"({"kdes": {"stride": 0}})") == ErrorKind::Config);
  CHECK(config_error(R"({"encoder": "vlad"})") == ErrorKind::Config);
  CHECK(config_error(R"({"dataset": {"kind": "manifest"}})") == ErrorKind::Config);
  CHECK(config_error(R"({"gamma_e": 0})") == ErrorKind::Config);

  const ExperimentConfig partial = ExperimentConfig::from_json(
      nlohmann::json::parse(R"({"seeds": [9], "kdes": {"whiten": false}, "encoder": "bow"})"));
  CHECK(partial.seeds == std::vector<std::uint64_t>{9});
  CHECK_FALSE(partial.kdes.whiten);
  CHECK(partial.encoder == EncoderKind::Bow);
  CHECK(partial.codebook_size == 200);

  TempDir dir("config");
  testing::write_bytes(dir / "c.json",
                       R"({"dataset": {"kind": "manifest", "path": "data/dataset.json"}})");
  const ExperimentConfig loaded = load_config(dir / "c.json");
  CHECK(loaded.dataset.path == (dir / "data" / "dataset.json").string());
  testing::write_bytes(dir / "broken.json", "{");
  CHECK(kind_of([&] { load_config(dir / "broken.json"); }) == ErrorKind::Config);
  CHECK(kind_of([&] { load_config(dir / "none.json"); }) == ErrorKind::Config);
}

TEST_CASE("descriptor drift") {
  std::mt19937_64 rng(4);
  KdesParams params;
  params.epsilon_g = 0.0;
  std::vector<Image> images;
  for (int k = 0; k < 3; ++k) {
    Image img = testing::smooth_image(40, 40, rng);
    for (double& v : img.data) v *= 0.5;  // room for doubling
    images.push_back(img);
  }

  const DriftReport same = drift_analysis(images, StyleFilter::identity(), params);
  CHECK(same.patches == 3 * 16);
  CHECK(same.max == 0.0);

  for (double c : {0.5, 2.0}) {
    const DriftReport scaled = drift_analysis(
        images,
        [c](const Image& img) {
          Image out = img;
          for (double& v : out.data) v *= c;
          return out;
        },
        params);
    CHECK(scaled.max <= 1e-6);
  }

  const DriftReport lomo = drift_analysis(images, StyleFilter::lomo_like(), params);
  CHECK(lomo.mean > 0.0);
  CHECK(lomo.max >= lomo.mean);

  Codebook cb;
  cb.centroids = Eigen::MatrixXd::Zero(2, params.dimension());
  cb.centroids(1, 0) = 1.0;
  const DriftReport flips = drift_analysis(images, StyleFilter::identity(), params, &cb);
  REQUIRE(flips.flip_rate.has_value());
  CHECK(*flips.flip_rate == 0.0);
  CHECK_FALSE(same.flip_rate.has_value());
  CHECK(flips.to_json().at("patches") == 48);
  CHECK(same.to_json().at("flip_rate").is_null());

  const auto crop = [](const Image& img) { return Image(img.width - 8, img.height, 1); };
  CHECK(kind_of([&] { drift_analysis(images, crop, params); }) == ErrorKind::Data);
}

TEST_CASE("a small end-to-end experiment") {
  TempDir dir("pipeline");
  const ExperimentConfig cfg = tiny_config(dir / "run");
  const Report report = run_pipeline(cfg);
  REQUIRE(report.seeds.size() == 2);
  for (const auto& s : report.seeds) {
    CAPTURE(s.error);
    REQUIRE(s.ok);
    CHECK(s.codebook_test_samples == 0);
    CHECK(s.learned_weights.size() == 16);
    CHECK(s.style_assignment.size() == 16);
    CHECK(s.style_counts[0] + s.style_counts[1] == 16);
    for (const auto& [method, acc] : s.accuracy) {
      CHECK(acc >= 0.0);
      CHECK(acc <= 1.0);
    }
  }
  for (const char* m : {"standard", "add_ak", "add_gmkl"}) {
    const MethodSummary* summary = report.method(m);
    REQUIRE(summary != nullptr);
    CHECK(summary->per_seed.size() == 2);
    const double a = summary->per_seed[0], b = summary->per_seed[1];
    CHECK(summary->mean == doctest::Approx((a + b) / 2));
    CHECK(summary->stddev == doctest::Approx(std::abs(a - b) / std::sqrt(2.0)));
  }

  // A second run reproduces the report exactly.
  const Report again = run_pipeline(cfg);
  CHECK(again.to_json().dump() == report.to_json().dump());
  CHECK(again.to_csv() == report.to_csv());

  write_report(report, dir / "out");
  for (const char* f : {"report.json", "report.csv", "report.txt", "timing.json", "seed_1.log"})
    CHECK(std::filesystem::exists(dir / "out" / f));
  const auto parsed = nlohmann::json::parse(testing::read_bytes(dir / "out" / "report.json"));
  CHECK(parsed.at("seeds").size() == 2);
  CHECK_FALSE(parsed.contains("seconds"));
  CHECK(report.to_csv().rfind("record,method,seed,index,value", 0) == 0);
  CHECK(report.to_table().find("add_gmkl") != std::string::npos);
}

TEST_CASE("a failing seed is reported, not fatal") {
  TempDir dir("pipeline");
  ExperimentConfig cfg = tiny_config(dir / "run");
  cfg.seeds = {4};
  cfg.codebook_size = 5000;  // more codewords than sampled descriptors
  const Report report = run_pipeline(cfg);
  REQUIRE(report.seeds.size() == 1);
  CHECK_FALSE(report.seeds[0].ok);
  REQUIRE(report.seeds[0].error_kind.has_value());
  CHECK(*report.seeds[0].error_kind == ErrorKind::Data);
  CHECK(report.method("standard")->per_seed.empty());
  CHECK(report.to_json().at("seeds")[0].at("error_kind") == "data");
}
