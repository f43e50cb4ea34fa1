#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "add/error.hpp"
#include "add/harness.hpp"
#include "util.hpp"

namespace add {

namespace fs = std::filesystem;

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.label);
  return out;
}

void Dataset::validate() const {
  require(class_count() >= 2, ErrorKind::Data, "dataset needs at least two classes");
  std::vector<int> counts(class_names.size(), 0);
  for (const auto& e : entries) {
    require(e.label >= 0 && e.label < class_count(), ErrorKind::Data,
            "label out of range for " + e.path);
    ++counts[e.label];
  }
  for (std::size_t c = 0; c < counts.size(); ++c)
    require(counts[c] >= 2, ErrorKind::Data,
            "class '" + class_names[c] + "' has fewer than two images");
}

void save_manifest(const Dataset& ds, const fs::path& path) {
  nlohmann::json j;
  j["provenance"] = ds.provenance;
  j["classes"] = ds.class_names;
  j["images"] = nlohmann::json::array();
  const fs::path base = path.parent_path();
  for (const auto& e : ds.entries) {
    fs::path p(e.path);
    const std::string stored =
        (!base.empty() && p.is_absolute()) ? fs::relative(p, fs::absolute(base)).string()
                                           : e.path;
    j["images"].push_back({{"path", stored}, {"label", e.label}, {"split", e.split},
                           {"style", e.style}});
  }
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Dataset load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, "bad manifest " + path.string() + ": " + e.what());
  }
  Dataset ds;
  try {
    ds.provenance = j.value("provenance", "directory");
    ds.class_names = j.at("classes").get<std::vector<std::string>>();
    const fs::path base = path.parent_path();
    for (const auto& item : j.at("images")) {
      DatasetEntry e;
      fs::path p(item.at("path").get<std::string>());
      e.path = p.is_absolute() ? p.string() : (base / p).string();
      e.label = item.at("label").get<int>();
      e.split = item.value("split", "");
      e.style = item.value("style", "");
      ds.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, "bad manifest " + path.string() + ": " + e.what());
  }
  ds.validate();
  return ds;
}

Dataset scan_directory(const fs::path& root) {
  require(fs::is_directory(root), ErrorKind::Io, "not a directory: " + root.string());
  std::vector<fs::path> classes;
  for (const auto& d : fs::directory_iterator(root))
    if (d.is_directory()) classes.push_back(d.path());
  std::sort(classes.begin(), classes.end());
  Dataset ds;
  ds.provenance = "directory";
  for (const auto& cls : classes) {
    std::vector<fs::path> files;
    for (const auto& f : fs::directory_iterator(cls)) {
      const auto ext = f.path().extension().string();
      if (f.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) files.push_back(f.path());
    }
    if (files.empty()) continue;
    std::sort(files.begin(), files.end());
    const int label = ds.class_count();
    ds.class_names.push_back(cls.filename().string());
    for (const auto& f : files) ds.entries.push_back({f.string(), label, "", ""});
  }
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------

namespace {

bool inside_shape(int shape, double dx, double dy, double r) {
  const double ax = std::abs(dx), ay = std::abs(dy);
  switch (shape) {
    case 0: return dx * dx + dy * dy <= r * r;
    case 1: return ax <= 0.85 * r && ay <= 0.85 * r;
    case 2: {
      // Upward triangle with apex (0, -r) and base at y = r/2.
      if (dy > 0.5 * r || dy < -r) return false;
      const double half_width = (dy + r) / 1.5 * 0.866;
      return ax <= half_width;
    }
    case 3: return (ax <= 0.3 * r && ay <= r) || (ay <= 0.3 * r && ax <= r);
    case 4: {
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.3 * r * r;
    }
    case 5: return ax + ay <= r;
    case 6: return ax <= r && ay <= 0.35 * r;
    case 7: return (dx * dx) / (r * r) + (dy * dy) / (0.3 * r * r) <= 1.0;
  }
  return false;
}

double gaussian(std::mt19937_64& rng) {
  // Box-Muller on explicit uniforms keeps the stream portable.
  double u1 = detail::uniform01(rng);
  const double u2 = detail::uniform01(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

SynthRender render_synthetic(int shape, int size, std::uint64_t seed) {
  require(shape >= 0 && shape < static_cast<int>(kShapeNames.size()), ErrorKind::Parameter,
          "unknown synthetic shape");
  require(size >= 16, ErrorKind::Parameter, "synthetic images must be at least 16 pixels");
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * detail::uniform01(rng); };

  const double cx = size / 2.0 + uni(-0.15, 0.15) * size;
  const double cy = size / 2.0 + uni(-0.15, 0.15) * size;
  const double radius = uni(0.18, 0.32) * size;
  const double rotation = uni(-0.35, 0.35);
  const double bg = uni(0.10, 0.30);
  const double bg_angle = uni(0.0, 2.0 * std::numbers::pi);
  const double fg = uni(0.70, 0.85);
  const double tex_angle = uni(0.0, std::numbers::pi);
  const double tex_period = uni(5.0, 8.0);
  const double tex_phase = uni(0.0, 2.0 * std::numbers::pi);

  // Background clutter: short bright strokes that the object occludes.
  struct Stroke {
    double x0, y0, x1, y1, value;
  };
  std::vector<Stroke> strokes(3 + detail::uniform_index(rng, 4));
  for (auto& s : strokes) {
    s.x0 = uni(0.0, size - 1.0);
    s.y0 = uni(0.0, size - 1.0);
    const double angle = uni(0.0, 2.0 * std::numbers::pi);
    const double length = uni(0.15, 0.3) * size;
    s.x1 = s.x0 + length * std::cos(angle);
    s.y1 = s.y0 + length * std::sin(angle);
    s.value = bg + uni(0.10, 0.30);
  }
  auto on_stroke = [](const Stroke& s, double x, double y) {
    const double vx = s.x1 - s.x0, vy = s.y1 - s.y0;
    const double t = std::clamp(((x - s.x0) * vx + (y - s.y0) * vy) / (vx * vx + vy * vy),
                                0.0, 1.0);
    const double ex = x - s.x0 - t * vx, ey = y - s.y0 - t * vy;
    return ex * ex + ey * ey <= 0.8 * 0.8;
  };

  const double cr = std::cos(rotation), sr = std::sin(rotation);
  SynthRender out;
  out.clean = Image(size, size, 1);
  out.mask.assign(static_cast<std::size_t>(size) * size, 0);
  out.foreground = fg;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double u = 2.0 * x / (size - 1) - 1.0;
      const double v = 2.0 * y / (size - 1) - 1.0;
      double value =
          bg + 0.05 * (u * std::cos(bg_angle) + v * std::sin(bg_angle)) / std::numbers::sqrt2;
      for (const auto& s : strokes)
        if (on_stroke(s, x, y)) value = s.value;
      const double dx = x - cx, dy = y - cy;
      if (inside_shape(shape, cr * dx + sr * dy, -sr * dx + cr * dy, radius)) {
        const double t = x * std::cos(tex_angle) + y * std::sin(tex_angle);
        value = fg + 0.03 * std::sin(2.0 * std::numbers::pi * t / tex_period + tex_phase);
        out.mask[static_cast<std::size_t>(y) * size + x] = 1;
      }
      out.clean.at(x, y) = value;
    }
  }
  out.noisy = out.clean;
  for (double& v : out.noisy.data) v = std::clamp(v + 0.02 * gaussian(rng), 0.0, 1.0);
  return out;
}

Dataset synth_dataset(int classes, int per_class, int size, std::uint64_t seed,
                      const fs::path& out_dir) {
  require(classes >= 2 && classes <= static_cast<int>(kShapeNames.size()),
          ErrorKind::Parameter, "synthetic datasets support 2 to 8 classes");
  require(per_class >= 2, ErrorKind::Parameter, "need at least two images per class");
  fs::create_directories(out_dir);
  Dataset ds;
  ds.provenance = "synthetic";
  for (int c = 0; c < classes; ++c) ds.class_names.emplace_back(kShapeNames[c]);
  for (int c = 0; c < classes; ++c) {
    for (int k = 0; k < per_class; ++k) {
      const auto image_seed =
          detail::mix_seed(seed, static_cast<std::uint64_t>(c) * 100000 + k);
      const auto render = render_synthetic(c, size, image_seed);
      const std::string name =
          std::string(kShapeNames[c]) + "_" + std::to_string(k) + ".pgm";
      save_image(render.noisy, out_dir / name);
      ds.entries.push_back({(out_dir / name).string(), c, "", ""});
    }
  }
  save_manifest(ds, out_dir / "dataset.json");
  return ds;
}

// ---------------------------------------------------------------------------

std::string_view to_string(MixtureMode m) {
  switch (m) {
    case MixtureMode::SingleStyle: return "single-style";
    case MixtureMode::PairwiseMix: return "pairwise-mix";
    case MixtureMode::AllMix: return "all-mix";
  }
  return "unknown";
}

MixtureMode parse_mixture(std::string_view name) {
  if (name == "single-style") return MixtureMode::SingleStyle;
  if (name == "pairwise-mix") return MixtureMode::PairwiseMix;
  if (name == "all-mix") return MixtureMode::AllMix;
  fail(ErrorKind::Config, "unknown mixture mode '" + std::string(name) + "'");
}

std::vector<int> assign_styles(const Dataset& ds, std::span<const StyleFilter> pool,
                               MixtureMode mode, std::uint64_t seed) {
  require(!pool.empty(), ErrorKind::Config, "style pool is empty");
  if (mode == MixtureMode::PairwiseMix)
    require(pool.size() == 2, ErrorKind::Config, "pairwise-mix needs exactly two styles");
  std::vector<int> out(ds.entries.size(), 0);
  if (mode == MixtureMode::SingleStyle) return out;
  std::mt19937_64 rng(seed);
  for (auto& s : out) s = static_cast<int>(detail::uniform_index(rng, pool.size()));
  return out;
}

Dataset write_styled(const Dataset& ds, std::span<const StyleFilter> pool,
                     std::span<const int> assignment, const fs::path& out_dir) {
  require(assignment.size() == ds.entries.size(), ErrorKind::Parameter,
          "style assignment does not cover the dataset");
  fs::create_directories(out_dir);
  Dataset out = ds;
  for (std::size_t k = 0; k < ds.entries.size(); ++k) {
    const auto& style = pool[assignment[k]];
    const Image img = apply_style(style, load_image(ds.entries[k].path));
    const std::string name =
        std::to_string(k) + "_" + fs::path(ds.entries[k].path).stem().string() +
        (img.channels == 3 ? ".ppm" : ".pgm");
    save_image(img, out_dir / name);
    out.entries[k].path = (out_dir / name).string();
    out.entries[k].style = style.to_string();
  }
  save_manifest(out, out_dir / "dataset.json");
  return out;
}

Split stratified_split(std::span<const int> labels, int train_per_class, int test_per_class,
                       std::uint64_t seed) {
  require(train_per_class >= 1, ErrorKind::Config, "train count per class must be positive");
  const int classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::mt19937_64 rng(seed);
  Split split;
  for (int c = 0; c < classes; ++c) {
    std::vector<int> members;
    for (std::size_t k = 0; k < labels.size(); ++k)
      if (labels[k] == c) members.push_back(static_cast<int>(k));
    const int size = static_cast<int>(members.size());
    require(train_per_class < size, ErrorKind::Config,
            "class " + std::to_string(c) + " has " + std::to_string(size) +
                " images, not enough for " + std::to_string(train_per_class) + " training");
    const int test = test_per_class < 0 ? size - train_per_class : test_per_class;
    require(test >= 1 && train_per_class + test <= size, ErrorKind::Config,
            "class " + std::to_string(c) + " is too small for the requested split");
    for (int k = size - 1; k > 0; --k) {
      const auto r = detail::uniform_index(rng, static_cast<std::size_t>(k) + 1);
      std::swap(members[k], members[r]);
    }
    split.train.insert(split.train.end(), members.begin(), members.begin() + train_per_class);
    split.test.insert(split.test.end(), members.begin() + train_per_class,
                      members.begin() + train_per_class + test);
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

}  // namespace add
