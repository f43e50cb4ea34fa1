#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <doctest.h>

#include "add/editing.hpp"
#include "add/error.hpp"
#include "add/gradients.hpp"
#include "add/imgio.hpp"

namespace testing {

// Kind of the add::Error thrown by fn; fails the test when nothing is thrown.
inline add::ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const add::Error& e) {
    return e.kind();
  }
  FAIL("expected an add::Error");
  return add::ErrorKind::Format;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("add_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline add::Image random_image(int w, int h, std::mt19937_64& rng, double lo = 0.0,
                               double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  add::Image img(w, h, 1);
  for (double& v : img.data) v = u(rng);
  return img;
}

// Smooth image: a few Gaussian bumps over a gentle ramp, values in [0.05, 0.95].
inline add::Image smooth_image(int w, int h, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  add::Image img(w, h, 1);
  struct Bump {
    double x, y, s, a;
  };
  std::vector<Bump> bumps;
  for (int k = 0; k < 4; ++k)
    bumps.push_back({u(rng) * w, u(rng) * h, 2.0 + 4.0 * u(rng), u(rng) - 0.5});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = 0.5 + 0.1 * (static_cast<double>(x) / w - 0.5);
      for (const auto& b : bumps)
        v += 0.4 * b.a * std::exp(-((x - b.x) * (x - b.x) + (y - b.y) * (y - b.y)) / (2 * b.s * b.s));
      img.at(x, y) = std::clamp(v, 0.05, 0.95);
    }
  return img;
}

// Normalized patches of every variant of a random image at one window.
inline std::vector<add::NormalizedPatch> random_variant_patches(
    int size, std::mt19937_64& rng, double epsilon = add::kDefaultEpsilonG) {
  const add::Image img = random_image(size + 2, size + 2, rng);
  const add::Window window{1, 1, size, size};
  std::vector<add::NormalizedPatch> out;
  for (auto f : add::kDefaultBasis)
    out.push_back(add::normalize_patch(add::gradient_field(add::apply_base_image(f, img)),
                                       window, epsilon));
  return out;
}

}  // namespace testing
