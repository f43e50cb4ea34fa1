#include "add/gradients.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "add/error.hpp"

namespace add {

GradientField gradient_field(const Image& img) {
  require(img.is_gray(), ErrorKind::Type, "gradient_field needs a grayscale image");
  require(img.width >= 3 && img.height >= 3, ErrorKind::Parameter,
          "gradient_field needs at least a 3x3 image");
  GradientField gf;
  gf.width = img.width;
  gf.height = img.height;
  const std::size_t n = img.pixel_count();
  gf.dx.assign(n, 0.0);
  gf.dy.assign(n, 0.0);
  gf.magnitude.assign(n, 0.0);
  gf.orientation.assign(n, 0.0);
  gf.valid.assign(n, 0);

  for (int y = 1; y + 1 < img.height; ++y) {
    for (int x = 1; x + 1 < img.width; ++x) {
      const std::size_t k = gf.index(x, y);
      const double gx = (img.at(x + 1, y) - img.at(x - 1, y)) / 2.0;
      const double gy = (img.at(x, y + 1) - img.at(x, y - 1)) / 2.0;
      gf.dx[k] = gx;
      gf.dy[k] = gy;
      gf.magnitude[k] = std::hypot(gx, gy);
      gf.valid[k] = 1;
      if (gf.magnitude[k] > 0.0) {
        double theta = std::atan2(gy, gx);
        if (theta < 0.0) theta += 2.0 * std::numbers::pi;
        if (theta >= 2.0 * std::numbers::pi) theta = 0.0;
        gf.orientation[k] = theta;
      } else {
        gf.orientation[k] = std::numeric_limits<double>::quiet_NaN();
      }
    }
  }
  return gf;
}

double NormalizedPatch::squared_norm() const {
  double s = 0.0;
  for (const auto& p : pixels) s += p.magnitude * p.magnitude;
  return s;
}

NormalizedPatch normalize_patch(const GradientField& gf, const Window& w,
                                double epsilon) {
  require(w.width > 0 && w.height > 0, ErrorKind::Parameter, "empty patch window");
  require(w.x >= 0 && w.y >= 0 && w.x + w.width <= gf.width &&
              w.y + w.height <= gf.height,
          ErrorKind::Parameter, "patch window outside the gradient field");
  require(epsilon >= 0.0, ErrorKind::Parameter, "epsilon_g must be non-negative");

  NormalizedPatch patch;
  patch.width = w.width;
  patch.height = w.height;
  patch.epsilon = epsilon;
  patch.pixels.resize(static_cast<std::size_t>(w.width) * w.height);

  // Fixed row-major accumulation order.
  double sum_sq = 0.0;
  for (int y = w.y; y < w.y + w.height; ++y) {
    for (int x = w.x; x < w.x + w.width; ++x) {
      if (!gf.is_valid(x, y)) continue;
      const double m = gf.magnitude[gf.index(x, y)];
      sum_sq += m * m;
    }
  }
  const double denom = std::sqrt(sum_sq + epsilon);

  const double sx = w.width > 1 ? 1.0 / (w.width - 1) : 0.0;
  const double sy = w.height > 1 ? 1.0 / (w.height - 1) : 0.0;
  std::size_t k = 0;
  for (int y = 0; y < w.height; ++y) {
    for (int x = 0; x < w.width; ++x, ++k) {
      PatchPixel& p = patch.pixels[k];
      p.px = x * sx;
      p.py = y * sy;
      const int gx = w.x + x;
      const int gy = w.y + y;
      if (!gf.has_orientation(gx, gy) || denom == 0.0) continue;
      const std::size_t idx = gf.index(gx, gy);
      p.magnitude = gf.magnitude[idx] / denom;
      p.sin_theta = std::sin(gf.orientation[idx]);
      p.cos_theta = std::cos(gf.orientation[idx]);
      p.oriented = true;
    }
  }
  return patch;
}

EditedMagnitudes edited_magnitudes(std::span<const NormalizedPatch> variants,
                                   const EditingCombo& combo) {
  combo.validate();
  require(variants.size() == combo.weights.size(), ErrorKind::Parameter,
          "variant count does not match combo length");
  require(!variants.empty(), ErrorKind::Parameter, "no variants given");
  const auto& first = variants.front();
  for (const auto& v : variants) {
    require(v.width == first.width && v.height == first.height, ErrorKind::Parameter,
            "variant patches must share one window");
  }

  EditedMagnitudes out;
  out.combined.assign(first.pixels.size(), 0.0);
  out.per_variant.reserve(variants.size());
  for (std::size_t i = 0; i < variants.size(); ++i) {
    std::vector<double> m(first.pixels.size());
    for (std::size_t z = 0; z < m.size(); ++z) {
      m[z] = variants[i].pixels[z].magnitude;
      out.combined[z] += combo.weights[i] * m[z];
    }
    out.per_variant.push_back(std::move(m));
  }
  return out;
}

OrientationDeviation orientation_consistency(const GradientField& original,
                                             const GradientField& edited,
                                             double threshold_fraction) {
  require(original.width == edited.width && original.height == edited.height,
          ErrorKind::Parameter, "gradient fields differ in size");
  double max_m = 0.0;
  for (std::size_t k = 0; k < original.magnitude.size(); ++k) {
    if (original.valid[k]) max_m = std::max(max_m, original.magnitude[k]);
  }
  const double threshold = threshold_fraction * max_m;

  OrientationDeviation dev;
  double total = 0.0;
  for (int y = 0; y < original.height; ++y) {
    for (int x = 0; x < original.width; ++x) {
      if (!original.has_orientation(x, y)) continue;
      const std::size_t k = original.index(x, y);
      if (original.magnitude[k] <= threshold) continue;
      ++dev.compared;
      if (!edited.has_orientation(x, y)) {
        ++dev.lost;
        continue;
      }
      double d = std::abs(edited.orientation[k] - original.orientation[k]);
      d = std::min(d, 2.0 * std::numbers::pi - d);
      dev.max_deviation = std::max(dev.max_deviation, d);
      total += d;
    }
  }
  const std::size_t measured = dev.compared - dev.lost;
  dev.mean_deviation = measured ? total / static_cast<double>(measured) : 0.0;
  return dev;
}

}  // namespace add
