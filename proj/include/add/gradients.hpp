#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "add/editing.hpp"
#include "add/imgio.hpp"

namespace add {

inline constexpr double kDefaultEpsilonG = 1e-8;

// Central-difference gradients of a grayscale image. Border pixels are
// marked invalid. Orientation is in [0, 2pi) and is only meaningful where
// has_orientation() holds (valid pixel with non-zero magnitude).
struct GradientField {
  int width = 0;
  int height = 0;
  std::vector<double> dx;
  std::vector<double> dy;
  std::vector<double> magnitude;
  std::vector<double> orientation;
  std::vector<std::uint8_t> valid;

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width + x;
  }
  bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }
  bool has_orientation(int x, int y) const {
    return is_valid(x, y) && magnitude[index(x, y)] > 0.0;
  }
};

GradientField gradient_field(const Image& img);

struct Window {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
};

// One pixel of a normalized patch. Position is patch-local in [0,1]^2.
struct PatchPixel {
  double magnitude = 0.0;  // normalized magnitude
  double sin_theta = 0.0;
  double cos_theta = 0.0;
  double px = 0.0;
  double py = 0.0;
  bool oriented = false;
};

struct NormalizedPatch {
  int width = 0;
  int height = 0;
  double epsilon = kDefaultEpsilonG;
  std::vector<PatchPixel> pixels;  // row-major over the window

  double squared_norm() const;
};

// m~(z) = m(z) / sqrt(sum_P m^2 + eps). The window must lie inside the
// image; invalid border pixels enter with zero magnitude and no orientation.
NormalizedPatch normalize_patch(const GradientField& gf, const Window& window,
                                double epsilon = kDefaultEpsilonG);

struct EditedMagnitudes {
  std::vector<std::vector<double>> per_variant;
  std::vector<double> combined;  // sum_i a_i m~_i(z)
};

// `variants[i]` is the patch normalized on g_i(I); all share one window.
EditedMagnitudes edited_magnitudes(std::span<const NormalizedPatch> variants,
                                   const EditingCombo& combo);

struct OrientationDeviation {
  double max_deviation = 0.0;   // radians, in [0, pi]
  double mean_deviation = 0.0;
  std::size_t compared = 0;     // pixels above the magnitude threshold
  std::size_t lost = 0;         // of those, pixels whose edited gradient vanished
};

// Compares orientations at valid pixels whose original magnitude exceeds
// threshold_fraction * max magnitude.
OrientationDeviation orientation_consistency(const GradientField& original,
                                             const GradientField& edited,
                                             double threshold_fraction = 0.05);

}  // namespace add
