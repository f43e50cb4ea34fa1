#pragma once

#include <array>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "add/imgio.hpp"

namespace add {

// Base pixel-editing functions on [0,1]:
//   identity(x)    = x
//   log_brighten   = 0.3 * (log(2x + 0.1) + |log(0.1)|)
//   square         = 0.8 * x^2
//   sigmoid        = 1 / (1 + exp(-8 (x - 0.5)))
enum class BaseFunction { Identity, LogBrighten, Square, Sigmoid };

// Variant order used throughout the pipeline; index 0 is the unedited image.
inline constexpr std::array<BaseFunction, 4> kDefaultBasis = {
    BaseFunction::Identity, BaseFunction::LogBrighten, BaseFunction::Square,
    BaseFunction::Sigmoid};

// Base of the logarithm in log_brighten. Natural log keeps the output range
// near [0, 0.913]; pass 10 to get the base-10 reading.
inline constexpr double kNaturalLogBase = std::numbers::e;

std::string_view to_string(BaseFunction f);
BaseFunction parse_base_function(std::string_view name);

// Throws ErrorKind::Domain when x is outside [0,1].
double apply_base(BaseFunction f, double x, double log_base = kNaturalLogBase);
double base_derivative(BaseFunction f, double x,
                       double log_base = kNaturalLogBase);

// Requires a grayscale image with values in [0,1].
Image apply_base_image(BaseFunction f, const Image& img,
                       double log_base = kNaturalLogBase);

// g = sum_i a_i g_i with a_i >= 0.
struct EditingCombo {
  std::vector<double> weights;

  // Throws ErrorKind::Parameter on negative or non-finite weights.
  void validate() const;
  bool usable() const;
};

// Unclamped pixel-wise sum_i a_i g_i(u). `basis` must match the weight count.
Image apply_combo(const EditingCombo& combo, const Image& img,
                  std::span<const BaseFunction> basis = kDefaultBasis,
                  double log_base = kNaturalLogBase);

// Analytic stand-ins for commercial photo filters. Outputs are clamped to
// [0,1]. Spec strings: "identity", "gamma:G", "scurve:K,C",
// "lomo_like:K,C,BETA", "tone_shift:DR,DG,DB".
struct StyleFilter {
  enum class Kind { Identity, Gamma, SCurve, LomoLike, ToneShift };

  Kind kind = Kind::Identity;
  std::vector<double> params;

  static StyleFilter identity();
  static StyleFilter gamma(double g);
  static StyleFilter scurve(double k = 8.0, double center = 0.5);
  static StyleFilter lomo_like(double k = 8.0, double center = 0.5,
                               double vignette = 0.35);
  static StyleFilter tone_shift(double dr, double dg, double db);

  static StyleFilter parse(std::string_view spec);
  std::string to_string() const;

  // Throws ErrorKind::Parameter on out-of-range parameters.
  void validate() const;

  friend bool operator==(const StyleFilter&, const StyleFilter&) = default;
};

Image apply_style(const StyleFilter& style, const Image& img);

}  // namespace add
