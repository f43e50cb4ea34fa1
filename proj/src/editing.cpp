#include "add/editing.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "add/error.hpp"

namespace add {

std::string_view to_string(BaseFunction f) {
  switch (f) {
    case BaseFunction::Identity: return "identity";
    case BaseFunction::LogBrighten: return "g1_log";
    case BaseFunction::Square: return "g2_square";
    case BaseFunction::Sigmoid: return "g3_sigmoid";
  }
  return "unknown";
}

BaseFunction parse_base_function(std::string_view name) {
  for (auto f : kDefaultBasis) {
    if (to_string(f) == name) return f;
  }
  fail(ErrorKind::Parameter, "unknown base function '" + std::string(name) + "'");
}

namespace {

double log_in_base(double v, double base) {
  if (base == kNaturalLogBase) return std::log(v);
  return std::log(v) / std::log(base);
}

void check_unit(double x) {
  if (!(x >= 0.0 && x <= 1.0))
    fail(ErrorKind::Domain,
         "base function argument " + std::to_string(x) + " outside [0,1]");
}

}  // namespace

double apply_base(BaseFunction f, double x, double log_base) {
  check_unit(x);
  switch (f) {
    case BaseFunction::Identity:
      return x;
    case BaseFunction::LogBrighten:
      return 0.3 * (log_in_base(2.0 * x + 0.1, log_base) +
                    std::abs(log_in_base(0.1, log_base)));
    case BaseFunction::Square:
      return 0.8 * x * x;
    case BaseFunction::Sigmoid:
      return 1.0 / (1.0 + std::exp(-8.0 * (x - 0.5)));
  }
  return x;
}

double base_derivative(BaseFunction f, double x, double log_base) {
  check_unit(x);
  switch (f) {
    case BaseFunction::Identity:
      return 1.0;
    case BaseFunction::LogBrighten:
      return 0.6 / ((2.0 * x + 0.1) * std::log(log_base));
    case BaseFunction::Square:
      return 1.6 * x;
    case BaseFunction::Sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-8.0 * (x - 0.5)));
      return 8.0 * s * (1.0 - s);
    }
  }
  return 1.0;
}

Image apply_base_image(BaseFunction f, const Image& img, double log_base) {
  require(img.is_gray(), ErrorKind::Type, "base functions need a grayscale image");
  Image out = img;
  for (double& v : out.data) v = apply_base(f, v, log_base);
  return out;
}

void EditingCombo::validate() const {
  for (double a : weights) {
    require(std::isfinite(a) && a >= 0.0, ErrorKind::Parameter,
            "editing weights must be finite and non-negative");
  }
}

bool EditingCombo::usable() const {
  return std::any_of(weights.begin(), weights.end(), [](double a) { return a > 0; });
}

Image apply_combo(const EditingCombo& combo, const Image& img,
                  std::span<const BaseFunction> basis, double log_base) {
  combo.validate();
  require(combo.weights.size() == basis.size(), ErrorKind::Parameter,
          "combo has " + std::to_string(combo.weights.size()) +
              " weights for a basis of " + std::to_string(basis.size()));
  require(img.is_gray(), ErrorKind::Type, "editing combos need a grayscale image");
  Image out = img;
  for (std::size_t p = 0; p < img.data.size(); ++p) {
    const double u = img.data[p];
    double acc = 0.0;
    for (std::size_t i = 0; i < basis.size(); ++i) {
      acc += combo.weights[i] * apply_base(basis[i], u, log_base);
    }
    out.data[p] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------

StyleFilter StyleFilter::identity() { return {Kind::Identity, {}}; }

StyleFilter StyleFilter::gamma(double g) {
  StyleFilter s{Kind::Gamma, {g}};
  s.validate();
  return s;
}

StyleFilter StyleFilter::scurve(double k, double center) {
  StyleFilter s{Kind::SCurve, {k, center}};
  s.validate();
  return s;
}

StyleFilter StyleFilter::lomo_like(double k, double center, double vignette) {
  StyleFilter s{Kind::LomoLike, {k, center, vignette}};
  s.validate();
  return s;
}

StyleFilter StyleFilter::tone_shift(double dr, double dg, double db) {
  StyleFilter s{Kind::ToneShift, {dr, dg, db}};
  s.validate();
  return s;
}

void StyleFilter::validate() const {
  auto need = [&](std::size_t n) {
    require(params.size() == n, ErrorKind::Parameter,
            "style '" + to_string() + "' expects " + std::to_string(n) + " parameters");
  };
  for (double p : params)
    require(std::isfinite(p), ErrorKind::Parameter, "style parameters must be finite");
  switch (kind) {
    case Kind::Identity:
      need(0);
      break;
    case Kind::Gamma:
      need(1);
      require(params[0] > 0.0, ErrorKind::Parameter, "gamma must be positive");
      break;
    case Kind::SCurve:
    case Kind::LomoLike:
      need(kind == Kind::SCurve ? 2 : 3);
      require(params[0] > 0.0, ErrorKind::Parameter, "s-curve slope must be positive");
      require(params[1] >= 0.0 && params[1] <= 1.0, ErrorKind::Parameter,
              "s-curve center must lie in [0,1]");
      if (kind == Kind::LomoLike)
        require(params[2] >= 0.0 && params[2] <= 1.0, ErrorKind::Parameter,
                "vignette strength must lie in [0,1]");
      break;
    case Kind::ToneShift:
      need(3);
      break;
  }
}

namespace {

std::string format_number(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_number(std::string_view text, std::string_view spec) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    fail(ErrorKind::Parameter, "bad number in style spec '" + std::string(spec) + "'");
  return v;
}

double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// Logistic curve rescaled so that 0 -> 0 and 1 -> 1.
double scurve_value(double u, double k, double c) {
  const double lo = logistic(-k * c);
  const double hi = logistic(k * (1.0 - c));
  return (logistic(k * (u - c)) - lo) / (hi - lo);
}

}  // namespace

std::string StyleFilter::to_string() const {
  std::string name;
  switch (kind) {
    case Kind::Identity: return "identity";
    case Kind::Gamma: name = "gamma"; break;
    case Kind::SCurve: name = "scurve"; break;
    case Kind::LomoLike: name = "lomo_like"; break;
    case Kind::ToneShift: name = "tone_shift"; break;
  }
  name += ':';
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (i) name += ',';
    name += format_number(params[i]);
  }
  return name;
}

StyleFilter StyleFilter::parse(std::string_view spec) {
  const auto colon = spec.find(':');
  const std::string_view name = spec.substr(0, colon);
  std::vector<double> values;
  if (colon != std::string_view::npos) {
    std::string_view rest = spec.substr(colon + 1);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      values.push_back(parse_number(rest.substr(0, comma), spec));
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
  }

  StyleFilter s;
  if (name == "identity") {
    s.kind = Kind::Identity;
  } else if (name == "gamma") {
    s.kind = Kind::Gamma;
  } else if (name == "scurve") {
    s = values.empty() ? scurve() : StyleFilter{Kind::SCurve, {}};
  } else if (name == "lomo_like") {
    s = values.empty() ? lomo_like() : StyleFilter{Kind::LomoLike, {}};
  } else if (name == "tone_shift") {
    s.kind = Kind::ToneShift;
  } else {
    fail(ErrorKind::Parameter, "unknown style '" + std::string(spec) + "'");
  }
  if (!values.empty()) s.params = std::move(values);
  s.validate();
  return s;
}

Image apply_style(const StyleFilter& style, const Image& img) {
  style.validate();
  Image out = img;
  const auto& p = style.params;
  switch (style.kind) {
    case StyleFilter::Kind::Identity:
      return out;
    case StyleFilter::Kind::Gamma:
      for (double& v : out.data) v = std::pow(std::clamp(v, 0.0, 1.0), p[0]);
      break;
    case StyleFilter::Kind::SCurve:
      for (double& v : out.data) v = scurve_value(std::clamp(v, 0.0, 1.0), p[0], p[1]);
      break;
    case StyleFilter::Kind::LomoLike: {
      const double cx = (img.width - 1) / 2.0;
      const double cy = (img.height - 1) / 2.0;
      const double corner2 = cx * cx + cy * cy;
      for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
          const double r2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / corner2;
          const double vignette = 1.0 - p[2] * r2;
          for (int c = 0; c < img.channels; ++c) {
            double& v = out.at(x, y, c);
            v = scurve_value(std::clamp(v, 0.0, 1.0), p[0], p[1]) * vignette;
          }
        }
      }
      break;
    }
    case StyleFilter::Kind::ToneShift:
      if (img.channels == 3) {
        for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] += p[k % 3];
      } else {
        // Gray images get the luma of the shift vector.
        const double shift = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
        for (double& v : out.data) v += shift;
      }
      break;
  }
  for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace add
