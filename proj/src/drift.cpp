#include <algorithm>
#include <array>

#include "add/error.hpp"
#include "add/harness.hpp"

namespace add {

nlohmann::json DriftReport::to_json() const {
  nlohmann::json j = {{"patches", patches}, {"mean", mean}, {"max", max}, {"drifts", drifts}};
  j["flip_rate"] = flip_rate ? nlohmann::json(*flip_rate) : nlohmann::json(nullptr);
  return j;
}

DriftReport drift_analysis(std::span<const Image> images, const ImageFilter& filter,
                           const KdesParams& params, const Codebook* codebook) {
  constexpr double kFloor = 1e-12;
  constexpr std::array<BaseFunction, 1> kIdentity = {BaseFunction::Identity};
  const KdesBasis basis(params);
  DriftReport report;
  std::size_t flips = 0;
  for (std::size_t k = 0; k < images.size(); ++k) {
    const auto id = std::to_string(k);
    const auto before = extract_descriptors(images[k], basis, kIdentity, id);
    const auto after = extract_descriptors(filter(images[k]), basis, kIdentity, id);
    require(before[0].size() == after[0].size(), ErrorKind::Data,
            "filter changed the image geometry");
    const auto& a = before[0].descriptors;
    const auto& b = after[0].descriptors;
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      const double diff = (a.row(r) - b.row(r)).cwiseAbs().sum();
      const double norm = a.row(r).cwiseAbs().sum();
      report.drifts.push_back(diff / std::max(norm, kFloor));
      if (codebook &&
          nearest_codeword(*codebook, a.row(r).transpose()) !=
              nearest_codeword(*codebook, b.row(r).transpose()))
        ++flips;
    }
  }
  report.patches = report.drifts.size();
  if (report.patches > 0) {
    for (double d : report.drifts) {
      report.mean += d;
      report.max = std::max(report.max, d);
    }
    report.mean /= static_cast<double>(report.patches);
    if (codebook) report.flip_rate = static_cast<double>(flips) / report.patches;
  }
  return report;
}

DriftReport drift_analysis(std::span<const Image> images, const StyleFilter& filter,
                           const KdesParams& params, const Codebook* codebook) {
  filter.validate();
  return drift_analysis(
      images, [&](const Image& img) { return apply_style(filter, img); }, params, codebook);
}

}  // namespace add
