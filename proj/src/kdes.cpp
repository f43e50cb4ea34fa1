#include "add/kdes.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "add/error.hpp"

namespace add {

void KdesParams::validate() const {
  require(patch_size >= 4, ErrorKind::Parameter, "patch size must be at least 4");
  require(stride >= 1, ErrorKind::Parameter, "stride must be positive");
  require(gamma_o > 0.0 && gamma_p > 0.0, ErrorKind::Parameter,
          "kernel bandwidths must be positive");
  require(orientation_basis >= 2 && position_basis >= 2, ErrorKind::Parameter,
          "basis sizes must be at least 2");
  require(epsilon_g >= 0.0, ErrorKind::Parameter, "epsilon_g must be non-negative");
}

std::string KdesParams::fingerprint() const {
  std::ostringstream s;
  s.precision(17);
  s << "kdes/p" << patch_size << "/s" << stride << "/go" << gamma_o << "/gp"
    << gamma_p << "/Go" << orientation_basis << "/Gp" << position_basis << "/eps"
    << epsilon_g << "/w" << (whiten ? 1 : 0);
  return s.str();
}

namespace {

double pixel_pair_kernel(const PatchPixel& a, const PatchPixel& b, double gamma_o,
                         double gamma_p) {
  const double ds = a.sin_theta - b.sin_theta;
  const double dc = a.cos_theta - b.cos_theta;
  const double dx = a.px - b.px;
  const double dy = a.py - b.py;
  return std::exp(-gamma_o * (ds * ds + dc * dc)) *
         std::exp(-gamma_p * (dx * dx + dy * dy));
}

void check_same_geometry(const NormalizedPatch& p, const NormalizedPatch& q) {
  require(p.pixels.size() == static_cast<std::size_t>(p.width) * p.height &&
              q.pixels.size() == static_cast<std::size_t>(q.width) * q.height,
          ErrorKind::Parameter, "malformed normalized patch");
  require(p.width == q.width && p.height == q.height, ErrorKind::Parameter,
          "patches use different position normalizations");
}

void check_variants(std::span<const NormalizedPatch> v) {
  require(!v.empty(), ErrorKind::Parameter, "empty variant set");
  for (const auto& patch : v) {
    require(patch.width == v[0].width && patch.height == v[0].height,
            ErrorKind::Parameter, "variant patches are not aligned");
  }
}

// Identity-oriented pixel indices of a variant set.
std::vector<std::size_t> oriented_pixels(const NormalizedPatch& identity) {
  std::vector<std::size_t> idx;
  for (std::size_t z = 0; z < identity.pixels.size(); ++z) {
    if (identity.pixels[z].oriented) idx.push_back(z);
  }
  return idx;
}

// Inverse square root of a symmetric PSD matrix with an eigenvalue floor.
Eigen::MatrixXd inverse_sqrt(const Eigen::MatrixXd& gram, double floor) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  Eigen::VectorXd inv = eig.eigenvalues().cwiseMax(floor).cwiseSqrt().cwiseInverse();
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

double match_kernel_exact(const NormalizedPatch& p, const NormalizedPatch& q,
                          double gamma_o, double gamma_p) {
  check_same_geometry(p, q);
  double sum = 0.0;
  for (const auto& a : p.pixels) {
    if (!a.oriented || a.magnitude == 0.0) continue;
    for (const auto& b : q.pixels) {
      if (!b.oriented || b.magnitude == 0.0) continue;
      sum += a.magnitude * b.magnitude * pixel_pair_kernel(a, b, gamma_o, gamma_p);
    }
  }
  return sum;
}

double edited_match_kernel(std::span<const NormalizedPatch> p,
                           std::span<const NormalizedPatch> q,
                           const EditingCombo& combo, double gamma_o,
                           double gamma_p) {
  check_variants(p);
  check_variants(q);
  check_same_geometry(p[0], q[0]);
  const auto mp = edited_magnitudes(p, combo).combined;
  const auto mq = edited_magnitudes(q, combo).combined;
  double sum = 0.0;
  for (std::size_t z = 0; z < mp.size(); ++z) {
    const auto& a = p[0].pixels[z];
    if (!a.oriented || mp[z] == 0.0) continue;
    for (std::size_t w = 0; w < mq.size(); ++w) {
      const auto& b = q[0].pixels[w];
      if (!b.oriented || mq[w] == 0.0) continue;
      sum += mp[z] * mq[w] * pixel_pair_kernel(a, b, gamma_o, gamma_p);
    }
  }
  return sum;
}

Eigen::MatrixXd decompose_kernel(std::span<const NormalizedPatch> p,
                                 std::span<const NormalizedPatch> q,
                                 double gamma_o, double gamma_p) {
  check_variants(p);
  check_variants(q);
  check_same_geometry(p[0], q[0]);
  const auto zp = oriented_pixels(p[0]);
  const auto zq = oriented_pixels(q[0]);

  Eigen::MatrixXd pair(zp.size(), zq.size());
  for (std::size_t a = 0; a < zp.size(); ++a) {
    for (std::size_t b = 0; b < zq.size(); ++b) {
      pair(a, b) = pixel_pair_kernel(p[0].pixels[zp[a]], q[0].pixels[zq[b]],
                                     gamma_o, gamma_p);
    }
  }
  // Rows: variants, columns: oriented pixels.
  Eigen::MatrixXd mp(p.size(), zp.size());
  Eigen::MatrixXd mq(q.size(), zq.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t a = 0; a < zp.size(); ++a) mp(i, a) = p[i].pixels[zp[a]].magnitude;
  for (std::size_t j = 0; j < q.size(); ++j)
    for (std::size_t b = 0; b < zq.size(); ++b) mq(j, b) = q[j].pixels[zq[b]].magnitude;
  return mp * pair * mq.transpose();
}

// ---------------------------------------------------------------------------

KdesBasis::KdesBasis(const KdesParams& params) : params_(params) {
  params_.validate();
  const int go = params_.orientation_basis;
  const int gp = params_.position_basis;

  orient_points_.resize(go, 2);
  for (int k = 0; k < go; ++k) {
    const double phi = 2.0 * std::numbers::pi * k / go;
    orient_points_(k, 0) = std::sin(phi);
    orient_points_(k, 1) = std::cos(phi);
  }
  grid_coords_.resize(gp);
  for (int a = 0; a < gp; ++a) grid_coords_(a) = static_cast<double>(a) / (gp - 1);

  if (!params_.whiten) return;

  // The joint basis Gram is the Kronecker product of the orientation and
  // position Grams, so each factor is whitened separately.
  constexpr double kEigenFloor = 1e-6;
  Eigen::MatrixXd go_gram(go, go);
  for (int a = 0; a < go; ++a)
    for (int b = 0; b < go; ++b)
      go_gram(a, b) = std::exp(
          -params_.gamma_o * (orient_points_.row(a) - orient_points_.row(b)).squaredNorm());
  const int np = gp * gp;
  Eigen::MatrixXd gp_gram(np, np);
  for (int a = 0; a < np; ++a) {
    for (int b = 0; b < np; ++b) {
      const double dx = grid_coords_(a % gp) - grid_coords_(b % gp);
      const double dy = grid_coords_(a / gp) - grid_coords_(b / gp);
      gp_gram(a, b) = std::exp(-params_.gamma_p * (dx * dx + dy * dy));
    }
  }
  orient_white_ = inverse_sqrt(go_gram, kEigenFloor);
  pos_white_ = inverse_sqrt(gp_gram, kEigenFloor);
}

Eigen::VectorXd KdesBasis::feature(const NormalizedPatch& patch) const {
  const int go = params_.orientation_basis;
  const int gp = params_.position_basis;
  const int np = gp * gp;

  std::vector<std::size_t> active;
  for (std::size_t z = 0; z < patch.pixels.size(); ++z) {
    if (patch.pixels[z].oriented && patch.pixels[z].magnitude != 0.0) active.push_back(z);
  }
  const auto n = static_cast<Eigen::Index>(active.size());

  Eigen::MatrixXd orient(go, n);  // m~(z) k_o(t(z), o)
  Eigen::MatrixXd pos(n, np);     // k_p(z, p)
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto& px = patch.pixels[active[c]];
    for (int k = 0; k < go; ++k) {
      const double ds = px.sin_theta - orient_points_(k, 0);
      const double dc = px.cos_theta - orient_points_(k, 1);
      orient(k, c) = px.magnitude * std::exp(-params_.gamma_o * (ds * ds + dc * dc));
    }
    Eigen::VectorXd kx(gp), ky(gp);
    for (int a = 0; a < gp; ++a) {
      kx(a) = std::exp(-params_.gamma_p * (px.px - grid_coords_(a)) * (px.px - grid_coords_(a)));
      ky(a) = std::exp(-params_.gamma_p * (px.py - grid_coords_(a)) * (px.py - grid_coords_(a)));
    }
    for (int b = 0; b < gp; ++b)
      for (int a = 0; a < gp; ++a) pos(c, b * gp + a) = ky(b) * kx(a);
  }

  Eigen::MatrixXd response = orient * pos;  // go x np
  if (params_.whiten) response = orient_white_ * response * pos_white_;

  Eigen::VectorXd out(go * np);
  for (int k = 0; k < go; ++k)
    for (int p = 0; p < np; ++p) out(k * np + p) = response(k, p);
  return out;
}

PatchDescriptor kdes_feature(const NormalizedPatch& patch, const KdesParams& params) {
  return {KdesBasis(params).feature(patch), 0, 0};
}

PatchDescriptor DescriptorSet::patch(int k) const {
  require(k >= 0 && k < size(), ErrorKind::Parameter, "patch index out of range");
  return {descriptors.row(k).transpose(), k % grid_cols, k / grid_cols};
}

std::vector<Window> patch_grid(int width, int height, const KdesParams& params) {
  params.validate();
  std::vector<Window> windows;
  if (width < params.patch_size || height < params.patch_size) return windows;
  const int cols = (width - params.patch_size) / params.stride + 1;
  const int rows = (height - params.patch_size) / params.stride + 1;
  // Center the grid on the image.
  const int ox = ((width - params.patch_size) % params.stride) / 2;
  const int oy = ((height - params.patch_size) % params.stride) / 2;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      windows.push_back({ox + c * params.stride, oy + r * params.stride,
                         params.patch_size, params.patch_size});
  return windows;
}

std::vector<NormalizedPatch> variant_patches(const Image& gray, const Window& window,
                                             const KdesParams& params,
                                             std::span<const BaseFunction> variants) {
  std::vector<NormalizedPatch> out;
  out.reserve(variants.size());
  for (auto f : variants) {
    const auto gf = gradient_field(apply_base_image(f, gray));
    out.push_back(normalize_patch(gf, window, params.epsilon_g));
  }
  return out;
}

std::vector<DescriptorSet> extract_descriptors(const Image& img, const KdesParams& params,
                                               std::span<const BaseFunction> variants,
                                               const std::string& image_id) {
  return extract_descriptors(img, KdesBasis(params), variants, image_id);
}

std::vector<DescriptorSet> extract_descriptors(const Image& img, const KdesBasis& basis,
                                               std::span<const BaseFunction> variants,
                                               const std::string& image_id) {
  const auto& params = basis.params();
  const Image gray = to_grayscale(img);
  const auto windows = patch_grid(gray.width, gray.height, params);
  if (windows.empty())
    fail(ErrorKind::Data, "image " + image_id + " is smaller than one patch");
  const int cols = (gray.width - params.patch_size) / params.stride + 1;
  const int rows = static_cast<int>(windows.size()) / cols;

  std::vector<DescriptorSet> sets;
  sets.reserve(variants.size());
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const auto gf = gradient_field(apply_base_image(variants[v], gray));
    DescriptorSet set;
    set.image_id = image_id;
    set.variant = static_cast<int>(v);
    set.grid_cols = cols;
    set.grid_rows = rows;
    set.descriptors.resize(static_cast<Eigen::Index>(windows.size()), basis.dimension());
    for (std::size_t k = 0; k < windows.size(); ++k) {
      const auto patch = normalize_patch(gf, windows[k], params.epsilon_g);
      set.descriptors.row(static_cast<Eigen::Index>(k)) = basis.feature(patch).transpose();
    }
    sets.push_back(std::move(set));
  }
  return sets;
}

TensorBlob descriptors_to_blob(std::span<const DescriptorSet> sets,
                               const KdesParams& params) {
  require(!sets.empty(), ErrorKind::Parameter, "no descriptor sets to store");
  const auto patches = static_cast<std::uint64_t>(sets[0].size());
  const auto dim = static_cast<std::uint64_t>(sets[0].descriptors.cols());
  TensorBlob blob;
  blob.shape = {sets.size(), patches, dim};
  blob.values.reserve(sets.size() * patches * dim);
  for (const auto& s : sets) {
    require(static_cast<std::uint64_t>(s.size()) == patches &&
                static_cast<std::uint64_t>(s.descriptors.cols()) == dim,
            ErrorKind::Parameter, "descriptor sets of one image must share geometry");
    for (Eigen::Index r = 0; r < s.descriptors.rows(); ++r)
      for (Eigen::Index c = 0; c < s.descriptors.cols(); ++c)
        blob.values.push_back(static_cast<float>(s.descriptors(r, c)));
  }
  blob.metadata["kind"] = "descriptors";
  blob.metadata["image_id"] = sets[0].image_id;
  blob.metadata["grid_cols"] = std::to_string(sets[0].grid_cols);
  blob.metadata["grid_rows"] = std::to_string(sets[0].grid_rows);
  blob.metadata["params"] = params.fingerprint();
  return blob;
}

std::vector<DescriptorSet> descriptors_from_blob(const TensorBlob& blob) {
  require(blob.shape.size() == 3 && blob.metadata.count("grid_cols") &&
              blob.metadata.count("grid_rows"),
          ErrorKind::Format, "blob does not hold descriptor sets");
  const auto variants = static_cast<Eigen::Index>(blob.shape[0]);
  const auto patches = static_cast<Eigen::Index>(blob.shape[1]);
  const auto dim = static_cast<Eigen::Index>(blob.shape[2]);
  std::vector<DescriptorSet> sets;
  std::size_t k = 0;
  for (Eigen::Index v = 0; v < variants; ++v) {
    DescriptorSet s;
    s.image_id = blob.metadata.count("image_id") ? blob.metadata.at("image_id") : "";
    s.variant = static_cast<int>(v);
    s.grid_cols = std::stoi(blob.metadata.at("grid_cols"));
    s.grid_rows = std::stoi(blob.metadata.at("grid_rows"));
    s.descriptors.resize(patches, dim);
    for (Eigen::Index r = 0; r < patches; ++r)
      for (Eigen::Index c = 0; c < dim; ++c) s.descriptors(r, c) = blob.values[k++];
    sets.push_back(std::move(s));
  }
  return sets;
}

}  // namespace add
