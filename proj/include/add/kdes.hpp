#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "add/editing.hpp"
#include "add/gradients.hpp"
#include "add/imgio.hpp"

namespace add {

struct KdesParams {
  int patch_size = 16;
  int stride = 8;
  double gamma_o = 5.0;        // orientation kernel bandwidth
  double gamma_p = 3.0;        // position kernel bandwidth
  int orientation_basis = 16;  // G_o unit vectors at uniform angles
  int position_basis = 5;      // G_p x G_p grid over [0,1]^2
  double epsilon_g = kDefaultEpsilonG;
  // Project basis responses with the inverse square root of the basis Gram,
  // so that F(P)^T F(Q) approximates the exact match kernel.
  bool whiten = true;

  void validate() const;
  int dimension() const {
    return orientation_basis * position_basis * position_basis;
  }
  // Stable textual digest of every field, used to tag persisted artifacts.
  std::string fingerprint() const;
};

// Exact gradient match kernel, O(|P| |Q|):
//   sum_z sum_z' m~(z) m~(z') exp(-g_o |t(z) - t(z')|^2) exp(-g_p |z - z'|^2)
double match_kernel_exact(const NormalizedPatch& p, const NormalizedPatch& q,
                          double gamma_o, double gamma_p);

// Per-variant patch sets: element i is the patch normalized on g_i(I), element
// 0 being the identity variant. Orientations are read from element 0.

// Match kernel with the combined magnitude sum_i a_i m~_i on both sides.
double edited_match_kernel(std::span<const NormalizedPatch> p,
                           std::span<const NormalizedPatch> q,
                           const EditingCombo& combo, double gamma_o,
                           double gamma_p);

// N x N cross kernels; entry (i,j) pairs m~_i on the P side with m~_j on Q.
Eigen::MatrixXd decompose_kernel(std::span<const NormalizedPatch> p,
                                 std::span<const NormalizedPatch> q,
                                 double gamma_o, double gamma_p);

struct PatchDescriptor {
  Eigen::VectorXd values;
  int grid_x = 0;
  int grid_y = 0;
};

// Finite basis for the match kernel. Feature index is o * G_p^2 + p, with p
// enumerating the position grid row-major.
class KdesBasis {
 public:
  explicit KdesBasis(const KdesParams& params);

  const KdesParams& params() const { return params_; }
  int dimension() const { return params_.dimension(); }

  // Raw basis responses sum_z m~ k_o(t(z), o) k_p(z, p), whitened if enabled.
  Eigen::VectorXd feature(const NormalizedPatch& patch) const;

  const Eigen::MatrixXd& orientation_whitening() const { return orient_white_; }
  const Eigen::MatrixXd& position_whitening() const { return pos_white_; }

 private:
  KdesParams params_;
  Eigen::MatrixXd orient_points_;  // G_o x 2 (sin, cos)
  Eigen::VectorXd grid_coords_;    // G_p
  Eigen::MatrixXd orient_white_;   // G_o x G_o
  Eigen::MatrixXd pos_white_;      // G_p^2 x G_p^2
};

PatchDescriptor kdes_feature(const NormalizedPatch& patch, const KdesParams& params);

// Descriptors of one image variant over the dense grid. Rows follow the grid
// row-major (grid_y outer).
struct DescriptorSet {
  std::string image_id;
  int variant = 0;
  int grid_cols = 0;
  int grid_rows = 0;
  Eigen::MatrixXd descriptors;

  int size() const { return static_cast<int>(descriptors.rows()); }
  PatchDescriptor patch(int k) const;
};

// Dense grid geometry shared by every variant of an image.
std::vector<Window> patch_grid(int width, int height, const KdesParams& params);

// Patches of all variants at one window, identity first when variants[0] is.
std::vector<NormalizedPatch> variant_patches(const Image& gray, const Window& window,
                                             const KdesParams& params,
                                             std::span<const BaseFunction> variants);

// One DescriptorSet per variant; each variant uses its own gradients.
std::vector<DescriptorSet> extract_descriptors(
    const Image& img, const KdesParams& params,
    std::span<const BaseFunction> variants = kDefaultBasis,
    const std::string& image_id = {});

// Same, reusing a prepared basis.
std::vector<DescriptorSet> extract_descriptors(
    const Image& img, const KdesBasis& basis,
    std::span<const BaseFunction> variants = kDefaultBasis,
    const std::string& image_id = {});

// Rank-3 blob [variants, patches, dim] with image id, grid shape and params.
TensorBlob descriptors_to_blob(std::span<const DescriptorSet> sets,
                               const KdesParams& params);
std::vector<DescriptorSet> descriptors_from_blob(const TensorBlob& blob);

}  // namespace add
