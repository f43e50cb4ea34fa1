#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "add/imgio.hpp"
#include "add/kdes.hpp"

namespace add {

// Visual codebook. `projection` is G^{-1/2} of the codeword Gram under the
// Gaussian patch kernel exp(-gamma_e |x - y|^2); empty until built.
struct Codebook {
  Eigen::MatrixXd centroids;  // D x dim
  double gamma_e = 1.0;
  Eigen::MatrixXd projection;

  int size() const { return static_cast<int>(centroids.rows()); }
  int dimension() const { return static_cast<int>(centroids.cols()); }
  bool has_projection() const { return projection.rows() == centroids.rows() && size() > 0; }
};

struct KMeansOptions {
  int max_iterations = 100;
  double tolerance = 1e-6;  // max centroid movement
};

struct KMeansResult {
  Codebook codebook;
  double inertia = 0.0;
  int iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding. Samples are rows. Empty clusters
// are re-seeded from the point farthest from its centroid.
KMeansResult kmeans(const Eigen::MatrixXd& samples, int clusters, std::uint64_t seed,
                    const KMeansOptions& options = {});

inline constexpr double kProjectionEigenFloor = 1e-6;

Codebook build_projection(Codebook codebook, double gamma_e);

// Nearest centroid by squared Euclidean distance; ties go to the lowest index.
int nearest_codeword(const Codebook& codebook, const Eigen::Ref<const Eigen::VectorXd>& x);

enum class EncoderKind { Emk, Bow };
std::string_view to_string(EncoderKind e);
EncoderKind parse_encoder(std::string_view name);

enum class Pooling {
  Global,   // one mean over all patches
  Pyramid,  // 1x1 + 2x2 spatial cells, concatenated
};

struct ImageFeature {
  std::string image_id;
  int variant = 0;
  EncoderKind encoder = EncoderKind::Emk;
  Eigen::VectorXd values;
};

// phi(x) = G^{-1/2} [k_e(x, v_1) ... k_e(x, v_D)]^T, mean-pooled.
ImageFeature emk_encode(const DescriptorSet& set, const Codebook& codebook,
                        Pooling pooling = Pooling::Global);

// Hard-assignment histogram normalized to sum 1 (per cell for the pyramid).
ImageFeature bow_encode(const DescriptorSet& set, const Codebook& codebook,
                        Pooling pooling = Pooling::Global);

ImageFeature encode(EncoderKind kind, const DescriptorSet& set, const Codebook& codebook,
                    Pooling pooling = Pooling::Global);

struct SampleTag {
  std::string image_id;
  int variant = 0;
  int patch = 0;
};

struct CodebookSample {
  Eigen::MatrixXd samples;  // rows grouped by variant
  std::vector<SampleTag> tags;
};

// Draws the same number of descriptors from every variant. `images[k]` holds
// the per-variant sets of one training image. The per-variant count is capped
// by the smallest variant pool.
CodebookSample sample_for_codebook(std::span<const std::vector<DescriptorSet>> images,
                                   int per_variant, std::uint64_t seed);

TensorBlob codebook_to_blob(const Codebook& codebook, std::uint64_t seed,
                            const std::string& params_fingerprint);
Codebook codebook_from_blob(const TensorBlob& blob);

}  // namespace add
