#include "add/encode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "add/error.hpp"
#include "util.hpp"

namespace add {

namespace {

using detail::uniform01;

// Row-wise squared distances from every sample to every centroid.
Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x, const Eigen::MatrixXd& c) {
  Eigen::MatrixXd d(x.rows(), c.rows());
  for (Eigen::Index j = 0; j < c.rows(); ++j)
    d.col(j) = (x.rowwise() - c.row(j)).rowwise().squaredNorm();
  return d;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& samples, int clusters, std::uint64_t seed,
                    const KMeansOptions& options) {
  const Eigen::Index n = samples.rows();
  require(clusters >= 1, ErrorKind::Parameter, "codebook size must be positive");
  require(n >= clusters, ErrorKind::Data,
          "k-means needs at least " + std::to_string(clusters) + " samples, got " +
              std::to_string(n));

  std::mt19937_64 rng(seed);
  Eigen::MatrixXd centroids(clusters, samples.cols());

  // k-means++ seeding.
  Eigen::VectorXd closest(n);
  {
    const auto first = static_cast<Eigen::Index>(uniform01(rng) * static_cast<double>(n));
    centroids.row(0) = samples.row(std::min(first, n - 1));
    closest = (samples.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  }
  for (int k = 1; k < clusters; ++k) {
    const double total = closest.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += closest(i);
        if (acc > target && closest(i) > 0.0) {
          pick = i;
          break;
        }
      }
      while (closest(pick) == 0.0 && pick > 0) --pick;
    }
    centroids.row(k) = samples.row(pick);
    closest = closest.cwiseMin((samples.rowwise() - centroids.row(k)).rowwise().squaredNorm());
  }

  std::vector<int> assign(n, 0);
  KMeansResult result;
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    result.iterations = iter;
    const Eigen::MatrixXd dist = squared_distances(samples, centroids);
    Eigen::VectorXd own(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      own(i) = dist.row(i).minCoeff(&best);  // first minimum on ties
      assign[i] = static_cast<int>(best);
    }

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(clusters, samples.cols());
    std::vector<int> counts(clusters, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[i]) += samples.row(i);
      ++counts[assign[i]];
    }
    Eigen::MatrixXd updated = centroids;
    std::vector<char> taken(n, 0);
    for (int k = 0; k < clusters; ++k) {
      if (counts[k] > 0) {
        updated.row(k) = sums.row(k) / counts[k];
        continue;
      }
      Eigen::Index far = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!taken[i] && (far < 0 || own(i) > own(far))) far = i;
      }
      taken[far] = 1;
      updated.row(k) = samples.row(far);
    }
    const double movement = (updated - centroids).rowwise().norm().maxCoeff();
    centroids = std::move(updated);
    if (movement < options.tolerance) break;
  }

  const Eigen::MatrixXd dist = squared_distances(samples, centroids);
  result.inertia = dist.rowwise().minCoeff().sum();
  result.codebook.centroids = std::move(centroids);
  return result;
}

Codebook build_projection(Codebook codebook, double gamma_e) {
  require(gamma_e > 0.0, ErrorKind::Parameter, "gamma_e must be positive");
  require(codebook.size() >= 1, ErrorKind::Parameter, "empty codebook");
  const int d = codebook.size();
  Eigen::MatrixXd gram(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      gram(i, j) = std::exp(
          -gamma_e * (codebook.centroids.row(i) - codebook.centroids.row(j)).squaredNorm());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  Eigen::VectorXd inv =
      eig.eigenvalues().cwiseMax(kProjectionEigenFloor).cwiseSqrt().cwiseInverse();
  codebook.gamma_e = gamma_e;
  codebook.projection = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  return codebook;
}

int nearest_codeword(const Codebook& codebook, const Eigen::Ref<const Eigen::VectorXd>& x) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < codebook.size(); ++k) {
    const double d = (codebook.centroids.row(k).transpose() - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

std::string_view to_string(EncoderKind e) { return e == EncoderKind::Emk ? "emk" : "bow"; }

EncoderKind parse_encoder(std::string_view name) {
  if (name == "emk") return EncoderKind::Emk;
  if (name == "bow") return EncoderKind::Bow;
  fail(ErrorKind::Parameter, "unknown encoder '" + std::string(name) + "'");
}

namespace {

void check_encodable(const DescriptorSet& set, const Codebook& codebook) {
  require(set.size() > 0, ErrorKind::Data, "empty descriptor set for " + set.image_id);
  require(set.descriptors.cols() == codebook.dimension(), ErrorKind::Parameter,
          "descriptor dimension does not match the codebook");
}

// Pooling cell of patch k: 0 for the global cell, 1..4 for the 2x2 quadrants.
std::vector<int> cells_of(const DescriptorSet& set, int k, Pooling pooling) {
  if (pooling == Pooling::Global) return {0};
  const int gx = k % set.grid_cols;
  const int gy = k / set.grid_cols;
  const int qx = 2 * gx >= set.grid_cols ? 1 : 0;
  const int qy = 2 * gy >= set.grid_rows ? 1 : 0;
  return {0, 1 + qy * 2 + qx};
}

int cell_count(Pooling pooling) { return pooling == Pooling::Global ? 1 : 5; }

}  // namespace

ImageFeature emk_encode(const DescriptorSet& set, const Codebook& codebook, Pooling pooling) {
  check_encodable(set, codebook);
  require(codebook.has_projection(), ErrorKind::Parameter,
          "EMK encoding needs a codebook projection");
  const int d = codebook.size();
  const int cells = cell_count(pooling);
  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(d, cells);
  std::vector<int> counts(cells, 0);
  Eigen::VectorXd k(d);
  // Rows are stored in grid order, which fixes the summation order.
  for (int p = 0; p < set.size(); ++p) {
    for (int j = 0; j < d; ++j)
      k(j) = std::exp(-codebook.gamma_e *
                      (set.descriptors.row(p) - codebook.centroids.row(j)).squaredNorm());
    for (int c : cells_of(set, p, pooling)) {
      pooled.col(c) += k;
      ++counts[c];
    }
  }
  ImageFeature f{set.image_id, set.variant, EncoderKind::Emk, Eigen::VectorXd(d * cells)};
  for (int c = 0; c < cells; ++c) {
    Eigen::VectorXd mean = counts[c] ? Eigen::VectorXd(pooled.col(c) / counts[c])
                                     : Eigen::VectorXd::Zero(d);
    f.values.segment(c * d, d) = codebook.projection * mean;
  }
  return f;
}

ImageFeature bow_encode(const DescriptorSet& set, const Codebook& codebook, Pooling pooling) {
  check_encodable(set, codebook);
  const int d = codebook.size();
  const int cells = cell_count(pooling);
  Eigen::MatrixXd hist = Eigen::MatrixXd::Zero(d, cells);
  std::vector<int> counts(cells, 0);
  for (int p = 0; p < set.size(); ++p) {
    const int word = nearest_codeword(codebook, set.descriptors.row(p).transpose());
    for (int c : cells_of(set, p, pooling)) {
      hist(word, c) += 1.0;
      ++counts[c];
    }
  }
  ImageFeature f{set.image_id, set.variant, EncoderKind::Bow, Eigen::VectorXd(d * cells)};
  for (int c = 0; c < cells; ++c) {
    f.values.segment(c * d, d) =
        counts[c] ? Eigen::VectorXd(hist.col(c) / counts[c]) : Eigen::VectorXd::Zero(d);
  }
  return f;
}

ImageFeature encode(EncoderKind kind, const DescriptorSet& set, const Codebook& codebook,
                    Pooling pooling) {
  return kind == EncoderKind::Emk ? emk_encode(set, codebook, pooling)
                                  : bow_encode(set, codebook, pooling);
}

CodebookSample sample_for_codebook(std::span<const std::vector<DescriptorSet>> images,
                                   int per_variant, std::uint64_t seed) {
  require(!images.empty(), ErrorKind::Data, "no training images for the codebook");
  require(per_variant >= 1, ErrorKind::Parameter, "per-variant sample count must be positive");
  const std::size_t variants = images[0].size();
  Eigen::Index dim = -1;
  std::vector<std::vector<std::pair<int, int>>> pools(variants);  // (image, patch)
  for (std::size_t i = 0; i < images.size(); ++i) {
    require(images[i].size() == variants, ErrorKind::Data,
            "training images carry different variant counts");
    for (std::size_t v = 0; v < variants; ++v) {
      const auto& set = images[i][v];
      if (dim < 0) dim = set.descriptors.cols();
      require(set.descriptors.cols() == dim, ErrorKind::Data, "descriptor dimension mismatch");
      for (int p = 0; p < set.size(); ++p) pools[v].emplace_back(static_cast<int>(i), p);
    }
  }
  std::size_t take = static_cast<std::size_t>(per_variant);
  for (const auto& pool : pools) take = std::min(take, pool.size());
  require(take > 0, ErrorKind::Data, "no descriptors to sample");

  std::mt19937_64 rng(seed);
  CodebookSample out;
  out.samples.resize(static_cast<Eigen::Index>(take * variants), dim);
  Eigen::Index row = 0;
  for (std::size_t v = 0; v < variants; ++v) {
    auto& pool = pools[v];
    // Partial Fisher-Yates with explicit index draws.
    for (std::size_t k = 0; k < take; ++k) {
      const auto r = k + static_cast<std::size_t>(uniform01(rng) *
                                                  static_cast<double>(pool.size() - k));
      std::swap(pool[k], pool[std::min(r, pool.size() - 1)]);
      const auto [img, patch] = pool[k];
      out.samples.row(row++) = images[img][v].descriptors.row(patch);
      out.tags.push_back({images[img][v].image_id, static_cast<int>(v), patch});
    }
  }
  return out;
}

TensorBlob codebook_to_blob(const Codebook& codebook, std::uint64_t seed,
                            const std::string& params_fingerprint) {
  require(codebook.has_projection(), ErrorKind::Parameter,
          "persisted codebooks must carry their projection");
  const auto d = static_cast<std::uint64_t>(codebook.size());
  const auto dim = static_cast<std::uint64_t>(codebook.dimension());
  TensorBlob blob;
  // Row block 0..D-1: centroids (width dim); then D rows of the projection,
  // zero-padded to the same width.
  const std::uint64_t width = std::max(dim, d);
  blob.shape = {2, d, width};
  blob.values.assign(2 * d * width, 0.0f);
  for (std::uint64_t i = 0; i < d; ++i) {
    for (std::uint64_t j = 0; j < dim; ++j)
      blob.values[i * width + j] = static_cast<float>(codebook.centroids(i, j));
    for (std::uint64_t j = 0; j < d; ++j)
      blob.values[(d + i) * width + j] = static_cast<float>(codebook.projection(i, j));
  }
  std::ostringstream g;
  g.precision(17);
  g << codebook.gamma_e;
  blob.metadata = {{"kind", "codebook"},
                   {"D", std::to_string(d)},
                   {"dim", std::to_string(dim)},
                   {"gamma_e", g.str()},
                   {"seed", std::to_string(seed)},
                   {"params", params_fingerprint}};
  return blob;
}

Codebook codebook_from_blob(const TensorBlob& blob) {
  require(blob.shape.size() == 3 && blob.shape[0] == 2 && blob.metadata.count("dim") &&
              blob.metadata.count("gamma_e"),
          ErrorKind::Format, "blob does not hold a codebook");
  const auto d = blob.shape[1];
  const auto width = blob.shape[2];
  const auto dim = std::stoull(blob.metadata.at("dim"));
  require(dim <= width && d <= width, ErrorKind::Format, "codebook blob shape mismatch");
  Codebook cb;
  cb.gamma_e = std::stod(blob.metadata.at("gamma_e"));
  cb.centroids.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(dim));
  cb.projection.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::uint64_t i = 0; i < d; ++i) {
    for (std::uint64_t j = 0; j < dim; ++j)
      cb.centroids(i, j) = blob.values[i * width + j];
    for (std::uint64_t j = 0; j < d; ++j)
      cb.projection(i, j) = blob.values[(d + i) * width + j];
  }
  return cb;
}

}  // namespace add
