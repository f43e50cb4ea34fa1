#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "add/imgio.hpp"
#include "add/svm.hpp"

namespace add {

struct KernelPair {
  int i = 0;  // variant on the row image
  int j = 0;  // variant on the column image

  friend bool operator==(const KernelPair&, const KernelPair&) = default;
};

// features[image][variant]: one image-level vector per variant.
using FeatureTable = std::vector<std::vector<Eigen::VectorXd>>;

struct GramOptions {
  bool symmetrize = true;  // K~ = (K_(i,j) + K_(i,j)^T) / 2 for cross pairs
  bool normalize = true;   // divide K_(i,j) by sqrt(t_i t_j), t_i = mean diag K_(i,i)
};

// The N^2 image-level base kernels over a train/test split.
struct BaseKernelSet {
  int variants = 0;
  std::vector<KernelPair> pairs;
  std::vector<Eigen::MatrixXd> train;  // n_train x n_train per pair
  std::vector<Eigen::MatrixXd> test;   // n_test x n_train per pair
  std::vector<double> variant_trace;   // t_i from the training Grams
  std::vector<double> scale;           // factor applied to each pair
  std::vector<int> train_index;
  std::vector<int> test_index;
  // Filled by callers that persist the set for later training.
  std::vector<int> train_labels;
  std::vector<int> test_labels;

  std::size_t size() const { return pairs.size(); }
  Eigen::MatrixXd combined_train(std::span<const double> weights) const;
  Eigen::MatrixXd combined_test(std::span<const double> weights) const;

  // Keeps only the listed kernels (e.g. the identity pair for a baseline).
  BaseKernelSet select(std::span<const int> kernels) const;
};

BaseKernelSet base_grams(const FeatureTable& features, std::span<const int> train_index,
                         std::span<const int> test_index, const GramOptions& options = {});

// Index of pair (i, j) in a full N^2 set built by base_grams.
int pair_index(int i, int j, int variants);

struct MklOptions {
  double C = 10.0;
  double lambda_d = 1e-2;
  int max_outer = 50;
  double relative_tolerance = 1e-5;  // stop when |dT| < tol |T|
  int max_halvings = 20;
  double armijo = 1e-4;
  SvmOptions svm;  // C is overridden by MklOptions::C
};

enum class MklStatus { Converged, MaxIterations, LineSearchStalled, Stationary, FixedWeights };
std::string_view to_string(MklStatus s);

struct ClassModel {
  Eigen::VectorXd alpha;
  std::vector<int> signed_labels;  // +1 for the class, -1 for the rest
  double bias = 0.0;
  double dual_objective = 0.0;
};

struct MklModel {
  std::vector<double> weights;
  std::vector<KernelPair> pairs;
  std::vector<int> classes;
  std::vector<ClassModel> per_class;
  double C = 10.0;
  double lambda_d = 1e-2;
  std::vector<double> objective_trace;          // accepted outer iterates
  std::vector<std::vector<double>> weight_trace;
  MklStatus status = MklStatus::FixedWeights;
  std::vector<std::string> warnings;
  std::vector<double> variant_trace;  // normalization of the training Grams
  std::vector<double> scale;
  int train_size = 0;
};

// T(d) = sum_c W_c(d) + lambda_d/2 |d|^2 and its gradient, with W_c the
// one-vs-rest SVM dual optimum under K(d) = sum_m d_m K_m.
struct MklObjective {
  double value = 0.0;
  std::vector<double> gradient;
  std::vector<ClassModel> classes;
  std::vector<std::string> warnings;
};

MklObjective mkl_objective(const BaseKernelSet& ks, std::span<const int> labels,
                           std::span<const double> weights, const MklOptions& options);

// Projected gradient descent on T over d >= 0 from d = 1/M, Armijo backtracking.
MklModel gmkl_train(const BaseKernelSet& ks, std::span<const int> labels,
                    const MklOptions& options = {});

// One-vs-rest SVMs on a fixed combination (standard and averaging baselines).
MklModel train_fixed(const BaseKernelSet& ks, std::span<const int> labels,
                     std::span<const double> weights, const MklOptions& options = {});

struct Prediction {
  std::vector<int> labels;
  Eigen::MatrixXd scores;  // n_test x classes
};

// Refuses (ErrorKind::Stale) when ks was normalized differently from training.
Prediction predict(const MklModel& model, const BaseKernelSet& ks);

double accuracy(std::span<const int> predicted, std::span<const int> truth);

// Persistence as a directory of blobs.
void save_model(const MklModel& model, const std::string& directory);
MklModel load_model(const std::string& directory);
void save_kernels(const BaseKernelSet& ks, const std::string& directory);
BaseKernelSet load_kernels(const std::string& directory);

}  // namespace add
