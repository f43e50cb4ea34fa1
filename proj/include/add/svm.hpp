#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace add {

struct SvmOptions {
  double C = 10.0;
  double tolerance = 1e-5;      // KKT violation m(a) - M(a)
  double gap_tolerance = 1e-4;  // relative duality gap accepted at exit
  long max_iterations = 10'000'000;
};

struct SvmSolution {
  Eigen::VectorXd alpha;
  double bias = 0.0;
  double dual_objective = 0.0;    // sum a - 1/2 a^T Q a
  double primal_objective = 0.0;  // 1/2 |w|^2 + C sum hinge
  double duality_gap = 0.0;
  long iterations = 0;
  double jitter = 0.0;            // diagonal shift applied to an indefinite kernel
  std::vector<std::string> warnings;

  // f(x) = sum_i a_i y_i k(x_i, x) + b for a column of kernel values.
  double decision(const Eigen::Ref<const Eigen::VectorXd>& kernel_column,
                  std::span<const int> labels) const;
};

// C-SVM dual solved by SMO with second-order working-set selection.
// `labels` are +1/-1 with both present; `K` must be symmetric.
SvmSolution svm_train(const Eigen::MatrixXd& K, std::span<const int> labels,
                      const SvmOptions& options = {});

}  // namespace add
