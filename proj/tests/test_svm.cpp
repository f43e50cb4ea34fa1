#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "add/error.hpp"
#include "add/svm.hpp"
#include "support.hpp"

using namespace add;
using testing::kind_of;

namespace {

// Euclidean projection onto {0 <= a <= C, y^T a = 0} by bisection on the
// multiplier of the equality constraint.
Eigen::VectorXd project_feasible(const Eigen::VectorXd& v, const Eigen::VectorXd& y, double C) {
  auto at = [&](double mu) {
    return (v - mu * y).cwiseMax(0.0).cwiseMin(C).eval();
  };
  double lo = -1e6, hi = 1e6;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    // y^T a(mu) is non-increasing in mu.
    if (y.dot(at(mid)) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return at(0.5 * (lo + hi));
}

// Accelerated projected gradient on the dual; slow but independent of SMO.
Eigen::VectorXd oracle_dual(const Eigen::MatrixXd& K, const Eigen::VectorXd& y, double C) {
  const Eigen::MatrixXd Q = (y * y.transpose()).cwiseProduct(K);
  const double L = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Q).eigenvalues().maxCoeff();
  Eigen::VectorXd a = Eigen::VectorXd::Zero(y.size()), z = a;
  double t = 1.0;
  for (int it = 0; it < 200000; ++it) {
    const Eigen::VectorXd grad = Eigen::VectorXd::Ones(y.size()) - Q * z;  // ascent
    const Eigen::VectorXd next = project_feasible(z + grad / L, y, C);
    const double t_next = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
    z = next + ((t - 1.0) / t_next) * (next - a);
    if ((next - a).cwiseAbs().maxCoeff() < 1e-14 && it > 100) {
      a = next;
      break;
    }
    a = next;
    t = t_next;
  }
  return a;
}

double dual_value(const Eigen::MatrixXd& K, const Eigen::VectorXd& y, const Eigen::VectorXd& a) {
  const Eigen::MatrixXd Q = (y * y.transpose()).cwiseProduct(K);
  return a.sum() - 0.5 * a.dot(Q * a);
}

struct Problem {
  Eigen::MatrixXd K;
  std::vector<int> labels;
  Eigen::VectorXd y;
};

Problem random_problem(int n, int dim, std::mt19937_64& rng, double overlap) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd x(n, dim);
  Problem p;
  p.y.resize(n);
  for (int i = 0; i < n; ++i) {
    const int label = i % 2 == 0 ? 1 : -1;
    p.labels.push_back(label);
    p.y(i) = label;
    for (int d = 0; d < dim; ++d) x(i, d) = g(rng) * overlap + (d == 0 ? label : 0.0);
  }
  p.K.resize(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) p.K(i, j) = std::exp(-0.5 * (x.row(i) - x.row(j)).squaredNorm());
  return p;
}

Eigen::VectorXd decisions(const SvmSolution& s, const Eigen::MatrixXd& K,
                          std::span<const int> labels) {
  Eigen::VectorXd f(K.rows());
  for (Eigen::Index i = 0; i < K.rows(); ++i) f(i) = s.decision(K.col(i), labels);
  return f;
}

}  // namespace

TEST_CASE("two opposite points: closed-form multipliers") {
  // x1 = +1, x2 = -1 under the linear kernel.
  Eigen::Matrix2d K;
  K << 1, -1, -1, 1;
  const std::vector<int> labels{1, -1};
  const SvmSolution s = svm_train(K, labels, {.C = 100.0});
  CHECK(s.alpha(0) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(s.alpha(1) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(std::abs(s.bias) <= 1e-9);
  CHECK(s.dual_objective == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(s.decision(K.col(0), labels) == doctest::Approx(1.0).epsilon(1e-9));

  // A tight box caps the multipliers.
  const SvmSolution capped = svm_train(K, labels, {.C = 0.2});
  CHECK(capped.alpha(0) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(capped.alpha(1) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("SMO agrees with an accelerated projected-gradient oracle") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    CAPTURE(trial);
    const double C = trial % 2 == 0 ? 1.0 : 10.0;
    const Problem p = random_problem(10, 3, rng, trial < 5 ? 0.6 : 1.5);
    const SvmSolution s = svm_train(p.K, p.labels, {.C = C});
    const Eigen::VectorXd oracle = oracle_dual(p.K, p.y, C);
    CHECK((s.alpha - oracle).cwiseAbs().maxCoeff() <= 1e-3);
    CHECK(s.dual_objective == doctest::Approx(dual_value(p.K, p.y, oracle)).epsilon(1e-6));

    // Feasibility.
    CHECK(std::abs(s.alpha.dot(p.y)) <= 1e-10);
    CHECK(s.alpha.minCoeff() >= 0.0);
    CHECK(s.alpha.maxCoeff() <= C);
    CHECK(s.duality_gap >= -1e-9);
    CHECK(s.duality_gap <= 1e-4 * std::abs(s.dual_objective) + 1e-9);
  }
}

TEST_CASE("KKT conditions hold at the solution") {
  std::mt19937_64 rng(5);
  const Problem p = random_problem(40, 4, rng, 1.0);
  const double C = 2.0;
  const SvmSolution s = svm_train(p.K, p.labels, {.C = C});
  const Eigen::VectorXd f = decisions(s, p.K, p.labels);
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    const double margin = p.y(i) * f(i);
    if (s.alpha(i) < 1e-8)
      CHECK(margin >= 1.0 - 1e-3);
    else if (s.alpha(i) > C - 1e-8)
      CHECK(margin <= 1.0 + 1e-3);
    else
      CHECK(margin == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("duplicating every point with half the box leaves decisions unchanged") {
  std::mt19937_64 rng(12);
  const Problem p = random_problem(12, 2, rng, 1.2);
  const SvmSolution base = svm_train(p.K, p.labels, {.C = 4.0});

  Eigen::MatrixXd K2(24, 24);
  K2 << p.K, p.K, p.K, p.K;
  std::vector<int> labels2 = p.labels;
  labels2.insert(labels2.end(), p.labels.begin(), p.labels.end());
  const SvmSolution dup = svm_train(K2, labels2, {.C = 2.0});

  const Eigen::VectorXd f1 = decisions(base, p.K, p.labels);
  Eigen::VectorXd f2(12);
  for (int i = 0; i < 12; ++i) f2(i) = dup.decision(K2.col(i), labels2);
  CHECK((f1 - f2).cwiseAbs().maxCoeff() <= 1e-3);
  CHECK(dup.dual_objective == doctest::Approx(base.dual_objective).epsilon(1e-4));
}

TEST_CASE("indefinite kernels get jitter and a warning") {
  Eigen::Matrix3d K;
  K << 1, 0.9, -0.9, 0.9, 1, 0.9, -0.9, 0.9, 1;  // min eigenvalue below zero
  const std::vector<int> labels{1, -1, 1};
  const SvmSolution s = svm_train(K, labels, {.C = 1.0});
  CHECK(s.jitter > 0.0);
  CHECK_FALSE(s.warnings.empty());
}

TEST_CASE("input validation") {
  const Eigen::Matrix2d K = Eigen::Matrix2d::Identity();
  const std::vector<int> same{1, 1}, bad{1, 0}, ok{1, -1}, short_labels{1};
  CHECK(kind_of([&] { svm_train(K, same); }) == ErrorKind::Parameter);
  CHECK(kind_of([&] { svm_train(K, bad); }) == ErrorKind::Parameter);
  CHECK(kind_of([&] { svm_train(K, short_labels); }) == ErrorKind::Parameter);
  CHECK(kind_of([&] { svm_train(K, ok, {.C = 0.0}); }) == ErrorKind::Parameter);
  Eigen::Matrix2d asym;
  asym << 1, 0.5, 0.1, 1;
  CHECK(kind_of([&] { svm_train(asym, ok); }) == ErrorKind::Parameter);

  std::mt19937_64 rng(3);
  const Problem p = random_problem(30, 2, rng, 1.5);
  CHECK(kind_of([&] { svm_train(p.K, p.labels, {.C = 10.0, .max_iterations = 1}); }) ==
        ErrorKind::Solver);
}
