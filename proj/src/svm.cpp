#include "add/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "add/error.hpp"

namespace add {

double SvmSolution::decision(const Eigen::Ref<const Eigen::VectorXd>& kernel_column,
                             std::span<const int> labels) const {
  double f = bias;
  for (Eigen::Index i = 0; i < alpha.size(); ++i) {
    if (alpha(i) != 0.0) f += alpha(i) * labels[i] * kernel_column(i);
  }
  return f;
}

namespace {

constexpr double kTau = 1e-12;

class SmoSolver {
 public:
  SmoSolver(const Eigen::MatrixXd& Q, Eigen::VectorXd y, double C)
      : Q_(Q), y_(std::move(y)), C_(C), n_(Q.rows()),
        alpha_(Eigen::VectorXd::Zero(n_)), grad_(Eigen::VectorXd::Constant(n_, -1.0)) {}

  // Runs until m(a) - M(a) < tol. Returns false when the iteration budget ran out.
  bool solve(double tol, long max_iterations, long& iterations) {
    while (iterations < max_iterations) {
      Eigen::Index i = -1, j = -1;
      if (!select(tol, i, j)) return true;
      update(i, j);
      ++iterations;
    }
    return false;
  }

  const Eigen::VectorXd& alpha() const { return alpha_; }
  const Eigen::VectorXd& gradient() const { return grad_; }

 private:
  bool in_up(Eigen::Index t) const {
    return (y_(t) > 0 && alpha_(t) < C_) || (y_(t) < 0 && alpha_(t) > 0);
  }
  bool in_low(Eigen::Index t) const {
    return (y_(t) > 0 && alpha_(t) > 0) || (y_(t) < 0 && alpha_(t) < C_);
  }

  bool select(double tol, Eigen::Index& out_i, Eigen::Index& out_j) const {
    double gmax = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < n_; ++t) {
      if (in_up(t) && -y_(t) * grad_(t) >= gmax) {
        if (-y_(t) * grad_(t) > gmax || i < 0) {
          gmax = -y_(t) * grad_(t);
          i = t;
        }
      }
    }
    double gmin = std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index j = -1;
    for (Eigen::Index t = 0; t < n_; ++t) {
      if (!in_low(t)) continue;
      const double v = -y_(t) * grad_(t);
      gmin = std::min(gmin, v);
      if (i < 0) continue;
      const double b = gmax - v;
      if (b <= 0) continue;
      double a = Q_(i, i) + Q_(t, t) - 2.0 * y_(i) * y_(t) * Q_(i, t);
      if (a <= 0) a = kTau;
      const double score = -(b * b) / a;
      if (score < best) {
        best = score;
        j = t;
      }
    }
    if (i < 0 || j < 0 || gmax - gmin < tol) return false;
    out_i = i;
    out_j = j;
    return true;
  }

  void update(Eigen::Index i, Eigen::Index j) {
    const double ai = alpha_(i);
    const double aj = alpha_(j);
    if (y_(i) != y_(j)) {
      double quad = Q_(i, i) + Q_(j, j) + 2.0 * Q_(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (-grad_(i) - grad_(j)) / quad;
      const double diff = ai - aj;
      double ni = ai + delta;
      double nj = aj + delta;
      if (diff > 0) {
        if (nj < 0) { nj = 0; ni = diff; }
      } else {
        if (ni < 0) { ni = 0; nj = -diff; }
      }
      if (diff > 0) {
        if (ni > C_) { ni = C_; nj = C_ - diff; }
      } else {
        if (nj > C_) { nj = C_; ni = C_ + diff; }
      }
      alpha_(i) = ni;
      alpha_(j) = nj;
    } else {
      double quad = Q_(i, i) + Q_(j, j) - 2.0 * Q_(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (grad_(i) - grad_(j)) / quad;
      const double sum = ai + aj;
      double ni = ai - delta;
      double nj = aj + delta;
      if (sum > C_) {
        if (ni > C_) { ni = C_; nj = sum - C_; }
      } else {
        if (nj < 0) { nj = 0; ni = sum; }
      }
      if (sum > C_) {
        if (nj > C_) { nj = C_; ni = sum - C_; }
      } else {
        if (ni < 0) { ni = 0; nj = sum; }
      }
      alpha_(i) = ni;
      alpha_(j) = nj;
    }
    const double di = alpha_(i) - ai;
    const double dj = alpha_(j) - aj;
    grad_ += Q_.col(i) * di + Q_.col(j) * dj;
  }

  const Eigen::MatrixXd& Q_;
  Eigen::VectorXd y_;
  double C_;
  Eigen::Index n_;
  Eigen::VectorXd alpha_;
  Eigen::VectorXd grad_;  // Q a - 1
};

}  // namespace

SvmSolution svm_train(const Eigen::MatrixXd& K, std::span<const int> labels,
                      const SvmOptions& options) {
  const Eigen::Index n = K.rows();
  require(K.cols() == n && static_cast<Eigen::Index>(labels.size()) == n,
          ErrorKind::Parameter, "kernel and label sizes disagree");
  require(options.C > 0.0, ErrorKind::Parameter, "C must be positive");
  bool pos = false, neg = false;
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    require(labels[i] == 1 || labels[i] == -1, ErrorKind::Parameter,
            "SVM labels must be +1 or -1");
    y(i) = labels[i];
    pos |= labels[i] == 1;
    neg |= labels[i] == -1;
  }
  require(pos && neg, ErrorKind::Parameter, "SVM needs both classes");
  require((K - K.transpose()).cwiseAbs().maxCoeff() <=
              1e-9 * std::max(1.0, K.cwiseAbs().maxCoeff()),
          ErrorKind::Parameter, "SVM kernel must be symmetric");

  SvmSolution sol;
  Eigen::MatrixXd kernel = K;
  const double trace = std::max(K.trace(), std::numeric_limits<double>::min());
  const double min_eig =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(kernel, Eigen::EigenvaluesOnly)
          .eigenvalues()
          .minCoeff();
  if (min_eig < -1e-6 * trace) {
    sol.jitter = -min_eig + 1e-8 * trace;
    kernel.diagonal().array() += sol.jitter;
    sol.warnings.push_back("indefinite kernel (min eigenvalue " + std::to_string(min_eig) +
                           "); added diagonal jitter " + std::to_string(sol.jitter));
  }
  const Eigen::MatrixXd Q = (y * y.transpose()).cwiseProduct(kernel);

  SmoSolver smo(Q, y, options.C);
  double tol = options.tolerance;
  for (;;) {
    if (!smo.solve(tol, options.max_iterations, sol.iterations))
      fail(ErrorKind::Solver, "SMO did not converge within " +
                                  std::to_string(options.max_iterations) + " iterations");

    const Eigen::VectorXd& a = smo.alpha();
    const Eigen::VectorXd& g = smo.gradient();
    const double quad = a.dot(Q * a);
    sol.dual_objective = a.sum() - 0.5 * quad;

    // b from free support vectors, else the midpoint of the feasible interval.
    double sum_free = 0.0;
    int free = 0;
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < n; ++t) {
      const double yg = y(t) * g(t);
      if (a(t) > 0.0 && a(t) < options.C) {
        sum_free += -yg;
        ++free;
      } else if ((a(t) >= options.C && y(t) < 0) || (a(t) <= 0.0 && y(t) > 0)) {
        lb = std::max(lb, -yg);
      } else {
        ub = std::min(ub, -yg);
      }
    }
    if (free) {
      sol.bias = sum_free / free;
    } else if (std::isfinite(ub) && std::isfinite(lb)) {
      sol.bias = (ub + lb) / 2.0;
    } else {
      sol.bias = std::isfinite(ub) ? ub : (std::isfinite(lb) ? lb : 0.0);
    }

    double hinge = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
      // y_t f(x_t) = y_t (sum_j a_j y_j K_tj + b) = (Q a)_t + y_t b
      const double margin = (g(t) + 1.0) + y(t) * sol.bias;
      hinge += std::max(0.0, 1.0 - margin);
    }
    sol.primal_objective = 0.5 * quad + options.C * hinge;
    sol.duality_gap = sol.primal_objective - sol.dual_objective;
    if (sol.duality_gap <= options.gap_tolerance * std::abs(sol.dual_objective) ||
        tol <= 1e-13) {
      break;
    }
    tol *= 0.1;
  }
  sol.alpha = smo.alpha();
  return sol;
}

}  // namespace add
