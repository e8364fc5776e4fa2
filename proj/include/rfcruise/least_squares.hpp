#pragma once

// Small dense Levenberg-Marquardt solver used by all fitting code.

#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Dense>

namespace rfcruise {

struct LeastSquaresOptions {
  int max_iterations = 200;
  double step_tolerance = 1e-10; // relative parameter step
  double initial_lambda = 1e-3;
  double gradient_tolerance = 1e-10; // max cosine between r and a Jacobian column
};

struct LeastSquaresResult {
  Eigen::VectorXd params;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;
  Eigen::MatrixXd covariance; // (J^T J)^+ at the solution, not scaled by the residual variance
  double rss = 0.0;
  int iterations = 0;
  bool converged = false;
  bool rank_deficient = false;

  /// Covariance scaled by the reduced chi-square (n - p degrees of freedom).
  Eigen::MatrixXd scaled_covariance() const {
    const auto dof = residuals.size() - params.size();
    const double s2 = dof > 0 ? rss / static_cast<double>(dof) : 0.0;
    return covariance * s2;
  }
};

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

inline Eigen::MatrixXd numeric_jacobian(const ResidualFn& f, const Eigen::VectorXd& p,
                                          const Eigen::VectorXd& r0) {
  Eigen::MatrixXd J(r0.size(), p.size());
  Eigen::VectorXd q = p;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    const double h = std::cbrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, std::abs(p[j]));
    q[j] = p[j] + h;
    const Eigen::VectorXd rp = f(q);
    q[j] = p[j] - h;
    const Eigen::VectorXd rm = f(q);
    q[j] = p[j];
    J.col(j) = (rp - rm) / (2.0 * h);
  }
  return J;
}

// MINPACK-style orthogonality test: the residual is (numerically) orthogonal
// to every column of J, so no descent direction is left.
inline bool gradient_converged(const Eigen::MatrixXd& J, const Eigen::VectorXd& r, double gtol) {
  const double rn = r.norm();
  if (rn == 0.0) return true;
  for (Eigen::Index j = 0; j < J.cols(); ++j) {
    const double cn = J.col(j).norm();
    if (cn > 0.0 && std::abs(J.col(j).dot(r)) / (cn * rn) > gtol) return false;
  }
  return true;
}

inline void finalize_covariance(LeastSquaresResult& res) {
  const Eigen::MatrixXd A = res.jacobian.transpose() * res.jacobian;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double smax = s.size() ? s[0] : 0.0;
  Eigen::VectorXd inv(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > 1e-13 * smax) {
      inv[i] = 1.0 / s[i];
    } else {
      res.rank_deficient = true;
      // Inflate rather than drop the unidentifiable direction.
      inv[i] = 1.0 / (1e-13 * std::max(smax, std::numeric_limits<double>::min()));
    }
  }
  if (smax > 0.0 && s[s.size() - 1] < 1e-10 * smax) res.rank_deficient = true;
  res.covariance = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Minimizes ||f(p)||^2 from p0. The Jacobian is numeric unless `jac` is given.
inline LeastSquaresResult levenberg_marquardt(
    const ResidualFn& f, Eigen::VectorXd p0, const LeastSquaresOptions& opt = {},
    const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& jac = {}) {
  LeastSquaresResult res;
  Eigen::VectorXd p = std::move(p0);
  Eigen::VectorXd r = f(p);
  double rss = r.squaredNorm();
  auto jacobian = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& rx) {
    return jac ? jac(x) : numeric_jacobian(f, x, rx);
  };
  Eigen::MatrixXd J = jacobian(p, r);
  double lambda = opt.initial_lambda;

  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    if (rss == 0.0) {
      res.converged = true;
      break;
    }
    const Eigen::MatrixXd A = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    Eigen::VectorXd d = A.diagonal().cwiseMax(1e-300);

    bool accepted = false;
    bool tiny_step = false;
    while (!accepted) {
      Eigen::MatrixXd M = A;
      M.diagonal() += lambda * d;
      const Eigen::VectorXd step = M.ldlt().solve(-g);
      if (!step.allFinite()) {
        lambda *= 10.0;
        if (lambda > 1e20) break;
        continue;
      }
      tiny_step = true;
      for (Eigen::Index i = 0; i < p.size(); ++i)
        tiny_step = tiny_step &&
                    std::abs(step[i]) <= opt.step_tolerance * (std::abs(p[i]) + opt.step_tolerance);
      // parameters near zero make the test above unreachable; weigh the step
      // by the column norms instead, which is unit-independent
      const Eigen::VectorXd dsc = A.diagonal().cwiseSqrt();
      tiny_step = tiny_step || dsc.cwiseProduct(step).norm() <= opt.step_tolerance * dsc.cwiseProduct(p).norm();
      const Eigen::VectorXd p_new = p + step;
      const Eigen::VectorXd r_new = f(p_new);
      const double rss_new = r_new.allFinite() ? r_new.squaredNorm()
                                               : std::numeric_limits<double>::infinity();
      if (rss_new <= rss) {
        p = p_new;
        r = r_new;
        rss = rss_new;
        lambda = std::max(lambda / 3.0, 1e-15);
        accepted = true;
      } else {
        if (tiny_step) break; // no further progress is representable
        lambda *= 4.0;
        if (lambda > 1e20) break;
      }
    }
    if (tiny_step) {
      res.converged = true;
      if (accepted) J = jacobian(p, r);
      ++it;
      break;
    }
    if (!accepted) {
      // stalled at the rounding floor of the residuals
      res.converged = gradient_converged(J, r, opt.gradient_tolerance);
      break;
    }
    J = jacobian(p, r);
    if (gradient_converged(J, r, opt.gradient_tolerance)) {
      res.converged = true;
      ++it;
      break;
    }
  }

  res.params = p;
  res.residuals = r;
  res.jacobian = J;
  res.rss = rss;
  res.iterations = it;
  finalize_covariance(res);
  return res;
}

} // namespace rfcruise
