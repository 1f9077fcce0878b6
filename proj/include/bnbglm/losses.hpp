#pragma once

// Scalar GLM losses: values, derivatives, convex conjugates, and the
// curvature constant used to pick proximal-gradient stepsizes.
//
// Conventions (documented prominently because they shift the effective
// strength of lambda2 relative to other solvers):
//   squared:  l(s, y) = (s - y)^2 / 2, so the derivative is the residual.
//   logistic: l(s, y) = log(1 + exp(-y s)) with labels y in {-1, +1}.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>

#include "bnbglm/errors.hpp"
#include "bnbglm/rng.hpp"

namespace bnbglm {

enum class LossKind { kSquared, kLogistic };

inline const char* loss_name(LossKind kind) {
  return kind == LossKind::kSquared ? "squared" : "logistic";
}

namespace detail {

inline void check_logistic_label(double y) {
  if (y != 1.0 && y != -1.0) {
    throw input_error("logistic label must be -1 or +1, got " +
                      std::to_string(y));
  }
}

// log(1 + exp(t)) without overflow for any t.
inline double log1p_exp(double t) {
  if (t > 0.0) return t + std::log1p(std::exp(-t));
  return std::log1p(std::exp(t));
}

// sigmoid(t) = 1 / (1 + exp(-t)) evaluated with negative exponents only.
inline double sigmoid(double t) {
  if (t >= 0.0) {
    const double e = std::exp(-t);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

inline double xlogx(double v) { return v > 0.0 ? v * std::log(v) : 0.0; }

}  // namespace detail

inline double loss_value(LossKind kind, double s, double y) {
  if (kind == LossKind::kSquared) {
    const double r = s - y;
    return 0.5 * r * r;
  }
  detail::check_logistic_label(y);
  return detail::log1p_exp(-y * s);
}

inline double loss_derivative(LossKind kind, double s, double y) {
  if (kind == LossKind::kSquared) return s - y;
  detail::check_logistic_label(y);
  return -y * detail::sigmoid(-y * s);
}

// Convex conjugate l*(zeta, y) = sup_s { zeta * s - l(s, y) }, extended-real.
// The logistic conjugate is the negative binary entropy of a = -zeta * y on
// [0, 1] and +infinity outside; 0 log 0 := 0.
inline double loss_conjugate(LossKind kind, double zeta, double y) {
  if (kind == LossKind::kSquared) return 0.5 * zeta * zeta + zeta * y;
  const double a = -zeta * y;
  if (a < 0.0 || a > 1.0) return std::numeric_limits<double>::infinity();
  return detail::xlogx(a) + detail::xlogx(1.0 - a);
}

// Curvature constant c_l * sigma_max(X)^2 bounding the Hessian of
// beta -> sum_i l(x_i' beta, y_i); c_l = 1 (squared) or 1/4 (logistic).
// sigma_max^2 is estimated by power iteration on X'X to relative tolerance
// 1e-4 (at most 100 rounds, fixed-seed start vector); the final constant is
// inflated by 1.01. An all-zero X yields the floor 1e-12.
inline double smoothness_constant(LossKind kind, const Eigen::MatrixXd& X) {
  if (X.size() == 0) throw input_error("smoothness_constant: empty matrix");
  const double c = kind == LossKind::kSquared ? 1.0 : 0.25;
  Xoshiro256pp rng(0x5eed5eedULL);
  Eigen::VectorXd v(X.cols());
  for (int j = 0; j < v.size(); ++j) v[j] = rng.uniform() - 0.5;
  const double v0 = v.norm();
  if (v0 == 0.0) v[0] = 1.0;
  v /= v.norm();

  double estimate = 0.0;
  Eigen::VectorXd xv(X.rows()), w(X.cols());
  for (int it = 0; it < 100; ++it) {
    xv.noalias() = X * v;
    w.noalias() = X.transpose() * xv;
    const double next = v.dot(w);  // = |X v|^2 for unit v
    const double wn = w.norm();
    if (wn == 0.0 || next <= 0.0) return 1e-12;
    v = w / wn;
    if (it > 0 && std::abs(next - estimate) <= 1e-4 * next) {
      estimate = next;
      break;
    }
    estimate = next;
  }
  return std::max(1.01 * c * estimate, 1e-12);
}

}  // namespace bnbglm
