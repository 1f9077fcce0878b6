#pragma once

// Indicator recovery from relaxed coefficients, rounding to feasible
// supports, batched box-constrained re-optimization, and branching-variable
// selection. The recovery implements the closed-form optimal relaxed
// indicators: free coordinates are capped at 1 above a threshold tau and
// scale linearly below it, where tau solves the budget equation
// sum_j min(1, |beta_j| / tau) = kbar on the free set.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "bnbglm/errors.hpp"
#include "bnbglm/losses.hpp"
#include "bnbglm/node_model.hpp"
#include "bnbglm/parallel.hpp"
#include "bnbglm/problem.hpp"

namespace bnbglm {

struct RecoveredIndicators {
  Eigen::VectorXd z;           // length p, 0 on J0, 1 on J1
  double tau = 0.0;            // threshold in (0, M]; M when the budget is slack
  int cap_count = 0;           // free coordinates capped at z = 1
  std::vector<int> sort_perm;  // free indices by descending |beta|
};

namespace detail {

// Free indices ordered by (|beta| descending, index ascending).
inline std::vector<int> sorted_free_indices(
    const Eigen::Ref<const Eigen::VectorXd>& beta, const CoordState* states,
    int p) {
  std::vector<int> order;
  for (int j = 0; j < p; ++j)
    if (states[j] == CoordState::kFree) order.push_back(j);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double ma = std::abs(beta[a]), mb = std::abs(beta[b]);
    if (ma != mb) return ma > mb;
    return a < b;
  });
  return order;
}

struct RecoveredCore {
  bool ok = false;
  bool binding = false;
  double tau = 0.0;
  int cap_count = 0;
  std::vector<int> perm;  // sorted free indices
};

// The three recovery cases. In the binding case, scan s = 0..kbar-1 for the
// smallest s with tau = (suffix magnitude sum) / (kbar - s) sandwiched
// between the s-th and (s+1)-th sorted magnitudes (the 0-th is +infinity).
inline RecoveredCore recover_core(const Eigen::Ref<const Eigen::VectorXd>& beta,
                                  const CoordState* states, int p, int kbar,
                                  double M) {
  RecoveredCore core;
  core.perm = sorted_free_indices(beta, states, p);
  const int pf = static_cast<int>(core.perm.size());
  if (kbar <= 0) {
    core.ok = true;
    core.tau = M;
    return core;
  }
  int nonzero = 0;
  for (int j : core.perm)
    if (beta[j] != 0.0) ++nonzero;
  if (nonzero <= kbar) {
    core.ok = true;
    core.tau = M;
    core.cap_count = nonzero;
    return core;
  }

  core.binding = true;
  std::vector<double> suffix(pf + 1, 0.0);  // suffix[r] = sum of mags from rank r
  for (int r = pf - 1; r >= 0; --r)
    suffix[r] = suffix[r + 1] + std::abs(beta[core.perm[r]]);
  for (int s = 0; s < kbar; ++s) {
    const double tau = suffix[s] / static_cast<double>(kbar - s);
    const double upper =
        s == 0 ? std::numeric_limits<double>::infinity()
               : std::abs(beta[core.perm[s - 1]]);
    const double lower = std::abs(beta[core.perm[s]]);
    if (upper >= tau && tau >= lower) {
      core.ok = true;
      core.tau = tau;
      core.cap_count = s;
      return core;
    }
  }
  return core;  // no valid s: beta violates the relaxation domain
}

}  // namespace detail

inline RecoveredIndicators recover_indicators(const Eigen::VectorXd& beta,
                                              const NodeState& node, int k,
                                              double M) {
  const std::vector<CoordState> states = coordinate_states(node);
  const int kbar = node.reduced_budget(k);
  detail::RecoveredCore core =
      detail::recover_core(beta, states.data(), node.p(), kbar, M);
  if (!core.ok || core.tau > M * (1.0 + 1e-9))
    throw input_error("recover_indicators: beta infeasible for node domain");

  RecoveredIndicators out;
  out.tau = core.tau;
  out.cap_count = core.cap_count;
  out.sort_perm = core.perm;
  out.z = Eigen::VectorXd::Zero(node.p());
  for (int j : node.fixed_one) out.z[j] = 1.0;
  if (kbar <= 0) return out;
  if (!core.binding) {
    for (int j : core.perm)
      if (beta[j] != 0.0) out.z[j] = 1.0;
    return out;
  }
  for (int r = 0; r < static_cast<int>(core.perm.size()); ++r) {
    const int j = core.perm[r];
    out.z[j] = r < core.cap_count ? 1.0 : std::abs(beta[j]) / core.tau;
  }
  return out;
}

// Support candidate: J1 plus the kbar largest free magnitudes (ties broken
// by smallest index; all-zero magnitudes fill deterministically by index).
inline std::vector<int> round_support(const Eigen::VectorXd& beta,
                                      const NodeState& node, int k) {
  const std::vector<CoordState> states = coordinate_states(node);
  const int kbar = node.reduced_budget(k);
  std::vector<int> support = node.fixed_one;
  if (kbar > 0) {
    const std::vector<int> order =
        detail::sorted_free_indices(beta, states.data(), node.p());
    const int take = std::min<int>(kbar, static_cast<int>(order.size()));
    support.insert(support.end(), order.begin(), order.begin() + take);
  }
  return support;
}

inline int select_branch_variable(const Eigen::VectorXd& beta,
                                  const NodeState& node) {
  const std::vector<CoordState> states = coordinate_states(node);
  int best = -1;
  double best_mag = -1.0;
  for (int j = 0; j < node.p(); ++j) {
    if (states[j] != CoordState::kFree) continue;
    const double mag = std::abs(beta[j]);
    if (mag > best_mag) {
      best_mag = mag;
      best = j;
    }
  }
  if (best < 0) throw std::logic_error("select_branch_variable: no free coordinate");
  return best;
}

struct ReoptResult {
  std::vector<Eigen::VectorXd> coefficients;  // aligned with each support
  std::vector<double> objectives;             // exact objective at the coefficients
};

// Minimize F(X_S b) + lambda2 |b|^2 over |b|_inf <= M for each support,
// by projected proximal gradient with stepsize 1 / (L_F + 2 lambda2). The
// predictor and gradient use gathered columns only. Batches are data-parallel
// across supports. Stops at gradient-mapping norm <= 1e-8 or 5000 iterations.
inline ReoptResult reoptimize_supports(
    const std::vector<std::vector<int>>& supports,
    const ProblemInstance& inst, double smoothness = 0.0, int workers = 1) {
  const int n = inst.n();
  double lips = smoothness;
  if (!(lips > 0.0)) lips = smoothness_constant(inst.loss, inst.X);
  const double step = 1.0 / (lips + 2.0 * inst.lambda2);

  ReoptResult out;
  out.coefficients.resize(supports.size());
  out.objectives.resize(supports.size());

  parallel_for(static_cast<int>(supports.size()), workers, [&](int b) {
    const std::vector<int>& S = supports[b];
    const int q = static_cast<int>(S.size());
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(q);
    Eigen::VectorXd scores(n), deriv(n), grad(q), next(q);
    Eigen::VectorXd probs;  // logistic keeps an explicit probability array
    if (inst.loss == LossKind::kLogistic) probs.resize(n);

    auto compute_scores = [&]() {
      scores.setZero();
      for (int r = 0; r < q; ++r)
        scores += beta[r] * inst.X.col(S[r]);
    };

    if (q > 0) {
      for (int it = 0; it < 5000; ++it) {
        compute_scores();
        if (inst.loss == LossKind::kLogistic) {
          for (int i = 0; i < n; ++i)
            probs[i] = detail::sigmoid(-inst.y[i] * scores[i]);
          for (int i = 0; i < n; ++i) deriv[i] = -inst.y[i] * probs[i];
        } else {
          deriv = scores - inst.y;
        }
        for (int r = 0; r < q; ++r)
          grad[r] = inst.X.col(S[r]).dot(deriv) + 2.0 * inst.lambda2 * beta[r];
        next = (beta - step * grad).cwiseMax(-inst.M).cwiseMin(inst.M);
        const double gm = (beta - next).norm() / step;
        beta = next;
        if (gm <= 1e-8) break;
      }
      compute_scores();
    } else {
      scores.setZero();
    }
    double obj = inst.lambda2 * beta.squaredNorm();
    for (int i = 0; i < n; ++i) obj += loss_value(inst.loss, scores[i], inst.y[i]);
    out.coefficients[b] = std::move(beta);
    out.objectives[b] = obj;
  });
  return out;
}

}  // namespace bnbglm
