#pragma once

// Batched lower-bound solver. Columns of B hold per-node coefficient
// iterates; one proximal-gradient scheme advances all of them against the
// shared design matrix, so the heavy work is two GEMMs per iteration plus
// column-local kernels. Dual candidates come for free from the loss
// derivatives (Z = -R), and every dual objective evaluated along the way is a
// valid lower bound by weak duality, whether or not the column has converged.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "bnbglm/errors.hpp"
#include "bnbglm/losses.hpp"
#include "bnbglm/node_model.hpp"
#include "bnbglm/parallel.hpp"
#include "bnbglm/problem.hpp"
#include "bnbglm/prox_kernel.hpp"

namespace bnbglm {

struct RelaxConfig {
  int max_iterations = 2000;
  double gap_tolerance = 1e-6;  // relative duality gap
  int check_interval = 10;      // iterations between bound evaluations
  bool acceleration = true;     // restarted accelerated scheme
  double smoothness = 0.0;      // c_l sigma_max(X)^2; <= 0 -> computed per call
  int workers = 1;
};

enum class NodeStatus { kPrunable, kConverged, kIterationCapped };

struct BatchWorkspace {
  Eigen::MatrixXd B;      // p x m coefficient iterates
  Eigen::MatrixXd Bnext;  // prox output before the momentum update
  Eigen::MatrixXd V;      // extrapolated iterates
  Eigen::MatrixXd S;      // n x m predictors
  Eigen::MatrixXd R;      // n x m loss derivatives
  Eigen::MatrixXd Z;      // n x m dual matrix (-R)
  Eigen::MatrixXd G;      // p x m gradient
  Eigen::MatrixXd U;      // p x m pre-prox point
  Eigen::MatrixXd Q;      // p x m scaled feature-space dual
  Eigen::VectorXd primal_values;
  Eigen::VectorXd dual_values;
  PavaWorkspace pava;

  void resize(int n, int p, int m) {
    B.resize(p, m);
    Bnext.resize(p, m);
    V.resize(p, m);
    S.resize(n, m);
    R.resize(n, m);
    Z.resize(n, m);
    G.resize(p, m);
    U.resize(p, m);
    Q.resize(p, m);
    primal_values.resize(m);
    dual_values.resize(m);
    pava.resize(p, m);
  }
};

namespace detail {

// S = X B and R = dl/ds entrywise; frozen columns keep their last values.
inline void refresh_predictions(const Eigen::MatrixXd& B,
                                const ProblemInstance& inst,
                                BatchWorkspace& ws,
                                const std::vector<std::uint8_t>* frozen,
                                int workers) {
  const int m = static_cast<int>(B.cols());
  for (int b = 0; b < m; ++b) {
    if (frozen && (*frozen)[b]) continue;
    if (!B.col(b).allFinite())
      throw numeric_error("relaxation: non-finite iterate in column " +
                          std::to_string(b));
  }
  ws.S.noalias() = inst.X * B;
  const int n = inst.n();
  parallel_for(m, workers, [&](int b) {
    if (frozen && (*frozen)[b]) return;
    if (inst.loss == LossKind::kSquared) {
      ws.R.col(b) = ws.S.col(b) - inst.y;
    } else {
      for (int i = 0; i < n; ++i)
        ws.R(i, b) = -inst.y[i] * sigmoid(-inst.y[i] * ws.S(i, b));
    }
  });
}

}  // namespace detail

// Gradient of the batch loss: X' R with S = X B; caches S and R.
inline const Eigen::MatrixXd& batched_gradient(
    const Eigen::MatrixXd& B, const ProblemInstance& inst, BatchWorkspace& ws,
    const std::vector<std::uint8_t>* frozen = nullptr, int workers = 1) {
  detail::refresh_predictions(B, inst, ws, frozen, workers);
  ws.G.noalias() = inst.X.transpose() * ws.R;
  return ws.G;
}

// Primal objective per column from fresh S and the iterates in ws.B;
// +infinity for columns outside their node domain.
inline const Eigen::VectorXd& primal_values(BatchWorkspace& ws,
                                            const BatchMeta& meta,
                                            const ProblemInstance& inst,
                                            int workers = 1) {
  const int n = inst.n();
  parallel_for(meta.m, workers, [&](int b) {
    double loss = 0.0;
    for (int i = 0; i < n; ++i)
      loss += loss_value(inst.loss, ws.S(i, b), inst.y[i]);
    const double g = detail::g_value_core(ws.B.col(b), meta.column_state(b),
                                          meta.p, meta.reduced_budget[b],
                                          inst.M);
    ws.primal_values[b] = loss + 2.0 * inst.lambda2 * g;
  });
  return ws.primal_values;
}

// Safe lower bounds: Z = -R, Q = (2 lambda2)^{-1} X' Z, and per column
// Psi_b = -sum_i l*(-Z_ib, y_i) - 2 lambda2 g*(Q_col). Valid for any B.
inline const Eigen::VectorXd& dual_bounds(BatchWorkspace& ws,
                                          const BatchMeta& meta,
                                          const ProblemInstance& inst,
                                          int workers = 1) {
  ws.Z = -ws.R;
  ws.Q.noalias() = inst.X.transpose() * ws.Z;
  const double inv = 1.0 / (2.0 * inst.lambda2);
  ws.Q *= inv;
  const int n = inst.n();
  parallel_for(meta.m, workers, [&](int b) {
    double conj = 0.0;
    for (int i = 0; i < n; ++i)
      conj += loss_conjugate(inst.loss, ws.R(i, b), inst.y[i]);
    std::vector<double> scratch;
    const double gconj = detail::g_conjugate_core(
        ws.Q.col(b), meta.column_state(b), meta.p, meta.reduced_budget[b],
        inst.M, scratch);
    ws.dual_values[b] = -conj - 2.0 * inst.lambda2 * gconj;
  });
  return ws.dual_values;
}

struct RelaxationResult {
  Eigen::MatrixXd beta;             // p x m final iterates
  std::vector<double> bounds;       // best dual bound seen per column
  std::vector<NodeStatus> status;
  std::vector<int> iterations;      // iterations until freeze (or the cap)
};

// Proximal-gradient solve over the batch. Per column, iteration stops when
// (a) the best dual bound reaches prune_threshold (column frozen, prunable),
// (b) the relative gap (Phi - Psi) / max(1, |Phi|) falls below tolerance, or
// (c) the iteration cap is hit. Momentum restarts whenever a column's duality
// gap increases between consecutive checks. Frozen columns are masked out of
// the entrywise kernels and the prox but stay in the GEMMs, so their columns
// are bit-stable after freezing.
inline RelaxationResult solve_batch_relaxation(
    const std::vector<NodeState>& batch, const ProblemInstance& inst,
    const RelaxConfig& config, double prune_threshold,
    BatchWorkspace* external_ws = nullptr,
    const std::function<void(int, double)>& dual_trace = nullptr) {
  if (batch.empty()) throw input_error("solve_batch_relaxation: empty batch");
  const int n = inst.n(), p = inst.p();
  const int m = static_cast<int>(batch.size());

  BatchWorkspace local_ws;
  BatchWorkspace& ws = external_ws ? *external_ws : local_ws;
  ws.resize(n, p, m);
  const BatchMeta meta = BatchMeta::from_nodes(batch, inst.k);

  double lips = config.smoothness;
  if (!(lips > 0.0)) lips = smoothness_constant(inst.loss, inst.X);
  const double eta = 1.0 / lips;
  const double rho = 1.0 / (2.0 * eta * inst.lambda2);

  for (int b = 0; b < m; ++b) ws.B.col(b) = batch[b].warm_start;
  ws.V = ws.B;

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::uint8_t> frozen(m, 0);
  std::vector<double> momentum(m, 1.0), best_dual(m, -inf), last_gap(m, inf);
  RelaxationResult result;
  result.bounds.assign(m, -inf);
  result.status.assign(m, NodeStatus::kIterationCapped);
  result.iterations.assign(m, config.max_iterations);
  int active = m;

  auto evaluate_bounds = [&](int iter) {
    detail::refresh_predictions(ws.B, inst, ws, &frozen, config.workers);
    primal_values(ws, meta, inst, config.workers);
    dual_bounds(ws, meta, inst, config.workers);
    for (int b = 0; b < m; ++b) {
      if (frozen[b]) continue;
      const double psi = ws.dual_values[b];
      const double phi = ws.primal_values[b];
      if (psi > best_dual[b]) best_dual[b] = psi;
      if (dual_trace) dual_trace(b, psi);
      const double gap = (phi - best_dual[b]) / std::max(1.0, std::abs(phi));
      if (best_dual[b] >= prune_threshold) {
        frozen[b] = 1;
        result.status[b] = NodeStatus::kPrunable;
        result.iterations[b] = iter;
        --active;
      } else if (gap <= config.gap_tolerance) {
        frozen[b] = 1;
        result.status[b] = NodeStatus::kConverged;
        result.iterations[b] = iter;
        --active;
      } else if (config.acceleration && phi - psi > last_gap[b]) {
        momentum[b] = 1.0;
        ws.V.col(b) = ws.B.col(b);
      }
      last_gap[b] = phi - psi;
    }
  };

  int iter = 0, last_eval = 0;
  while (iter < config.max_iterations && active > 0) {
    ++iter;
    batched_gradient(ws.V, inst, ws, &frozen, config.workers);
    parallel_for(m, config.workers, [&](int b) {
      if (frozen[b]) return;
      ws.U.col(b) = ws.V.col(b) - eta * ws.G.col(b);
      detail::prox_step_column(ws.U.col(b), meta.column_state(b), p,
                               meta.reduced_budget[b], rho, inst.M,
                               ws.Bnext.col(b), ws.pava, b);
      if (config.acceleration) {
        const double t = momentum[b];
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        ws.V.col(b) =
            ws.Bnext.col(b) +
            ((t - 1.0) / t_next) * (ws.Bnext.col(b) - ws.B.col(b));
        momentum[b] = t_next;
      } else {
        ws.V.col(b) = ws.Bnext.col(b);
      }
      ws.B.col(b) = ws.Bnext.col(b);
    });
    if (iter % config.check_interval == 0) {
      evaluate_bounds(iter);
      last_eval = iter;
    }
  }
  if (active > 0 && last_eval != iter) evaluate_bounds(iter);

  result.beta = ws.B;
  result.bounds = best_dual;
  return result;
}

}  // namespace bnbglm
