#pragma once

// Batched node-dependent proximal operator and the node-dependent function
// values g and g*. Per column the pipeline is: pad magnitudes of non-free
// coordinates with a -infinity sentinel, sort the column descending, assign
// per-rank weights (the top kbar ranks carry the weight), run the
// boundary-seeded PAVA merge, and scatter pooled values back through the sort
// permutation. Fixed-in coordinates pay the Huber term unconditionally and
// sit outside the top-k sum, so their prox is the scalar Huber prox.
//
// H_M(q) = q^2 / 2 for |q| <= M and M |q| - M^2 / 2 outside (value- and
// slope-matched at the threshold).

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "bnbglm/errors.hpp"
#include "bnbglm/node_model.hpp"
#include "bnbglm/parallel.hpp"
#include "bnbglm/primal_heuristics.hpp"

namespace bnbglm {

inline double huber_value(double q, double M) {
  const double a = std::abs(q);
  return a <= M ? 0.5 * q * q : M * a - 0.5 * M * M;
}

// Minimizer of v -> (v - x)^2 / 2 + weight * H_M(v).
inline double prox_huber(double x, double weight, double M) {
  if (std::abs(x) <= (1.0 + weight) * M) return x / (1.0 + weight);
  return x - weight * M * (x > 0.0 ? 1.0 : -1.0);
}

// Per-node structure of one batch, stored columnwise with padded index
// arrays (sentinel -1) so every column has apparent length p.
struct BatchMeta {
  int p = 0;
  int m = 0;
  int k = 0;
  std::vector<CoordState> state;        // p x m, column-major
  std::vector<std::int32_t> j0, j1, jf; // p x m padded index arrays
  std::vector<std::int32_t> free_count;
  std::vector<std::int32_t> one_count;
  std::vector<std::int32_t> reduced_budget;

  const CoordState* column_state(int b) const { return state.data() + static_cast<std::size_t>(b) * p; }

  static BatchMeta from_nodes(const std::vector<NodeState>& nodes, int k) {
    BatchMeta meta;
    if (nodes.empty()) throw input_error("batch meta: empty batch");
    meta.p = nodes[0].p();
    meta.m = static_cast<int>(nodes.size());
    meta.k = k;
    meta.state.assign(static_cast<std::size_t>(meta.p) * meta.m,
                      CoordState::kFree);
    meta.j0.assign(static_cast<std::size_t>(meta.p) * meta.m, -1);
    meta.j1.assign(static_cast<std::size_t>(meta.p) * meta.m, -1);
    meta.jf.assign(static_cast<std::size_t>(meta.p) * meta.m, -1);
    meta.free_count.resize(meta.m);
    meta.one_count.resize(meta.m);
    meta.reduced_budget.resize(meta.m);
    for (int b = 0; b < meta.m; ++b) {
      const NodeState& node = nodes[b];
      if (node.p() != meta.p) throw input_error("batch meta: mixed dimensions");
      CoordState* col = meta.state.data() + static_cast<std::size_t>(b) * meta.p;
      std::int32_t* c0 = meta.j0.data() + static_cast<std::size_t>(b) * meta.p;
      std::int32_t* c1 = meta.j1.data() + static_cast<std::size_t>(b) * meta.p;
      std::int32_t* cf = meta.jf.data() + static_cast<std::size_t>(b) * meta.p;
      int i0 = 0, i1 = 0;
      for (int j : node.fixed_zero) {
        col[j] = CoordState::kFixedZero;
        c0[i0++] = j;
      }
      for (int j : node.fixed_one) {
        col[j] = CoordState::kFixedOne;
        c1[i1++] = j;
      }
      int nf = 0;
      for (int j = 0; j < meta.p; ++j)
        if (col[j] == CoordState::kFree) cf[nf++] = j;
      meta.free_count[b] = nf;
      meta.one_count[b] = i1;
      meta.reduced_budget[b] = std::max(0, k - i1);
    }
    return meta;
  }
};

// Scratch for the padded sort and the PAVA scan; per call, never shared.
struct PavaWorkspace {
  Eigen::MatrixXd keys_padded;   // p x m magnitudes with sentinel at non-free
  Eigen::MatrixXd keys_sorted;   // p x m, each column nonincreasing
  Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic> perm;
  Eigen::MatrixXd values;        // per-rank PAVA output

  void resize(int p, int m) {
    if (keys_padded.rows() != p || keys_padded.cols() < m) {
      keys_padded.resize(p, m);
      keys_sorted.resize(p, m);
      perm.resize(p, m);
      values.resize(p, m);
    }
  }
};

namespace detail {

constexpr double kSentinel = std::numeric_limits<double>::lowest();

// Descending sort of one padded column; ties broken by original index so the
// permutation is deterministic.
inline void sort_column(const double* keys, int p, std::int32_t* perm,
                        double* sorted) {
  for (int j = 0; j < p; ++j) perm[j] = j;
  std::sort(perm, perm + p, [&](std::int32_t a, std::int32_t b) {
    if (keys[a] != keys[b]) return keys[a] > keys[b];
    return a < b;
  });
  for (int r = 0; r < p; ++r) sorted[r] = keys[perm[r]];
}

// PAVA over one sorted column. Ranks r < kbar carry weight w, the rest 0, so
// the per-rank prox values are nonincreasing inside each run and the only
// possible violation starts at the kbar boundary. The pooled block expands
// left/right from that seed until both neighboring inequalities hold. Pooled
// sums are recomputed in ascending rank order so the result does not depend
// on the merge path.
inline void run_pava(const double* sorted, int pf, int kbar, double w,
                     double M, double* v, int& blk_lo, int& blk_hi,
                     double& blk_value) {
  blk_lo = 0;
  blk_hi = -1;
  blk_value = 0.0;
  for (int r = 0; r < pf; ++r)
    v[r] = r < kbar ? prox_huber(sorted[r], w, M) : sorted[r];
  if (kbar <= 0 || kbar >= pf) return;
  if (v[kbar - 1] >= v[kbar]) return;

  int lo = kbar - 1, hi = kbar;
  double pooled = 0.0;
  auto recompute = [&]() {
    double sum = 0.0;
    for (int r = lo; r <= hi; ++r) sum += sorted[r];
    const int len = hi - lo + 1;
    const double mean_w = w * static_cast<double>(kbar - lo) / len;
    pooled = prox_huber(sum / len, mean_w, M);
  };
  recompute();
  while (true) {
    if (lo > 0 && v[lo - 1] < pooled) {
      --lo;
      recompute();
      continue;
    }
    if (hi < pf - 1 && pooled < v[hi + 1]) {
      ++hi;
      recompute();
      continue;
    }
    break;
  }
  for (int r = lo; r <= hi; ++r) v[r] = pooled;
  blk_lo = lo;
  blk_hi = hi;
  blk_value = pooled;
}

}  // namespace detail

// prox of weight * g* for one column, evaluated at x (already scaled).
// Coordinates in J0 pass through unchanged; J1 coordinates take the scalar
// Huber prox; free coordinates go through sort + PAVA + signed scatter.
inline void conjugate_prox_column(const Eigen::Ref<const Eigen::VectorXd>& x,
                                  const CoordState* states, int p, int kbar,
                                  double weight, double M,
                                  Eigen::Ref<Eigen::VectorXd> out,
                                  PavaWorkspace& ws, int col = 0) {
  double* keys = ws.keys_padded.col(col).data();
  double* sorted = ws.keys_sorted.col(col).data();
  std::int32_t* perm = ws.perm.col(col).data();
  double* v = ws.values.col(col).data();

  int pf = 0;
  for (int j = 0; j < p; ++j) {
    if (states[j] == CoordState::kFree) {
      keys[j] = std::abs(x[j]);
      ++pf;
    } else {
      keys[j] = detail::kSentinel;
    }
  }
  detail::sort_column(keys, p, perm, sorted);
  int lo, hi;
  double pooled;
  detail::run_pava(sorted, pf, kbar, weight, M, v, lo, hi, pooled);

  for (int j = 0; j < p; ++j) {
    if (states[j] == CoordState::kFixedZero)
      out[j] = x[j];
    else if (states[j] == CoordState::kFixedOne)
      out[j] = prox_huber(x[j], weight, M);
  }
  for (int r = 0; r < pf; ++r) {
    const int j = perm[r];
    const double sign = x[j] > 0.0 ? 1.0 : (x[j] < 0.0 ? -1.0 : 0.0);
    out[j] = sign * v[r];
  }
}

inline Eigen::MatrixXd batched_conjugate_prox(const Eigen::MatrixXd& U_scaled,
                                              const BatchMeta& meta,
                                              double weight, double M,
                                              PavaWorkspace& ws,
                                              int workers = 1) {
  const int p = static_cast<int>(U_scaled.rows());
  const int m = static_cast<int>(U_scaled.cols());
  ws.resize(p, m);
  Eigen::MatrixXd out(p, m);
  parallel_for(m, workers, [&](int b) {
    conjugate_prox_column(U_scaled.col(b), meta.column_state(b), p,
                          meta.reduced_budget[b], weight, M, out.col(b), ws,
                          b);
  });
  return out;
}

namespace detail {

// prox of eta * G_N via the conjugate: beta = u - prox_{rho g*}(rho u) / rho
// with rho = 1 / (2 eta lambda2). Written directly so that J0 coordinates
// and free coordinates outside the active head come out exactly zero.
inline void prox_step_column(const Eigen::Ref<const Eigen::VectorXd>& u,
                             const CoordState* states, int p, int kbar,
                             double rho, double M,
                             Eigen::Ref<Eigen::VectorXd> out,
                             PavaWorkspace& ws, int col) {
  double* keys = ws.keys_padded.col(col).data();
  double* sorted = ws.keys_sorted.col(col).data();
  std::int32_t* perm = ws.perm.col(col).data();
  double* v = ws.values.col(col).data();

  int pf = 0;
  for (int j = 0; j < p; ++j) {
    if (states[j] == CoordState::kFree) {
      keys[j] = rho * std::abs(u[j]);
      ++pf;
    } else {
      keys[j] = kSentinel;
    }
  }
  sort_column(keys, p, perm, sorted);
  int lo, hi;
  double pooled;
  run_pava(sorted, pf, kbar, rho, M, v, lo, hi, pooled);

  const double inv_rho = 1.0 / rho;
  for (int j = 0; j < p; ++j) {
    if (states[j] == CoordState::kFixedZero)
      out[j] = 0.0;
    else if (states[j] == CoordState::kFixedOne)
      out[j] = u[j] - inv_rho * prox_huber(rho * u[j], rho, M);
  }
  for (int r = 0; r < pf; ++r) {
    const int j = perm[r];
    if (r >= kbar && (hi < lo || r < lo || r > hi)) {
      out[j] = 0.0;  // inactive tail: the conjugate prox is the identity there
      continue;
    }
    const double sign = u[j] > 0.0 ? 1.0 : (u[j] < 0.0 ? -1.0 : 0.0);
    out[j] = u[j] - inv_rho * sign * v[r];
  }
}

}  // namespace detail

// Moreau step for the batch: out = U - rho^{-1} prox_{rho g*}(rho U) with
// rho = (2 eta lambda2)^{-1}. The image is feasible for each node domain:
// J0 coordinates are exactly 0, |beta_j| <= M, and the free-budget check
// sum |beta_j| / M <= kbar holds up to roundoff.
inline Eigen::MatrixXd prox_step(const Eigen::MatrixXd& U, double eta,
                                 double lambda2, const BatchMeta& meta,
                                 double M, PavaWorkspace& ws,
                                 int workers = 1) {
  if (!(eta > 0.0) || !(lambda2 > 0.0))
    throw input_error("prox_step: eta and lambda2 must be positive");
  const int p = static_cast<int>(U.rows());
  const int m = static_cast<int>(U.cols());
  const double rho = 1.0 / (2.0 * eta * lambda2);
  ws.resize(p, m);
  Eigen::MatrixXd out(p, m);
  parallel_for(m, workers, [&](int b) {
    detail::prox_step_column(U.col(b), meta.column_state(b), p,
                             meta.reduced_budget[b], rho, M, out.col(b), ws,
                             b);
  });
  return out;
}

// --- node-dependent function values -------------------------------------

namespace detail {

// g(beta) = min_z (1/2) sum beta_j^2 / z_j over the node's z-polytope,
// evaluated through the recovered indicators; +infinity off the domain.
// Capped coordinates contribute beta^2 / 2, uncapped ones tau |beta| / 2.
inline double g_value_core(const Eigen::Ref<const Eigen::VectorXd>& beta,
                           const CoordState* states, int p, int kbar,
                           double M) {
  const double inf = std::numeric_limits<double>::infinity();
  const double box_tol = M * (1.0 + 1e-9);
  double fixed_part = 0.0;
  for (int j = 0; j < p; ++j) {
    switch (states[j]) {
      case CoordState::kFixedZero:
        if (beta[j] != 0.0) return inf;
        break;
      case CoordState::kFixedOne:
        if (std::abs(beta[j]) > box_tol) return inf;
        fixed_part += beta[j] * beta[j];
        break;
      case CoordState::kFree:
        if (std::abs(beta[j]) > box_tol) return inf;
        break;
    }
  }
  if (kbar <= 0) {
    for (int j = 0; j < p; ++j)
      if (states[j] == CoordState::kFree && beta[j] != 0.0) return inf;
    return 0.5 * fixed_part;
  }
  const RecoveredCore core = recover_core(beta, states, p, kbar, M);
  if (!core.ok || core.tau > M * (1.0 + 1e-9)) return inf;
  double free_part = 0.0;
  if (!core.binding) {
    for (int j : core.perm) free_part += beta[j] * beta[j];
  } else {
    for (int r = 0; r < static_cast<int>(core.perm.size()); ++r) {
      const double mag = std::abs(beta[core.perm[r]]);
      free_part += r < core.cap_count ? mag * mag : core.tau * mag;
    }
  }
  return 0.5 * (fixed_part + free_part);
}

// g*(q) = sum_{J1} H_M(q_j) + TopSum_{kbar} { H_M(q_j) : j free }; a TopSum
// over fewer than kbar finite entries sums all of them.
inline double g_conjugate_core(const Eigen::Ref<const Eigen::VectorXd>& q,
                               const CoordState* states, int p, int kbar,
                               double M, std::vector<double>& scratch) {
  double total = 0.0;
  scratch.clear();
  for (int j = 0; j < p; ++j) {
    if (states[j] == CoordState::kFixedOne)
      total += huber_value(q[j], M);
    else if (states[j] == CoordState::kFree)
      scratch.push_back(huber_value(q[j], M));
  }
  if (kbar <= 0) return total;
  if (static_cast<int>(scratch.size()) > kbar) {
    std::nth_element(scratch.begin(), scratch.begin() + kbar, scratch.end(),
                     std::greater<double>());
    scratch.resize(kbar);
  }
  for (double h : scratch) total += h;
  return total;
}

}  // namespace detail

inline double g_value(const Eigen::VectorXd& beta, const NodeState& node,
                      int k, double M) {
  const std::vector<CoordState> states = coordinate_states(node);
  return detail::g_value_core(beta, states.data(), node.p(),
                              node.reduced_budget(k), M);
}

inline double g_conjugate_value(const Eigen::VectorXd& q, const NodeState& node,
                                int k, double M) {
  const std::vector<CoordState> states = coordinate_states(node);
  std::vector<double> scratch;
  return detail::g_conjugate_core(q, states.data(), node.p(),
                                  node.reduced_budget(k), M, scratch);
}

}  // namespace bnbglm
