#pragma once

// Row-distributed evaluation of gradients, dual matrices, and objective
// terms. Each row group computes its local predictors, derivatives, and
// feature-space products; the coordinator reduces group results in ascending
// group order, so the outcome is a pure function of (inputs, D). The
// node-dependent terms g and g* are never partitioned; they act on the
// reduced quantities.

#include <Eigen/Dense>
#include <vector>

#include "bnbglm/errors.hpp"
#include "bnbglm/losses.hpp"
#include "bnbglm/parallel.hpp"
#include "bnbglm/problem.hpp"

namespace bnbglm {

struct RowPartition {
  std::vector<int> boundaries;  // D + 1 offsets, 0 = first, n = last

  int groups() const { return static_cast<int>(boundaries.size()) - 1; }
  int group_begin(int d) const { return boundaries[d]; }
  int group_size(int d) const { return boundaries[d + 1] - boundaries[d]; }
};

// Contiguous near-equal groups; the first (n mod D) groups get one extra row.
inline RowPartition partition_rows(const ProblemInstance& inst, int D) {
  const int n = inst.n();
  if (D < 1 || D > n)
    throw input_error("partition_rows: need 1 <= D <= n");
  RowPartition part;
  part.boundaries.resize(D + 1);
  const int base = n / D, extra = n % D;
  part.boundaries[0] = 0;
  for (int d = 0; d < D; ++d)
    part.boundaries[d + 1] = part.boundaries[d] + base + (d < extra ? 1 : 0);
  return part;
}

struct PartitionedEval {
  Eigen::MatrixXd gradient;         // X' R, reduced over groups
  Eigen::MatrixXd Q;                // (2 lambda2)^{-1} X' Z, reduced
  Eigen::VectorXd loss_terms;       // per column: sum_i l(S_ib, y_i)
  Eigen::VectorXd conjugate_terms;  // per column: sum_i l*(-Z_ib, y_i)
};

inline PartitionedEval partitioned_batch_eval(const Eigen::MatrixXd& B,
                                              const RowPartition& part,
                                              const ProblemInstance& inst,
                                              double lambda2,
                                              int workers = 1) {
  const int p = inst.p();
  const int m = static_cast<int>(B.cols());
  const int D = part.groups();
  if (B.rows() != p) throw input_error("partitioned eval: dimension mismatch");

  std::vector<Eigen::MatrixXd> grad_local(D), q_local(D);
  std::vector<Eigen::VectorXd> loss_local(D), conj_local(D);
  parallel_for(D, workers, [&](int d) {
    const int begin = part.group_begin(d);
    const int rows = part.group_size(d);
    const auto Xd = inst.X.middleRows(begin, rows);
    Eigen::MatrixXd S = Xd * B;
    Eigen::MatrixXd R(rows, m);
    for (int b = 0; b < m; ++b)
      for (int i = 0; i < rows; ++i)
        R(i, b) = loss_derivative(inst.loss, S(i, b), inst.y[begin + i]);
    Eigen::MatrixXd Z = -R;
    grad_local[d].noalias() = Xd.transpose() * R;
    q_local[d].noalias() = Xd.transpose() * Z;
    loss_local[d].resize(m);
    conj_local[d].resize(m);
    for (int b = 0; b < m; ++b) {
      double lsum = 0.0, csum = 0.0;
      for (int i = 0; i < rows; ++i) {
        lsum += loss_value(inst.loss, S(i, b), inst.y[begin + i]);
        csum += loss_conjugate(inst.loss, -Z(i, b), inst.y[begin + i]);
      }
      loss_local[d][b] = lsum;
      conj_local[d][b] = csum;
    }
  });

  PartitionedEval out;
  out.gradient = grad_local[0];
  out.Q = q_local[0];
  out.loss_terms = loss_local[0];
  out.conjugate_terms = conj_local[0];
  for (int d = 1; d < D; ++d) {
    out.gradient += grad_local[d];
    out.Q += q_local[d];
    out.loss_terms += loss_local[d];
    out.conjugate_terms += conj_local[d];
  }
  const double inv = 1.0 / (2.0 * lambda2);
  out.Q *= inv;
  return out;
}

}  // namespace bnbglm
