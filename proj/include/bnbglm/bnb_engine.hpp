#pragma once

// Exact branch-and-bound orchestration. A single thread owns the open-node
// queue and the incumbent; batches of open nodes go through the batched
// relaxation solver, survivors are rounded and re-optimized in one batch, and
// unresolved nodes branch on the largest free relaxed magnitude. Child nodes
// whose reduced budget hits zero (or with no free coordinates left) skip the
// relaxation entirely: their re-optimization is exact, so they are held in a
// pending list and folded into the next re-optimization batch.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "bnbglm/errors.hpp"
#include "bnbglm/node_model.hpp"
#include "bnbglm/primal_heuristics.hpp"
#include "bnbglm/problem.hpp"
#include "bnbglm/relaxation.hpp"

namespace bnbglm {

struct SolverConfig {
  int batch_size = 0;  // nodes per batch; 0 selects automatically from memory
  std::uint64_t memory_budget = std::uint64_t(1) << 30;  // bytes, for auto
  double time_limit = std::numeric_limits<double>::infinity();  // seconds
  double prune_slack = 1e-6;  // delta, scaled by max(1, |UB|)
  RelaxConfig relax;
  bool profile = false;  // emit the component profile in reports
  int workers = 1;
};

enum class SolveStatus { kOptimal, kTimeLimit };

struct ComponentProfile {
  double lower_bound_seconds = 0.0;
  double reoptimization_seconds = 0.0;
  double transfer_seconds = 0.0;
  double branch_generate_seconds = 0.0;
  double total_seconds = 0.0;
};

struct Certificate {
  double optimal_value = std::numeric_limits<double>::infinity();
  std::vector<int> support;      // sorted, 0-based
  Eigen::VectorXd coefficients;  // aligned with support
  double gap_percent = 0.0;
  double lower_bound = -std::numeric_limits<double>::infinity();
  long long nodes_processed = 0;
  long long lb_batches = 0;
  long long reopt_batches = 0;
  int batch_size_used = 0;
  ComponentProfile profile;
  SolveStatus status = SolveStatus::kOptimal;
};

// Test and trace instrumentation; every callback is optional.
struct DebugHooks {
  std::function<void(const NodeState&, double)> on_dual_bound;
  std::function<void(double lb, double ub)> on_batch_boundary;
};

// Largest power of two whose per-node workspace fits in 90% of the budget,
// floored at one node. The lower-bound share counts the per-node columns of
// B, U, Q and the padded plus sorted sort keys (5p doubles). The
// re-optimization share counts the score and derivative arrays (n each), the
// coefficient and gradient arrays (k each), and for logistic loss the
// explicit probability array (n more), which is why logistic capacity never
// exceeds squared capacity at the same (n, p, k).
inline int auto_batch_size(std::uint64_t memory_budget, int n, int p, int k,
                           LossKind kind) {
  if (memory_budget == 0)
    throw input_error("auto_batch_size: budget must be positive");
  const double lb_bytes = 8.0 * 5.0 * p;
  const double loss_arrays = kind == LossKind::kLogistic ? 3.0 : 2.0;
  const double reopt_bytes = 8.0 * (loss_arrays * n + 2.0 * k);
  const double capacity =
      0.9 * static_cast<double>(memory_budget) / (lb_bytes + reopt_bytes);
  if (capacity < 2.0) return 1;
  int size = 1;
  while (2.0 * size <= capacity && size < (1 << 29)) size <<= 1;
  return size;
}

namespace detail {

struct SearchPolicy {
  // Nodes whose certified bound is >= threshold(ub) are discarded.
  std::function<double(double ub)> threshold;
  // Invoked for every re-optimized feasible model (support in construction
  // order: fixed-in coordinates first, then rounded ones by magnitude).
  std::function<void(const std::vector<int>&, const Eigen::VectorXd&, double)>
      on_model;
};

class ScopedTimer {
 public:
  explicit ScopedTimer(double& acc)
      : acc_(acc), begin_(std::chrono::steady_clock::now()) {}
  ~ScopedTimer() {
    acc_ += std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          begin_)
                .count();
  }

 private:
  double& acc_;
  std::chrono::steady_clock::time_point begin_;
};

inline Certificate run_bnb(const ProblemInstance& inst,
                           const SolverConfig& config,
                           const SearchPolicy& policy,
                           const DebugHooks* hooks = nullptr) {
  validate(inst);
  const auto wall_start = std::chrono::steady_clock::now();
  const double inf = std::numeric_limits<double>::infinity();
  Certificate cert;

  RelaxConfig relax_config = config.relax;
  relax_config.workers = config.workers;
  {
    ScopedTimer timer(cert.profile.lower_bound_seconds);
    if (!(relax_config.smoothness > 0.0))
      relax_config.smoothness = smoothness_constant(inst.loss, inst.X);
  }
  const int batch_size =
      config.batch_size > 0
          ? config.batch_size
          : auto_batch_size(config.memory_budget, inst.n(), inst.p(), inst.k,
                            inst.loss);
  cert.batch_size_used = batch_size;

  NodeQueue queue;
  queue.push(root_node(inst.p(), inst.k));
  std::vector<NodeState> pending_leaves;
  BatchWorkspace workspace;
  SolveStatus status = SolveStatus::kOptimal;

  auto elapsed = [&]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         wall_start)
        .count();
  };

  while (!queue.empty() || !pending_leaves.empty()) {
    if (elapsed() > config.time_limit) {
      status = SolveStatus::kTimeLimit;
      break;
    }
    const double threshold = policy.threshold(queue.incumbent.objective);

    std::vector<NodeState> relax_nodes, leaves;
    {
      ScopedTimer timer(cert.profile.transfer_seconds);
      AssembledBatch batch = assemble_batch(queue, batch_size, threshold);
      cert.nodes_processed += static_cast<long long>(batch.nodes.size()) +
                              batch.discarded;
      for (NodeState& leaf : pending_leaves) {
        ++cert.nodes_processed;
        if (leaf.lower_bound >= threshold) continue;
        leaves.push_back(std::move(leaf));
      }
      pending_leaves.clear();
      for (NodeState& node : batch.nodes) {
        if (node.is_leaf(inst.k))
          leaves.push_back(std::move(node));
        else
          relax_nodes.push_back(std::move(node));
      }
    }
    if (relax_nodes.empty() && leaves.empty()) continue;

    RelaxationResult relax;
    if (!relax_nodes.empty()) {
      ScopedTimer timer(cert.profile.lower_bound_seconds);
      std::function<void(int, double)> trace;
      if (hooks && hooks->on_dual_bound) {
        trace = [&](int b, double psi) {
          hooks->on_dual_bound(relax_nodes[b], psi);
        };
      }
      relax = solve_batch_relaxation(relax_nodes, inst, relax_config,
                                     threshold, &workspace, trace);
      ++cert.lb_batches;
    }

    // One re-optimization batch per loop pass: leaf supports followed by the
    // rounded supports of unresolved relaxation columns.
    std::vector<std::vector<int>> supports;
    std::vector<int> relax_slot(relax_nodes.size(), -1);
    ReoptResult reopt;
    {
      ScopedTimer timer(cert.profile.reoptimization_seconds);
      for (const NodeState& leaf : leaves) supports.push_back(leaf.fixed_one);
      for (int b = 0; b < static_cast<int>(relax_nodes.size()); ++b) {
        if (relax.status[b] == NodeStatus::kPrunable) continue;
        relax_slot[b] = static_cast<int>(supports.size());
        supports.push_back(
            round_support(relax.beta.col(b), relax_nodes[b], inst.k));
      }
      if (!supports.empty()) {
        reopt = reoptimize_supports(supports, inst, relax_config.smoothness,
                                    config.workers);
        ++cert.reopt_batches;
      }
    }

    {
      ScopedTimer timer(cert.profile.branch_generate_seconds);
      for (int s = 0; s < static_cast<int>(supports.size()); ++s) {
        const double objective = reopt.objectives[s];
        if (policy.on_model)
          policy.on_model(supports[s], reopt.coefficients[s], objective);
        if (objective < queue.incumbent.objective) {
          Incumbent& inc = queue.incumbent;
          inc.objective = objective;
          inc.support = supports[s];
          inc.coefficients = reopt.coefficients[s];
          // keep the stored support sorted with coefficients aligned
          std::vector<int> order(inc.support.size());
          for (int i = 0; i < static_cast<int>(order.size()); ++i) order[i] = i;
          std::sort(order.begin(), order.end(), [&](int a, int b) {
            return inc.support[a] < inc.support[b];
          });
          std::vector<int> sorted_support(order.size());
          Eigen::VectorXd sorted_coeffs(order.size());
          for (int i = 0; i < static_cast<int>(order.size()); ++i) {
            sorted_support[i] = inc.support[order[i]];
            sorted_coeffs[i] = inc.coefficients[order[i]];
          }
          inc.support = std::move(sorted_support);
          inc.coefficients = std::move(sorted_coeffs);
        }
      }

      const double post_threshold = policy.threshold(queue.incumbent.objective);
      for (int b = 0; b < static_cast<int>(relax_nodes.size()); ++b) {
        if (relax.status[b] == NodeStatus::kPrunable) continue;
        NodeState& node = relax_nodes[b];
        node.lower_bound = std::max(node.lower_bound, relax.bounds[b]);
        if (node.lower_bound >= post_threshold) continue;
        const int j = select_branch_variable(relax.beta.col(b), node);
        auto children = branch(node, j, relax.beta.col(b), inst.k, inst.M);
        for (NodeState* child : {&children.first, &children.second}) {
          if (child->is_leaf(inst.k))
            pending_leaves.push_back(std::move(*child));
          else
            queue.push(std::move(*child));
        }
      }
    }

    if (hooks && hooks->on_batch_boundary) {
      double lb = queue.global_lb();
      for (const NodeState& leaf : pending_leaves)
        lb = std::min(lb, leaf.lower_bound);
      hooks->on_batch_boundary(std::min(lb, queue.incumbent.objective),
                               queue.incumbent.objective);
    }
  }

  const double ub = queue.incumbent.objective;
  cert.status = status;
  cert.optimal_value = ub;
  cert.support = queue.incumbent.support;
  cert.coefficients = queue.incumbent.coefficients;
  if (status == SolveStatus::kOptimal) {
    cert.lower_bound = ub;
    cert.gap_percent = 0.0;
  } else {
    double lb = queue.global_lb();
    for (const NodeState& leaf : pending_leaves)
      lb = std::min(lb, leaf.lower_bound);
    lb = std::min(lb, ub);
    cert.lower_bound = lb;
    if (!std::isfinite(ub)) {
      cert.gap_percent = 100.0;
    } else {
      cert.gap_percent =
          100.0 * (ub - lb) / std::max(std::abs(ub), 1e-12);
    }
  }
  cert.profile.total_seconds = elapsed();
  return cert;
}

}  // namespace detail

// Certified solve of the cardinality-constrained GLM. The returned value is
// within delta * max(1, |UB|) of the true optimum (exactly optimal when the
// slack is zero, up to floating-point arithmetic); status reports whether the
// tree was exhausted or the time limit hit first.
inline Certificate solve(const ProblemInstance& inst,
                         const SolverConfig& config,
                         const DebugHooks* hooks = nullptr) {
  detail::SearchPolicy policy;
  const double delta = config.prune_slack;
  policy.threshold = [delta](double ub) {
    if (!std::isfinite(ub)) return std::numeric_limits<double>::infinity();
    return ub - delta * std::max(1.0, std::abs(ub));
  };
  return detail::run_bnb(inst, config, policy, hooks);
}

struct SweepRow {
  int batch_size = 0;
  double seconds = 0.0;
  long long nodes = 0;
  double gap_percent = 0.0;
  std::string status;  // "optimal", "time_limit", or an error message
};

// One full certified solve per batch size with identical configuration;
// errors are recorded per row and the sweep continues.
inline std::vector<SweepRow> batch_size_sweep(const ProblemInstance& inst,
                                              const std::vector<int>& sizes,
                                              const SolverConfig& config) {
  std::vector<SweepRow> rows;
  for (int size : sizes) {
    SweepRow row;
    row.batch_size = size;
    SolverConfig run_config = config;
    run_config.batch_size = size;
    try {
      const auto begin = std::chrono::steady_clock::now();
      const Certificate cert = solve(inst, run_config);
      row.seconds = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - begin)
                        .count();
      row.nodes = cert.nodes_processed;
      row.gap_percent = cert.gap_percent;
      row.status =
          cert.status == SolveStatus::kOptimal ? "optimal" : "time_limit";
    } catch (const std::exception& err) {
      row.status = std::string("error: ") + err.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace bnbglm
