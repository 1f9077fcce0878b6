#pragma once

// BnB node representation, the open-node queue, and batch assembly.
// A node fixes some support indicators to 0 (fixed_zero) or 1 (fixed_one);
// the remaining coordinates are free. Nodes are immutable once created; the
// queue is owned by the single orchestration thread.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <stdexcept>
#include <vector>

#include "bnbglm/errors.hpp"

namespace bnbglm {

enum class CoordState : std::uint8_t { kFree = 0, kFixedOne = 1, kFixedZero = 2 };

struct NodeState {
  std::vector<int> fixed_zero;  // J0, in the order coordinates were fixed
  std::vector<int> fixed_one;   // J1, in the order coordinates were fixed
  Eigen::VectorXd warm_start;   // length p, feasible for the node relaxation
  double lower_bound = -std::numeric_limits<double>::infinity();
  int depth = 0;

  int p() const { return static_cast<int>(warm_start.size()); }
  int reduced_budget(int k) const {
    return k - static_cast<int>(fixed_one.size());
  }
  bool is_leaf(int k) const {
    return reduced_budget(k) <= 0 ||
           static_cast<int>(fixed_zero.size() + fixed_one.size()) >= p();
  }
};

// Per-coordinate states for one node; the batched kernels use this layout.
inline std::vector<CoordState> coordinate_states(const NodeState& node) {
  std::vector<CoordState> states(node.p(), CoordState::kFree);
  for (int j : node.fixed_zero) states[j] = CoordState::kFixedZero;
  for (int j : node.fixed_one) states[j] = CoordState::kFixedOne;
  return states;
}

inline NodeState root_node(int p, int k) {
  if (p < 1 || k < 1 || k > p) throw input_error("root_node: need 1 <= k <= p");
  NodeState node;
  node.warm_start = Eigen::VectorXd::Zero(p);
  return node;
}

namespace detail {

// Restore sum_{free} |beta_j| / M <= kbar by scaling free coordinates down.
inline void restore_budget(NodeState& node, int k, double M) {
  const int kbar = node.reduced_budget(k);
  const std::vector<CoordState> states = coordinate_states(node);
  double sum = 0.0;
  for (int j = 0; j < node.p(); ++j)
    if (states[j] == CoordState::kFree) sum += std::abs(node.warm_start[j]);
  const double budget = static_cast<double>(kbar) * M;
  if (sum <= budget) return;
  const double scale = budget / sum * (1.0 - 1e-12);
  for (int j = 0; j < node.p(); ++j)
    if (states[j] == CoordState::kFree) node.warm_start[j] *= scale;
}

}  // namespace detail

// Split a node on free coordinate j. The zero child adds j to J0 and zeroes
// that warm-start coordinate; the one child adds j to J1. Both inherit the
// parent's certified bound and relaxed coefficients as warm starts, rescaled
// only if the budget check needs it. A one child whose reduced budget hits 0
// must fix all remaining free indicators to zero and becomes a leaf.
inline std::pair<NodeState, NodeState> branch(const NodeState& node, int j,
                                              const Eigen::VectorXd& relaxed_beta,
                                              int k, double M) {
  const std::vector<CoordState> states = coordinate_states(node);
  if (j < 0 || j >= node.p() || states[j] != CoordState::kFree)
    throw std::logic_error("branch: coordinate is not free");

  NodeState child0 = node;
  child0.fixed_zero.push_back(j);
  child0.warm_start = relaxed_beta;
  child0.warm_start[j] = 0.0;
  child0.depth = node.depth + 1;
  detail::restore_budget(child0, k, M);

  NodeState child1 = node;
  child1.fixed_one.push_back(j);
  child1.warm_start = relaxed_beta;
  child1.depth = node.depth + 1;
  if (child1.reduced_budget(k) <= 0) {
    for (int r = 0; r < node.p(); ++r) {
      if (r != j && states[r] == CoordState::kFree) {
        child1.fixed_zero.push_back(r);
        child1.warm_start[r] = 0.0;
      }
    }
  }
  detail::restore_budget(child1, k, M);
  return {std::move(child0), std::move(child1)};
}

struct Incumbent {
  std::vector<int> support;        // sorted, 0-based
  Eigen::VectorXd coefficients;    // aligned with support
  double objective = std::numeric_limits<double>::infinity();
};

// Best-bound-first queue with FIFO tie-break on equal bounds.
class NodeQueue {
 public:
  void push(NodeState node) {
    heap_.push(Entry{node.lower_bound, next_seq_++, std::move(node)});
  }

  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }

  double global_lb() const {
    return heap_.empty() ? std::numeric_limits<double>::infinity()
                         : heap_.top().bound;
  }

  NodeState pop() {
    Entry top = heap_.top();
    heap_.pop();
    return std::move(top.node);
  }

  Incumbent incumbent;

 private:
  struct Entry {
    double bound;
    std::uint64_t seq;
    NodeState node;
    bool operator>(const Entry& other) const {
      if (bound != other.bound) return bound > other.bound;
      return seq > other.seq;
    }
  };
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> heap_;
  std::uint64_t next_seq_ = 0;
};

struct AssembledBatch {
  std::vector<NodeState> nodes;
  int discarded = 0;  // nodes popped and dropped because bound >= threshold
};

// Pop up to batch_size nodes in queue order; nodes whose stored bound is
// already >= threshold are discarded permanently (they still count as
// processed). The batch is empty iff the queue drained.
inline AssembledBatch assemble_batch(NodeQueue& queue, int batch_size,
                                     double threshold) {
  if (batch_size < 1) throw input_error("assemble_batch: batch_size >= 1");
  AssembledBatch out;
  while (!queue.empty() &&
         static_cast<int>(out.nodes.size()) < batch_size) {
    NodeState node = queue.pop();
    if (node.lower_bound >= threshold) {
      ++out.discarded;
      continue;
    }
    out.nodes.push_back(std::move(node));
  }
  return out;
}

}  // namespace bnbglm
