#pragma once

// Certified support-level Rashomon collection and the trie-and-offset pool.
// The search reuses the BnB loop with a looser pruning threshold
// min((1 + epsilon) UB, Nth-best stored objective); pruning is strict
// (LB > tau), so supports sitting exactly on the boundary are kept. Supports
// are stored as paths in a prefix trie; all re-optimized coefficients live in
// one flat vector sliced by an offset table, so storage is sum |S_m| numbers
// rather than N * p.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <vector>

#include "bnbglm/bnb_engine.hpp"
#include "bnbglm/errors.hpp"
#include "bnbglm/losses.hpp"
#include "bnbglm/problem.hpp"

namespace bnbglm {

struct RashomonConfig {
  double epsilon = 0.0;
  long long cap = -1;  // keep only the best N supports; -1 = unlimited
};

class SupportTrie {
 public:
  struct Record {
    int node = 0;        // trie node whose root path spells the support
    double objective = 0.0;
  };

  SupportTrie() {
    nodes_.push_back({-1, -1});  // root
    children_.emplace_back();
    offsets_.push_back(0);
  }

  // Walks/creates the path for the insertion sequence, appends the
  // coefficients (ordered like the sequence) to the flat vector, and extends
  // the offsets. Idempotent on support sets: a set already present returns
  // its existing leaf without appending.
  int insert(const std::vector<int>& sequence,
             const Eigen::VectorXd& coefficients, double objective) {
    if (static_cast<int>(sequence.size()) != coefficients.size())
      throw input_error("trie: sequence and coefficient lengths differ");
    std::vector<int> key = sequence;
    std::sort(key.begin(), key.end());
    for (std::size_t i = 1; i < key.size(); ++i)
      if (key[i] == key[i - 1])
        throw input_error("trie: sequence labels must be distinct");
    const auto seen = index_.find(key);
    if (seen != index_.end()) return seen->second;

    int node = 0;
    for (int label : sequence) {
      int next = -1;
      for (const auto& edge : children_[node]) {
        if (edge.first == label) {
          next = edge.second;
          break;
        }
      }
      if (next < 0) {
        next = static_cast<int>(nodes_.size());
        nodes_.push_back({node, label});
        children_.emplace_back();
        children_[node].emplace_back(label, next);
      }
      node = next;
    }
    const int record = static_cast<int>(records_.size());
    records_.push_back({node, objective});
    for (int i = 0; i < coefficients.size(); ++i)
      coefficients_.push_back(coefficients[i]);
    offsets_.push_back(static_cast<long long>(coefficients_.size()));
    index_.emplace(std::move(key), record);
    return record;
  }

  struct Recovered {
    std::vector<int> support;          // sorted set
    std::vector<int> path;             // root-to-leaf labels
    std::vector<double> coefficients;  // ordered like path
    double objective = 0.0;
  };

  Recovered recover(int record) const {
    if (record < 0 || record >= static_cast<int>(records_.size()))
      throw input_error("trie: unknown leaf record");
    Recovered out;
    out.objective = records_[record].objective;
    for (int v = records_[record].node; v != 0; v = nodes_[v].parent)
      out.path.push_back(nodes_[v].label);
    std::reverse(out.path.begin(), out.path.end());
    out.support = out.path;
    std::sort(out.support.begin(), out.support.end());
    const long long lo = offsets_[record], hi = offsets_[record + 1];
    out.coefficients.assign(coefficients_.begin() + lo,
                            coefficients_.begin() + hi);
    return out;
  }

  int size() const { return static_cast<int>(records_.size()); }
  const std::vector<Record>& records() const { return records_; }
  const std::vector<double>& coefficients() const { return coefficients_; }
  const std::vector<long long>& offsets() const { return offsets_; }
  int trie_node_count() const { return static_cast<int>(nodes_.size()); }
  int parent_of(int v) const { return nodes_[v].parent; }
  int label_of(int v) const { return nodes_[v].label; }

 private:
  struct TrieNode {
    int parent;
    int label;
  };
  std::vector<TrieNode> nodes_;
  std::vector<std::vector<std::pair<int, int>>> children_;
  std::vector<Record> records_;
  std::vector<double> coefficients_;
  std::vector<long long> offsets_;
  std::map<std::vector<int>, int> index_;  // sorted support -> record
};

struct RashomonResult {
  Certificate certificate;
  SupportTrie pool;
};

namespace detail {

struct StagedModel {
  std::vector<int> sequence;
  Eigen::VectorXd coefficients;
  double objective;
};

}  // namespace detail

// Runs the BnB loop with the Rashomon pruning rule and returns the certified
// pool: every support with v(S) <= (1 + epsilon) * optimum when the cap is
// inactive, otherwise the best N of them. Found models are staged during the
// search and compacted against the final threshold at termination.
inline RashomonResult collect_rashomon(const ProblemInstance& inst,
                                       const SolverConfig& config,
                                       const RashomonConfig& rconfig) {
  if (rconfig.epsilon < 0.0)
    throw input_error("rashomon: epsilon must be nonnegative");
  const double inf = std::numeric_limits<double>::infinity();

  std::vector<detail::StagedModel> staged;
  std::map<std::vector<int>, int> staged_index;
  // max-heap over the best `cap` objectives; its top is the Nth-best value
  std::priority_queue<double> best_heap;
  double best_objective = inf;  // tracks the incumbent (offers include it)

  auto nth_best = [&]() {
    if (rconfig.cap < 0) return inf;
    if (static_cast<long long>(best_heap.size()) < rconfig.cap) return inf;
    return best_heap.top();
  };

  detail::SearchPolicy policy;
  policy.threshold = [&, eps = rconfig.epsilon](double ub) {
    const double tau =
        std::min(std::isfinite(ub) ? (1.0 + eps) * ub : inf, nth_best());
    // strict pruning LB > tau realized through a >= comparison
    return std::nextafter(tau, inf);
  };
  policy.on_model = [&, eps = rconfig.epsilon](
                        const std::vector<int>& sequence,
                        const Eigen::VectorXd& coefficients,
                        double objective) {
    best_objective = std::min(best_objective, objective);
    const double tau_now =
        std::min((1.0 + eps) * best_objective, nth_best()) + 1e-9;
    if (objective > tau_now) return;
    std::vector<int> key = sequence;
    std::sort(key.begin(), key.end());
    if (staged_index.count(key)) return;
    staged_index.emplace(std::move(key), static_cast<int>(staged.size()));
    staged.push_back({sequence, coefficients, objective});
    if (rconfig.cap >= 0) {
      if (static_cast<long long>(best_heap.size()) < rconfig.cap)
        best_heap.push(objective);
      else if (objective < best_heap.top()) {
        best_heap.pop();
        best_heap.push(objective);
      }
    }
  };

  RashomonResult result;
  result.certificate = detail::run_bnb(inst, config, policy);

  // Compact the staged pool against the final threshold, tightest first.
  const double tau_final =
      (1.0 + rconfig.epsilon) * result.certificate.optimal_value + 1e-9;
  std::vector<int> live;
  for (int i = 0; i < static_cast<int>(staged.size()); ++i)
    if (staged[i].objective <= tau_final) live.push_back(i);
  std::sort(live.begin(), live.end(), [&](int a, int b) {
    if (staged[a].objective != staged[b].objective)
      return staged[a].objective < staged[b].objective;
    return staged[a].sequence < staged[b].sequence;
  });
  if (rconfig.cap >= 0 && static_cast<long long>(live.size()) > rconfig.cap)
    live.resize(rconfig.cap);
  for (int i : live)
    result.pool.insert(staged[i].sequence, staged[i].coefficients,
                       staged[i].objective);
  return result;
}

// Fraction of stored supports containing each feature.
inline Eigen::VectorXd support_frequency(const SupportTrie& pool, int p) {
  if (pool.size() == 0) throw input_error("support_frequency: empty pool");
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(p);
  for (int r = 0; r < pool.size(); ++r) {
    for (int j : pool.recover(r).support) freq[j] += 1.0;
  }
  freq /= static_cast<double>(pool.size());
  return freq;
}

struct RelianceSummary {
  Eigen::VectorXd min, mean, max;  // length p
  bool squared_extension = false;  // true when computed under squared loss
};

// Fixed-model reliance: per model, drop feature j's fitted contribution from
// the linear predictor and measure the increase in mean loss. The logistic
// form follows the pool's classification use; squared instances use the
// analogous squared-loss difference and are flagged.
inline RelianceSummary model_reliance(const SupportTrie& pool,
                                      const ProblemInstance& inst) {
  if (pool.size() == 0) throw input_error("model_reliance: empty pool");
  const int n = inst.n(), p = inst.p();
  RelianceSummary out;
  out.squared_extension = inst.loss == LossKind::kSquared;
  out.min = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::infinity());
  out.max = Eigen::VectorXd::Constant(p, -std::numeric_limits<double>::infinity());
  out.mean = Eigen::VectorXd::Zero(p);

  Eigen::VectorXd eta(n);
  for (int r = 0; r < pool.size(); ++r) {
    const SupportTrie::Recovered rec = pool.recover(r);
    eta.setZero();
    for (std::size_t t = 0; t < rec.path.size(); ++t)
      eta += rec.coefficients[t] * inst.X.col(rec.path[t]);
    double base = 0.0;
    for (int i = 0; i < n; ++i)
      base += loss_value(inst.loss, eta[i], inst.y[i]);
    base /= n;

    Eigen::VectorXd reliance = Eigen::VectorXd::Zero(p);
    for (std::size_t t = 0; t < rec.path.size(); ++t) {
      const int j = rec.path[t];
      const double coef = rec.coefficients[t];
      if (coef == 0.0) continue;
      double dropped = 0.0;
      for (int i = 0; i < n; ++i) {
        const double shifted = eta[i] - inst.X(i, j) * coef;
        dropped += loss_value(inst.loss, shifted, inst.y[i]);
      }
      reliance[j] = dropped / n - base;
    }
    out.mean += reliance;
    out.min = out.min.cwiseMin(reliance);
    out.max = out.max.cwiseMax(reliance);
  }
  out.mean /= static_cast<double>(pool.size());
  return out;
}

struct SecondaryMetricsRow {
  int record = 0;
  double objective = 0.0;
  double auc = 0.0;
  double accuracy = 0.0;
};

// AUC via the Mann-Whitney rank statistic with average ranks on ties (each
// tied pair earns credit 1/2); accuracy thresholds the predicted probability
// sigmoid(eta) at `threshold`. Rows come back sorted by objective.
inline std::vector<SecondaryMetricsRow> secondary_metrics(
    const SupportTrie& pool, const ProblemInstance& inst,
    double threshold = 0.5) {
  if (inst.loss != LossKind::kLogistic)
    throw input_error("secondary_metrics: logistic instances only");
  if (pool.size() == 0) throw input_error("secondary_metrics: empty pool");
  const int n = inst.n();
  long long positives = 0;
  for (int i = 0; i < n; ++i) positives += inst.y[i] > 0.0 ? 1 : 0;
  const long long negatives = n - positives;
  if (positives == 0 || negatives == 0)
    throw input_error("secondary_metrics: AUC undefined for single-class y");

  std::vector<SecondaryMetricsRow> rows;
  Eigen::VectorXd eta(n);
  std::vector<int> order(n);
  for (int r = 0; r < pool.size(); ++r) {
    const SupportTrie::Recovered rec = pool.recover(r);
    eta.setZero();
    for (std::size_t t = 0; t < rec.path.size(); ++t)
      eta += rec.coefficients[t] * inst.X.col(rec.path[t]);

    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return eta[a] < eta[b]; });
    double rank_sum_pos = 0.0;
    int i = 0;
    while (i < n) {
      int j = i;
      while (j + 1 < n && eta[order[j + 1]] == eta[order[i]]) ++j;
      const double avg_rank = 0.5 * (i + j) + 1.0;  // 1-based average rank
      for (int t = i; t <= j; ++t)
        if (inst.y[order[t]] > 0.0) rank_sum_pos += avg_rank;
      i = j + 1;
    }
    const double auc =
        (rank_sum_pos - 0.5 * positives * (positives + 1)) /
        (static_cast<double>(positives) * static_cast<double>(negatives));

    long long correct = 0;
    for (int t = 0; t < n; ++t) {
      const double prob = detail::sigmoid(eta[t]);
      const double predicted = prob >= threshold ? 1.0 : -1.0;
      if (predicted == inst.y[t]) ++correct;
    }

    SecondaryMetricsRow row;
    row.record = r;
    row.objective = rec.objective;
    row.auc = auc;
    row.accuracy = static_cast<double>(correct) / n;
    rows.push_back(row);
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.objective != b.objective) return a.objective < b.objective;
    return a.record < b.record;
  });
  return rows;
}

}  // namespace bnbglm
