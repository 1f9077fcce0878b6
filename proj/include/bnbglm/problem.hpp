#pragma once

// Problem instances, the synthetic benchmark generator, column preprocessing,
// and CSV ingestion. Instances are immutable after construction and safe to
// share across threads. Indices are 0-based internally; CLI output and file
// sidecars use 1-based feature indices.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bnbglm/errors.hpp"
#include "bnbglm/losses.hpp"
#include "bnbglm/rng.hpp"

namespace bnbglm {

struct ProblemInstance {
  Eigen::MatrixXd X;   // n x p design matrix
  Eigen::VectorXd y;   // length-n response
  LossKind loss = LossKind::kSquared;
  int k = 1;           // cardinality budget, 1 <= k <= p
  double M = 1.0;      // coefficient box |beta_j| <= M
  double lambda2 = 1.0;

  int n() const { return static_cast<int>(X.rows()); }
  int p() const { return static_cast<int>(X.cols()); }
};

inline void validate(const ProblemInstance& inst) {
  if (inst.X.rows() == 0 || inst.X.cols() == 0)
    throw input_error("instance: empty design matrix");
  if (inst.y.size() != inst.X.rows())
    throw input_error("instance: response length does not match row count");
  if (!inst.X.allFinite() || !inst.y.allFinite())
    throw input_error("instance: non-finite entries");
  if (inst.k < 1 || inst.k > inst.p())
    throw input_error("instance: k must satisfy 1 <= k <= p");
  if (!(inst.M > 0.0)) throw input_error("instance: M must be positive");
  if (!(inst.lambda2 > 0.0))
    throw input_error("instance: lambda2 must be positive");
  if (inst.loss == LossKind::kLogistic) {
    for (int i = 0; i < inst.n(); ++i) detail::check_logistic_label(inst.y[i]);
  }
}

struct GeneratorSpec {
  int n = 0;
  int p = 0;
  int k = 1;                 // number of true nonzero coefficients
  double correlation = 0.0;  // Toeplitz parameter in [0, 1)
  LossKind loss = LossKind::kSquared;
  double snr = 5.0;
  std::uint64_t seed = 0;
  double M = 2.0;      // constraint parameters attached to the instance
  double lambda2 = 1.0;
};

// Rows of X are i.i.d. N(0, Sigma) with Sigma_{jl} = correlation^|j-l|,
// drawn through the Cholesky factor of Sigma. The true coefficient vector
// has ones at every (p/k)-th coordinate (1-based: p/k, 2p/k, ...). Squared
// responses add N(0, sigma^2) noise with variance |X beta*|_2 / snr; logistic
// labels are sampled from the model probabilities. Deterministic given seed.
inline ProblemInstance generate_synthetic(const GeneratorSpec& spec,
                                          std::vector<int>* true_support =
                                              nullptr) {
  if (spec.n < 1 || spec.p < 1) throw input_error("generator: n, p >= 1");
  if (spec.k < 1 || spec.k > spec.p)
    throw input_error("generator: k must satisfy 1 <= k <= p");
  if (spec.correlation < 0.0 || spec.correlation >= 1.0)
    throw input_error("generator: correlation must lie in [0, 1)");
  if (!(spec.snr > 0.0)) throw input_error("generator: snr must be positive");

  const int n = spec.n, p = spec.p;
  Eigen::MatrixXd chol = Eigen::MatrixXd::Identity(p, p);
  if (spec.correlation > 0.0) {
    Eigen::MatrixXd sigma(p, p);
    for (int j = 0; j < p; ++j)
      for (int l = 0; l < p; ++l)
        sigma(j, l) = std::pow(spec.correlation, std::abs(j - l));
    chol = sigma.llt().matrixL();
  }

  Xoshiro256pp rng(spec.seed);
  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd g(p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) g[j] = rng.gaussian();
    if (spec.correlation > 0.0)
      X.row(i) = (chol * g).transpose();
    else
      X.row(i) = g.transpose();
  }

  const int step = p / spec.k;
  Eigen::VectorXd beta_true = Eigen::VectorXd::Zero(p);
  std::vector<int> support;
  for (int t = 1; t <= spec.k; ++t) {
    beta_true[t * step - 1] = 1.0;
    support.push_back(t * step - 1);
  }
  if (true_support) *true_support = support;

  const Eigen::VectorXd signal = X * beta_true;
  Eigen::VectorXd y(n);
  if (spec.loss == LossKind::kSquared) {
    const double sigma2 = signal.norm() / spec.snr;
    const double sd = std::sqrt(sigma2);
    for (int i = 0; i < n; ++i) y[i] = signal[i] + sd * rng.gaussian();
  } else {
    for (int i = 0; i < n; ++i) {
      const double prob = detail::sigmoid(signal[i]);
      y[i] = rng.uniform() < prob ? 1.0 : -1.0;
    }
  }

  ProblemInstance inst;
  inst.X = std::move(X);
  inst.y = std::move(y);
  inst.loss = spec.loss;
  inst.k = spec.k;
  inst.M = spec.M;
  inst.lambda2 = spec.lambda2;
  validate(inst);
  return inst;
}

struct PreprocessResult {
  ProblemInstance instance;
  std::vector<int> dropped_columns;  // 0-based indices in the input instance
};

// Center every column to mean 0 and rescale to unit Euclidean norm.
// Columns that are constant (zero after centering) are dropped and reported.
// Idempotent within 1e-12 and preserves n.
inline PreprocessResult preprocess(const ProblemInstance& inst) {
  const int n = inst.n(), p = inst.p();
  PreprocessResult out;
  Eigen::MatrixXd cols(n, p);
  std::vector<int> kept;
  for (int j = 0; j < p; ++j) {
    Eigen::VectorXd c = inst.X.col(j);
    const double scale = c.cwiseAbs().maxCoeff();
    c.array() -= c.mean();
    const double norm = c.norm();
    if (norm <= 1e-10 * (1.0 + scale)) {
      out.dropped_columns.push_back(j);
      continue;
    }
    cols.col(static_cast<int>(kept.size())) = c / norm;
    kept.push_back(j);
  }
  if (kept.empty()) throw input_error("preprocess: all columns constant");
  if (inst.k > static_cast<int>(kept.size()))
    throw input_error("preprocess: k exceeds surviving column count");
  out.instance = inst;
  out.instance.X = cols.leftCols(static_cast<int>(kept.size()));
  return out;
}

// --- CSV ---------------------------------------------------------------
//
// Comma-separated, UTF-8, '.' decimal point, one header row. On load, the
// named response column becomes y and the remaining columns become features
// in header order; constraint parameters are supplied separately.

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_cell(const std::string& cell, int row, int col) {
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t' ||
                         end[-1] == '\r'))
    --end;
  double value = 0.0;
  const auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc() || result.ptr != end) {
    throw parse_error("csv: non-numeric cell at row " + std::to_string(row) +
                      ", column " + std::to_string(col));
  }
  return value;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline ProblemInstance load_csv(const std::string& path,
                                const std::string& response_column,
                                LossKind loss,
                                std::vector<std::string>* feature_names =
                                    nullptr) {
  std::ifstream in(path);
  if (!in) throw input_error("csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw parse_error("csv: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = detail::split_csv_line(line);
  int response_index = -1;
  for (int j = 0; j < static_cast<int>(header.size()); ++j) {
    if (header[j] == response_column) {
      response_index = j;
      break;
    }
  }
  if (response_index < 0)
    throw parse_error("csv: missing response column '" + response_column +
                      "'");

  std::vector<std::vector<double>> rows;
  int row_number = 1;
  while (std::getline(in, line)) {
    ++row_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw parse_error("csv: row " + std::to_string(row_number) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(header.size()));
    }
    std::vector<double> row(cells.size());
    for (int j = 0; j < static_cast<int>(cells.size()); ++j)
      row[j] = detail::parse_cell(cells[j], row_number, j + 1);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw parse_error("csv: no data rows in " + path);

  const int n = static_cast<int>(rows.size());
  const int p = static_cast<int>(header.size()) - 1;
  if (p < 1) throw parse_error("csv: no feature columns in " + path);
  ProblemInstance inst;
  inst.X.resize(n, p);
  inst.y.resize(n);
  inst.loss = loss;
  if (feature_names) feature_names->clear();
  for (int j = 0, f = 0; j < static_cast<int>(header.size()); ++j) {
    if (j == response_index) continue;
    if (feature_names) feature_names->push_back(header[j]);
    for (int i = 0; i < n; ++i) inst.X(i, f) = rows[i][j];
    ++f;
  }
  for (int i = 0; i < n; ++i) inst.y[i] = rows[i][response_index];
  if (loss == LossKind::kLogistic) {
    for (int i = 0; i < n; ++i) detail::check_logistic_label(inst.y[i]);
  }
  if (!inst.X.allFinite() || !inst.y.allFinite())
    throw input_error("csv: non-finite values in " + path);
  return inst;
}

// Writes features x1..xp followed by the response column. Doubles use the
// shortest representation that round-trips exactly, so save/load is
// bit-exact.
inline void save_csv(const std::string& path, const Eigen::MatrixXd& X,
                     const Eigen::VectorXd& y,
                     const std::string& response_column = "y") {
  std::ofstream out(path);
  if (!out) throw input_error("csv: cannot write " + path);
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  for (int j = 0; j < p; ++j) out << 'x' << (j + 1) << ',';
  out << response_column << '\n';
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) out << detail::format_double(X(i, j)) << ',';
    out << detail::format_double(y[i]) << '\n';
  }
}

}  // namespace bnbglm
