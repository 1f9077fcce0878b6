#pragma once

// JSON and CSV emission for certificates, Rashomon pools, analytics, and run
// reports. Feature indices are 1-based in every output file; floating-point
// values are serialized so they round-trip exactly. The component profile is
// included only when the run asked for profiling, keeping certificates
// byte-reproducible for identical seeds and configurations.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bnbglm/bnb_engine.hpp"
#include "bnbglm/rashomon.hpp"

namespace bnbglm {

inline constexpr const char* kSchemaVersion = "1";

inline nlohmann::json profile_to_json(const ComponentProfile& prof) {
  const double total = prof.total_seconds;
  auto pct = [total](double v) { return total > 0.0 ? 100.0 * v / total : 0.0; };
  return nlohmann::json{
      {"lower_bound_seconds", prof.lower_bound_seconds},
      {"reoptimization_seconds", prof.reoptimization_seconds},
      {"transfer_seconds", prof.transfer_seconds},
      {"branch_generate_seconds", prof.branch_generate_seconds},
      {"total_seconds", prof.total_seconds},
      {"lower_bound_percent", pct(prof.lower_bound_seconds)},
      {"reoptimization_percent", pct(prof.reoptimization_seconds)},
      {"transfer_percent", pct(prof.transfer_seconds)},
      {"branch_generate_percent", pct(prof.branch_generate_seconds)},
  };
}

inline nlohmann::json certificate_to_json(const Certificate& cert,
                                          bool include_profile) {
  nlohmann::json support = nlohmann::json::array();
  for (int j : cert.support) support.push_back(j + 1);
  nlohmann::json coeffs = nlohmann::json::array();
  for (int i = 0; i < cert.coefficients.size(); ++i)
    coeffs.push_back(cert.coefficients[i]);
  nlohmann::json out{
      {"schema_version", kSchemaVersion},
      {"optimal_value", cert.optimal_value},
      {"support", support},
      {"coefficients", coeffs},
      {"gap_percent", cert.gap_percent},
      {"lower_bound", cert.lower_bound},
      {"nodes", cert.nodes_processed},
      {"batches",
       {{"lower_bound", cert.lb_batches},
        {"reoptimization", cert.reopt_batches},
        {"batch_size", cert.batch_size_used}}},
      {"status",
       cert.status == SolveStatus::kOptimal ? "optimal" : "time_limit"},
  };
  if (include_profile) out["profile"] = profile_to_json(cert.profile);
  return out;
}

inline nlohmann::json pool_to_json(const SupportTrie& pool) {
  nlohmann::json parents = nlohmann::json::array();
  nlohmann::json labels = nlohmann::json::array();
  for (int v = 0; v < pool.trie_node_count(); ++v) {
    parents.push_back(pool.parent_of(v));
    labels.push_back(pool.label_of(v) < 0 ? 0 : pool.label_of(v) + 1);
  }
  nlohmann::json records = nlohmann::json::array();
  for (const SupportTrie::Record& rec : pool.records())
    records.push_back({{"node", rec.node}, {"objective", rec.objective}});
  return nlohmann::json{
      {"schema_version", kSchemaVersion},
      {"trie", {{"parents", parents}, {"labels", labels}}},
      {"records", records},
      {"offsets", pool.offsets()},
      {"coefficients", pool.coefficients()},
  };
}

namespace detail {

inline std::string csv_double(double v) {
  char buf[64];
  const int written = std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf, buf + written);
}

}  // namespace detail

inline void write_text_file(const std::string& path,
                            const std::string& contents) {
  std::ofstream out(path);
  if (!out) throw input_error("cannot write " + path);
  out << contents;
}

inline void write_frequency_csv(const std::string& path,
                                const Eigen::VectorXd& freq) {
  std::string text = "feature,frequency\n";
  for (int j = 0; j < freq.size(); ++j)
    text += std::to_string(j + 1) + "," + detail::csv_double(freq[j]) + "\n";
  write_text_file(path, text);
}

inline void write_reliance_csv(const std::string& path,
                               const RelianceSummary& summary) {
  std::string text;
  if (summary.squared_extension)
    text += "# reliance computed with the squared-loss extension\n";
  text += "feature,min,mean,max\n";
  for (int j = 0; j < summary.mean.size(); ++j) {
    text += std::to_string(j + 1) + "," + detail::csv_double(summary.min[j]) +
            "," + detail::csv_double(summary.mean[j]) + "," +
            detail::csv_double(summary.max[j]) + "\n";
  }
  write_text_file(path, text);
}

inline void write_metrics_csv(const std::string& path,
                              const std::vector<SecondaryMetricsRow>& rows) {
  std::string text = "rank,objective,auc,accuracy\n";
  for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
    text += std::to_string(i + 1) + "," +
            detail::csv_double(rows[i].objective) + "," +
            detail::csv_double(rows[i].auc) + "," +
            detail::csv_double(rows[i].accuracy) + "\n";
  }
  write_text_file(path, text);
}

inline void write_sweep_csv(const std::string& path,
                            const std::vector<SweepRow>& rows) {
  std::string text = "batch_size,seconds,nodes,gap_percent,status\n";
  for (const SweepRow& row : rows) {
    text += std::to_string(row.batch_size) + "," +
            detail::csv_double(row.seconds) + "," +
            std::to_string(row.nodes) + "," +
            detail::csv_double(row.gap_percent) + "," + row.status + "\n";
  }
  write_text_file(path, text);
}

// FNV-1a over the raw bytes of a file; used to fingerprint inputs in reports.
inline std::uint64_t file_fingerprint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot read " + path);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  char buffer[4096];
  while (in.read(buffer, sizeof(buffer)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      hash ^= static_cast<unsigned char>(buffer[i]);
      hash *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  return hash;
}

}  // namespace bnbglm
