#pragma once

// Multi-seed aggregation of evaluation curves.

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "steerq/agent.hpp"

namespace steerq {

struct RunRecord {
  std::string variant;
  std::vector<EvalRow> eval;
};

struct AggregatePoint {
  std::string variant;
  int episode = 0;
  int runs = 0;
  double mean = 0.0;
  double stderr_mean = 0.0;  ///< sample standard deviation (n-1) / sqrt(n); 0 for one run
};

double mean_of(const std::vector<double>& v);
/// Standard error of the mean; 0 for fewer than two values.
double standard_error(const std::vector<double>& v);

/// Per variant (first-seen order) and episode (ascending), over the runs
/// that evaluated at that episode.
std::vector<AggregatePoint> aggregate_eval(const std::vector<RunRecord>& runs);
void write_aggregate_csv(std::ostream& out, const std::vector<AggregatePoint>& points);

/// Reads config.resolved.json and eval.csv from a training output directory.
RunRecord load_run(const std::filesystem::path& dir);

}  // namespace steerq
