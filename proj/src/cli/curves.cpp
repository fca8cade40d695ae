#include "steerq/curves.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include "steerq/config.hpp"

namespace steerq {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean of an empty set");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double standard_error(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double n = static_cast<double>(v.size());
  return std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
}

std::vector<AggregatePoint> aggregate_eval(const std::vector<RunRecord>& runs) {
  std::vector<std::string> order;
  std::map<std::string, std::map<int, std::vector<double>>> values;
  for (const RunRecord& r : runs) {
    if (!values.count(r.variant)) order.push_back(r.variant);
    auto& per_episode = values[r.variant];
    for (const EvalRow& e : r.eval) per_episode[e.episode].push_back(e.greedy_success_rate);
  }
  std::vector<AggregatePoint> out;
  for (const std::string& v : order) {
    for (const auto& [episode, xs] : values[v]) {
      out.push_back({v, episode, static_cast<int>(xs.size()), mean_of(xs), standard_error(xs)});
    }
  }
  return out;
}

void write_aggregate_csv(std::ostream& out, const std::vector<AggregatePoint>& points) {
  out << "variant,episode,runs,mean_greedy_success_rate,stderr\n";
  char buf[64];
  for (const AggregatePoint& p : points) {
    std::snprintf(buf, sizeof buf, "%.10g,%.10g", p.mean, p.stderr_mean);
    out << p.variant << ',' << p.episode << ',' << p.runs << ',' << buf << '\n';
  }
}

RunRecord load_run(const std::filesystem::path& dir) {
  const RunConfig c = load_run_config(dir / "config.resolved.json");
  return {to_string(c.variant) + (c.net.mechanism == PartialMechanism::LiftExpansion ? "+lift" : ""),
          read_eval_csv(dir / "eval.csv")};
}

}  // namespace steerq
