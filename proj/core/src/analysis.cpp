#include "lgnmt/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "lgnmt/errors.hpp"
#include "lgnmt/random_forest.hpp"

namespace lgnmt {

namespace {

struct Columns {
  std::array<std::vector<double>, 3> x;
  std::vector<double> y;
};

Columns completed_columns(const SweepHistory& history) {
  Columns c;
  for (const auto* r : history.completed()) {
    c.x[0].push_back(static_cast<double>(r->config.dim_model));
    c.x[1].push_back(static_cast<double>(r->config.dim_ff));
    c.x[2].push_back(static_cast<double>(r->config.batch_size));
    c.y.push_back(*r->objective);
  }
  return c;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

Correlation pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ConfigError("pearson: series lengths differ");
  if (x.size() < 2) throw ConfigError("pearson: need at least 2 values");
  const double n = static_cast<double>(x.size());
  double mx = 0;
  double my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0;
  double syy = 0;
  double sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0 || syy == 0) return {0.0, true};
  return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

std::array<Correlation, 3> correlation_report(const SweepHistory& history) {
  const Columns c = completed_columns(history);
  if (c.y.size() < 2) {
    throw ConfigError("correlation report needs at least 2 completed trials, have " + std::to_string(c.y.size()));
  }
  return {pearson(c.x[0], c.y), pearson(c.x[1], c.y), pearson(c.x[2], c.y)};
}

std::array<double, 3> importance_report(const SweepHistory& history, std::uint64_t seed) {
  const Columns c = completed_columns(history);
  if (c.y.size() < 5) {
    throw ConfigError("importance report needs at least 5 completed trials, have " + std::to_string(c.y.size()));
  }
  std::vector<std::vector<double>> rows(c.y.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = {c.x[0][i], c.x[1][i], c.x[2][i]};
  ForestOptions options;
  options.seed = seed;
  const auto w = RandomForest::fit(rows, c.y, options).feature_importance();
  return {w[0], w[1], w[2]};
}

AnalysisReport analyze(const SweepHistory& history, std::uint64_t seed) {
  AnalysisReport report;
  report.correlation = correlation_report(history);
  report.importance = importance_report(history, seed);
  report.completed_trials = history.completed().size();
  return report;
}

std::string to_json(const AnalysisReport& report) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json corr;
  nlohmann::ordered_json imp;
  auto degenerate = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string key(kHyperParameterNames[i]);
    corr[key] = report.correlation[i].r;
    imp[key] = report.importance[i];
    if (report.correlation[i].degenerate) degenerate.push_back(key);
  }
  j["correlation"] = std::move(corr);
  j["importance"] = std::move(imp);
  j["degenerate"] = std::move(degenerate);
  j["completed_trials"] = report.completed_trials;
  return j.dump(2) + "\n";
}

std::string to_markdown(const AnalysisReport& report) {
  std::string out = "| Hyper-parameter | Importance | Correlation with BLEU |\n|---|---:|---:|\n";
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return report.importance[a] > report.importance[b]; });
  for (std::size_t i : order) {
    out += "| " + std::string(kHyperParameterNames[i]) + " | " + fixed(report.importance[i], 3) + " | ";
    out += report.correlation[i].degenerate ? "n/a (constant)" : fixed(report.correlation[i].r, 3);
    out += " |\n";
  }
  out += "\nCompleted trials: " + std::to_string(report.completed_trials) + "\n";
  return out;
}

}  // namespace lgnmt
