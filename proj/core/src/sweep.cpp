#include "lgnmt/sweep.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "lgnmt/errors.hpp"
#include "lgnmt/random.hpp"

namespace lgnmt {

namespace {

void check_choices(const std::vector<std::size_t>& choices, const char* name) {
  if (choices.empty()) throw ConfigError(std::string("search space: no choices for ") + name);
  for (std::size_t i = 0; i < choices.size(); ++i) {
    if (!std::has_single_bit(choices[i])) {
      throw ConfigError(std::string("search space: ") + name + " choice " + std::to_string(choices[i]) +
                        " is not a power of two");
    }
    if (i > 0 && choices[i] <= choices[i - 1]) {
      throw ConfigError(std::string("search space: ") + name + " choices must be strictly increasing");
    }
  }
}

bool has(const std::vector<std::size_t>& choices, std::size_t v) {
  return std::binary_search(choices.begin(), choices.end(), v);
}

double log_position(std::size_t v, const std::vector<std::size_t>& choices) {
  const double lo = std::log2(static_cast<double>(choices.front()));
  const double hi = std::log2(static_cast<double>(choices.back()));
  if (hi == lo) return 0.0;
  return (std::log2(static_cast<double>(v)) - lo) / (hi - lo);
}

const char* status_name(TrialStatus s) { return s == TrialStatus::completed ? "completed" : "failed"; }

}  // namespace

void SearchSpace::validate() const {
  check_choices(dim_model_choices, "dim_model");
  check_choices(dim_ff_choices, "tm_dim_ff");
  check_choices(batch_size_choices, "batch_size");
}

std::size_t SearchSpace::size() const noexcept {
  return dim_model_choices.size() * dim_ff_choices.size() * batch_size_choices.size();
}

bool SearchSpace::contains(const TrialConfig& c) const {
  return has(dim_model_choices, c.dim_model) && has(dim_ff_choices, c.dim_ff) &&
         has(batch_size_choices, c.batch_size);
}

std::vector<TrialConfig> SearchSpace::grid() const {
  std::vector<TrialConfig> out;
  out.reserve(size());
  for (auto m : dim_model_choices) {
    for (auto f : dim_ff_choices) {
      for (auto b : batch_size_choices) out.push_back({m, f, b});
    }
  }
  return out;
}

std::array<double, 3> normalize_config(const TrialConfig& config, const SearchSpace& space) {
  if (!space.contains(config)) {
    throw ConfigError("config (" + std::to_string(config.dim_model) + ", " + std::to_string(config.dim_ff) + ", " +
                      std::to_string(config.batch_size) + ") is outside the search space");
  }
  return {log_position(config.dim_model, space.dim_model_choices),
          log_position(config.dim_ff, space.dim_ff_choices),
          log_position(config.batch_size, space.batch_size_choices)};
}

bool SweepHistory::tried(const TrialConfig& config) const {
  return std::any_of(trials.begin(), trials.end(), [&](const TrialRecord& r) { return r.config == config; });
}

std::vector<const TrialRecord*> SweepHistory::completed() const {
  std::vector<const TrialRecord*> out;
  for (const auto& r : trials) {
    if (r.status == TrialStatus::completed && r.objective) out.push_back(&r);
  }
  return out;
}

std::string to_json_line(const TrialRecord& r) {
  nlohmann::ordered_json j;
  j["trial"] = r.index;
  j["dim_model"] = r.config.dim_model;
  j["tm_dim_ff"] = r.config.dim_ff;
  j["batch_size"] = r.config.batch_size;
  j["objective"] = r.objective ? nlohmann::ordered_json(*r.objective) : nlohmann::ordered_json(nullptr);
  j["status"] = status_name(r.status);
  return j.dump();
}

std::string SweepHistory::to_jsonl() const {
  std::string out;
  for (const auto& r : trials) out += to_json_line(r) + "\n";
  return out;
}

SweepHistory SweepHistory::from_jsonl(std::string_view text) {
  SweepHistory h;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    TrialRecord r;
    try {
      const auto j = nlohmann::json::parse(line);
      r.index = j.at("trial").get<std::size_t>();
      r.config.dim_model = j.at("dim_model").get<std::size_t>();
      r.config.dim_ff = j.at("tm_dim_ff").get<std::size_t>();
      r.config.batch_size = j.at("batch_size").get<std::size_t>();
      if (!j.at("objective").is_null()) r.objective = j.at("objective").get<double>();
      const auto status = j.at("status").get<std::string>();
      if (status == "completed") {
        r.status = TrialStatus::completed;
      } else if (status == "failed") {
        r.status = TrialStatus::failed;
      } else {
        throw ParseError("sweep history: unknown status '" + status + "'", line_no);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("sweep history: " + std::string(e.what()), line_no);
    }
    if (r.status == TrialStatus::completed && (!r.objective || !std::isfinite(*r.objective))) {
      throw ParseError("sweep history: completed trial without a finite objective", line_no);
    }
    h.trials.push_back(r);
  }
  return h;
}

TrialConfig suggest_next(const SweepHistory& history, const SearchSpace& space, std::uint64_t seed,
                         const SweepOptions& options) {
  space.validate();
  const std::vector<TrialConfig> grid = space.grid();
  const auto completed = history.completed();

  if (history.size() < options.n_init || completed.empty()) {
    SplitMix64 rng(seed);
    for (std::size_t i : random_permutation(grid.size(), rng)) {
      if (!history.tried(grid[i])) return grid[i];
    }
    throw Error("search space exhausted: all " + std::to_string(grid.size()) + " configurations tried");
  }

  std::vector<Point> points;
  std::vector<double> objectives;
  double best = -std::numeric_limits<double>::infinity();
  for (const auto* r : completed) {
    const auto x = normalize_config(r->config, space);
    points.emplace_back(x.begin(), x.end());
    objectives.push_back(*r->objective);
    best = std::max(best, *r->objective);
  }
  const GaussianProcess gp(std::move(points), std::move(objectives), options.gp);

  const TrialConfig* choice = nullptr;
  double best_pi = -1;
  for (const auto& c : grid) {
    if (history.tried(c)) continue;
    const auto x = normalize_config(c, space);
    const GpPrediction p = gp.predict(Point(x.begin(), x.end()));
    const double pi = probability_of_improvement(p.mean, p.stddev, best, options.xi);
    if (pi > best_pi) {
      best_pi = pi;
      choice = &c;
    }
  }
  if (choice == nullptr) {
    throw Error("search space exhausted: all " + std::to_string(grid.size()) + " configurations tried");
  }
  return *choice;
}

void run_sweep(const SearchSpace& space, std::size_t budget, const TrialEvaluator& evaluate, std::uint64_t seed,
               SweepHistory& history, const SweepOptions& options,
               const std::function<void(const TrialRecord&)>& on_trial) {
  space.validate();
  if (budget < 1) throw ConfigError("sweep budget must be at least 1");
  if (budget > space.size()) {
    throw ConfigError("sweep budget " + std::to_string(budget) + " exceeds the " + std::to_string(space.size()) +
                      "-point search space");
  }
  while (history.size() < budget) {
    TrialRecord record;
    record.index = history.size() + 1;
    record.config = suggest_next(history, space, seed, options);
    try {
      const double value = evaluate(record.config);
      if (std::isfinite(value)) {
        record.objective = value;
        record.status = TrialStatus::completed;
      } else {
        record.status = TrialStatus::failed;
      }
    } catch (const std::exception&) {
      record.status = TrialStatus::failed;
    }
    history.trials.push_back(record);
    if (on_trial) on_trial(record);
  }
}

SweepHistory run_sweep(const SearchSpace& space, std::size_t budget, const TrialEvaluator& evaluate,
                       std::uint64_t seed, const SweepOptions& options) {
  SweepHistory history;
  run_sweep(space, budget, evaluate, seed, history, options);
  return history;
}

}  // namespace lgnmt
