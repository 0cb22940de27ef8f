#include "lgnmt/random_forest.hpp"

#include <algorithm>
#include <numeric>

#include "lgnmt/errors.hpp"
#include "lgnmt/random.hpp"

namespace lgnmt {

namespace {

struct Split {
  bool found = false;
  double threshold = 0;
  double reduction = 0;
  std::size_t left_count = 0;
};

double sse(const std::vector<double>& y, std::span<const std::size_t> idx) {
  double mean = 0;
  for (auto i : idx) mean += y[i];
  mean /= static_cast<double>(idx.size());
  double s = 0;
  for (auto i : idx) s += (y[i] - mean) * (y[i] - mean);
  return s;
}

// Best threshold on one feature. `idx` is reordered by that feature.
Split best_split(const std::vector<std::vector<double>>& x, const std::vector<double>& y, std::size_t feature,
                 std::span<std::size_t> idx, std::size_t min_leaf, double parent_sse) {
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a][feature] < x[b][feature]; });
  const std::size_t n = idx.size();
  double total = 0;
  double total_sq = 0;
  for (auto i : idx) {
    total += y[i];
    total_sq += y[i] * y[i];
  }
  Split best;
  double left = 0;
  double left_sq = 0;
  for (std::size_t k = 1; k < n; ++k) {
    const double v = y[idx[k - 1]];
    left += v;
    left_sq += v * v;
    const double a = x[idx[k - 1]][feature];
    const double b = x[idx[k]][feature];
    if (!(a < b) || k < min_leaf || n - k < min_leaf) continue;
    const double nl = static_cast<double>(k);
    const double nr = static_cast<double>(n - k);
    const double right = total - left;
    const double right_sq = total_sq - left_sq;
    const double child = std::max(0.0, left_sq - left * left / nl) + std::max(0.0, right_sq - right * right / nr);
    const double reduction = parent_sse - child;
    if (!best.found || reduction > best.reduction) {
      best = {true, 0.5 * (a + b), reduction, k};
    }
  }
  return best;
}

}  // namespace

RandomForest RandomForest::fit(const std::vector<std::vector<double>>& features, const std::vector<double>& targets,
                               const ForestOptions& options) {
  if (features.empty()) throw ConfigError("random forest: no samples");
  if (features.size() != targets.size()) throw ConfigError("random forest: feature and target counts differ");
  const std::size_t d = features.front().size();
  if (d == 0) throw ConfigError("random forest: samples have no features");
  for (const auto& row : features) {
    if (row.size() != d) throw ConfigError("random forest: ragged feature rows");
  }
  if (options.n_trees == 0 || options.max_features == 0 || options.min_leaf == 0) {
    throw ConfigError("random forest: n_trees, max_features and min_leaf must be positive");
  }

  RandomForest forest;
  forest.num_features_ = d;
  forest.reduction_.assign(d, 0.0);
  SplitMix64 rng(options.seed);
  const std::size_t n = features.size();

  for (std::size_t t = 0; t < options.n_trees; ++t) {
    std::vector<std::size_t> sample(n);
    for (auto& s : sample) s = static_cast<std::size_t>(rng.bounded(n));

    Tree tree;
    struct Pending {
      std::size_t node, begin, end;
    };
    tree.push_back({});
    std::vector<Pending> stack{{0, 0, n}};
    while (!stack.empty()) {
      const Pending job = stack.back();
      stack.pop_back();
      std::span<std::size_t> idx(sample.data() + job.begin, job.end - job.begin);
      double mean = 0;
      for (auto i : idx) mean += targets[i];
      mean /= static_cast<double>(idx.size());
      tree[job.node].value = mean;

      const double parent = sse(targets, idx);
      if (idx.size() < 2 * options.min_leaf || parent <= 0) continue;

      std::vector<std::size_t> order(d);
      std::iota(order.begin(), order.end(), 0);
      shuffle_in_place(std::span<std::size_t>(order), rng);
      Split chosen;
      std::size_t chosen_feature = 0;
      std::size_t considered = 0;
      for (std::size_t f : order) {
        if (considered == options.max_features) break;
        const double first = features[idx.front()][f];
        if (std::all_of(idx.begin(), idx.end(), [&](std::size_t i) { return features[i][f] == first; })) continue;
        ++considered;
        const Split s = best_split(features, targets, f, idx, options.min_leaf, parent);
        if (s.found && (!chosen.found || s.reduction > chosen.reduction)) {
          chosen = s;
          chosen_feature = f;
        }
      }
      if (!chosen.found) continue;

      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return features[a][chosen_feature] < features[b][chosen_feature];
      });
      forest.reduction_[chosen_feature] += std::max(0.0, chosen.reduction);
      const std::size_t left = tree.size();
      tree.push_back({});
      tree.push_back({});
      tree[job.node].feature = static_cast<int>(chosen_feature);
      tree[job.node].threshold = chosen.threshold;
      tree[job.node].left = left;
      tree[job.node].right = left + 1;
      const std::size_t mid = job.begin + chosen.left_count;
      stack.push_back({left + 1, mid, job.end});
      stack.push_back({left, job.begin, mid});
    }
    forest.trees_.push_back(std::move(tree));
  }
  return forest;
}

double RandomForest::predict(const std::vector<double>& x) const {
  if (x.size() != num_features_) throw ConfigError("random forest: query has the wrong number of features");
  double total = 0;
  for (const auto& tree : trees_) {
    std::size_t node = 0;
    while (tree[node].feature >= 0) {
      node = x[static_cast<std::size_t>(tree[node].feature)] <= tree[node].threshold ? tree[node].left
                                                                                       : tree[node].right;
    }
    total += tree[node].value;
  }
  return total / static_cast<double>(trees_.size());
}

std::vector<double> RandomForest::feature_importance() const {
  const double total = std::accumulate(reduction_.begin(), reduction_.end(), 0.0);
  std::vector<double> out(num_features_, 1.0 / static_cast<double>(num_features_));
  if (total <= 0) return out;
  for (std::size_t f = 0; f < num_features_; ++f) out[f] = reduction_[f] / total;
  return out;
}

}  // namespace lgnmt
