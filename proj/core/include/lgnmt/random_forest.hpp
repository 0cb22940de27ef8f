#pragma once

#include <cstdint>
#include <vector>

namespace lgnmt {

struct ForestOptions {
  std::size_t n_trees = 200;
  std::size_t max_features = 1;  // features tried per split
  std::size_t min_leaf = 1;
  std::uint64_t seed = 1;
};

// Regression forest of variance-reduction trees grown on bootstrap samples.
// A node splits while it holds at least 2 * min_leaf samples with differing
// targets and some considered feature admits a split; features are drawn in
// random order and constant ones do not count toward max_features.
class RandomForest {
 public:
  // Throws ConfigError on empty, ragged or mismatched input.
  static RandomForest fit(const std::vector<std::vector<double>>& features, const std::vector<double>& targets,
                          const ForestOptions& options = {});

  double predict(const std::vector<double>& x) const;

  // Total variance reduction (sum of squared-error decrease) per feature,
  // normalized to sum to 1; uniform when no tree ever split.
  std::vector<double> feature_importance() const;

  std::size_t num_features() const noexcept { return num_features_; }
  std::size_t num_trees() const noexcept { return trees_.size(); }

 private:
  struct Node {
    int feature = -1;  // -1 for leaves
    double threshold = 0;
    double value = 0;
    std::size_t left = 0;
    std::size_t right = 0;
  };
  using Tree = std::vector<Node>;

  std::size_t num_features_ = 0;
  std::vector<Tree> trees_;
  std::vector<double> reduction_;
};

}  // namespace lgnmt
