#pragma once

#include <cstddef>
#include <memory>
#include <vector>

namespace lgnmt {

using Point = std::vector<double>;

struct GpOptions {
  double length_scale = 0.3;
  double jitter = 1e-6;          // added to the kernel diagonal (standardized units)
  double variance_floor = 1e-6;  // lower bound on the objective sample variance
};

struct GpPrediction {
  double mean = 0;
  double stddev = 0;
};

// Exact GP regression with a squared-exponential kernel. Objectives are
// standardized by their mean and sample variance s^2 (n - 1 denominator,
// floored), so the kernel amplitude is s^2 on the original scale and the
// prior mean is the observed average. Predictions are de-standardized.
class GaussianProcess {
 public:
  // Throws ConfigError on empty or ragged input, NumericalError when the
  // jittered kernel matrix is not positive definite.
  GaussianProcess(std::vector<Point> points, std::vector<double> objectives, GpOptions options = {});
  ~GaussianProcess();
  GaussianProcess(GaussianProcess&&) noexcept;
  GaussianProcess& operator=(GaussianProcess&&) noexcept;

  GpPrediction predict(const Point& query) const;

  double objective_mean() const noexcept { return mean_; }
  double objective_scale() const noexcept { return scale_; }
  std::size_t size() const noexcept { return points_.size(); }

 private:
  struct Factor;

  std::vector<Point> points_;
  GpOptions options_;
  double mean_ = 0;
  double scale_ = 1;
  std::unique_ptr<Factor> factor_;
};

double squared_exponential(const Point& a, const Point& b, double length_scale);

// One-shot posterior at a single query.
GpPrediction gp_posterior(const std::vector<Point>& points, const std::vector<double>& objectives,
                          const Point& query, const GpOptions& options = {});

// Standard normal CDF.
double normal_cdf(double z);

// Phi((mean - best - xi) / stddev); with stddev == 0 the result is 1 when
// mean > best + xi and 0 otherwise.
double probability_of_improvement(double mean, double stddev, double best_so_far, double xi);

}  // namespace lgnmt
