#include "lgnmt/gaussian_process.hpp"

#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "lgnmt/errors.hpp"

namespace lgnmt {

struct GaussianProcess::Factor {
  Eigen::LLT<Eigen::MatrixXd> llt;
  Eigen::VectorXd alpha;
};

double squared_exponential(const Point& a, const Point& b, double length_scale) {
  double d2 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    d2 += d * d;
  }
  return std::exp(-d2 / (2.0 * length_scale * length_scale));
}

GaussianProcess::GaussianProcess(std::vector<Point> points, std::vector<double> objectives, GpOptions options)
    : points_(std::move(points)), options_(options) {
  const std::size_t n = points_.size();
  if (n == 0) throw ConfigError("gaussian process needs at least one observation");
  if (objectives.size() != n) throw ConfigError("gaussian process: point and objective counts differ");
  if (!(options_.length_scale > 0)) throw ConfigError("gaussian process: length scale must be positive");
  for (const auto& p : points_) {
    if (p.size() != points_.front().size()) throw ConfigError("gaussian process: points differ in dimension");
  }
  for (double y : objectives) {
    if (!std::isfinite(y)) throw NumericalError("gaussian process: non-finite objective");
  }

  mean_ = std::accumulate(objectives.begin(), objectives.end(), 0.0) / static_cast<double>(n);
  double ss = 0;
  for (double y : objectives) ss += (y - mean_) * (y - mean_);
  const double variance = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;
  scale_ = std::sqrt(std::max(variance, options_.variance_floor));

  Eigen::MatrixXd K(n, n);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y(static_cast<Eigen::Index>(i)) = (objectives[i] - mean_) / scale_;
    for (std::size_t j = 0; j <= i; ++j) {
      const double k = squared_exponential(points_[i], points_[j], options_.length_scale);
      K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = k;
      K(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = k;
    }
    K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += options_.jitter;
  }

  factor_ = std::make_unique<Factor>();
  factor_->llt.compute(K);
  if (factor_->llt.info() != Eigen::Success) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(K);
    const auto& s = svd.singularValues();
    const double cond = s(s.size() - 1) > 0 ? s(0) / s(s.size() - 1) : INFINITY;
    throw NumericalError("gaussian process: kernel matrix not positive definite (condition estimate " +
                         std::to_string(cond) + ")");
  }
  factor_->alpha = factor_->llt.solve(y);
}

GaussianProcess::~GaussianProcess() = default;
GaussianProcess::GaussianProcess(GaussianProcess&&) noexcept = default;
GaussianProcess& GaussianProcess::operator=(GaussianProcess&&) noexcept = default;

GpPrediction GaussianProcess::predict(const Point& query) const {
  if (query.size() != points_.front().size()) throw ConfigError("gaussian process: query dimension mismatch");
  const auto n = static_cast<Eigen::Index>(points_.size());
  Eigen::VectorXd k(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i) = squared_exponential(points_[static_cast<std::size_t>(i)], query, options_.length_scale);
  }
  const double mean_std = k.dot(factor_->alpha);
  const Eigen::VectorXd v = factor_->llt.matrixL().solve(k);
  const double var_std = std::max(0.0, 1.0 - v.squaredNorm());
  return {mean_ + scale_ * mean_std, scale_ * std::sqrt(var_std)};
}

GpPrediction gp_posterior(const std::vector<Point>& points, const std::vector<double>& objectives,
                          const Point& query, const GpOptions& options) {
  return GaussianProcess(points, objectives, options).predict(query);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double probability_of_improvement(double mean, double stddev, double best_so_far, double xi) {
  const double margin = mean - best_so_far - xi;
  if (stddev <= 0) return margin > 0 ? 1.0 : 0.0;
  return normal_cdf(margin / stddev);
}

}  // namespace lgnmt
