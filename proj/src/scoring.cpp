#include "graphfield/scoring.hpp"

#include <cmath>

#include "graphfield/errors.hpp"

namespace graphfield {

namespace {

constexpr double kSqrt2 = 1.41421356237309514547462185873883;
constexpr double kSqrtPi = 1.77245385090551599275151910313925;
constexpr double kSqrt2Pi = 2.50662827463100024161235523934010;

double norm_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

double norm_pdf(double z) { return std::exp(-0.5 * z * z) / kSqrt2Pi; }

}  // namespace

double rmse(const Eigen::VectorXd& means, const Eigen::VectorXd& truths) {
  if (means.size() == 0 || means.size() != truths.size())
    throw DimensionMismatch("rmse: empty input or length mismatch");
  return std::sqrt((means - truths).squaredNorm() / means.size());
}

double crps_gaussian(double mean, double sd, double truth) {
  if (!(sd > 0.0)) throw Error("crps_gaussian: sd must be > 0");
  const double z = (truth - mean) / sd;
  return sd * (z * (2.0 * norm_cdf(z) - 1.0) + 2.0 * norm_pdf(z) - 1.0 / kSqrtPi);
}

double coverage(const Eigen::VectorXd& means, const Eigen::VectorXd& sds,
                const Eigen::VectorXd& truths, double level) {
  if (means.size() == 0 || means.size() != truths.size() ||
      means.size() != sds.size())
    throw DimensionMismatch("coverage: empty input or length mismatch");
  // z such that P(|Z| <= z) = level; Newton on the normal cdf
  double z = 1.959963984540054;
  if (level != 0.95) {
    const double target = 0.5 * (1.0 + level);
    for (int it = 0; it < 60; ++it) {
      const double f = norm_cdf(z) - target;
      z -= f / norm_pdf(z);
    }
  }
  int inside = 0;
  for (Eigen::Index i = 0; i < means.size(); ++i) {
    if (!(sds[i] > 0.0)) throw Error("coverage: sds must be > 0");
    const double lo = means[i] - z * sds[i];
    const double hi = means[i] + z * sds[i];
    if (truths[i] >= lo && truths[i] <= hi) ++inside;  // closed interval
  }
  return static_cast<double>(inside) / static_cast<double>(means.size());
}

double mean_crps(const Eigen::VectorXd& means, const Eigen::VectorXd& sds,
                 const Eigen::VectorXd& truths) {
  if (means.size() == 0 || means.size() != truths.size() ||
      means.size() != sds.size())
    throw DimensionMismatch("mean_crps: empty input or length mismatch");
  double s = 0.0;
  for (Eigen::Index i = 0; i < means.size(); ++i)
    s += crps_gaussian(means[i], sds[i], truths[i]);
  return s / means.size();
}

}  // namespace graphfield
