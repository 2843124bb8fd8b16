#pragma once

#include <Eigen/Core>

namespace graphfield {

double rmse(const Eigen::VectorXd& means, const Eigen::VectorXd& truths);

// Closed-form CRPS of a N(mean, sd^2) predictive distribution at truth:
// sd [ z (2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi) ].
double crps_gaussian(double mean, double sd, double truth);

// Fraction of truths inside mean +- z sd; the interval is closed.
double coverage(const Eigen::VectorXd& means, const Eigen::VectorXd& sds,
                const Eigen::VectorXd& truths, double level = 0.95);

double mean_crps(const Eigen::VectorXd& means, const Eigen::VectorXd& sds,
                 const Eigen::VectorXd& truths);

}  // namespace graphfield
