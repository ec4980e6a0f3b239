// SPDX-License-Identifier: MIT
#pragma once

/**
 * @file sync_detail.hpp
 * @brief Internal pieces of the refined clock-offset maximization.
 *
 * Exposed separately (not installed) so tests can verify the analytic
 * gradient and Hessian against finite differences of the cost.
 */

#include <Eigen/Dense>

namespace asense::detail {

/// Cost L(c, kappa) = sum_n |sum_k e^{-j(c_k - (n - N/2) kappa_k)}
/// y_{n,k}|^2 for one antenna pair; c and kappa hold the free components
/// k = 1..K-1 and the phase c is referenced to the band-center subcarrier
/// N/2 (integer division).
double refine_cost(const Eigen::MatrixXcd& y, const Eigen::VectorXd& c,
                   const Eigen::VectorXd& kappa);

/// Gradient and Hessian of L restricted to the c block (kappa_block = false)
/// or the kappa block (true), evaluated at (c, kappa).
void refine_block_derivatives(const Eigen::MatrixXcd& y,
                              const Eigen::VectorXd& c,
                              const Eigen::VectorXd& kappa, bool kappa_block,
                              Eigen::VectorXd& grad, Eigen::MatrixXd& hess);

}  // namespace asense::detail
