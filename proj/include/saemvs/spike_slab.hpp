#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "saemvs/errors.hpp"

namespace saemvs {

/// Conditional inclusion probability of a single coefficient under the
/// Gaussian spike-and-slab mixture, computed in log space so extreme
/// coefficients cannot under- or overflow.
inline double p_star_scalar(double beta, double alpha, double nu0, double nu1) {
    if (!(nu0 > 0.0 && nu0 < nu1)) throw Precondition("require 0 < nu0 < nu1");
    if (alpha <= 0.0) return 0.0;
    if (alpha >= 1.0) return 1.0;
    // log odds of inclusion: log(alpha/(1-alpha)) + log phi_nu1(b) - log phi_nu0(b)
    const double log_odds = std::log(alpha) - std::log1p(-alpha) + 0.5 * std::log(nu0 / nu1) +
                            0.5 * beta * beta * (1.0 / nu0 - 1.0 / nu1);
    if (log_odds > 0.0) return 1.0 / (1.0 + std::exp(-log_odds));
    const double e = std::exp(log_odds);
    return e / (1.0 + e);
}

/// Elementwise p* for a p x q coefficient matrix with per-column alpha.
inline Eigen::MatrixXd p_star(const Eigen::MatrixXd& beta, const Eigen::VectorXd& alpha,
                              double nu0, double nu1) {
    Eigen::MatrixXd out(beta.rows(), beta.cols());
    for (Eigen::Index m = 0; m < beta.cols(); ++m)
        for (Eigen::Index l = 0; l < beta.rows(); ++l)
            out(l, m) = p_star_scalar(beta(l, m), alpha[m], nu0, nu1);
    return out;
}

/// Expected prior precision dtilde* for every row of beta_tilde: the
/// intercept row uses 1/sigma2_mu, forced rows 1/sigma2_lambda, and
/// selectable rows mix the spike and slab precisions with weight p*.
inline Eigen::MatrixXd d_star(const Eigen::MatrixXd& p_star_mat, double nu0, double nu1,
                              double sigma2_mu, double sigma2_lambda, int p_f = 0) {
    const Eigen::Index p = p_star_mat.rows();
    const Eigen::Index q = p_star_mat.cols();
    Eigen::MatrixXd out(1 + p_f + p, q);
    out.row(0).setConstant(1.0 / sigma2_mu);
    for (int r = 0; r < p_f; ++r) out.row(1 + r).setConstant(1.0 / sigma2_lambda);
    out.bottomRows(p) = ((1.0 - p_star_mat.array()) / nu0 + p_star_mat.array() / nu1).matrix();
    return out;
}

} // namespace saemvs
