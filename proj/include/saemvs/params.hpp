#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "saemvs/errors.hpp"

namespace saemvs {

/// Population parameter Theta = (mu, lambda, beta, Gamma, sigma2, alpha, eta).
/// mu is the intercept, lambda the forced-covariate coefficients, beta the
/// selectable coefficients; eta locates the shared fixed effects when s > 0.
struct PopulationParams {
    Eigen::VectorXd mu;      // q
    Eigen::MatrixXd lambda;  // p_f x q
    Eigen::MatrixXd beta;    // p x q
    Eigen::MatrixXd Gamma;   // q x q, SPD
    double sigma2 = 1.0;
    Eigen::VectorXd alpha;   // q, entries in [0,1]
    Eigen::VectorXd eta;     // s

    int q() const { return static_cast<int>(mu.size()); }
    int p() const { return static_cast<int>(beta.rows()); }
    int p_f() const { return static_cast<int>(lambda.rows()); }
    int s() const { return static_cast<int>(eta.size()); }

    // Stacked coefficient matrix matching the augmented design columns:
    // row 0 intercept, then forced rows, then selectable rows.
    Eigen::MatrixXd beta_tilde() const {
        Eigen::MatrixXd bt(1 + p_f() + p(), q());
        bt.row(0) = mu.transpose();
        if (p_f() > 0) bt.middleRows(1, p_f()) = lambda;
        if (p() > 0) bt.bottomRows(p()) = beta;
        return bt;
    }

    void set_beta_tilde(const Eigen::MatrixXd& bt) {
        if (bt.rows() != 1 + p_f() + p() || bt.cols() != q())
            throw ShapeMismatch("beta_tilde shape does not match parameter layout");
        mu = bt.row(0).transpose();
        if (p_f() > 0) lambda = bt.middleRows(1, p_f());
        if (p() > 0) beta = bt.bottomRows(p());
    }

    void validate() const {
        if (sigma2 <= 0) throw Precondition("sigma2 must be positive");
        if (Gamma.rows() != q() || Gamma.cols() != q()) throw ShapeMismatch("Gamma must be q x q");
        Eigen::LLT<Eigen::MatrixXd> llt(Gamma);
        if (llt.info() != Eigen::Success) throw Precondition("Gamma must be positive definite");
        for (int m = 0; m < q(); ++m)
            if (alpha[m] < 0.0 || alpha[m] > 1.0) throw Precondition("alpha must lie in [0,1]");
    }

    double max_abs() const {
        double v = std::abs(sigma2);
        auto upd = [&v](const auto& x) {
            if (x.size() > 0) v = std::max(v, x.array().abs().maxCoeff());
        };
        upd(mu);
        upd(lambda);
        upd(beta);
        upd(Gamma);
        upd(alpha);
        upd(eta);
        return v;
    }
};

/// Fixed hyperparameters Xi of the prior hierarchy plus the Omega annealing
/// schedule of the extended model.
struct HyperParams {
    double nu0 = 0.04;          // spike variance
    double nu1 = 12000.0;       // slab variance
    double sigma2_mu = 9e6;     // prior variance of the intercept
    double sigma2_lambda = 9e6; // prior variance of forced coefficients
    double nu_sigma = 1.0;
    double lambda_sigma = 1.0;
    Eigen::MatrixXd Sigma_Gamma; // q x q scale of the inverse-Wishart prior
    double d = 0.0;              // inverse-Wishart degrees of freedom
    Eigen::VectorXd a;           // q
    Eigen::VectorXd b;           // q
    Eigen::VectorXd rho2;        // s, prior variances of eta
    Eigen::VectorXd omega0;      // s, initial diagonal of Omega (variances)
    int kappa = 40;              // shrink Omega every kappa iterations
    double tau = 0.9;            // multiplicative Omega decay
    double nu_Gamma = 1.0;       // q = 1 inverse-gamma variant
    double lambda_Gamma = 1.0;
    std::optional<double> sigma2_uniform_max; // uniform prior variant for sigma2

    // The q = 1 inverse-gamma prior IG(nu/2, nu*lambda/2) coincides with the
    // inverse-Wishart at d = nu, Sigma_Gamma = nu*lambda.
    void set_gamma_inverse_gamma(double nu, double lambda) {
        nu_Gamma = nu;
        lambda_Gamma = lambda;
        d = nu;
        Sigma_Gamma = Eigen::MatrixXd::Constant(1, 1, nu * lambda);
    }

    void validate(int q, int s) const {
        if (!(nu0 > 0.0 && nu0 < nu1)) throw Precondition("require 0 < nu0 < nu1");
        if (sigma2_mu <= 0 || sigma2_lambda <= 0) throw Precondition("prior variances must be positive");
        if (Sigma_Gamma.rows() != q || Sigma_Gamma.cols() != q)
            throw ShapeMismatch("Sigma_Gamma must be q x q");
        if (a.size() != q || b.size() != q) throw ShapeMismatch("a and b must have length q");
        if (rho2.size() != s || omega0.size() != s)
            throw ShapeMismatch("rho2 and omega0 must have length s");
        if (!(tau > 0.0 && tau < 1.0)) throw Precondition("tau must lie in (0,1)");
        if (kappa < 1) throw Precondition("kappa must be a positive integer");
    }

    /// Omega diagonal in force at SAEM iteration k.
    Eigen::VectorXd omega2_at(int k) const {
        if (omega0.size() == 0) return omega0;
        const int steps = k / kappa;
        return omega0 * std::pow(tau, steps);
    }

    /// Defaults that only depend on the dimensions: d = q + 2 and a flat-ish
    /// Beta(1, p) sparsity prior.
    static HyperParams for_dims(int q, int s, int p) {
        HyperParams h;
        h.Sigma_Gamma = Eigen::MatrixXd::Identity(q, q);
        h.d = q + 2;
        h.a = Eigen::VectorXd::Ones(q);
        h.b = Eigen::VectorXd::Constant(q, static_cast<double>(p));
        h.rho2 = Eigen::VectorXd::Constant(s, 1200.0);
        h.omega0 = Eigen::VectorXd::Constant(s, 20.0);
        return h;
    }
};

} // namespace saemvs
