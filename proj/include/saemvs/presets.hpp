#pragma once

#include <Eigen/Dense>

#include "saemvs/params.hpp"
#include "saemvs/schedule.hpp"
#include "saemvs/selection.hpp"

namespace saemvs {

/// Everything a SAEMVS run needs besides the data.
struct RunSettings {
    HyperParams hyper;
    SaemSchedule schedule;
    PopulationParams theta0;
    Grid grid;
    long T_marginal = 10000;
};

namespace presets {

/// Settings of the one-dimensional logistic simulation study: Beta(1, p)
/// sparsity prior, sigma_mu = 3000, nu1 = 12000, inverse-gamma variance
/// priors, 20-point grid with log10(nu0) from -2 to 2, K = 500 iterations
/// with 350 burn-in, annealed Gamma(0) = 5000, Omega shrunk by 0.9 every 40
/// iterations.
inline RunSettings logistic_simulation(int p) {
    RunSettings rs;
    HyperParams& h = rs.hyper;
    h = HyperParams::for_dims(1, 2, p);
    h.nu_sigma = 1.0;
    h.lambda_sigma = 1.0;
    h.set_gamma_inverse_gamma(1.0, 1.0);
    h.sigma2_mu = 3000.0 * 3000.0;
    h.sigma2_lambda = h.sigma2_mu;
    h.nu1 = 12000.0;
    h.rho2 = Eigen::VectorXd::Constant(2, 1200.0);
    // initial Omega standard deviation 20 per component: large enough for
    // the psi chain to traverse from a distant start within the burn-in
    h.omega0 = Eigen::VectorXd::Constant(2, 400.0);
    h.kappa = 40;
    h.tau = 0.9;

    rs.schedule.K = 500;
    rs.schedule.n_burnin = 350;
    rs.schedule.gamma_exp = 2.0 / 3.0;
    rs.schedule.h = 3;

    PopulationParams& t0 = rs.theta0;
    t0.mu = Eigen::VectorXd::Constant(1, 1400.0);
    t0.lambda = Eigen::MatrixXd(0, 1);
    t0.beta = Eigen::MatrixXd::Constant(p, 1, 1.0);
    for (int l = 0; l < std::min(p, 10); ++l) t0.beta(l, 0) = 100.0;
    t0.Gamma = Eigen::MatrixXd::Constant(1, 1, 5000.0);
    t0.sigma2 = 100.0;
    t0.alpha = Eigen::VectorXd::Constant(1, 0.5);
    t0.eta = Eigen::VectorXd::Constant(2, 400.0);

    rs.grid = Grid::log10_spaced(-2.0, 2.0, 20);
    return rs;
}

/// Settings of the pharmacokinetic comparison study: sigma_mu = 5,
/// nu1 = 1000, inverse-Wishart scale 0.2 I2 with d = 4, 10-point grid with
/// log10(nu0) from -3 to 0, K = 300 iterations with 150 burn-in.
inline RunSettings pk_comparison(int p) {
    RunSettings rs;
    HyperParams& h = rs.hyper;
    h = HyperParams::for_dims(2, 0, p);
    h.nu_sigma = 1.0;
    h.lambda_sigma = 1.0;
    h.d = 4.0;
    h.Sigma_Gamma = 0.2 * Eigen::MatrixXd::Identity(2, 2);
    h.sigma2_mu = 25.0;
    h.sigma2_lambda = 25.0;
    h.nu1 = 1000.0;

    rs.schedule.K = 300;
    rs.schedule.n_burnin = 150;
    rs.schedule.gamma_exp = 2.0 / 3.0;
    rs.schedule.h = 3;

    PopulationParams& t0 = rs.theta0;
    t0.mu = Eigen::VectorXd::Constant(2, 10.0);
    t0.lambda = Eigen::MatrixXd(0, 2);
    t0.beta = Eigen::MatrixXd::Constant(p, 2, 0.1);
    for (int l = 0; l < std::min(p, 10); ++l) t0.beta.row(l).setConstant(1.0);
    t0.Gamma.resize(2, 2);
    t0.Gamma << 0.5, 0.1, 0.1, 0.5;
    t0.sigma2 = 1e-2;
    t0.alpha = Eigen::VectorXd::Constant(2, 0.5);
    t0.eta = Eigen::VectorXd(0);

    rs.grid = Grid::log10_spaced(-3.0, 0.0, 10);
    return rs;
}

} // namespace presets

/// Preset lookup by model name.
inline RunSettings default_settings(const std::string& model_name, int p) {
    if (model_name == "one_compartment_pk") return presets::pk_comparison(p);
    return presets::logistic_simulation(p);
}

} // namespace saemvs
