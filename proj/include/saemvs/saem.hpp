#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "saemvs/design.hpp"
#include "saemvs/errors.hpp"
#include "saemvs/mcmc.hpp"
#include "saemvs/model.hpp"
#include "saemvs/mstep.hpp"
#include "saemvs/observations.hpp"
#include "saemvs/params.hpp"
#include "saemvs/rng.hpp"
#include "saemvs/schedule.hpp"
#include "saemvs/spike_slab.hpp"
#include "saemvs/suffstats.hpp"

namespace saemvs {

struct MapResult {
    PopulationParams theta_hat;
    Eigen::MatrixXd traces; // (K+1) x n_params, iteration 0 = initial value
    std::vector<std::string> trace_names;
    Eigen::MatrixXd final_pstar; // p x q at Theta(K)
};

namespace detail {

inline std::vector<std::string> trace_names_for(const PopulationParams& theta) {
    std::vector<std::string> names;
    const int q = theta.q();
    for (int m = 0; m < q; ++m) names.push_back("mu_" + std::to_string(m + 1));
    for (int r = 0; r < theta.p_f(); ++r)
        for (int m = 0; m < q; ++m)
            names.push_back("lambda_" + std::to_string(r + 1) + "_" + std::to_string(m + 1));
    for (int l = 0; l < theta.p(); ++l)
        for (int m = 0; m < q; ++m)
            names.push_back("beta_" + std::to_string(l + 1) + "_" + std::to_string(m + 1));
    for (int i = 0; i < q; ++i)
        for (int j = i; j < q; ++j)
            names.push_back("Gamma_" + std::to_string(i + 1) + "_" + std::to_string(j + 1));
    names.push_back("sigma2");
    for (int m = 0; m < q; ++m) names.push_back("alpha_" + std::to_string(m + 1));
    for (int r = 0; r < theta.s(); ++r) names.push_back("eta_" + std::to_string(r + 1));
    return names;
}

inline void write_trace_row(Eigen::MatrixXd& traces, int row, const PopulationParams& theta) {
    int c = 0;
    const int q = theta.q();
    for (int m = 0; m < q; ++m) traces(row, c++) = theta.mu[m];
    for (int r = 0; r < theta.p_f(); ++r)
        for (int m = 0; m < q; ++m) traces(row, c++) = theta.lambda(r, m);
    for (int l = 0; l < theta.p(); ++l)
        for (int m = 0; m < q; ++m) traces(row, c++) = theta.beta(l, m);
    for (int i = 0; i < q; ++i)
        for (int j = i; j < q; ++j) traces(row, c++) = theta.Gamma(i, j);
    traces(row, c++) = theta.sigma2;
    for (int m = 0; m < q; ++m) traces(row, c++) = theta.alpha[m];
    for (int r = 0; r < theta.s(); ++r) traces(row, c++) = theta.eta[r];
}

inline void check_divergence(const PopulationParams& theta, double bound, int k) {
    const double magnitude = theta.max_abs();
    if (!(magnitude <= bound) || !std::isfinite(magnitude))
        throw Diverged("parameter magnitude exceeded " + std::to_string(bound) +
                       " at iteration " + std::to_string(k));
}

// Exploration-phase variance constraint of the simulated-annealing SAEM:
// each random-effect variance and the residual variance may decrease by at
// most `rate` per iteration. Correlations are preserved by rescaling rows
// and columns of Gamma.
inline void anneal_variances(PopulationParams& theta, const PopulationParams& prev, double rate) {
    const int q = theta.q();
    Eigen::VectorXd scale = Eigen::VectorXd::Ones(q);
    bool touched = false;
    for (int m = 0; m < q; ++m) {
        const double floor_m = rate * prev.Gamma(m, m);
        if (theta.Gamma(m, m) < floor_m) {
            scale[m] = std::sqrt(floor_m / theta.Gamma(m, m));
            touched = true;
        }
    }
    if (touched) theta.Gamma = scale.asDiagonal() * theta.Gamma * scale.asDiagonal();
    theta.sigma2 = std::max(theta.sigma2, rate * prev.sigma2);
}

// The latent chain starts on a draw from the individual-parameter prior, not
// at its mean: with an annealed (large) Gamma(0) the initial dispersion is
// what keeps the first Gamma update away from an immediate collapse.
inline Eigen::MatrixXd draw_initial_phi(const Eigen::MatrixXd& prior_mean,
                                        const Eigen::MatrixXd& Gamma, Rng& rng) {
    const int n = static_cast<int>(prior_mean.rows());
    const int q = static_cast<int>(prior_mean.cols());
    const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(Gamma).matrixL();
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd phi(n, q);
    Eigen::VectorXd z(q);
    for (int i = 0; i < n; ++i) {
        for (int m = 0; m < q; ++m) z[m] = gauss(rng);
        phi.row(i) = prior_mean.row(i) + (L * z).transpose();
    }
    return phi;
}

} // namespace detail

/// MCMC-SAEM maximum a posteriori estimation of Theta in the spike-and-slab
/// model. Deterministic for a fixed seed. The latent chain starts at the
/// prior means implied by theta0 (phi = Vtilde betatilde, psi = eta).
inline MapResult run_map(const ObservationSet& data, const NonlinearModel& model,
                         const DesignMatrices& design, const HyperParams& hyper,
                         const SaemSchedule& schedule, const PopulationParams& theta0,
                         std::uint64_t seed) {
    data.validate();
    schedule.validate();
    hyper.validate(model.q, model.s);
    PopulationParams theta = theta0;
    if (schedule.gamma0_inflation != 1.0) theta.Gamma *= schedule.gamma0_inflation;
    theta.validate();

    const int n = data.n();
    const int q = model.q;
    const int s = model.s;
    const long n_tot = data.n_tot();
    const Eigen::MatrixXd VtV = design.augmented.transpose() * design.augmented;

    Rng rng = make_rng(seed);
    LatentState state = LatentState::init(
        detail::draw_initial_phi(design.augmented * theta.beta_tilde(), theta.Gamma, rng),
        theta.eta);
    SuffStats S = SuffStats::zero(n, q, s);

    const auto names = detail::trace_names_for(theta);
    MapResult result;
    result.trace_names = names;
    result.traces.resize(schedule.K + 1, static_cast<Eigen::Index>(names.size()));
    detail::write_trace_row(result.traces, 0, theta);

    for (int k = 0; k < schedule.K; ++k) {
        const Eigen::VectorXd omega2 = hyper.omega2_at(k);
        s_step(state, data, model, design, theta, omega2, schedule.h, rng);
        if (k < schedule.n_burnin && schedule.adapt_every > 0 &&
            (k + 1) % schedule.adapt_every == 0)
            state.adapt_scales();

        S = sa_step(S, compute_suffstats(data, model, state.phi, state.psi), schedule.step_size(k));

        const Eigen::MatrixXd pstar = p_star(theta.beta, theta.alpha, hyper.nu0, hyper.nu1);
        const Eigen::MatrixXd dstar =
            d_star(pstar, hyper.nu0, hyper.nu1, hyper.sigma2_mu, hyper.sigma2_lambda, design.p_f());
        PopulationParams prev = std::move(theta);
        theta = m_step_map(S, dstar, pstar, hyper, design, n_tot, prev.Gamma, omega2, VtV);
        if (k < schedule.n_burnin && schedule.anneal_rate > 0.0)
            detail::anneal_variances(theta, prev, schedule.anneal_rate);
        detail::check_divergence(theta, schedule.divergence_bound, k);
        detail::write_trace_row(result.traces, k + 1, theta);
    }

    result.theta_hat = theta;
    result.final_pstar = p_star(theta.beta, theta.alpha, hyper.nu0, hyper.nu1);
    return result;
}

/// SAEM maximum-likelihood fit of the sub-model whose selectable support is
/// `support` (pairs of 0-based (covariate, component) indices); all other
/// selectable coefficients are pinned to zero and flat-prior M-step updates
/// are used. The Omega annealing of the extended model is kept.
inline PopulationParams run_mle(const ObservationSet& data, const NonlinearModel& model,
                                const DesignMatrices& design,
                                const std::vector<std::pair<int, int>>& support,
                                const HyperParams& hyper, const SaemSchedule& schedule,
                                const PopulationParams& theta0, std::uint64_t seed) {
    data.validate();
    schedule.validate();
    PopulationParams theta = theta0;
    theta.alpha = Eigen::VectorXd::Zero(model.q);
    // pin everything outside the support to zero before starting
    Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(design.p(), model.q);
    for (const auto& [l, m] : support) {
        if (l < 0 || l >= design.p() || m < 0 || m >= model.q)
            throw Precondition("support index out of range");
        beta(l, m) = theta0.beta(l, m);
    }
    theta.beta = beta;
    theta.validate();

    // beta_tilde row coordinates of the active selectable entries
    std::vector<std::pair<int, int>> active;
    active.reserve(support.size());
    for (const auto& [l, m] : support) active.emplace_back(1 + design.p_f() + l, m);

    const int n = data.n();
    const long n_tot = data.n_tot();
    const Eigen::MatrixXd VtV = design.augmented.transpose() * design.augmented;

    Rng rng = make_rng(seed);
    LatentState state = LatentState::init(
        detail::draw_initial_phi(design.augmented * theta.beta_tilde(), theta.Gamma, rng),
        theta.eta);
    SuffStats S = SuffStats::zero(n, model.q, model.s);

    for (int k = 0; k < schedule.K; ++k) {
        const Eigen::VectorXd omega2 = hyper.omega2_at(k);
        s_step(state, data, model, design, theta, omega2, schedule.h, rng);
        if (k < schedule.n_burnin && schedule.adapt_every > 0 &&
            (k + 1) % schedule.adapt_every == 0)
            state.adapt_scales();
        S = sa_step(S, compute_suffstats(data, model, state.phi, state.psi), schedule.step_size(k));
        PopulationParams prev = std::move(theta);
        theta = m_step_mle(S, active, design, n_tot, prev.Gamma, omega2, VtV);
        if (k < schedule.n_burnin && schedule.anneal_rate > 0.0)
            detail::anneal_variances(theta, prev, schedule.anneal_rate);
        detail::check_divergence(theta, schedule.divergence_bound, k);
    }
    return theta;
}

} // namespace saemvs
