#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "saemvs/design.hpp"
#include "saemvs/errors.hpp"
#include "saemvs/model.hpp"
#include "saemvs/observations.hpp"
#include "saemvs/params.hpp"
#include "saemvs/rng.hpp"

namespace saemvs {

/// Current latent draw (phi per individual, shared psi) plus the random-walk
/// proposal scales and acceptance counters of every Metropolis block.
struct LatentState {
    Eigen::MatrixXd phi;        // n x q
    Eigen::VectorXd psi;        // s
    Eigen::MatrixXd phi_scales; // n x q, dimensionless multipliers on sqrt(Gamma_mm)
    Eigen::VectorXd psi_scales; // s, multipliers on sqrt(omega2_r)
    Eigen::MatrixXd phi_accepted;
    Eigen::MatrixXd phi_proposed;
    Eigen::VectorXd psi_accepted;
    Eigen::VectorXd psi_proposed;

    static LatentState init(const Eigen::MatrixXd& phi0, const Eigen::VectorXd& psi0) {
        LatentState st;
        st.phi = phi0;
        st.psi = psi0;
        st.phi_scales = Eigen::MatrixXd::Ones(phi0.rows(), phi0.cols());
        st.psi_scales = Eigen::VectorXd::Ones(psi0.size());
        st.reset_counters();
        return st;
    }

    void reset_counters() {
        phi_accepted = Eigen::MatrixXd::Zero(phi.rows(), phi.cols());
        phi_proposed = Eigen::MatrixXd::Zero(phi.rows(), phi.cols());
        psi_accepted = Eigen::VectorXd::Zero(psi.size());
        psi_proposed = Eigen::VectorXd::Zero(psi.size());
    }

    /// Burn-in proposal-scale adjustment towards an acceptance rate in
    /// [0.25, 0.45]; aggressive factors far outside the band so tightly
    /// peaked conditionals are reached within a few epochs.
    void adapt_scales() {
        auto adjust = [](double rate, double& scale) {
            if (rate > 0.45)
                scale *= (rate > 0.70) ? 2.0 : 1.25;
            else if (rate < 0.25)
                scale *= (rate < 0.10) ? 0.5 : 0.8;
            scale = std::clamp(scale, 1e-8, 1e8);
        };
        for (Eigen::Index i = 0; i < phi.rows(); ++i)
            for (Eigen::Index m = 0; m < phi.cols(); ++m)
                if (phi_proposed(i, m) > 0)
                    adjust(phi_accepted(i, m) / phi_proposed(i, m), phi_scales(i, m));
        for (Eigen::Index r = 0; r < psi.size(); ++r)
            if (psi_proposed[r] > 0) adjust(psi_accepted[r] / psi_proposed[r], psi_scales[r]);
        reset_counters();
    }
};

namespace detail {

inline double residual_ss(const ObservationSet& data, const NonlinearModel& model, int i,
                          const Eigen::VectorXd& phi_i, const Eigen::VectorXd& psi) {
    const auto& yi = data.y[static_cast<std::size_t>(i)];
    const auto& ti = data.t[static_cast<std::size_t>(i)];
    double ss = 0.0;
    for (Eigen::Index j = 0; j < yi.size(); ++j) {
        const double r = yi[j] - model.eval(phi_i, psi, ti[j]);
        ss += r * r;
    }
    return ss;
}

} // namespace detail

/// h sweeps of Metropolis-within-Gibbs targeting pi(phi, psi | y, Theta).
/// Each individual sweep combines two kernels: an independent proposal drawn
/// from the prior N(m_i, Gamma), whose acceptance ratio reduces to the
/// likelihood ratio and lets the chain jump onto likelihood modes no matter
/// how the prior is scaled, followed by an adapted componentwise random walk
/// for local exploration. When s > 0, psi is an extra random-walk Gibbs
/// block with prior N(eta, Omega). Non-finite model output rejects the
/// proposal. Per-individual residual sums of squares of the final state are
/// returned through `res_ss` (useful for s1).
inline void s_step(LatentState& state, const ObservationSet& data, const NonlinearModel& model,
                   const DesignMatrices& design, const PopulationParams& theta,
                   const Eigen::VectorXd& omega2, int h, Rng& rng, Eigen::VectorXd* res_ss = nullptr) {
    const int n = data.n();
    const int q = theta.q();
    const int s = theta.s();
    const double inv_2sigma2 = 0.5 / theta.sigma2;

    const Eigen::MatrixXd prior_mean = design.augmented * theta.beta_tilde(); // n x q
    Eigen::LLT<Eigen::MatrixXd> gamma_llt(theta.Gamma);
    if (gamma_llt.info() != Eigen::Success) throw Precondition("s_step: Gamma not positive definite");
    const Eigen::MatrixXd Ginv =
        gamma_llt.solve(Eigen::MatrixXd::Identity(q, q));
    const Eigen::VectorXd gamma_sd = theta.Gamma.diagonal().array().sqrt();

    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    // cached per-individual residual SS under the current (phi, psi)
    Eigen::VectorXd ss(n);
    for (int i = 0; i < n; ++i)
        ss[i] = detail::residual_ss(data, model, i, state.phi.row(i).transpose(), state.psi);

    auto log_prior_phi = [&](const Eigen::VectorXd& centered) {
        return -0.5 * centered.dot(Ginv * centered);
    };

    const Eigen::MatrixXd gamma_chol = gamma_llt.matrixL();
    Eigen::VectorXd z(q);

    for (int sweep = 0; sweep < h; ++sweep) {
        for (int i = 0; i < n; ++i) {
            Eigen::VectorXd phi_i = state.phi.row(i).transpose();
            Eigen::VectorXd centered = phi_i - prior_mean.row(i).transpose();

            // independence kernel: proposal from the prior, likelihood-ratio accept
            {
                for (int m = 0; m < q; ++m) z[m] = gauss(rng);
                const Eigen::VectorXd offset = gamma_chol * z;
                const Eigen::VectorXd phi_prop = prior_mean.row(i).transpose() + offset;
                const double ss_prop = detail::residual_ss(data, model, i, phi_prop, state.psi);
                if (std::isfinite(ss_prop)) {
                    const double log_ratio = -(ss_prop - ss[i]) * inv_2sigma2;
                    if (log_ratio >= 0.0 || std::log(unif(rng)) < log_ratio) {
                        phi_i = phi_prop;
                        centered = offset;
                        ss[i] = ss_prop;
                    }
                }
            }

            for (int m = 0; m < q; ++m) {
                const double step = state.phi_scales(i, m) * gamma_sd[m] * gauss(rng);
                Eigen::VectorXd phi_prop = phi_i;
                phi_prop[m] += step;
                state.phi_proposed(i, m) += 1.0;
                // non-finite likelihood rejects the proposal
                const double ss_prop = detail::residual_ss(data, model, i, phi_prop, state.psi);
                if (!std::isfinite(ss_prop)) continue;
                Eigen::VectorXd centered_prop = centered;
                centered_prop[m] += step;
                const double log_ratio = -(ss_prop - ss[i]) * inv_2sigma2 +
                                         log_prior_phi(centered_prop) - log_prior_phi(centered);
                if (log_ratio >= 0.0 || std::log(unif(rng)) < log_ratio) {
                    phi_i = phi_prop;
                    centered = centered_prop;
                    ss[i] = ss_prop;
                    state.phi_accepted(i, m) += 1.0;
                }
            }
            state.phi.row(i) = phi_i.transpose();
        }

        for (int r = 0; r < s; ++r) {
            const double step = state.psi_scales[r] * std::sqrt(omega2[r]) * gauss(rng);
            Eigen::VectorXd psi_prop = state.psi;
            psi_prop[r] += step;
            state.psi_proposed[r] += 1.0;
            Eigen::VectorXd ss_prop(n);
            bool finite = true;
            double total_delta = 0.0;
            for (int i = 0; i < n; ++i) {
                ss_prop[i] = detail::residual_ss(data, model, i, state.phi.row(i).transpose(), psi_prop);
                if (!std::isfinite(ss_prop[i])) {
                    finite = false;
                    break;
                }
                total_delta += ss_prop[i] - ss[i];
            }
            if (!finite) continue;
            const double d_old = state.psi[r] - theta.eta[r];
            const double d_new = psi_prop[r] - theta.eta[r];
            const double log_ratio = -total_delta * inv_2sigma2 -
                                     0.5 * (d_new * d_new - d_old * d_old) / omega2[r];
            if (log_ratio >= 0.0 || std::log(unif(rng)) < log_ratio) {
                state.psi = psi_prop;
                ss = ss_prop;
                state.psi_accepted[r] += 1.0;
            }
        }
    }
    if (res_ss) *res_ss = ss;
}

} // namespace saemvs
