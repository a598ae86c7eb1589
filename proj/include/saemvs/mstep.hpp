#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>
#include <vector>

#include "saemvs/design.hpp"
#include "saemvs/errors.hpp"
#include "saemvs/model.hpp"
#include "saemvs/observations.hpp"
#include "saemvs/params.hpp"
#include "saemvs/spike_slab.hpp"
#include "saemvs/suffstats.hpp"

namespace saemvs {

namespace detail {

inline Eigen::VectorXd chol_solve_with_jitter(Eigen::MatrixXd M, const Eigen::VectorXd& rhs,
                                              const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success) {
        const double jitter = 1e-8 * (M.trace() / static_cast<double>(M.rows()));
        M.diagonal().array() += jitter;
        llt.compute(M);
        if (llt.info() != Eigen::Success)
            throw SingularSystem(std::string(what) + ": Cholesky failed after jitter retry");
    }
    return llt.solve(rhs);
}

inline Eigen::MatrixXd inverse_spd(const Eigen::MatrixXd& G, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(G);
    if (llt.info() != Eigen::Success)
        throw SingularSystem(std::string(what) + ": matrix is not positive definite");
    return llt.solve(Eigen::MatrixXd::Identity(G.rows(), G.cols()));
}

} // namespace detail

/// Solves the penalized least-squares system for beta_tilde. The normal
/// equations Vt'Vt bt Ginv + bt .* Dstar = Vt's3 Ginv are symmetrized as
/// (Ginv (x) Vt'Vt + diag(vec(Dstar))) vec(bt) = vec(Vt's3 Ginv), which is
/// SPD and solved by Cholesky with a single jitter retry. q = 1 takes the
/// equivalent scalar-Gamma fast path.
inline Eigen::MatrixXd solve_beta_tilde(const Eigen::MatrixXd& VtV, const Eigen::MatrixXd& Vt_s3,
                                        const Eigen::MatrixXd& Gamma,
                                        const Eigen::MatrixXd& dstar_mat) {
    const int w = static_cast<int>(VtV.rows());
    const int q = static_cast<int>(Gamma.rows());
    if (q == 1) {
        Eigen::MatrixXd M = VtV;
        M.diagonal() += Gamma(0, 0) * dstar_mat.col(0);
        Eigen::VectorXd x = detail::chol_solve_with_jitter(std::move(M), Vt_s3.col(0), "beta_tilde");
        return x;
    }
    const Eigen::MatrixXd Ginv = detail::inverse_spd(Gamma, "beta_tilde");
    Eigen::MatrixXd M(q * w, q * w);
    for (int mi = 0; mi < q; ++mi)
        for (int mj = 0; mj < q; ++mj)
            M.block(mi * w, mj * w, w, w) = Ginv(mi, mj) * VtV;
    for (int m = 0; m < q; ++m)
        M.diagonal().segment(m * w, w) += dstar_mat.col(m);
    const Eigen::MatrixXd rhs_mat = Vt_s3 * Ginv;
    Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(rhs_mat.data(), q * w);
    Eigen::VectorXd x = detail::chol_solve_with_jitter(std::move(M), rhs, "beta_tilde");
    return Eigen::Map<const Eigen::MatrixXd>(x.data(), w, q);
}

/// Closed-form maximizers of -Psi(theta) + <S, phi(theta)> given the current
/// stochastic approximation S. Gamma_prev enters the beta_tilde system; the
/// remaining blocks are conditionally exact given beta_tilde.
inline PopulationParams m_step_map(const SuffStats& S, const Eigen::MatrixXd& dstar_mat,
                                   const Eigen::MatrixXd& pstar_mat, const HyperParams& hyper,
                                   const DesignMatrices& design, long n_tot,
                                   const Eigen::MatrixXd& Gamma_prev,
                                   const Eigen::VectorXd& omega2, const Eigen::MatrixXd& VtV) {
    const int n = design.n();
    const int p = design.p();
    const int p_f = design.p_f();
    const int q = static_cast<int>(Gamma_prev.rows());
    const int s = static_cast<int>(omega2.size());

    PopulationParams out;
    out.mu.resize(q);
    out.lambda.resize(p_f, q);
    out.beta.resize(p, q);
    out.alpha.resize(q);
    out.eta.resize(s);

    const Eigen::MatrixXd Vt_s3 = design.augmented.transpose() * S.s3;
    out.set_beta_tilde(solve_beta_tilde(VtV, Vt_s3, Gamma_prev, dstar_mat));

    const Eigen::MatrixXd B = design.augmented * out.beta_tilde(); // n x q fitted prior means
    Eigen::MatrixXd R = hyper.Sigma_Gamma + S.s2 - B.transpose() * S.s3 -
                        S.s3.transpose() * B + B.transpose() * B;
    out.Gamma = (0.5 * (R + R.transpose())) / (static_cast<double>(n) + hyper.d + q + 1.0);

    if (hyper.sigma2_uniform_max)
        out.sigma2 = std::min(S.s1 / static_cast<double>(n_tot), *hyper.sigma2_uniform_max);
    else
        out.sigma2 = (hyper.nu_sigma * hyper.lambda_sigma + S.s1) /
                     (static_cast<double>(n_tot) + hyper.nu_sigma + 2.0);

    for (int m = 0; m < q; ++m) {
        const double num = pstar_mat.col(m).sum() + hyper.a[m] - 1.0;
        const double den = static_cast<double>(p) + hyper.b[m] + hyper.a[m] - 2.0;
        out.alpha[m] = std::clamp(num / den, 0.0, 1.0);
    }

    for (int r = 0; r < s; ++r)
        out.eta[r] = S.s5[r] / (1.0 + omega2[r] / hyper.rho2[r]);

    return out;
}

/// Flat-prior M-step used for maximum-likelihood refits in a sub-model:
/// beta entries outside `active` (selectable block, pairs of (row, m) in
/// beta_tilde coordinates) stay at zero, and the variance updates drop the
/// prior terms.
inline PopulationParams m_step_mle(const SuffStats& S,
                                   const std::vector<std::pair<int, int>>& active,
                                   const DesignMatrices& design, long n_tot,
                                   const Eigen::MatrixXd& Gamma_prev,
                                   const Eigen::VectorXd& omega2, const Eigen::MatrixXd& VtV) {
    const int n = design.n();
    const int p = design.p();
    const int p_f = design.p_f();
    const int w = design.width();
    const int q = static_cast<int>(Gamma_prev.rows());
    const int s = static_cast<int>(omega2.size());

    // free entries of vec(beta_tilde): intercept + forced rows always, then
    // the active selectable pairs
    std::vector<int> free_idx;
    free_idx.reserve(static_cast<std::size_t>(q * (1 + p_f)) + active.size());
    for (int m = 0; m < q; ++m)
        for (int r = 0; r < 1 + p_f; ++r) free_idx.push_back(m * w + r);
    for (const auto& [row, m] : active) free_idx.push_back(m * w + row);
    std::sort(free_idx.begin(), free_idx.end());

    const Eigen::MatrixXd Ginv =
        q == 1 ? Eigen::MatrixXd::Identity(1, 1) : detail::inverse_spd(Gamma_prev, "mle_beta");
    const Eigen::MatrixXd rhs_mat = design.augmented.transpose() * S.s3 * Ginv;

    const int k = static_cast<int>(free_idx.size());
    Eigen::MatrixXd M(k, k);
    Eigen::VectorXd rhs(k);
    for (int a = 0; a < k; ++a) {
        const int ma = free_idx[a] / w, ra = free_idx[a] % w;
        rhs[a] = rhs_mat(ra, ma);
        for (int b = 0; b < k; ++b) {
            const int mb = free_idx[b] / w, rb = free_idx[b] % w;
            M(a, b) = Ginv(ma, mb) * VtV(ra, rb);
        }
    }
    Eigen::VectorXd x = detail::chol_solve_with_jitter(std::move(M), rhs, "mle_beta");

    Eigen::MatrixXd bt = Eigen::MatrixXd::Zero(w, q);
    for (int a = 0; a < k; ++a) bt(free_idx[a] % w, free_idx[a] / w) = x[a];

    PopulationParams out;
    out.mu.resize(q);
    out.lambda.resize(p_f, q);
    out.beta.resize(p, q);
    out.alpha = Eigen::VectorXd::Zero(q);
    out.eta.resize(s);
    out.set_beta_tilde(bt);

    const Eigen::MatrixXd B = design.augmented * bt;
    Eigen::MatrixXd R = S.s2 - B.transpose() * S.s3 - S.s3.transpose() * B + B.transpose() * B;
    out.Gamma = (0.5 * (R + R.transpose())) / static_cast<double>(n);
    {
        // keep Gamma usable in the next S-step even in degenerate regimes
        Eigen::LLT<Eigen::MatrixXd> llt(out.Gamma);
        if (llt.info() != Eigen::Success)
            out.Gamma.diagonal().array() += 1e-10 * std::max(1.0, out.Gamma.trace() / q);
    }
    out.sigma2 = std::max(S.s1 / static_cast<double>(n_tot), 1e-12);
    for (int r = 0; r < s; ++r) out.eta[r] = S.s5[r];
    return out;
}

/// -Psi(theta) + <S, phi(theta)>: the exponential-family representation of
/// Q1-tilde with the sufficient statistics plugged in. Used by the M-step
/// stationarity checks and by the identity test against the direct form.
inline double exp_family_objective(const SuffStats& S, const PopulationParams& theta,
                                   const Eigen::MatrixXd& dstar_mat, const HyperParams& hyper,
                                   const DesignMatrices& design, long n_tot,
                                   const Eigen::VectorXd& omega2) {
    const int n = design.n();
    const int q = theta.q();
    const Eigen::MatrixXd bt = theta.beta_tilde();
    const Eigen::MatrixXd B = design.augmented * bt;
    const Eigen::MatrixXd Ginv = detail::inverse_spd(theta.Gamma, "objective");
    const double logdetG = std::log(theta.Gamma.llt().matrixL().determinant()) * 2.0;

    double psi_fn = 0.5 * (B.transpose() * B * Ginv).trace() +
                    0.5 * (bt.array().square() * dstar_mat.array()).sum() +
                    0.5 * (static_cast<double>(n) + hyper.d + q + 1.0) * logdetG +
                    0.5 * (hyper.Sigma_Gamma * Ginv).trace();
    if (hyper.sigma2_uniform_max)
        psi_fn += 0.5 * static_cast<double>(n_tot) * std::log(theta.sigma2);
    else
        psi_fn += 0.5 * (static_cast<double>(n_tot) + hyper.nu_sigma + 2.0) * std::log(theta.sigma2) +
                  0.5 * hyper.nu_sigma * hyper.lambda_sigma / theta.sigma2;

    double inner = -0.5 * S.s1 / theta.sigma2 - 0.5 * (S.s2 * Ginv).trace() +
                   (S.s3.array() * (B * Ginv).array()).sum();
    for (int r = 0; r < static_cast<int>(omega2.size()); ++r) {
        psi_fn += 0.5 * theta.eta[r] * theta.eta[r] * (1.0 / omega2[r] + 1.0 / hyper.rho2[r]);
        inner += -0.5 * S.s4[r] / omega2[r] + S.s5[r] * theta.eta[r] / omega2[r];
    }
    return -psi_fn + inner;
}

/// Direct evaluation of Q1-tilde (normalisation constant excluded) at an
/// explicit latent state. Algebraically equal to exp_family_objective with
/// the exact statistics of (phi, psi).
inline double q1_tilde(const ObservationSet& data, const NonlinearModel& model,
                       const Eigen::MatrixXd& phi, const Eigen::VectorXd& psi,
                       const PopulationParams& theta, const Eigen::MatrixXd& dstar_mat,
                       const HyperParams& hyper, const DesignMatrices& design,
                       const Eigen::VectorXd& omega2) {
    const int n = design.n();
    const int q = theta.q();
    const long n_tot = data.n_tot();

    double s1 = 0.0;
    for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd phi_i = phi.row(i).transpose();
        const auto& yi = data.y[static_cast<std::size_t>(i)];
        const auto& ti = data.t[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < yi.size(); ++j) {
            const double r = yi[j] - model.eval(phi_i, psi, ti[j]);
            s1 += r * r;
        }
    }

    const Eigen::MatrixXd bt = theta.beta_tilde();
    const Eigen::MatrixXd E = phi - design.augmented * bt;
    const Eigen::MatrixXd Ginv = detail::inverse_spd(theta.Gamma, "q1_tilde");
    const double logdetG = std::log(theta.Gamma.llt().matrixL().determinant()) * 2.0;

    double value = -0.5 * s1 / theta.sigma2 -
                   0.5 * (E.transpose() * E * Ginv).trace() -
                   0.5 * (bt.array().square() * dstar_mat.array()).sum() -
                   0.5 * (static_cast<double>(n) + hyper.d + q + 1.0) * logdetG -
                   0.5 * (hyper.Sigma_Gamma * Ginv).trace();
    if (hyper.sigma2_uniform_max)
        value += -0.5 * static_cast<double>(n_tot) * std::log(theta.sigma2);
    else
        value += -0.5 * (static_cast<double>(n_tot) + hyper.nu_sigma + 2.0) * std::log(theta.sigma2) -
                 0.5 * hyper.nu_sigma * hyper.lambda_sigma / theta.sigma2;
    for (int r = 0; r < static_cast<int>(omega2.size()); ++r)
        value += -0.5 * (psi[r] - theta.eta[r]) * (psi[r] - theta.eta[r]) / omega2[r] -
                 0.5 * theta.eta[r] * theta.eta[r] / hyper.rho2[r];
    return value;
}

/// Q2-tilde, the alpha part of the decomposed Q quantity.
inline double q2_tilde(const Eigen::VectorXd& alpha, const Eigen::MatrixXd& pstar_mat,
                       const HyperParams& hyper) {
    const int p = static_cast<int>(pstar_mat.rows());
    double value = 0.0;
    for (int m = 0; m < static_cast<int>(alpha.size()); ++m) {
        const double am = alpha[m];
        if (am <= 0.0 || am >= 1.0) return -std::numeric_limits<double>::infinity();
        value += std::log(std::sqrt(hyper.nu0 / hyper.nu1) * am / (1.0 - am)) *
                     pstar_mat.col(m).sum() +
                 (hyper.a[m] - 1.0) * std::log(am) +
                 (static_cast<double>(p) + hyper.b[m] - 1.0) * std::log(1.0 - am);
    }
    return value;
}

} // namespace saemvs
