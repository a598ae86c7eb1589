#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "saemvs/errors.hpp"
#include "saemvs/model.hpp"

namespace saemvs {

struct IndividualFit {
    Eigen::VectorXd phi_hat;
    double residual_ss = std::numeric_limits<double>::infinity();
    bool converged = false;
    int iterations = 0;
};

struct LmOptions {
    int max_iter = 200;
    double tol_gradient = 1e-10;
    double tol_step = 1e-12;
    int multistarts = 3;
    double start_spread = 0.4; // starts at phi_init * (1 -/+ spread)
};

namespace detail {

inline double lm_objective(const Eigen::VectorXd& y, const Eigen::VectorXd& t,
                           const NonlinearModel& model, const Eigen::VectorXd& psi,
                           const Eigen::VectorXd& phi, Eigen::VectorXd& residual) {
    for (Eigen::Index j = 0; j < y.size(); ++j) {
        const double g = model.eval(phi, psi, t[j]);
        if (!std::isfinite(g)) return std::numeric_limits<double>::infinity();
        residual[j] = y[j] - g;
    }
    return 0.5 * residual.squaredNorm();
}

inline IndividualFit lm_single_start(const Eigen::VectorXd& y, const Eigen::VectorXd& t,
                                     const NonlinearModel& model, const Eigen::VectorXd& psi,
                                     Eigen::VectorXd phi, const LmOptions& opts) {
    const int q = static_cast<int>(phi.size());
    const Eigen::Index m = y.size();
    Eigen::VectorXd r(m), r_trial(m);
    Eigen::MatrixXd J(m, q);

    IndividualFit fit;
    double f = lm_objective(y, t, model, psi, phi, r);
    double lm_lambda = 1e-3;

    for (int it = 0; it < opts.max_iter; ++it) {
        ++fit.iterations;
        // central-difference Jacobian of the model mean
        for (int c = 0; c < q; ++c) {
            const double h = 1e-6 * std::max(1.0, std::abs(phi[c]));
            Eigen::VectorXd hi = phi, lo = phi;
            hi[c] += h;
            lo[c] -= h;
            for (Eigen::Index j = 0; j < m; ++j) {
                const double gh = model.eval(hi, psi, t[j]);
                const double gl = model.eval(lo, psi, t[j]);
                J(j, c) = (std::isfinite(gh) && std::isfinite(gl)) ? (gh - gl) / (2.0 * h) : 0.0;
            }
        }
        const Eigen::VectorXd grad = J.transpose() * r;
        if (grad.lpNorm<Eigen::Infinity>() < opts.tol_gradient * (1.0 + f)) {
            fit.converged = true;
            break;
        }
        const Eigen::MatrixXd JtJ = J.transpose() * J;

        bool stepped = false;
        for (int inner = 0; inner < 12 && !stepped; ++inner) {
            Eigen::MatrixXd A = JtJ;
            A.diagonal() += lm_lambda * JtJ.diagonal().cwiseMax(1e-12);
            Eigen::VectorXd delta = A.ldlt().solve(grad);
            if (!delta.allFinite()) {
                lm_lambda *= 10.0;
                continue;
            }
            const Eigen::VectorXd phi_trial = phi + delta;
            const double f_trial = lm_objective(y, t, model, psi, phi_trial, r_trial);
            if (f_trial < f) {
                if (delta.lpNorm<Eigen::Infinity>() <
                    opts.tol_step * (1.0 + phi.lpNorm<Eigen::Infinity>())) {
                    fit.converged = true;
                }
                phi = phi_trial;
                r = r_trial;
                f = f_trial;
                lm_lambda = std::max(lm_lambda * 0.3, 1e-12);
                stepped = true;
            } else {
                lm_lambda *= 10.0;
            }
        }
        if (!stepped) break; // trust region exhausted at this scale
        if (fit.converged) break;
    }
    fit.phi_hat = phi;
    fit.residual_ss = 2.0 * f;
    return fit;
}

} // namespace detail

/// Per-individual nonlinear least squares by Levenberg-Marquardt with
/// finite-difference Jacobians; three deterministic multistarts around
/// phi_init, best residual kept.
inline IndividualFit fit_individual(const Eigen::VectorXd& y, const Eigen::VectorXd& t,
                                    const NonlinearModel& model, const Eigen::VectorXd& psi,
                                    const Eigen::VectorXd& phi_init, const LmOptions& opts = {}) {
    if (y.size() != t.size()) throw ShapeMismatch("y and t lengths differ");
    if (y.size() < model.q)
        throw Precondition("individual has fewer observations than parameters (n_i < q)");

    IndividualFit best;
    int total_iterations = 0;
    for (int s = 0; s < opts.multistarts; ++s) {
        Eigen::VectorXd start = phi_init;
        if (s == 1) start *= 1.0 + opts.start_spread;
        if (s == 2) start *= 1.0 - opts.start_spread;
        IndividualFit fit = detail::lm_single_start(y, t, model, psi, start, opts);
        total_iterations += fit.iterations;
        if (fit.residual_ss < best.residual_ss ||
            (fit.converged && !best.converged && fit.residual_ss <= best.residual_ss * (1.0 + 1e-9)))
            best = fit;
    }
    best.iterations = total_iterations;
    return best;
}

} // namespace saemvs
