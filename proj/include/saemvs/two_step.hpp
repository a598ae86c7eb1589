#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "saemvs/design.hpp"
#include "saemvs/errors.hpp"
#include "saemvs/lasso.hpp"
#include "saemvs/model.hpp"
#include "saemvs/nls.hpp"
#include "saemvs/observations.hpp"
#include "saemvs/parallel.hpp"
#include "saemvs/selection.hpp"

namespace saemvs {

enum class TwoStepVariant { gaussian, mgaussian };

struct TwoStepResult {
    SupportSet support;
    std::vector<IndividualFit> fits;
    int n_converged = 0;
    Eigen::MatrixXd phi_hat;            // converged individuals only
    std::vector<int> used_individuals;  // row mapping of phi_hat
    std::vector<LassoPath> paths;       // per response (gaussian) or one (mgaussian)
    std::vector<double> lambda_1se;
};

/// The two-step baseline: per-individual nonlinear least squares, then a
/// cross-validated lasso on the fitted individual parameters. "gaussian"
/// selects per response; "mgaussian" couples the responses through row
/// groups, forcing a common support. Non-converged individuals are excluded
/// (TooFewConverged below 50%).
inline TwoStepResult two_step_select(const ObservationSet& data, const Eigen::MatrixXd& V_raw,
                                     const NonlinearModel& model, const Eigen::VectorXd& psi_known,
                                     const Eigen::VectorXd& phi_init, TwoStepVariant variant,
                                     int folds, std::uint64_t seed, unsigned workers = 1,
                                     const LmOptions& lm_opts = {}) {
    const int n = data.n();
    const int q = model.q;
    TwoStepResult out;
    out.fits.resize(static_cast<std::size_t>(n));
    parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t i) {
        out.fits[i] = fit_individual(data.y[i], data.t[i], model, psi_known, phi_init, lm_opts);
    });

    for (int i = 0; i < n; ++i)
        if (out.fits[static_cast<std::size_t>(i)].converged) out.used_individuals.push_back(i);
    out.n_converged = static_cast<int>(out.used_individuals.size());
    if (out.n_converged * 2 < n)
        throw TooFewConverged("only " + std::to_string(out.n_converged) + " of " +
                              std::to_string(n) + " individual fits converged");

    Eigen::MatrixXd V_sub(out.n_converged, V_raw.cols());
    out.phi_hat.resize(out.n_converged, q);
    for (int r = 0; r < out.n_converged; ++r) {
        const int i = out.used_individuals[static_cast<std::size_t>(r)];
        V_sub.row(r) = V_raw.row(i);
        out.phi_hat.row(r) = out.fits[static_cast<std::size_t>(i)].phi_hat.transpose();
    }
    const Eigen::MatrixXd V_std = standardize(V_sub).V;

    auto support_from = [&](const Eigen::MatrixXd& coef, int response) {
        for (int l = 0; l < coef.rows(); ++l)
            for (int m = 0; m < coef.cols(); ++m) {
                const int target_m = coef.cols() == q ? m : response;
                if (coef(l, m) != 0.0 && model.selectable(target_m))
                    out.support.insert(l, target_m);
            }
    };

    if (variant == TwoStepVariant::mgaussian) {
        Eigen::MatrixXd Y = out.phi_hat;
        Y.rowwise() -= Y.colwise().mean().eval();
        const Eigen::VectorXd grid = lambda_grid(V_std, Y);
        CvResult cv = cross_validate(out.phi_hat, V_std, folds, grid, derive_seed(seed, "cv"));
        LassoPath path = lasso_multivariate(Y, V_std, grid);
        path.cv_mse = cv.cv_mse;
        path.cv_se = cv.cv_se;
        path.lambda_1se = cv.lambda_1se;
        path.lambda_1se_index = cv.index_1se;
        support_from(path.coefficients[static_cast<std::size_t>(cv.index_1se)], -1);
        out.paths.push_back(std::move(path));
        out.lambda_1se.push_back(cv.lambda_1se);
    } else {
        for (int m = 0; m < q; ++m) {
            Eigen::VectorXd y = out.phi_hat.col(m);
            y.array() -= y.mean();
            const Eigen::VectorXd grid = lambda_grid(V_std, y);
            CvResult cv = cross_validate(out.phi_hat.col(m), V_std, folds, grid,
                                         derive_seed(seed, "cv", static_cast<std::uint64_t>(m)));
            LassoPath path = lasso_univariate(y, V_std, grid);
            path.cv_mse = cv.cv_mse;
            path.cv_se = cv.cv_se;
            path.lambda_1se = cv.lambda_1se;
            path.lambda_1se_index = cv.index_1se;
            support_from(path.coefficients[static_cast<std::size_t>(cv.index_1se)], m);
            out.paths.push_back(std::move(path));
            out.lambda_1se.push_back(cv.lambda_1se);
        }
    }
    return out;
}

/// Mean absolute estimation error of the individual parameters over the
/// converged fits, per component.
inline Eigen::VectorXd mean_estimation_error(const TwoStepResult& result,
                                             const Eigen::MatrixXd& phi_true) {
    const int q = static_cast<int>(result.phi_hat.cols());
    Eigen::VectorXd mee = Eigen::VectorXd::Zero(q);
    for (int r = 0; r < result.phi_hat.rows(); ++r) {
        const int i = result.used_individuals[static_cast<std::size_t>(r)];
        mee += (result.phi_hat.row(r) - phi_true.row(i)).cwiseAbs().transpose();
    }
    return mee / static_cast<double>(std::max(1, static_cast<int>(result.phi_hat.rows())));
}

} // namespace saemvs
