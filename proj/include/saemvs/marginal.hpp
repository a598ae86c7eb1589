#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>

#include "saemvs/design.hpp"
#include "saemvs/errors.hpp"
#include "saemvs/model.hpp"
#include "saemvs/observations.hpp"
#include "saemvs/params.hpp"
#include "saemvs/rng.hpp"

namespace saemvs {

/// Monte-Carlo estimate of the marginal log-likelihood log p(y; theta):
/// per individual, T i.i.d. draws phi ~ N(mu + lambda'v + beta'V, Gamma)
/// are averaged through a log-sum-exp reduction of the Gaussian residual
/// kernels, with psi fixed at eta.
inline double log_marginal_likelihood(const ObservationSet& data, const NonlinearModel& model,
                                      const DesignMatrices& design, const PopulationParams& theta,
                                      long T, std::uint64_t seed) {
    if (T < 1) throw Precondition("T must be at least 1");
    const int n = data.n();
    const int q = theta.q();
    const double sigma2 = theta.sigma2;

    Eigen::LLT<Eigen::MatrixXd> llt(theta.Gamma);
    if (llt.info() != Eigen::Success)
        throw Precondition("log_marginal_likelihood: Gamma not positive definite");
    const Eigen::MatrixXd L = llt.matrixL();
    const Eigen::MatrixXd prior_mean = design.augmented * theta.beta_tilde();

    Rng rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    double total = 0.0;
    Eigen::VectorXd z(q), phi_i(q);
    for (int i = 0; i < n; ++i) {
        const auto& yi = data.y[static_cast<std::size_t>(i)];
        const auto& ti = data.t[static_cast<std::size_t>(i)];
        const Eigen::VectorXd mean_i = prior_mean.row(i).transpose();
        double max_log = -std::numeric_limits<double>::infinity();
        Eigen::VectorXd logs(T);
        for (long t = 0; t < T; ++t) {
            for (int m = 0; m < q; ++m) z[m] = gauss(rng);
            phi_i = mean_i + L * z;
            double ss = 0.0;
            for (Eigen::Index j = 0; j < yi.size(); ++j) {
                const double r = yi[j] - model.eval(phi_i, theta.eta, ti[j]);
                ss += r * r;
            }
            logs[t] = std::isfinite(ss) ? -0.5 * ss / sigma2
                                        : -std::numeric_limits<double>::infinity();
            max_log = std::max(max_log, logs[t]);
        }
        if (!std::isfinite(max_log))
            throw DegenerateEstimate("log-sum-exp underflowed to -inf for individual " +
                                     std::to_string(i));
        double sum_exp = 0.0;
        for (long t = 0; t < T; ++t) sum_exp += std::exp(logs[t] - max_log);
        const double n_i = static_cast<double>(yi.size());
        total += -0.5 * n_i * std::log(2.0 * M_PI * sigma2) + max_log + std::log(sum_exp) -
                 std::log(static_cast<double>(T));
    }
    return total;
}

} // namespace saemvs
