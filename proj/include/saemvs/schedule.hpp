#pragma once

#include <cmath>

#include "saemvs/errors.hpp"

namespace saemvs {

/// SAEM iteration plan: K total iterations with n_burnin burn-in iterations
/// at step size 1, then gamma_k = (k - n_burnin + 1)^(-gamma_exp). h is the
/// number of Metropolis-Hastings sweeps per simulation step.
struct SaemSchedule {
    int K = 500;
    int n_burnin = 350;
    double gamma_exp = 2.0 / 3.0;
    int h = 3;
    double divergence_bound = 1e12;
    // proposal-scale adaptation cadence (burn-in only), in SAEM iterations
    int adapt_every = 10;
    // inflation applied to Gamma(0) for the simulated-annealing variant
    double gamma0_inflation = 1.0;
    // simulated-annealing exploration: during burn-in the variance
    // parameters may shrink by at most this factor per iteration, so a large
    // Gamma(0) decays gradually instead of collapsing onto the first fit.
    // Set to 0 to disable the constraint.
    double anneal_rate = 0.95;

    void validate() const {
        if (K < 1) throw Precondition("K must be positive");
        if (n_burnin < 0 || n_burnin >= K) throw Precondition("require 0 <= n_burnin < K");
        if (!(gamma_exp > 0.5 && gamma_exp <= 1.0))
            throw Precondition("gamma exponent must lie in (0.5, 1]");
        if (h < 1) throw Precondition("h must be at least 1");
    }

    double step_size(int k) const {
        if (k < n_burnin) return 1.0;
        return std::pow(static_cast<double>(k - n_burnin + 1), -gamma_exp);
    }
};

} // namespace saemvs
