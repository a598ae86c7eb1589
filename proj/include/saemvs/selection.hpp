#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "saemvs/design.hpp"
#include "saemvs/errors.hpp"
#include "saemvs/marginal.hpp"
#include "saemvs/model.hpp"
#include "saemvs/parallel.hpp"
#include "saemvs/params.hpp"
#include "saemvs/saem.hpp"
#include "saemvs/schedule.hpp"
#include "saemvs/spike_slab.hpp"

namespace saemvs {

/// Selection threshold s_beta(nu0, nu1, alpha). Returns 0 when the log
/// argument drops to 1 or below (every coefficient passes) and +inf when
/// alpha = 0 (nothing is ever selected).
inline double threshold(double nu0, double nu1, double alpha_hat) {
    if (!(nu0 > 0.0 && nu0 < nu1)) throw Precondition("require 0 < nu0 < nu1");
    if (alpha_hat < 0.0 || alpha_hat > 1.0) throw Precondition("alpha_hat must lie in [0,1]");
    if (alpha_hat == 0.0) return std::numeric_limits<double>::infinity();
    // log of sqrt(nu1/nu0) (1-alpha)/alpha, in the same arrangement as the
    // p* log odds so the two selection routes agree at the boundary
    const double log_arg =
        0.5 * std::log(nu1 / nu0) + std::log1p(-alpha_hat) - std::log(alpha_hat);
    if (log_arg <= 0.0) return 0.0;
    return std::sqrt(2.0 * nu0 * nu1 / (nu1 - nu0) * log_arg);
}

/// Estimated support: 0-based (covariate, component) pairs, kept sorted.
struct SupportSet {
    std::vector<std::pair<int, int>> pairs;

    std::size_t size() const { return pairs.size(); }
    bool contains(int l, int m) const {
        return std::binary_search(pairs.begin(), pairs.end(), std::make_pair(l, m));
    }
    void insert(int l, int m) {
        auto v = std::make_pair(l, m);
        auto it = std::lower_bound(pairs.begin(), pairs.end(), v);
        if (it == pairs.end() || *it != v) pairs.insert(it, v);
    }
    bool operator==(const SupportSet& other) const { return pairs == other.pairs; }
    bool operator<(const SupportSet& other) const { return pairs < other.pairs; }

    std::string to_string() const {
        std::string s;
        for (const auto& [l, m] : pairs) {
            if (!s.empty()) s += ' ';
            s += std::to_string(l + 1) + ":" + std::to_string(m + 1);
        }
        return s;
    }
};

/// Thresholding rule: keep (l, m) with |beta_hat| >= s_beta(nu0, nu1,
/// alpha_m), restricted to components selected by the mask. Equivalent to a
/// posterior inclusion probability of at least 1/2 given Theta-hat.
inline SupportSet select_support(const Eigen::MatrixXd& beta_hat, const Eigen::VectorXd& alpha_hat,
                                 double nu0, double nu1,
                                 const std::vector<std::uint8_t>& mask = {}) {
    SupportSet support;
    for (int m = 0; m < beta_hat.cols(); ++m) {
        if (!mask.empty() && mask[static_cast<std::size_t>(m)] == 0) continue;
        const double s_beta = threshold(nu0, nu1, alpha_hat[m]);
        for (int l = 0; l < beta_hat.rows(); ++l)
            if (std::abs(beta_hat(l, m)) >= s_beta) support.insert(l, m);
    }
    return support;
}

/// eBIC penalty term; the binomial coefficient is evaluated through
/// log-gamma with min/max ordering so pen(k) and pen(pq-k) share the exact
/// same floating-point binomial value.
inline double log_binomial(long n, long k) {
    if (k < 0 || k > n) throw Precondition("binomial index out of range");
    const long lo = std::min(k, n - k);
    const long hi = std::max(k, n - k);
    return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(lo) + 1.0) -
           std::lgamma(static_cast<double>(hi) + 1.0);
}

inline double ebic_penalty(std::size_t support_size, int n, int p, int q) {
    return static_cast<double>(support_size) * std::log(static_cast<double>(n)) +
           2.0 * log_binomial(static_cast<long>(p) * q, static_cast<long>(support_size));
}

inline double ebic(double loglik, std::size_t support_size, int n, int p, int q) {
    return -2.0 * loglik + ebic_penalty(support_size, n, p, q);
}

/// Ascending grid of spike variances, all below nu1.
struct Grid {
    std::vector<double> nu0_values;

    static Grid log10_spaced(double lo, double hi, int count) {
        if (count < 1) throw Precondition("grid needs at least one point");
        Grid g;
        g.nu0_values.reserve(static_cast<std::size_t>(count));
        for (int k = 0; k < count; ++k) {
            const double e = count == 1 ? lo : lo + k * (hi - lo) / (count - 1);
            g.nu0_values.push_back(std::pow(10.0, e));
        }
        return g;
    }

    void validate(double nu1) const {
        if (nu0_values.empty()) throw Precondition("empty nu0 grid");
        for (std::size_t i = 0; i < nu0_values.size(); ++i) {
            if (!(nu0_values[i] > 0.0 && nu0_values[i] < nu1))
                throw Precondition("grid values must satisfy 0 < nu0 < nu1");
            if (i > 0 && nu0_values[i] <= nu0_values[i - 1])
                throw Precondition("grid must be strictly increasing");
        }
    }
};

struct GridPointResult {
    double nu0 = 0.0;
    bool ok = false;
    std::string error;
    PopulationParams theta;        // MAP estimate
    Eigen::VectorXd thresholds;    // per component
    SupportSet support;
    int unique_support_id = -1;    // index into SelectionResult::criteria
};

struct SupportCriteria {
    SupportSet support;
    int first_grid_index = 0; // smallest nu0 index producing this support
    bool ok = false;
    std::string error;
    PopulationParams theta_mle;
    double loglik = 0.0;
    double ebic = 0.0;
};

struct SelectionResult {
    std::vector<GridPointResult> grid_points; // ordered by nu0
    std::vector<SupportCriteria> criteria;    // one entry per unique support
    int nu0_hat_index = -1;
    double nu0_hat = 0.0;
    SupportSet final_support;
    PopulationParams theta_final; // MLE in the selected sub-model
    long T_marginal = 0;
};

struct SaemvsOptions {
    long T_marginal = 10000;
    unsigned workers = 1;
};

/// The full selection procedure: one MAP fit and thresholding per grid
/// point, one MLE refit + Monte-Carlo log-likelihood + eBIC per unique
/// support, then the best sparsity level by eBIC argmin (ties broken by
/// smaller support, then smaller nu0). Failed grid points are recorded and
/// excluded; AllPointsFailed if none survive.
inline SelectionResult run_saemvs(const ObservationSet& data, const NonlinearModel& model,
                                  const DesignMatrices& design, const HyperParams& hyper,
                                  const Grid& grid, const SaemSchedule& schedule,
                                  const PopulationParams& theta0, std::uint64_t base_seed,
                                  const SaemvsOptions& options = {}) {
    grid.validate(hyper.nu1);
    const std::size_t G = grid.nu0_values.size();

    SelectionResult result;
    result.T_marginal = options.T_marginal;
    result.grid_points.resize(G);

    parallel_for(G, options.workers, [&](std::size_t g) {
        GridPointResult& point = result.grid_points[g];
        point.nu0 = grid.nu0_values[g];
        HyperParams h = hyper;
        h.nu0 = point.nu0;
        try {
            MapResult map = run_map(data, model, design, h, schedule, theta0,
                                    derive_seed(base_seed, "map", g));
            point.theta = std::move(map.theta_hat);
            point.thresholds.resize(model.q);
            for (int m = 0; m < model.q; ++m)
                point.thresholds[m] = threshold(h.nu0, h.nu1, point.theta.alpha[m]);
            point.support = select_support(point.theta.beta, point.theta.alpha, h.nu0, h.nu1,
                                           model.selection_mask);
            point.ok = true;
        } catch (const Error& e) {
            point.error = std::string(e.code()) + ": " + e.what();
        }
    });

    // deduplicate supports in order of first appearance along the grid
    std::map<SupportSet, int> support_ids;
    for (std::size_t g = 0; g < G; ++g) {
        auto& point = result.grid_points[g];
        if (!point.ok) continue;
        auto [it, inserted] = support_ids.try_emplace(point.support,
                                                      static_cast<int>(result.criteria.size()));
        if (inserted) {
            SupportCriteria crit;
            crit.support = point.support;
            crit.first_grid_index = static_cast<int>(g);
            result.criteria.push_back(std::move(crit));
        }
        point.unique_support_id = it->second;
    }
    if (result.criteria.empty()) throw AllPointsFailed("no grid point produced a MAP estimate");

    parallel_for(result.criteria.size(), options.workers, [&](std::size_t u) {
        SupportCriteria& crit = result.criteria[u];
        const GridPointResult& origin =
            result.grid_points[static_cast<std::size_t>(crit.first_grid_index)];
        try {
            crit.theta_mle = run_mle(data, model, design, crit.support.pairs, hyper, schedule,
                                     origin.theta, derive_seed(base_seed, "mle", u));
            crit.loglik = log_marginal_likelihood(data, model, design, crit.theta_mle,
                                                  options.T_marginal,
                                                  derive_seed(base_seed, "marginal", u));
            crit.ebic = ebic(crit.loglik, crit.support.size(), design.n(), design.p(), model.q);
            crit.ok = true;
        } catch (const Error& e) {
            crit.error = std::string(e.code()) + ": " + e.what();
        }
    });

    int best = -1;
    for (std::size_t g = 0; g < G; ++g) {
        const auto& point = result.grid_points[g];
        if (!point.ok ||
            !result.criteria[static_cast<std::size_t>(point.unique_support_id)].ok)
            continue;
        if (best < 0) {
            best = static_cast<int>(g);
            continue;
        }
        const auto& cand = result.criteria[static_cast<std::size_t>(point.unique_support_id)];
        const auto& incumbent = result.criteria[static_cast<std::size_t>(
            result.grid_points[static_cast<std::size_t>(best)].unique_support_id)];
        if (cand.ebic < incumbent.ebic ||
            (cand.ebic == incumbent.ebic && cand.support.size() < incumbent.support.size()))
            best = static_cast<int>(g);
    }
    if (best < 0) throw AllPointsFailed("every grid point failed at the MAP or criteria stage");
    result.nu0_hat_index = best;
    result.nu0_hat = grid.nu0_values[static_cast<std::size_t>(best)];
    const auto& chosen = result.criteria[static_cast<std::size_t>(
        result.grid_points[static_cast<std::size_t>(best)].unique_support_id)];
    result.final_support = chosen.support;
    result.theta_final = chosen.theta_mle;
    return result;
}

} // namespace saemvs
