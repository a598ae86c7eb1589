#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "saemvs/errors.hpp"

namespace saemvs {

struct Standardized {
    Eigen::MatrixXd V;      // columns with mean 0, sd 1 (sample sd)
    Eigen::VectorXd means;
    Eigen::VectorXd sds;
};

/// Centers and scales every column of a raw covariate matrix. Means and sds
/// are kept so estimates can be mapped back to the raw scale.
inline Standardized standardize(const Eigen::MatrixXd& V_raw) {
    const int n = static_cast<int>(V_raw.rows());
    const int p = static_cast<int>(V_raw.cols());
    if (n < 2) throw Precondition("standardize needs at least 2 rows");
    Standardized out;
    out.V.resize(n, p);
    out.means.resize(p);
    out.sds.resize(p);
    for (int j = 0; j < p; ++j) {
        const double mean = V_raw.col(j).mean();
        const double var = (V_raw.col(j).array() - mean).square().sum() / static_cast<double>(n - 1);
        if (var < 1e-12) throw ConstantColumn(j);
        const double sd = std::sqrt(var);
        out.means[j] = mean;
        out.sds[j] = sd;
        out.V.col(j) = (V_raw.col(j).array() - mean) / sd;
    }
    return out;
}

/// Back-transforms coefficients estimated on the standardized scale.
inline Eigen::MatrixXd de_standardize(const Eigen::MatrixXd& beta_std, const Eigen::VectorXd& sds) {
    if (beta_std.rows() != sds.size()) throw ShapeMismatch("beta rows and sds length differ");
    return beta_std.array().colwise() / sds.array();
}

/// Vtilde = [1 | forced | V_std]: intercept first, forced block second,
/// selectable block last. Intercept and forced columns are never thresholded.
inline Eigen::MatrixXd build_augmented(const Eigen::MatrixXd& V_std, const Eigen::MatrixXd& forced) {
    const int n = static_cast<int>(V_std.rows());
    if (forced.size() > 0 && forced.rows() != n)
        throw ShapeMismatch("forced covariate block has " + std::to_string(forced.rows()) +
                            " rows, expected " + std::to_string(n));
    const int p_f = forced.size() > 0 ? static_cast<int>(forced.cols()) : 0;
    Eigen::MatrixXd out(n, 1 + p_f + V_std.cols());
    out.col(0).setOnes();
    if (p_f > 0) out.middleCols(1, p_f) = forced;
    out.rightCols(V_std.cols()) = V_std;
    return out;
}

struct DesignMatrices {
    Eigen::MatrixXd V;          // n x p, standardized selectable covariates
    Eigen::MatrixXd forced;     // n x p_f, used as provided
    Eigen::VectorXd means;      // standardization record for V
    Eigen::VectorXd sds;
    Eigen::MatrixXd augmented;  // n x (1 + p_f + p)
    std::vector<std::string> names;
    std::vector<std::string> forced_names;

    int n() const { return static_cast<int>(V.rows()); }
    int p() const { return static_cast<int>(V.cols()); }
    int p_f() const { return forced.size() > 0 ? static_cast<int>(forced.cols()) : 0; }
    int width() const { return 1 + p_f() + p(); }

    static DesignMatrices from_raw(const Eigen::MatrixXd& V_raw,
                                   const Eigen::MatrixXd& forced = Eigen::MatrixXd(),
                                   std::vector<std::string> names = {},
                                   std::vector<std::string> forced_names = {}) {
        DesignMatrices d;
        auto std_out = standardize(V_raw);
        d.V = std::move(std_out.V);
        d.means = std::move(std_out.means);
        d.sds = std::move(std_out.sds);
        d.forced = forced;
        d.augmented = build_augmented(d.V, d.forced);
        d.names = std::move(names);
        d.forced_names = std::move(forced_names);
        return d;
    }
};

} // namespace saemvs
