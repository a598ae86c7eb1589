#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "saemvs/errors.hpp"
#include "saemvs/rng.hpp"

namespace saemvs {

/// Coefficients along a decreasing penalty grid, with cross-validation
/// results when filled by cross_validate.
struct LassoPath {
    Eigen::VectorXd lambdas;                    // strictly decreasing
    std::vector<Eigen::MatrixXd> coefficients;  // per lambda, p x q
    Eigen::VectorXd cv_mse;
    Eigen::VectorXd cv_se;
    double lambda_1se = 0.0;
    int lambda_1se_index = -1;
};

namespace detail {

inline double soft(double z, double lambda) {
    if (z > lambda) return z - lambda;
    if (z < -lambda) return z + lambda;
    return 0.0;
}

// one full pass of cyclic coordinate descent; returns max coefficient change
inline double cd_pass_univariate(const Eigen::MatrixXd& V, Eigen::VectorXd& beta,
                                 Eigen::VectorXd& r, const Eigen::VectorXd& col_sq_n,
                                 double lambda) {
    const double n = static_cast<double>(V.rows());
    double max_delta = 0.0;
    for (Eigen::Index j = 0; j < V.cols(); ++j) {
        const double old = beta[j];
        const double z = col_sq_n[j] * old + V.col(j).dot(r) / n;
        const double updated = soft(z, lambda) / col_sq_n[j];
        if (updated != old) {
            r += V.col(j) * (old - updated);
            beta[j] = updated;
            max_delta = std::max(max_delta, std::abs(updated - old));
        }
    }
    return max_delta;
}

inline double cd_pass_group(const Eigen::MatrixXd& V, Eigen::MatrixXd& beta, Eigen::MatrixXd& R,
                            const Eigen::VectorXd& col_sq_n, double lambda) {
    const double n = static_cast<double>(V.rows());
    double max_delta = 0.0;
    for (Eigen::Index l = 0; l < V.cols(); ++l) {
        const Eigen::RowVectorXd old = beta.row(l);
        const Eigen::RowVectorXd z = col_sq_n[l] * old + V.col(l).transpose() * R / n;
        const double norm = z.norm();
        Eigen::RowVectorXd updated = Eigen::RowVectorXd::Zero(beta.cols());
        if (norm > lambda) updated = z * ((1.0 - lambda / norm) / col_sq_n[l]);
        if (updated != old) {
            R += V.col(l) * (old - updated);
            beta.row(l) = updated;
            max_delta = std::max(max_delta, (updated - old).lpNorm<Eigen::Infinity>());
        }
    }
    return max_delta;
}

} // namespace detail

/// Largest penalty with an all-zero solution: max_l |v_l' y| / n for the
/// univariate problem and max_l ||v_l' Y||_2 / n for row groups.
inline double lambda_max(const Eigen::MatrixXd& V, const Eigen::MatrixXd& targets_centered) {
    const double n = static_cast<double>(V.rows());
    double best = 0.0;
    for (Eigen::Index l = 0; l < V.cols(); ++l)
        best = std::max(best, (V.col(l).transpose() * targets_centered).norm() / n);
    return best;
}

/// 100 log-spaced penalties from lambda_max down to ratio * lambda_max.
inline Eigen::VectorXd lambda_grid(const Eigen::MatrixXd& V,
                                   const Eigen::MatrixXd& targets_centered, int count = 100,
                                   double ratio = 1e-3) {
    const double top = lambda_max(V, targets_centered);
    Eigen::VectorXd grid(count);
    for (int k = 0; k < count; ++k)
        grid[k] = top * std::pow(ratio, static_cast<double>(k) / (count - 1));
    return grid;
}

/// Pathwise coordinate-descent lasso, objective (1/2n)||y - V b||^2 +
/// lambda ||b||_1, warm starts along decreasing lambda, convergence when the
/// largest coefficient change drops below 1e-7.
inline LassoPath lasso_univariate(const Eigen::VectorXd& targets_centered, const Eigen::MatrixXd& V,
                                  const Eigen::VectorXd& lambdas) {
    const double n = static_cast<double>(V.rows());
    Eigen::VectorXd col_sq_n(V.cols());
    for (Eigen::Index j = 0; j < V.cols(); ++j) col_sq_n[j] = V.col(j).squaredNorm() / n;

    LassoPath path;
    path.lambdas = lambdas;
    path.coefficients.reserve(static_cast<std::size_t>(lambdas.size()));
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(V.cols());
    Eigen::VectorXd r = targets_centered;
    for (Eigen::Index k = 0; k < lambdas.size(); ++k) {
        for (int it = 0; it < 100000; ++it)
            if (detail::cd_pass_univariate(V, beta, r, col_sq_n, lambdas[k]) < 1e-7) break;
        path.coefficients.emplace_back(beta);
    }
    return path;
}

/// Multi-response lasso with row-wise L2 groups across the q responses
/// (glmnet's mgaussian family): block coordinate descent with group
/// soft-thresholding.
inline LassoPath lasso_multivariate(const Eigen::MatrixXd& targets_centered,
                                    const Eigen::MatrixXd& V, const Eigen::VectorXd& lambdas) {
    const double n = static_cast<double>(V.rows());
    Eigen::VectorXd col_sq_n(V.cols());
    for (Eigen::Index j = 0; j < V.cols(); ++j) col_sq_n[j] = V.col(j).squaredNorm() / n;

    LassoPath path;
    path.lambdas = lambdas;
    path.coefficients.reserve(static_cast<std::size_t>(lambdas.size()));
    Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(V.cols(), targets_centered.cols());
    Eigen::MatrixXd R = targets_centered;
    for (Eigen::Index k = 0; k < lambdas.size(); ++k) {
        for (int it = 0; it < 100000; ++it)
            if (detail::cd_pass_group(V, beta, R, col_sq_n, lambdas[k]) < 1e-7) break;
        path.coefficients.emplace_back(beta);
    }
    return path;
}

inline double lasso_objective(const Eigen::MatrixXd& targets_centered, const Eigen::MatrixXd& V,
                              const Eigen::MatrixXd& beta, double lambda, bool grouped) {
    const double n = static_cast<double>(V.rows());
    const double fit = (targets_centered - V * beta).squaredNorm() / (2.0 * n);
    double pen = 0.0;
    for (Eigen::Index l = 0; l < beta.rows(); ++l)
        pen += grouped ? beta.row(l).norm() : beta.row(l).cwiseAbs().sum();
    return fit + lambda * pen;
}

/// Largest subgradient-optimality violation of a lasso solution:
/// |v_j' r| / n <= lambda for inactive coefficients, equality at the sign
/// for active ones (L2-norm analogue for row groups).
inline double kkt_violation(const Eigen::MatrixXd& targets_centered, const Eigen::MatrixXd& V,
                            const Eigen::MatrixXd& beta, double lambda, bool grouped) {
    const double n = static_cast<double>(V.rows());
    const Eigen::MatrixXd R = targets_centered - V * beta;
    double worst = 0.0;
    for (Eigen::Index l = 0; l < V.cols(); ++l) {
        const Eigen::RowVectorXd g = V.col(l).transpose() * R / n;
        if (grouped) {
            const double bn = beta.row(l).norm();
            worst = std::max(worst, bn == 0.0 ? std::max(0.0, g.norm() - lambda)
                                              : (g - lambda * beta.row(l) / bn).norm());
        } else {
            for (Eigen::Index m = 0; m < beta.cols(); ++m) {
                const double b = beta(l, m);
                worst = std::max(worst, b == 0.0
                                            ? std::max(0.0, std::abs(g[m]) - lambda)
                                            : std::abs(g[m] - lambda * (b > 0 ? 1.0 : -1.0)));
            }
        }
    }
    return worst;
}

struct CvResult {
    Eigen::VectorXd cv_mse;
    Eigen::VectorXd cv_se;
    int index_min = -1;
    int index_1se = -1;
    double lambda_1se = 0.0;
};

/// K-fold cross-validation of the pathwise lasso (grouped when q > 1);
/// returns the largest lambda whose CV mean squared error is within one
/// standard error of the smallest.
inline CvResult cross_validate(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& V,
                               int folds, const Eigen::VectorXd& lambdas, std::uint64_t seed) {
    const int n = static_cast<int>(V.rows());
    const int q = static_cast<int>(targets.cols());
    if (folds < 2 || folds > n) throw Precondition("folds must lie in [2, n]");

    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng rng = make_rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    Eigen::MatrixXd fold_mse(folds, lambdas.size());
    for (int f = 0; f < folds; ++f) {
        std::vector<int> val, train;
        for (int i = 0; i < n; ++i)
            ((i % folds == f) ? val : train).push_back(order[static_cast<std::size_t>(i)]);

        Eigen::MatrixXd Vt(train.size(), V.cols()), Yt(train.size(), q);
        for (std::size_t r = 0; r < train.size(); ++r) {
            Vt.row(static_cast<Eigen::Index>(r)) = V.row(train[r]);
            Yt.row(static_cast<Eigen::Index>(r)) = targets.row(train[r]);
        }
        const Eigen::RowVectorXd mean = Yt.colwise().mean();
        Yt.rowwise() -= mean;
        LassoPath path = q == 1 ? lasso_univariate(Yt.col(0), Vt, lambdas)
                                : lasso_multivariate(Yt, Vt, lambdas);
        for (Eigen::Index k = 0; k < lambdas.size(); ++k) {
            double err = 0.0;
            for (int i : val) {
                const Eigen::RowVectorXd pred =
                    mean + V.row(i) * path.coefficients[static_cast<std::size_t>(k)];
                err += (targets.row(i) - pred).squaredNorm();
            }
            fold_mse(f, k) = err / (static_cast<double>(val.size()) * q);
        }
    }

    CvResult out;
    out.cv_mse = fold_mse.colwise().mean();
    out.cv_se.resize(lambdas.size());
    for (Eigen::Index k = 0; k < lambdas.size(); ++k) {
        const double m = out.cv_mse[k];
        const double var = (fold_mse.col(k).array() - m).square().sum() / (folds - 1.0);
        out.cv_se[k] = std::sqrt(var / folds);
    }
    Eigen::Index imin;
    out.cv_mse.minCoeff(&imin);
    out.index_min = static_cast<int>(imin);
    const double bound = out.cv_mse[imin] + out.cv_se[imin];
    for (Eigen::Index k = 0; k <= imin; ++k) {
        if (out.cv_mse[k] <= bound) {
            out.index_1se = static_cast<int>(k);
            break;
        }
    }
    out.lambda_1se = lambdas[out.index_1se];
    return out;
}

} // namespace saemvs
