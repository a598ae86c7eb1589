#pragma once

#include <Eigen/Dense>

#include "saemvs/errors.hpp"
#include "saemvs/model.hpp"
#include "saemvs/observations.hpp"

namespace saemvs {

/// Minimal sufficient statistics of the complete-data log-posterior:
/// s1 = sum of squared residuals, s2 = phi' phi, s3 = phi, and for the
/// extended model s4 = psi^2 (componentwise), s5 = psi.
struct SuffStats {
    double s1 = 0.0;
    Eigen::MatrixXd s2; // q x q
    Eigen::MatrixXd s3; // n x q
    Eigen::VectorXd s4; // s
    Eigen::VectorXd s5; // s

    static SuffStats zero(int n, int q, int s) {
        SuffStats st;
        st.s2 = Eigen::MatrixXd::Zero(q, q);
        st.s3 = Eigen::MatrixXd::Zero(n, q);
        st.s4 = Eigen::VectorXd::Zero(s);
        st.s5 = Eigen::VectorXd::Zero(s);
        return st;
    }
};

/// Exact statistics for a given latent state.
inline SuffStats compute_suffstats(const ObservationSet& data, const NonlinearModel& model,
                                   const Eigen::MatrixXd& phi, const Eigen::VectorXd& psi) {
    SuffStats st;
    st.s1 = 0.0;
    for (int i = 0; i < data.n(); ++i) {
        const Eigen::VectorXd phi_i = phi.row(i).transpose();
        const auto& yi = data.y[static_cast<std::size_t>(i)];
        const auto& ti = data.t[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < yi.size(); ++j) {
            const double r = yi[j] - model.eval(phi_i, psi, ti[j]);
            st.s1 += r * r;
        }
    }
    st.s2 = phi.transpose() * phi;
    st.s3 = phi;
    st.s4 = psi.array().square();
    st.s5 = psi;
    return st;
}

/// Stochastic-approximation update S_{k+1} = S_k + gamma_k (S_new - S_k).
inline SuffStats sa_step(const SuffStats& current, const SuffStats& fresh, double gamma_k) {
    if (gamma_k < 0.0 || gamma_k > 1.0) throw Precondition("step size must lie in [0,1]");
    SuffStats out;
    out.s1 = current.s1 + gamma_k * (fresh.s1 - current.s1);
    out.s2 = current.s2 + gamma_k * (fresh.s2 - current.s2);
    out.s3 = current.s3 + gamma_k * (fresh.s3 - current.s3);
    out.s4 = current.s4 + gamma_k * (fresh.s4 - current.s4);
    out.s5 = current.s5 + gamma_k * (fresh.s5 - current.s5);
    return out;
}

} // namespace saemvs
