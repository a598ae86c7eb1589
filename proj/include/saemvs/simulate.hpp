#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "saemvs/design.hpp"
#include "saemvs/errors.hpp"
#include "saemvs/model.hpp"
#include "saemvs/observations.hpp"
#include "saemvs/parallel.hpp"
#include "saemvs/params.hpp"
#include "saemvs/rng.hpp"
#include "saemvs/selection.hpp"

namespace saemvs {

enum class CovariateLaw { iid_gaussian, iid_binomial, ar_scenario };

/// A synthetic experimental design: model, true parameter values, covariate
/// law, observation grid and partial-observation fraction.
struct ScenarioSpec {
    std::string model_name = "logistic_growth";
    std::map<std::string, double> model_constants;
    int n = 200;
    int p = 500;
    Eigen::VectorXd true_mu;
    Eigen::MatrixXd true_beta;  // p x q
    Eigen::MatrixXd true_Gamma; // q x q, zero allowed for noiseless designs
    double true_sigma2 = 30.0;
    Eigen::VectorXd true_psi;   // s
    CovariateLaw law = CovariateLaw::iid_gaussian;
    double binomial_prob = 0.2;
    int ar_variant = 0;         // 1..4 when law == ar_scenario
    double rho = 0.0;
    Eigen::VectorXd time_grid;
    double p_partial = 0.0;     // fraction of individuals truncated ...
    int partial_keep = 3;       // ... to this many leading observation times
    int replicates = 1;
    std::uint64_t base_seed = 0;

    int q() const { return static_cast<int>(true_mu.size()); }

    /// The logistic growth design: J = 10 regular times from 150 to 3000,
    /// beta = (100, 50, 20, 0, ...), psi = (200, 300), sigma2 = 30.
    static ScenarioSpec logistic(int n, int p, double gamma2) {
        ScenarioSpec spec;
        spec.model_name = "logistic_growth";
        spec.n = n;
        spec.p = p;
        spec.true_mu = Eigen::VectorXd::Constant(1, 1200.0);
        spec.true_beta = Eigen::MatrixXd::Zero(p, 1);
        spec.true_beta(0, 0) = 100.0;
        spec.true_beta(1, 0) = 50.0;
        spec.true_beta(2, 0) = 20.0;
        spec.true_Gamma = Eigen::MatrixXd::Constant(1, 1, gamma2);
        spec.true_sigma2 = 30.0;
        spec.true_psi = Eigen::VectorXd(2);
        spec.true_psi << 200.0, 300.0;
        const int J = 10;
        spec.time_grid.resize(J);
        for (int j = 0; j < J; ++j)
            spec.time_grid[j] = 150.0 + j * (3000.0 - 150.0) / (J - 1);
        return spec;
    }

    /// The pharmacokinetic design: binomial(0.2) covariates, 12 fixed
    /// observation times, staggered supports for the two components.
    static ScenarioSpec pk(int n, int p, double p_partial) {
        if (p < 5) throw Precondition("the PK design needs at least 5 covariates");
        ScenarioSpec spec;
        spec.model_name = "one_compartment_pk";
        spec.n = n;
        spec.p = p;
        spec.true_mu = Eigen::VectorXd(2);
        spec.true_mu << 6.0, 8.0;
        spec.true_beta = Eigen::MatrixXd::Zero(p, 2);
        spec.true_beta(0, 0) = 3.0;
        spec.true_beta(1, 0) = 2.0;
        spec.true_beta(2, 0) = 1.0;
        spec.true_beta(2, 1) = 3.0;
        spec.true_beta(3, 1) = 2.0;
        spec.true_beta(4, 1) = 1.0;
        spec.true_Gamma.resize(2, 2);
        spec.true_Gamma << 0.2, 0.05, 0.05, 0.1;
        spec.true_sigma2 = 1e-3;
        spec.true_psi = Eigen::VectorXd(0);
        spec.law = CovariateLaw::iid_binomial;
        spec.time_grid.resize(12);
        spec.time_grid << 0.05, 0.15, 0.25, 0.4, 0.5, 0.8, 1.0, 2.0, 7.0, 12.0, 24.0, 40.0;
        spec.p_partial = p_partial;
        return spec;
    }
};

/// Correlation matrix of the four autoregressive scenarios.
inline Eigen::MatrixXd scenario_sigma(int variant, int p, double rho) {
    if (std::abs(rho) >= 1.0) throw InvalidCorrelation("require |rho| < 1");
    if (p <= 3) throw Precondition("AR scenarios need p > 3");
    Eigen::MatrixXd S = Eigen::MatrixXd::Identity(p, p);
    auto ar_block = [rho](Eigen::Ref<Eigen::MatrixXd> block) {
        const int k = static_cast<int>(block.rows());
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) block(i, j) = std::pow(rho, std::abs(i - j));
    };
    switch (variant) {
        case 1: // non-influential block AR, influential block left alone
            ar_block(S.bottomRightCorner(p - 3, p - 3));
            break;
        case 2: // third influential covariate correlated with every other one
            for (int j = 3; j < p; ++j) {
                S(2, j) = std::pow(rho, j - 2);
                S(j, 2) = S(2, j);
            }
            break;
        case 3: // influential covariates AR among themselves
            ar_block(S.topLeftCorner(3, 3));
            break;
        case 4: // AR across the whole covariate vector
            ar_block(S);
            break;
        default:
            throw Precondition("AR scenario variant must be 1, 2, 3 or 4");
    }
    return S;
}

/// Draws the n x p raw covariate matrix of a scenario. Rows are i.i.d.; the
/// AR scenarios sample through the Cholesky factor of scenario_sigma and
/// reject non-positive-definite specifications (scenario 2 at extreme rho).
inline Eigen::MatrixXd gen_covariates(const ScenarioSpec& spec, Rng& rng) {
    Eigen::MatrixXd V(spec.n, spec.p);
    std::normal_distribution<double> gauss(0.0, 1.0);
    switch (spec.law) {
        case CovariateLaw::iid_gaussian:
            for (int i = 0; i < spec.n; ++i)
                for (int j = 0; j < spec.p; ++j) V(i, j) = gauss(rng);
            break;
        case CovariateLaw::iid_binomial: {
            std::bernoulli_distribution bern(spec.binomial_prob);
            for (int i = 0; i < spec.n; ++i)
                for (int j = 0; j < spec.p; ++j) V(i, j) = bern(rng) ? 1.0 : 0.0;
            break;
        }
        case CovariateLaw::ar_scenario: {
            const Eigen::MatrixXd S = scenario_sigma(spec.ar_variant, spec.p, spec.rho);
            Eigen::LLT<Eigen::MatrixXd> llt(S);
            if (llt.info() != Eigen::Success)
                throw InvalidCorrelation("scenario " + std::to_string(spec.ar_variant) +
                                         " correlation matrix is not positive definite at rho=" +
                                         std::to_string(spec.rho));
            const Eigen::MatrixXd L = llt.matrixL();
            Eigen::VectorXd z(spec.p);
            for (int i = 0; i < spec.n; ++i) {
                for (int j = 0; j < spec.p; ++j) z[j] = gauss(rng);
                V.row(i) = (L * z).transpose();
            }
            break;
        }
    }
    return V;
}

struct SimulatedTruth {
    Eigen::MatrixXd phi;  // n x q individual parameters actually drawn
    SupportSet support;   // nonzero beta entries on selectable components
    Eigen::MatrixXd beta; // the true coefficient matrix
};

struct SimulatedData {
    ObservationSet obs;
    DesignMatrices design;
    SimulatedTruth truth;
    NonlinearModel model;
};

/// Simulates one replicate: covariates, individual parameters
/// phi_i = mu + beta'V_i + xi_i, responses y_ij = g(phi_i, psi, t_j) + eps,
/// then truncates the first round(p_partial n) individuals to the leading
/// `partial_keep` observation times. The analysis design matrix is the
/// standardized version of the drawn covariates.
inline SimulatedData gen_dataset(const ScenarioSpec& spec, int replicate_index) {
    const std::uint64_t rep_seed = spec.base_seed + static_cast<std::uint64_t>(replicate_index);
    Rng rng = make_rng(derive_seed(rep_seed, "data"));
    std::normal_distribution<double> gauss(0.0, 1.0);

    SimulatedData out;
    out.model = make_model(spec.model_name, spec.model_constants);
    const int q = out.model.q;
    if (spec.true_mu.size() != q || spec.true_beta.cols() != q)
        throw ShapeMismatch("scenario truth dimensions do not match the model");

    const Eigen::MatrixXd V = gen_covariates(spec, rng);

    const bool noiseless_re = spec.true_Gamma.isZero(0.0);
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(q, q);
    if (!noiseless_re) {
        Eigen::LLT<Eigen::MatrixXd> llt(spec.true_Gamma);
        if (llt.info() != Eigen::Success)
            throw Precondition("true_Gamma must be positive semidefinite");
        L = llt.matrixL();
    }

    out.truth.beta = spec.true_beta;
    out.truth.phi.resize(spec.n, q);
    Eigen::VectorXd z(q);
    for (int i = 0; i < spec.n; ++i) {
        for (int m = 0; m < q; ++m) z[m] = gauss(rng);
        out.truth.phi.row(i) =
            (spec.true_mu + spec.true_beta.transpose() * V.row(i).transpose() + L * z).transpose();
    }

    const int N1 = static_cast<int>(std::llround(spec.p_partial * spec.n));
    const double sigma = std::sqrt(spec.true_sigma2);
    for (int i = 0; i < spec.n; ++i) {
        const int n_i = (i < N1) ? std::min<int>(spec.partial_keep,
                                                 static_cast<int>(spec.time_grid.size()))
                                 : static_cast<int>(spec.time_grid.size());
        Eigen::VectorXd t = spec.time_grid.head(n_i);
        Eigen::VectorXd y(n_i);
        const Eigen::VectorXd phi_i = out.truth.phi.row(i).transpose();
        for (int j = 0; j < n_i; ++j)
            y[j] = out.model.eval(phi_i, spec.true_psi, t[j]) + sigma * gauss(rng);
        out.obs.y.push_back(std::move(y));
        out.obs.t.push_back(std::move(t));
    }

    out.design = DesignMatrices::from_raw(V);
    for (int m = 0; m < q; ++m) {
        if (!out.model.selectable(m)) continue;
        for (int l = 0; l < spec.p; ++l)
            if (spec.true_beta(l, m) != 0.0) out.truth.support.insert(l, m);
    }
    return out;
}

enum class Outcome { Exact, OverSelection, FnOnly, FpAndFn };

inline const char* outcome_name(Outcome o) {
    switch (o) {
        case Outcome::Exact: return "exact";
        case Outcome::OverSelection: return "over_selection";
        case Outcome::FnOnly: return "fn_only";
        case Outcome::FpAndFn: return "fp_and_fn";
    }
    return "?";
}

struct ReplicateRecord {
    double sensitivity = 0.0;
    double specificity = 0.0;
    double accuracy = 0.0;
    Outcome outcome = Outcome::Exact;
    std::vector<Outcome> per_component;
};

/// Confusion-matrix summary of a selected support against the truth over the
/// p x q coefficient grid.
inline ReplicateRecord evaluate(const SupportSet& selected, const SupportSet& truth, int p, int q) {
    if (truth.size() == 0) throw EmptyTruth();
    long tp = 0, fp = 0;
    for (const auto& [l, m] : selected.pairs) {
        if (l < 0 || l >= p || m < 0 || m >= q) throw Precondition("support index out of range");
        (truth.contains(l, m) ? tp : fp) += 1;
    }
    const long fn = static_cast<long>(truth.size()) - tp;
    const long total = static_cast<long>(p) * q;
    const long tn = total - tp - fp - fn;

    ReplicateRecord rec;
    rec.sensitivity = static_cast<double>(tp) / static_cast<double>(truth.size());
    rec.specificity = static_cast<double>(tn) / static_cast<double>(total - truth.size());
    rec.accuracy = static_cast<double>(tp + tn) / static_cast<double>(total);
    auto classify = [](long fps, long fns) {
        if (fps == 0 && fns == 0) return Outcome::Exact;
        if (fns == 0) return Outcome::OverSelection;
        if (fps == 0) return Outcome::FnOnly;
        return Outcome::FpAndFn;
    };
    rec.outcome = classify(fp, fn);
    rec.per_component.resize(static_cast<std::size_t>(q));
    for (int m = 0; m < q; ++m) {
        long tpm = 0, fpm = 0, truem = 0;
        for (const auto& [l, mm] : truth.pairs)
            if (mm == m) ++truem;
        for (const auto& [l, mm] : selected.pairs) {
            if (mm != m) continue;
            (truth.contains(l, m) ? tpm : fpm) += 1;
        }
        rec.per_component[static_cast<std::size_t>(m)] = classify(fpm, truem - tpm);
    }
    return rec;
}

/// What a selection method returns on one replicate. mee (mean absolute
/// estimation error of the individual parameters, per component) is filled
/// by methods that produce individual estimates.
struct MethodOutput {
    SupportSet support;
    Eigen::VectorXd mee;
};

using MethodFn = std::function<MethodOutput(const SimulatedData&, std::uint64_t seed)>;

struct CampaignRecord {
    bool ok = false;
    std::string error;
    ReplicateRecord metrics;
    std::size_t support_size = 0;
    Eigen::VectorXd mee;
};

struct MetricsReport {
    int replicates = 0;
    int failures = 0;
    double se_mean = 0.0, se_stderr = 0.0;
    double sp_mean = 0.0, sp_stderr = 0.0;
    double ac_mean = 0.0, ac_stderr = 0.0;
    std::array<int, 4> outcome_counts{}; // Exact, Over, FnOnly, FpAndFn
    std::vector<std::array<int, 4>> per_component_counts;
    Eigen::VectorXd mee_mean; // empty when the method has no individual fits
    std::vector<CampaignRecord> records;

    double exact_rate() const {
        const int ok = replicates - failures;
        return ok > 0 ? static_cast<double>(outcome_counts[0]) / ok : 0.0;
    }
    double exact_rate_component(int m) const {
        const int ok = replicates - failures;
        return ok > 0 ? static_cast<double>(per_component_counts[static_cast<std::size_t>(m)][0]) / ok
                      : 0.0;
    }
};

/// Runs `spec.replicates` independent replicates of a method, in parallel,
/// with per-replicate seeds base_seed + index. Failures are tallied and
/// excluded from the averages, never dropped silently.
inline MetricsReport run_campaign(const ScenarioSpec& spec, const MethodFn& method,
                                  unsigned workers = 1) {
    const int R = spec.replicates;
    MetricsReport report;
    report.replicates = R;
    report.records.resize(static_cast<std::size_t>(R));

    parallel_for(static_cast<std::size_t>(R), workers, [&](std::size_t r) {
        CampaignRecord& rec = report.records[r];
        try {
            SimulatedData data = gen_dataset(spec, static_cast<int>(r));
            const std::uint64_t method_seed =
                derive_seed(spec.base_seed + static_cast<std::uint64_t>(r), "method");
            MethodOutput out = method(data, method_seed);
            rec.metrics = evaluate(out.support, data.truth.support, spec.p, data.model.q);
            rec.support_size = out.support.size();
            rec.mee = out.mee;
            rec.ok = true;
        } catch (const Error& e) {
            rec.error = std::string(e.code()) + ": " + e.what();
        } catch (const std::exception& e) {
            rec.error = e.what();
        }
    });

    const int q = spec.q();
    report.per_component_counts.assign(static_cast<std::size_t>(q), {0, 0, 0, 0});
    std::vector<double> se, sp, ac;
    Eigen::VectorXd mee_sum;
    int mee_count = 0;
    for (const auto& rec : report.records) {
        if (!rec.ok) {
            ++report.failures;
            continue;
        }
        se.push_back(rec.metrics.sensitivity);
        sp.push_back(rec.metrics.specificity);
        ac.push_back(rec.metrics.accuracy);
        ++report.outcome_counts[static_cast<std::size_t>(rec.metrics.outcome)];
        for (int m = 0; m < q; ++m)
            ++report.per_component_counts[static_cast<std::size_t>(m)]
                                         [static_cast<std::size_t>(rec.metrics.per_component[m])];
        if (rec.mee.size() > 0) {
            if (mee_count == 0) mee_sum = Eigen::VectorXd::Zero(rec.mee.size());
            mee_sum += rec.mee;
            ++mee_count;
        }
    }
    auto mean_stderr = [](const std::vector<double>& xs, double& mean, double& stderr_out) {
        if (xs.empty()) return;
        double s = 0.0;
        for (double x : xs) s += x;
        mean = s / static_cast<double>(xs.size());
        double v = 0.0;
        for (double x : xs) v += (x - mean) * (x - mean);
        // empirical sd / sqrt(R), matching the reporting convention
        stderr_out = xs.size() > 1
                         ? std::sqrt(v / static_cast<double>(xs.size() - 1)) /
                               std::sqrt(static_cast<double>(xs.size()))
                         : 0.0;
    };
    mean_stderr(se, report.se_mean, report.se_stderr);
    mean_stderr(sp, report.sp_mean, report.sp_stderr);
    mean_stderr(ac, report.ac_mean, report.ac_stderr);
    if (mee_count > 0) report.mee_mean = mee_sum / static_cast<double>(mee_count);
    return report;
}

} // namespace saemvs
