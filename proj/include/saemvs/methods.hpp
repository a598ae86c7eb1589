#pragma once

#include "saemvs/presets.hpp"
#include "saemvs/simulate.hpp"
#include "saemvs/two_step.hpp"

namespace saemvs {

/// Campaign method: the full SAEMVS procedure with the given settings.
inline MethodFn make_saemvs_method(RunSettings settings, unsigned inner_workers = 1) {
    return [settings, inner_workers](const SimulatedData& data, std::uint64_t seed) {
        SelectionResult res =
            run_saemvs(data.obs, data.model, data.design, settings.hyper, settings.grid,
                       settings.schedule, settings.theta0, seed,
                       {.T_marginal = settings.T_marginal, .workers = inner_workers});
        return MethodOutput{res.final_support, Eigen::VectorXd()};
    };
}

/// Campaign method: the two-step baseline (individual fits + lasso). psi is
/// fixed at the scenario value (the paper's comparison model has none) and
/// the individual-parameter estimation error is reported per component.
inline MethodFn make_two_step_method(TwoStepVariant variant, Eigen::VectorXd phi_init,
                                     Eigen::VectorXd psi_known, int folds = 10,
                                     unsigned inner_workers = 1, LmOptions lm_opts = {}) {
    return [variant, phi_init, psi_known, folds, inner_workers, lm_opts](
               const SimulatedData& data, std::uint64_t seed) {
        TwoStepResult res = two_step_select(data.obs, data.design.V, data.model, psi_known,
                                            phi_init, variant, folds, seed, inner_workers,
                                            lm_opts);
        return MethodOutput{res.support, mean_estimation_error(res, data.truth.phi)};
    };
}

inline MethodFn make_method(const std::string& name, const ScenarioSpec& spec,
                            const RunSettings& settings, unsigned inner_workers = 1) {
    if (name == "saemvs") return make_saemvs_method(settings, inner_workers);
    if (name == "two-step-gaussian" || name == "two_step_gaussian")
        return make_two_step_method(TwoStepVariant::gaussian, spec.true_mu, spec.true_psi, 10,
                                    inner_workers);
    if (name == "two-step-mgaussian" || name == "two_step_mgaussian")
        return make_two_step_method(TwoStepVariant::mgaussian, spec.true_mu, spec.true_psi, 10,
                                    inner_workers);
    throw ConfigError("unknown method '" + name + "'");
}

} // namespace saemvs
