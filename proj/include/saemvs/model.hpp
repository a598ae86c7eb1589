#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "saemvs/errors.hpp"

namespace saemvs {

/// A nonlinear mean function g(phi, psi, t) together with its dimensions:
/// q individual parameters, s shared fixed effects (0 when none). The
/// selection mask marks which components of phi receive covariate selection.
struct NonlinearModel {
    std::string name;
    int q = 1;
    int s = 0;
    std::vector<std::uint8_t> selection_mask; // size q, 1 = selectable
    std::function<double(const Eigen::VectorXd& phi, const Eigen::VectorXd& psi, double t)> eval;

    bool selectable(int m) const {
        return selection_mask.empty() || selection_mask[static_cast<std::size_t>(m)] != 0;
    }
};

/// Evaluates g over a vector of times, rejecting NaN/Inf outputs.
inline Eigen::VectorXd predict(const NonlinearModel& model, const Eigen::VectorXd& phi,
                               const Eigen::VectorXd& psi, const Eigen::VectorXd& t) {
    Eigen::VectorXd out(t.size());
    for (Eigen::Index j = 0; j < t.size(); ++j) {
        const double v = model.eval(phi, psi, t[j]);
        if (!std::isfinite(v))
            throw NonFiniteOutput(model.name + " evaluated to a non-finite value at t=" +
                                  std::to_string(t[j]));
        out[j] = v;
    }
    return out;
}

namespace models {

// Logistic growth with shared asymptote psi1 and scale psi2; the random
// individual parameter is the inflection time.
inline NonlinearModel logistic_growth() {
    NonlinearModel m;
    m.name = "logistic_growth";
    m.q = 1;
    m.s = 2;
    m.selection_mask = {1};
    m.eval = [](const Eigen::VectorXd& phi, const Eigen::VectorXd& psi, double t) {
        return psi[0] / (1.0 + std::exp(-(t - phi[0]) / psi[1]));
    };
    return m;
}

// One-compartment model with first-order absorption, dose D and volume Vd:
//   y(t) = D*ka / (Vd*(ka - ke)) * (exp(-ke t) - exp(-ka t)),  ke = CL/Vd,
// with phi = (ka, CL). Near ka == ke the difference quotient is replaced by
// its analytic limit D*ka*t*exp(-ka t)/Vd.
inline NonlinearModel one_compartment_pk(double dose = 100.0, double volume = 30.0) {
    NonlinearModel m;
    m.name = "one_compartment_pk";
    m.q = 2;
    m.s = 0;
    m.selection_mask = {1, 1};
    m.eval = [dose, volume](const Eigen::VectorXd& phi, const Eigen::VectorXd&, double t) {
        const double ka = phi[0];
        const double ke = phi[1] / volume;
        if (std::abs(ka - ke) <= 1e-10 * std::max(1.0, std::abs(ka)))
            return dose * ka * t * std::exp(-ka * t) / volume;
        return dose * ka / (volume * (ka - ke)) * (std::exp(-ke * t) - std::exp(-ka * t));
    };
    return m;
}

// Logistic with known asymptote and two random individual parameters
// (inflection time, scale); commonly used with selection on the first
// component only.
inline NonlinearModel logistic_fixed_asymptote(double asymptote = 100.0) {
    NonlinearModel m;
    m.name = "logistic_fixed_asymptote";
    m.q = 2;
    m.s = 0;
    m.selection_mask = {1, 0};
    m.eval = [asymptote](const Eigen::VectorXd& phi, const Eigen::VectorXd&, double t) {
        return asymptote / (1.0 + std::exp(-(t - phi[0]) / phi[1]));
    };
    return m;
}

// Random slope through the origin; handy because its conditional
// distributions are Gaussian in closed form.
inline NonlinearModel linear() {
    NonlinearModel m;
    m.name = "linear";
    m.q = 1;
    m.s = 0;
    m.selection_mask = {1};
    m.eval = [](const Eigen::VectorXd& phi, const Eigen::VectorXd&, double t) {
        return phi[0] * t;
    };
    return m;
}

} // namespace models

/// Builds a registered model by name. `constants` may override model
/// constants (one_compartment_pk: D, V; logistic_fixed_asymptote: A).
inline NonlinearModel make_model(const std::string& name,
                                 const std::map<std::string, double>& constants = {}) {
    auto get = [&constants](const std::string& key, double fallback) {
        auto it = constants.find(key);
        return it == constants.end() ? fallback : it->second;
    };
    if (name == "logistic_growth") return models::logistic_growth();
    if (name == "one_compartment_pk")
        return models::one_compartment_pk(get("D", 100.0), get("V", 30.0));
    if (name == "logistic_fixed_asymptote")
        return models::logistic_fixed_asymptote(get("A", 100.0));
    if (name == "linear") return models::linear();
    throw ConfigError("unknown model '" + name + "'");
}

inline std::vector<std::string> model_names() {
    return {"logistic_growth", "one_compartment_pk", "logistic_fixed_asymptote", "linear"};
}

} // namespace saemvs
