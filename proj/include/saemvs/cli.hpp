#pragma once

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "saemvs/config.hpp"
#include "saemvs/csv.hpp"
#include "saemvs/methods.hpp"
#include "saemvs/presets.hpp"
#include "saemvs/selection.hpp"
#include "saemvs/simulate.hpp"
#include "saemvs/two_step.hpp"

namespace saemvs::cli {

using nlohmann::json;

enum ExitCode : int {
    exit_ok = 0,
    exit_failure = 1,
    exit_config = 2,
    exit_io = 3,
    exit_all_points_failed = 4,
    exit_missing_artifacts = 5,
};

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "saemvs_out";
    std::uint64_t seed = 1;
    bool seed_set = false;
    unsigned threads = 0;
    std::string model_override;
    std::string method = "saemvs";
    std::vector<double> grid_log10; // lo hi count
    std::string input_dir;          // threshold-path

    unsigned workers() const { return threads == 0 ? default_workers() : threads; }
};

namespace detail {

inline json to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline json to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(std::move(r));
    }
    return rows;
}

inline json config_echo(const ConfigFile& cfg) {
    json out = json::object();
    for (const auto& [key, value] : cfg.entries()) {
        std::visit([&out, &key](const auto& v) { out[key] = v; }, value);
    }
    return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
}

/// Applies [hyper], [schedule], [init] and [grid] overrides on top of the
/// model's preset defaults.
inline RunSettings resolve_settings(const ConfigFile& cfg, const NonlinearModel& model, int p,
                                    int p_f, const CommonArgs& args) {
    RunSettings rs = default_settings(model.name, p);

    HyperParams& h = rs.hyper;
    h.nu0 = cfg.number("hyper.nu0", h.nu0);
    h.nu1 = cfg.number("hyper.nu1", h.nu1);
    if (cfg.has("hyper.sigma_mu")) {
        const double sd = cfg.number("hyper.sigma_mu", 0.0);
        h.sigma2_mu = sd * sd;
        h.sigma2_lambda = sd * sd;
    }
    h.sigma2_mu = cfg.number("hyper.sigma2_mu", h.sigma2_mu);
    h.sigma2_lambda = cfg.number("hyper.sigma2_lambda", h.sigma2_lambda);
    h.nu_sigma = cfg.number("hyper.nu_sigma", h.nu_sigma);
    h.lambda_sigma = cfg.number("hyper.lambda_sigma", h.lambda_sigma);
    if (cfg.has("hyper.nu_gamma") || cfg.has("hyper.lambda_gamma")) {
        if (model.q != 1)
            throw ConfigError("the inverse-gamma variance prior applies only when q = 1");
        h.set_gamma_inverse_gamma(cfg.number("hyper.nu_gamma", h.nu_Gamma),
                                  cfg.number("hyper.lambda_gamma", h.lambda_Gamma));
    }
    if (cfg.has("hyper.d")) h.d = cfg.number("hyper.d", h.d);
    if (cfg.has("hyper.sigma_gamma_scale"))
        h.Sigma_Gamma = cfg.number("hyper.sigma_gamma_scale", 1.0) *
                        Eigen::MatrixXd::Identity(model.q, model.q);
    if (cfg.has("hyper.a")) h.a.setConstant(cfg.number("hyper.a", 1.0));
    if (cfg.has("hyper.b")) h.b.setConstant(cfg.number("hyper.b", p));
    if (cfg.has("hyper.rho2")) {
        auto v = cfg.numbers("hyper.rho2");
        if (static_cast<int>(v.size()) != model.s) throw ConfigError("hyper.rho2 must have length s");
        h.rho2 = Eigen::Map<const Eigen::VectorXd>(v.data(), model.s);
    }
    if (cfg.has("hyper.omega0")) {
        auto v = cfg.numbers("hyper.omega0");
        if (static_cast<int>(v.size()) != model.s)
            throw ConfigError("hyper.omega0 must have length s");
        h.omega0 = Eigen::Map<const Eigen::VectorXd>(v.data(), model.s);
    }
    h.kappa = cfg.integer("hyper.kappa", h.kappa);
    h.tau = cfg.number("hyper.tau", h.tau);
    if (cfg.has("hyper.sigma2_uniform_max"))
        h.sigma2_uniform_max = cfg.number("hyper.sigma2_uniform_max", 0.0);

    SaemSchedule& sched = rs.schedule;
    sched.K = cfg.integer("schedule.K", sched.K);
    sched.n_burnin = cfg.integer("schedule.n_burnin", sched.n_burnin);
    sched.gamma_exp = cfg.number("schedule.gamma", sched.gamma_exp);
    sched.h = cfg.integer("schedule.h", sched.h);
    sched.adapt_every = cfg.integer("schedule.adapt_every", sched.adapt_every);
    sched.anneal_rate = cfg.number("schedule.anneal_rate", sched.anneal_rate);
    sched.divergence_bound = cfg.number("schedule.divergence_bound", sched.divergence_bound);

    PopulationParams& t0 = rs.theta0;
    // the preset init is sized for a forced-free design; re-shape for p_f
    t0.lambda = Eigen::MatrixXd::Zero(p_f, model.q);
    if (cfg.has("init.mu")) {
        auto v = cfg.numbers("init.mu");
        if (static_cast<int>(v.size()) != model.q) throw ConfigError("init.mu must have length q");
        t0.mu = Eigen::Map<const Eigen::VectorXd>(v.data(), model.q);
    }
    if (cfg.has("init.lambda_fill")) t0.lambda.setConstant(cfg.number("init.lambda_fill", 0.0));
    if (cfg.has("init.beta_fill")) t0.beta.setConstant(cfg.number("init.beta_fill", 0.1));
    if (cfg.has("init.beta_head")) {
        auto v = cfg.numbers("init.beta_head");
        for (std::size_t l = 0; l < v.size() && l < static_cast<std::size_t>(p); ++l)
            t0.beta.row(static_cast<Eigen::Index>(l)).setConstant(v[l]);
    }
    if (cfg.has("init.sigma2")) t0.sigma2 = cfg.number("init.sigma2", t0.sigma2);
    if (cfg.has("init.gamma_scale"))
        t0.Gamma = cfg.number("init.gamma_scale", 1.0) * Eigen::MatrixXd::Identity(model.q, model.q);
    if (cfg.has("init.alpha")) t0.alpha.setConstant(cfg.number("init.alpha", 0.5));
    if (cfg.has("init.eta")) {
        auto v = cfg.numbers("init.eta");
        if (static_cast<int>(v.size()) != model.s) throw ConfigError("init.eta must have length s");
        t0.eta = Eigen::Map<const Eigen::VectorXd>(v.data(), model.s);
    }

    if (!args.grid_log10.empty()) {
        if (args.grid_log10.size() != 3) throw ConfigError("--grid-log10 needs <lo> <hi> <count>");
        rs.grid = Grid::log10_spaced(args.grid_log10[0], args.grid_log10[1],
                                     static_cast<int>(args.grid_log10[2]));
    } else if (cfg.has("grid.values")) {
        auto v = cfg.numbers("grid.values");
        rs.grid.nu0_values = v;
    } else if (cfg.has("grid.log10_lo") || cfg.has("grid.log10_hi") || cfg.has("grid.count")) {
        rs.grid = Grid::log10_spaced(cfg.number("grid.log10_lo", -2.0),
                                     cfg.number("grid.log10_hi", 2.0),
                                     cfg.integer("grid.count", 20));
    }
    rs.T_marginal = static_cast<long>(cfg.number("run.T_marginal", rs.T_marginal));
    return rs;
}

inline NonlinearModel resolve_model(const ConfigFile& cfg, const CommonArgs& args) {
    std::string name = args.model_override.empty()
                           ? cfg.text("model.name", "logistic_growth")
                           : args.model_override;
    std::map<std::string, double> constants;
    for (const auto& [key, value] : cfg.entries()) {
        if (key.rfind("model.constants.", 0) != 0) continue;
        const double* v = std::get_if<double>(&value);
        if (!v) throw ConfigError("model constant '" + key + "' must be a number");
        constants[key.substr(sizeof("model.constants.") - 1)] = *v;
    }
    NonlinearModel model = make_model(name, constants);
    if (cfg.has("model.mask")) {
        auto mask = cfg.numbers("model.mask");
        if (static_cast<int>(mask.size()) != model.q)
            throw ConfigError("model.mask must have length q");
        model.selection_mask.assign(mask.size(), 1);
        for (std::size_t m = 0; m < mask.size(); ++m)
            model.selection_mask[m] = mask[m] != 0.0 ? 1 : 0;
    }
    return model;
}

struct LoadedInputs {
    LoadedObservations data;
    DesignMatrices design;
};

inline LoadedInputs load_inputs(const ConfigFile& cfg) {
    const std::string data_path = cfg.text("data.observations");
    const std::string cov_path = cfg.text("data.covariates");
    if (data_path.empty() || cov_path.empty())
        throw ConfigError("config must provide data.observations and data.covariates");
    if (!std::filesystem::exists(data_path))
        throw ConfigError("observations file '" + data_path + "' does not exist");
    if (!std::filesystem::exists(cov_path))
        throw ConfigError("covariate file '" + cov_path + "' does not exist");

    LoadedInputs in;
    in.data = load_observations(data_path);
    LoadedCovariates cov = load_covariates(cov_path, cfg.texts("data.forced"));
    if (cov.V.rows() != in.data.obs.n())
        throw ShapeMismatch("covariate rows (" + std::to_string(cov.V.rows()) +
                            ") do not match individuals (" + std::to_string(in.data.obs.n()) + ")");
    in.design = DesignMatrices::from_raw(cov.V, cov.forced, cov.names, cov.forced_names);
    return in;
}

inline std::string covariate_label(const DesignMatrices& design, int l) {
    if (l < static_cast<int>(design.names.size())) return design.names[static_cast<std::size_t>(l)];
    return std::to_string(l + 1);
}

inline json support_json(const SupportSet& support) {
    json a = json::array();
    for (const auto& [l, m] : support.pairs) a.push_back({l + 1, m + 1});
    return a;
}

inline void write_selection_outputs(const std::filesystem::path& dir, const SelectionResult& res,
                                    const DesignMatrices& design, const NonlinearModel& model,
                                    const HyperParams& hyper) {
    {
        CsvWriter path_csv((dir / "path.csv").string());
        path_csv.row({"nu0", "component", "covariate", "beta_hat", "threshold", "selected"});
        for (const auto& point : res.grid_points) {
            if (!point.ok) continue;
            for (int m = 0; m < model.q; ++m) {
                if (!model.selectable(m)) continue;
                for (int l = 0; l < design.p(); ++l)
                    path_csv.row({format_double(point.nu0), std::to_string(m + 1),
                                  covariate_label(design, l),
                                  format_double(point.theta.beta(l, m)),
                                  format_double(point.thresholds[m]),
                                  point.support.contains(l, m) ? "1" : "0"});
            }
        }
    }
    {
        CsvWriter crit_csv((dir / "criteria.csv").string());
        crit_csv.row({"support_id", "first_nu0", "size", "ok", "loglik", "ebic", "pairs"});
        for (std::size_t u = 0; u < res.criteria.size(); ++u) {
            const auto& c = res.criteria[u];
            crit_csv.row({std::to_string(u),
                          format_double(res.grid_points[static_cast<std::size_t>(
                                                            c.first_grid_index)]
                                            .nu0),
                          std::to_string(c.support.size()), c.ok ? "1" : "0",
                          c.ok ? format_double(c.loglik) : "", c.ok ? format_double(c.ebic) : "",
                          c.support.to_string()});
        }
    }
    {
        json out;
        out["nu0_hat"] = res.nu0_hat;
        out["nu0_hat_index"] = res.nu0_hat_index;
        out["final_support"] = support_json(res.final_support);
        json named = json::array();
        for (const auto& [l, m] : res.final_support.pairs)
            named.push_back({{"covariate", covariate_label(design, l)}, {"component", m + 1}});
        out["final_support_named"] = named;
        out["T_marginal"] = res.T_marginal;
        out["hyper"] = {{"nu1", hyper.nu1}};
        json grid = json::array();
        for (const auto& point : res.grid_points) {
            json g = {{"nu0", point.nu0},
                      {"ok", point.ok},
                      {"support_size", point.support.size()},
                      {"support_id", point.unique_support_id}};
            if (!point.ok) g["error"] = point.error;
            grid.push_back(std::move(g));
        }
        out["grid"] = std::move(grid);
        const PopulationParams& t = res.theta_final;
        json beta = json::array();
        for (const auto& [l, m] : res.final_support.pairs)
            beta.push_back({{"covariate", covariate_label(design, l)},
                            {"component", m + 1},
                            {"value", t.beta(l, m)}});
        out["theta_final"] = {{"mu", to_json(t.mu)},       {"lambda", to_json(t.lambda)},
                              {"beta_support", beta},      {"Gamma", to_json(t.Gamma)},
                              {"sigma2", t.sigma2},        {"eta", to_json(t.eta)}};
        write_text(dir / "result.json", out.dump(2) + "\n");
    }
}

inline ScenarioSpec resolve_scenario(const ConfigFile& cfg, const CommonArgs& args) {
    const std::string design = cfg.text("simulate.design", "logistic");
    const int n = cfg.integer("simulate.n", 200);
    const int p = cfg.integer("simulate.p", 500);
    ScenarioSpec spec = design == "pk"
                            ? ScenarioSpec::pk(n, p, cfg.number("simulate.p_partial", 0.0))
                            : ScenarioSpec::logistic(n, p, cfg.number("simulate.gamma2", 200.0));
    if (cfg.has("simulate.sigma2")) spec.true_sigma2 = cfg.number("simulate.sigma2", 0.0);
    const std::string law = cfg.text("simulate.law", "");
    if (law == "iid_gaussian") spec.law = CovariateLaw::iid_gaussian;
    if (law == "iid_binomial") spec.law = CovariateLaw::iid_binomial;
    if (law == "ar") {
        spec.law = CovariateLaw::ar_scenario;
        spec.ar_variant = cfg.integer("simulate.ar_variant", 4);
        spec.rho = cfg.number("simulate.rho", 0.3);
    }
    spec.replicates = cfg.integer("simulate.replicates", 10);
    spec.base_seed = args.seed;
    return spec;
}

inline void write_metrics_csv(const std::filesystem::path& file, const MetricsReport& report,
                              int q) {
    CsvWriter csv(file.string());
    std::vector<std::string> header = {"replicate", "ok",      "sensitivity", "specificity",
                                       "accuracy",  "outcome", "support_size"};
    for (int m = 0; m < q; ++m) header.push_back("mee_" + std::to_string(m + 1));
    header.push_back("error");
    csv.row(header);
    for (std::size_t r = 0; r < report.records.size(); ++r) {
        const auto& rec = report.records[r];
        std::vector<std::string> row = {std::to_string(r), rec.ok ? "1" : "0"};
        if (rec.ok) {
            row.push_back(format_double(rec.metrics.sensitivity));
            row.push_back(format_double(rec.metrics.specificity));
            row.push_back(format_double(rec.metrics.accuracy));
            row.push_back(outcome_name(rec.metrics.outcome));
            row.push_back(std::to_string(rec.support_size));
        } else {
            row.insert(row.end(), {"", "", "", "", ""});
        }
        for (int m = 0; m < q; ++m)
            row.push_back(rec.mee.size() > m ? format_double(rec.mee[m]) : "");
        row.push_back(rec.error);
        csv.row(row);
    }
}

inline json summary_json(const MetricsReport& report, int q) {
    json out;
    out["replicates"] = report.replicates;
    out["failures"] = report.failures;
    out["sensitivity"] = {{"mean", report.se_mean}, {"stderr", report.se_stderr}};
    out["specificity"] = {{"mean", report.sp_mean}, {"stderr", report.sp_stderr}};
    out["accuracy"] = {{"mean", report.ac_mean}, {"stderr", report.ac_stderr}};
    out["outcomes"] = {{"exact", report.outcome_counts[0]},
                       {"over_selection", report.outcome_counts[1]},
                       {"fn_only", report.outcome_counts[2]},
                       {"fp_and_fn", report.outcome_counts[3]}};
    json per_m = json::array();
    for (int m = 0; m < q; ++m) {
        const auto& c = report.per_component_counts[static_cast<std::size_t>(m)];
        per_m.push_back({{"component", m + 1},
                         {"exact", c[0]},
                         {"over_selection", c[1]},
                         {"fn_only", c[2]},
                         {"fp_and_fn", c[3]}});
    }
    out["per_component"] = std::move(per_m);
    if (report.mee_mean.size() > 0) out["mee_mean"] = to_json(report.mee_mean);
    return out;
}

inline void write_manifest(const std::filesystem::path& dir, const std::string& command,
                           const ConfigFile& cfg, const CommonArgs& args, double seconds) {
    json manifest;
    manifest["command"] = command;
    manifest["seed"] = args.seed;
    manifest["threads"] = args.workers();
    manifest["config"] = config_echo(cfg);
    manifest["elapsed_seconds"] = seconds;
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline void write_two_step_audit(const std::filesystem::path& dir, const TwoStepResult& res,
                                 int q) {
    {
        CsvWriter csv((dir / "individual_fits.csv").string());
        std::vector<std::string> header = {"individual", "converged", "iterations", "residual_ss"};
        for (int m = 0; m < q; ++m) header.push_back("phi_" + std::to_string(m + 1));
        csv.row(header);
        for (std::size_t i = 0; i < res.fits.size(); ++i) {
            const auto& fit = res.fits[i];
            std::vector<std::string> row = {std::to_string(i + 1), fit.converged ? "1" : "0",
                                            std::to_string(fit.iterations),
                                            format_double(fit.residual_ss)};
            for (int m = 0; m < q; ++m) row.push_back(format_double(fit.phi_hat[m]));
            csv.row(row);
        }
    }
    {
        CsvWriter csv((dir / "lasso_path.csv").string());
        csv.row({"response", "lambda", "cv_mse", "cv_se", "covariate", "coefficient"});
        for (std::size_t b = 0; b < res.paths.size(); ++b) {
            const LassoPath& path = res.paths[b];
            for (Eigen::Index k = 0; k < path.lambdas.size(); ++k) {
                const auto& coef = path.coefficients[static_cast<std::size_t>(k)];
                for (Eigen::Index l = 0; l < coef.rows(); ++l)
                    for (Eigen::Index m = 0; m < coef.cols(); ++m)
                        csv.row({std::to_string(coef.cols() == 1 ? b + 1
                                                                 : static_cast<std::size_t>(m) + 1),
                                 format_double(path.lambdas[k]),
                                 format_double(path.cv_mse.size() > k ? path.cv_mse[k] : 0.0),
                                 format_double(path.cv_se.size() > k ? path.cv_se[k] : 0.0),
                                 std::to_string(l + 1), format_double(coef(l, m))});
            }
        }
    }
}

} // namespace detail

inline int cmd_select(const ConfigFile& cfg, const CommonArgs& args) {
    const auto t0 = std::chrono::steady_clock::now();
    detail::LoadedInputs in = detail::load_inputs(cfg);
    NonlinearModel model = detail::resolve_model(cfg, args);
    RunSettings rs = detail::resolve_settings(cfg, model, in.design.p(), in.design.p_f(), args);

    std::filesystem::create_directories(args.out_dir);
    SelectionResult res =
        run_saemvs(in.data.obs, model, in.design, rs.hyper, rs.grid, rs.schedule, rs.theta0,
                   args.seed, {.T_marginal = rs.T_marginal, .workers = args.workers()});
    detail::write_selection_outputs(args.out_dir, res, in.design, model, rs.hyper);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    detail::write_manifest(args.out_dir, "select", cfg, args, seconds);
    return exit_ok;
}

inline int cmd_map(const ConfigFile& cfg, const CommonArgs& args) {
    const auto t0 = std::chrono::steady_clock::now();
    detail::LoadedInputs in = detail::load_inputs(cfg);
    NonlinearModel model = detail::resolve_model(cfg, args);
    RunSettings rs = detail::resolve_settings(cfg, model, in.design.p(), in.design.p_f(), args);

    std::filesystem::create_directories(args.out_dir);
    MapResult map = run_map(in.data.obs, model, in.design, rs.hyper, rs.schedule, rs.theta0,
                            args.seed);
    {
        CsvWriter csv((std::filesystem::path(args.out_dir) / "trace.csv").string());
        std::vector<std::string> header = {"iteration"};
        header.insert(header.end(), map.trace_names.begin(), map.trace_names.end());
        csv.row(header);
        for (Eigen::Index k = 0; k < map.traces.rows(); ++k) {
            std::vector<std::string> row = {std::to_string(k)};
            for (Eigen::Index c = 0; c < map.traces.cols(); ++c)
                row.push_back(format_double(map.traces(k, c)));
            csv.row(row);
        }
    }
    {
        json out;
        const PopulationParams& t = map.theta_hat;
        out["theta_hat"] = {{"mu", detail::to_json(t.mu)},
                            {"lambda", detail::to_json(t.lambda)},
                            {"beta", detail::to_json(t.beta)},
                            {"Gamma", detail::to_json(t.Gamma)},
                            {"sigma2", t.sigma2},
                            {"alpha", detail::to_json(t.alpha)},
                            {"eta", detail::to_json(t.eta)}};
        out["nu0"] = rs.hyper.nu0;
        out["support"] = detail::support_json(select_support(
            t.beta, t.alpha, rs.hyper.nu0, rs.hyper.nu1, model.selection_mask));
        detail::write_text(std::filesystem::path(args.out_dir) / "result.json",
                           out.dump(2) + "\n");
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    detail::write_manifest(args.out_dir, "map", cfg, args, seconds);
    return exit_ok;
}

inline int run_one_campaign(const ConfigFile& cfg, const CommonArgs& args,
                            const std::string& method_name, const ScenarioSpec& spec,
                            const std::filesystem::path& dir, const std::string& metrics_name) {
    NonlinearModel model = make_model(spec.model_name, spec.model_constants);
    RunSettings rs = detail::resolve_settings(cfg, model, spec.p, 0, args);
    MethodFn method = make_method(method_name, spec, rs, 1);
    MetricsReport report = run_campaign(spec, method, args.workers());
    detail::write_metrics_csv(dir / metrics_name, report, spec.q());

    json summary = detail::summary_json(report, spec.q());
    summary["method"] = method_name;

    // audit artifacts for the two-step baselines: replicate 0 in full detail
    if (method_name.rfind("two-step", 0) == 0 || method_name.rfind("two_step", 0) == 0) {
        SimulatedData data = gen_dataset(spec, 0);
        TwoStepResult audit = two_step_select(
            data.obs, data.design.V, data.model, spec.true_psi, spec.true_mu,
            method_name.find("mgaussian") != std::string::npos ? TwoStepVariant::mgaussian
                                                               : TwoStepVariant::gaussian,
            10, derive_seed(spec.base_seed, "method"), args.workers());
        detail::write_two_step_audit(dir, audit, spec.q());
    }
    detail::write_text(dir / ("summary_" + method_name + ".json"), summary.dump(2) + "\n");
    return exit_ok;
}

inline int cmd_simulate(const ConfigFile& cfg, const CommonArgs& args) {
    const auto t0 = std::chrono::steady_clock::now();
    ScenarioSpec spec = detail::resolve_scenario(cfg, args);
    const std::string method = args.method.empty() ? "saemvs" : args.method;
    std::filesystem::create_directories(args.out_dir);
    run_one_campaign(cfg, args, method, spec, args.out_dir, "metrics.csv");
    // canonical summary name expected by downstream tooling
    std::filesystem::copy_file(std::filesystem::path(args.out_dir) /
                                   ("summary_" + method + ".json"),
                               std::filesystem::path(args.out_dir) / "summary.json",
                               std::filesystem::copy_options::overwrite_existing);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    detail::write_manifest(args.out_dir, "simulate", cfg, args, seconds);
    return exit_ok;
}

inline int cmd_benchmark(const ConfigFile& cfg, const CommonArgs& args) {
    const auto t0 = std::chrono::steady_clock::now();
    ScenarioSpec spec = detail::resolve_scenario(cfg, args);
    std::filesystem::create_directories(args.out_dir);
    json combined = json::object();
    for (const std::string method : {"saemvs", "two-step-gaussian", "two-step-mgaussian"}) {
        run_one_campaign(cfg, args, method, spec, args.out_dir, "metrics_" + method + ".csv");
        std::ifstream in(std::filesystem::path(args.out_dir) / ("summary_" + method + ".json"));
        combined[method] = json::parse(in);
    }
    detail::write_text(std::filesystem::path(args.out_dir) / "summary.json",
                       combined.dump(2) + "\n");
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    detail::write_manifest(args.out_dir, "benchmark", cfg, args, seconds);
    return exit_ok;
}

inline int cmd_threshold_path(const ConfigFile& cfg, const CommonArgs& args) {
    const std::filesystem::path in_dir = args.input_dir.empty() ? args.out_dir : args.input_dir;
    const auto path_csv = in_dir / "path.csv";
    const auto result_json = in_dir / "result.json";
    if (!std::filesystem::exists(path_csv) || !std::filesystem::exists(result_json))
        throw MissingArtifacts("'" + in_dir.string() +
                               "' does not contain path.csv and result.json from a select run");

    auto rows = read_csv(path_csv.string());
    std::ifstream jf(result_json);
    json result = json::parse(jf);
    const double nu0_hat = result.at("nu0_hat").get<double>();

    // cross-check: selected flags at nu0_hat must reproduce the final support
    std::vector<std::pair<std::string, int>> selected_at_hat;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (parse_double(rows[r][0], "nu0") == nu0_hat && rows[r][5] == "1")
            selected_at_hat.emplace_back(rows[r][2], static_cast<int>(
                                                          parse_double(rows[r][1], "component")));
    }
    const auto& named = result.at("final_support_named");
    if (selected_at_hat.size() != named.size())
        throw IoError("path.csv selected flags disagree with result.json final support");

    std::filesystem::create_directories(args.out_dir);
    CsvWriter out((std::filesystem::path(args.out_dir) / "threshold_path.csv").string());
    out.row({"nu0", "component", "covariate", "beta_hat", "threshold", "selected"});
    for (std::size_t r = 1; r < rows.size(); ++r) out.row(rows[r]);
    detail::write_manifest(args.out_dir, "threshold-path", cfg, args, 0.0);
    return exit_ok;
}

inline int dispatch(const std::string& command, const CommonArgs& args) {
    ConfigFile cfg;
    if (!args.config_path.empty()) cfg = ConfigFile::load(args.config_path);
    if (command == "select") return cmd_select(cfg, args);
    if (command == "map") return cmd_map(cfg, args);
    if (command == "simulate") return cmd_simulate(cfg, args);
    if (command == "benchmark") return cmd_benchmark(cfg, args);
    if (command == "threshold-path") return cmd_threshold_path(cfg, args);
    throw ConfigError("unknown subcommand '" + command + "'");
}

inline int run(int argc, char** argv) {
    CLI::App app{"SAEMVS: spike-and-slab covariate selection in nonlinear mixed-effects models"};
    app.require_subcommand(1);
    CommonArgs args;

    auto add_common = [&args](CLI::App* sub) {
        sub->add_option("--config", args.config_path, "configuration file (TOML-style)");
        sub->add_option("--seed", args.seed, "base random seed");
        sub->add_option("--threads", args.threads, "worker threads (0 = hardware)");
        sub->add_option("--out", args.out_dir, "output directory");
        sub->add_option("--model", args.model_override, "model name override");
        sub->add_option("--method", args.method,
                        "saemvs | two-step-gaussian | two-step-mgaussian");
        sub->add_option("--grid-log10", args.grid_log10,
                        "nu0 grid as log10 endpoints and count: <lo> <hi> <count>")
            ->expected(3);
    };
    CLI::App* select = app.add_subcommand("select", "run the full SAEMVS selection procedure");
    CLI::App* map_cmd = app.add_subcommand("map", "single MAP fit at a fixed nu0, with traces");
    CLI::App* simulate = app.add_subcommand("simulate", "synthetic-data selection campaign");
    CLI::App* benchmark =
        app.add_subcommand("benchmark", "compare SAEMVS with the two-step baselines");
    CLI::App* tpath = app.add_subcommand("threshold-path",
                                         "re-emit the regularization path of a select run");
    for (CLI::App* sub : {select, map_cmd, simulate, benchmark, tpath}) add_common(sub);
    tpath->add_option("--in", args.input_dir, "directory of a completed select run");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        std::fprintf(stderr, "%s\n",
                     json{{"error", {{"code", "ConfigError"}, {"message", e.what()}}}}
                         .dump()
                         .c_str());
        return exit_config;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        return dispatch(command, args);
    } catch (const Error& e) {
        std::fprintf(stderr, "%s\n",
                     json{{"error", {{"code", e.code()}, {"message", e.what()}}}}.dump().c_str());
        if (e.code() == "ConfigError") return exit_config;
        if (e.code() == "IoError") return exit_io;
        if (e.code() == "AllPointsFailed") return exit_all_points_failed;
        if (e.code() == "MissingArtifacts") return exit_missing_artifacts;
        return exit_failure;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n",
                     json{{"error", {{"code", "Internal"}, {"message", e.what()}}}}.dump().c_str());
        return exit_failure;
    }
}

} // namespace saemvs::cli
