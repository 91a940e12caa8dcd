#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "didlab/dgp.hpp"
#include "didlab/io.hpp"
#include "didlab/matching.hpp"
#include "didlab/oracle.hpp"
#include "didlab/regression.hpp"
#include "didlab/rng.hpp"

#ifndef DIDLAB_VERSION
#define DIDLAB_VERSION "dev"
#endif

namespace didlab {

// The six analysis methods: three regression models on the full panel and the
// simple model on three flavors of matched panel.
enum class AnalysisMethod {
    Simple,
    CovariateAdjusted,
    TimeVaryingAdjusted,
    MatchPreOutcomes,
    MatchPreDiffs,
    MatchPreCovariates
};

inline constexpr AnalysisMethod kAllMethods[] = {
    AnalysisMethod::Simple,          AnalysisMethod::CovariateAdjusted,
    AnalysisMethod::TimeVaryingAdjusted, AnalysisMethod::MatchPreOutcomes,
    AnalysisMethod::MatchPreDiffs,   AnalysisMethod::MatchPreCovariates};

inline std::string to_token(AnalysisMethod m) {
    switch (m) {
        case AnalysisMethod::Simple: return "simple";
        case AnalysisMethod::CovariateAdjusted: return "ca";
        case AnalysisMethod::TimeVaryingAdjusted: return "tva";
        case AnalysisMethod::MatchPreOutcomes: return "match-outcomes";
        case AnalysisMethod::MatchPreDiffs: return "match-diffs";
        case AnalysisMethod::MatchPreCovariates: return "match-covariates";
    }
    throw std::invalid_argument("unknown analysis method");
}

inline AnalysisMethod method_from_token(const std::string& tok) {
    for (AnalysisMethod m : kAllMethods)
        if (to_token(m) == tok) return m;
    throw std::invalid_argument("unknown method '" + tok +
                                "' (expected simple, ca, tva, match-outcomes, match-diffs, "
                                "match-covariates)");
}

inline bool is_matched(AnalysisMethod m) {
    return m == AnalysisMethod::MatchPreOutcomes || m == AnalysisMethod::MatchPreDiffs ||
           m == AnalysisMethod::MatchPreCovariates;
}

// Percent bias of a batch of estimates against the true value.
inline double percent_bias(std::span<const double> estimates, double truth) {
    if (truth == 0.0)
        throw std::invalid_argument("percent bias undefined for truth 0; report absolute bias");
    if (estimates.empty()) throw std::invalid_argument("percent bias of an empty batch");
    double mean = 0.0;
    for (double e : estimates) mean += e;
    mean /= static_cast<double>(estimates.size());
    return 100.0 * (mean - truth) / truth;
}

struct ReplicateEstimate {
    double att = 0.0;
    double se = 0.0;
};

// One estimate on an already generated panel: optionally match and subset,
// then design -> fit -> cluster-robust variance -> ATT.
inline ReplicateEstimate analyze_panel(const PanelDataset& data, AnalysisMethod method,
                                       MatchDistance distance = MatchDistance::Euclidean,
                                       MatchReplacement replacement = MatchReplacement::Without) {
    const PanelDataset* panel = &data;
    std::optional<PanelDataset> matched;
    ModelSpec model;
    switch (method) {
        case AnalysisMethod::Simple: model.model = RegressionModel::Simple; break;
        case AnalysisMethod::CovariateAdjusted:
            model.model = RegressionModel::CovariateAdjusted;
            break;
        case AnalysisMethod::TimeVaryingAdjusted:
            model.model = RegressionModel::TimeVaryingAdjusted;
            break;
        default: {
            MatchStrategy strategy;
            strategy.kind = method == AnalysisMethod::MatchPreOutcomes
                                ? MatchKind::PreOutcomes
                                : (method == AnalysisMethod::MatchPreDiffs
                                       ? MatchKind::PreOutcomeFirstDiffs
                                       : MatchKind::PreCovariates);
            strategy.distance = distance;
            strategy.replacement = replacement;
            matched.emplace(subset_panel(data, match_panel(data, strategy)));
            panel = &*matched;
            model.model = RegressionModel::Simple;
            model.matched_subset = true;
            break;
        }
    }

    const DesignMatrix design = build_design(*panel, model);
    Eigen::VectorXd y(panel->rows().size());
    std::vector<int> clusters(panel->rows().size());
    for (std::size_t i = 0; i < panel->rows().size(); ++i) {
        y(static_cast<long>(i)) = panel->rows()[i].outcome;
        clusters[i] = panel->rows()[i].unit_id;
    }
    FitResult fit = ols_fit(design, y);
    fit.method_label = to_token(method);
    cluster_robust_vcov(fit, design, clusters);
    const auto [att, se] = extract_att(fit);
    return {att, se};
}

// Generates the replicate's panel from its own substream and analyzes it.
inline ReplicateEstimate run_replicate(const ScenarioSpec& spec, const NoiseSwitches& noise,
                                       AnalysisMethod method,
                                       MatchDistance distance = MatchDistance::Euclidean,
                                       MatchReplacement replacement = MatchReplacement::Without) {
    return analyze_panel(generate(spec, noise), method, distance, replacement);
}

struct ExperimentConfig {
    std::vector<std::pair<ScenarioId, OutcomeProcess>> scenarios;
    std::vector<AnalysisMethod> methods;
    int reps = 400;
    int n_units = 800;
    int n_times = 10;
    int first_post_time = 6;
    std::uint64_t master_seed = 42;
    int parallelism = 0; // 0 = hardware concurrency
    MatchDistance matching_distance = MatchDistance::Euclidean;
    MatchReplacement matching_replacement = MatchReplacement::Without;
    std::string out_csv;
    std::string out_json;
    NoiseSwitches noise; // protocol defaults; not part of the JSON schema

    // The simulation protocol: every scenario-process combination under all
    // six methods, 400 replicates of n=800 units over 10 times.
    static ExperimentConfig protocol_default() {
        ExperimentConfig c;
        c.scenarios = default_scenarios();
        c.methods.assign(std::begin(kAllMethods), std::end(kAllMethods));
        return c;
    }

    static std::vector<std::pair<ScenarioId, OutcomeProcess>> default_scenarios() {
        return {{ScenarioId::S1, OutcomeProcess::ConstantEffect},
                {ScenarioId::S2, OutcomeProcess::ConstantEffect},
                {ScenarioId::S3, OutcomeProcess::ConstantEffect},
                {ScenarioId::S4, OutcomeProcess::ConstantEffect},
                {ScenarioId::S4, OutcomeProcess::TimeVaryingEffect},
                {ScenarioId::S5, OutcomeProcess::ConstantEffect},
                {ScenarioId::S5, OutcomeProcess::TimeVaryingEffect},
                {ScenarioId::S6, OutcomeProcess::ConstantEffect},
                {ScenarioId::S6, OutcomeProcess::TimeVaryingEffect}};
    }

    ScenarioSpec spec_for(ScenarioId id, OutcomeProcess process, int replicate) const {
        ScenarioSpec s = ScenarioSpec::protocol_default(id, process);
        if (id != ScenarioId::Toy) {
            s.n_times = n_times;
            s.first_post_time = first_post_time;
        }
        s.n_units = n_units;
        s.master_seed = master_seed;
        s.replicate_index = static_cast<std::uint64_t>(replicate);
        return s;
    }

    void validate() const {
        if (scenarios.empty()) throw std::invalid_argument("config lists no scenarios");
        if (methods.empty()) throw std::invalid_argument("config lists no methods");
        if (reps < 1) throw std::invalid_argument("reps must be >= 1");
        if (parallelism < 0) throw std::invalid_argument("parallelism must be >= 0");
        spec_for(scenarios.front().first, scenarios.front().second, 0).validate();
        noise.validate();
    }
};

// Monte Carlo summary for one (scenario, process, method) cell. For the toy
// scenario the true ATT is 0, so the bias columns switch to absolute bias.
struct CellSummary {
    ScenarioId scenario = ScenarioId::S1;
    OutcomeProcess process = OutcomeProcess::ConstantEffect;
    AnalysisMethod method = AnalysisMethod::Simple;
    int reps_used = 0;
    int failures = 0;
    double mean_att_hat = std::numeric_limits<double>::quiet_NaN();
    double true_att = std::numeric_limits<double>::quiet_NaN();
    double pct_bias = std::numeric_limits<double>::quiet_NaN();
    double mc_se_of_bias = std::numeric_limits<double>::quiet_NaN();
    double mean_se = std::numeric_limits<double>::quiet_NaN();
    double mc_sd = std::numeric_limits<double>::quiet_NaN();
    bool failed = false; // every replicate failed

    std::string process_token() const {
        return time_varying_covariate(scenario) ? to_token(process) : "-";
    }
};

struct ResultTable {
    std::vector<CellSummary> cells;
    ExperimentConfig config;
    std::string version = DIDLAB_VERSION;
    double wall_seconds = 0.0;
};

inline constexpr const char* kResultCsvHeader =
    "scenario,process,method,reps,failures,mean_est,true_att,pct_bias,mc_se_bias,mean_se,mc_sd";

inline std::string result_to_csv(const ResultTable& table) {
    std::string out = kResultCsvHeader;
    out += "\n";
    for (const CellSummary& c : table.cells) {
        out += to_token(c.scenario) + "," + c.process_token() + "," + to_token(c.method);
        out += "," + std::to_string(c.reps_used);
        out += "," + std::to_string(c.failures);
        out += "," + format_double(c.mean_att_hat);
        out += "," + format_double(c.true_att);
        out += "," + format_double(c.pct_bias);
        out += "," + format_double(c.mc_se_of_bias);
        out += "," + format_double(c.mean_se);
        out += "," + format_double(c.mc_sd);
        out += "\n";
    }
    return out;
}

inline nlohmann::json config_to_json(const ExperimentConfig& config) {
    nlohmann::json scen = nlohmann::json::array();
    for (const auto& [id, p] : config.scenarios) {
        nlohmann::json entry{{"scenario", to_token(id)}};
        if (time_varying_covariate(id)) entry["process"] = to_token(p);
        scen.push_back(entry);
    }
    nlohmann::json methods = nlohmann::json::array();
    for (AnalysisMethod m : config.methods) methods.push_back(to_token(m));
    return nlohmann::json{{"scenarios", scen},
                          {"methods", methods},
                          {"reps", config.reps},
                          {"n_units", config.n_units},
                          {"n_times", config.n_times},
                          {"first_post_time", config.first_post_time},
                          {"master_seed", config.master_seed},
                          {"parallelism", config.parallelism},
                          {"matching_distance", to_token(config.matching_distance)},
                          {"out_csv", config.out_csv},
                          {"out_json", config.out_json}};
}

inline nlohmann::json result_to_json(const ResultTable& table) {
    nlohmann::json cells = nlohmann::json::array();
    for (const CellSummary& c : table.cells) {
        cells.push_back({{"scenario", to_token(c.scenario)},
                         {"process", c.process_token()},
                         {"method", to_token(c.method)},
                         {"reps", c.reps_used},
                         {"failures", c.failures},
                         {"failed", c.failed},
                         {"mean_est", c.mean_att_hat},
                         {"true_att", c.true_att},
                         {"pct_bias", c.pct_bias},
                         {"mc_se_bias", c.mc_se_of_bias},
                         {"mean_se", c.mean_se},
                         {"mc_sd", c.mc_sd}});
    }
    return nlohmann::json{{"config", config_to_json(table.config)},
                          {"version", table.version},
                          {"wall_seconds", table.wall_seconds},
                          {"cells", cells}};
}

// Runs the full experiment. Replicates are farmed out to workers; every
// replicate owns an RNG substream keyed by (seed, scenario, process, index)
// and all methods share the replicate's panel, so results are identical for
// any worker count and aggregation order is fixed.
inline ResultTable run_experiment(const ExperimentConfig& config_in) {
    ExperimentConfig config = config_in;
    if (config.scenarios.empty()) config.scenarios = ExperimentConfig::default_scenarios();
    if (config.methods.empty())
        config.methods.assign(std::begin(kAllMethods), std::end(kAllMethods));
    config.validate();

    const auto t_start = std::chrono::steady_clock::now();
    const int n_cells = static_cast<int>(config.scenarios.size());
    const int n_methods = static_cast<int>(config.methods.size());
    const int reps = config.reps;

    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::vector<double>> att(
        static_cast<std::size_t>(n_cells) * n_methods, std::vector<double>(reps, nan));
    std::vector<std::vector<double>> se = att;

    std::atomic<long> next_task{0};
    const long n_tasks = static_cast<long>(n_cells) * reps;
    auto worker = [&]() {
        for (;;) {
            const long task = next_task.fetch_add(1);
            if (task >= n_tasks) return;
            const int cell = static_cast<int>(task / reps);
            const int rep = static_cast<int>(task % reps);
            const auto [scenario, process] = config.scenarios[cell];
            const ScenarioSpec spec = config.spec_for(scenario, process, rep);
            std::optional<PanelDataset> data;
            try {
                data.emplace(generate(spec, config.noise));
            } catch (const std::exception&) {
                continue; // whole replicate lost; recorded as failure per method
            }
            for (int m = 0; m < n_methods; ++m) {
                try {
                    const ReplicateEstimate est =
                        analyze_panel(*data, config.methods[m], config.matching_distance,
                                      config.matching_replacement);
                    att[static_cast<std::size_t>(cell) * n_methods + m][rep] = est.att;
                    se[static_cast<std::size_t>(cell) * n_methods + m][rep] = est.se;
                } catch (const std::exception&) {
                    // failed replicate: stays NaN, counted below
                }
            }
        }
    };

    int workers = config.parallelism;
    if (workers == 0)
        workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<long>(workers, n_tasks);
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (std::thread& t : pool) t.join();

    ResultTable table;
    table.config = config;
    for (int cell = 0; cell < n_cells; ++cell) {
        const auto [scenario, process] = config.scenarios[cell];
        const double truth = true_att(config.spec_for(scenario, process, 0));
        for (int m = 0; m < n_methods; ++m) {
            const auto& cell_att = att[static_cast<std::size_t>(cell) * n_methods + m];
            const auto& cell_se = se[static_cast<std::size_t>(cell) * n_methods + m];
            CellSummary s;
            s.scenario = scenario;
            s.process = process;
            s.method = config.methods[m];
            s.true_att = truth;
            double sum = 0.0, sum_se = 0.0;
            std::vector<double> ok;
            for (int r = 0; r < reps; ++r) {
                if (std::isnan(cell_att[r])) continue;
                ok.push_back(cell_att[r]);
                sum += cell_att[r];
                sum_se += cell_se[r];
            }
            s.reps_used = static_cast<int>(ok.size());
            s.failures = reps - s.reps_used;
            if (ok.empty()) {
                s.failed = true;
            } else {
                s.mean_att_hat = sum / s.reps_used;
                s.mean_se = sum_se / s.reps_used;
                double ss = 0.0;
                for (double v : ok) ss += (v - s.mean_att_hat) * (v - s.mean_att_hat);
                s.mc_sd = s.reps_used > 1 ? std::sqrt(ss / (s.reps_used - 1)) : 0.0;
                if (truth != 0.0) {
                    s.pct_bias = percent_bias(ok, truth);
                    s.mc_se_of_bias = 100.0 * s.mc_sd / (truth * std::sqrt(double(s.reps_used)));
                } else {
                    // absolute bias fallback (toy scenario)
                    s.pct_bias = s.mean_att_hat;
                    s.mc_se_of_bias = s.mc_sd / std::sqrt(double(s.reps_used));
                }
            }
            table.cells.push_back(s);
        }
    }
    table.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return table;
}

// Residual demonstration on the toy example: raw outcomes plus residuals from
// the time-only, time + covariate, and time * covariate models. Times are
// written as 0/1 to match the two-period framing.
struct Figure1Row {
    int unit_id;
    int t; // 0 = pre, 1 = post
    int group;
    double x;
    double y;
    double group_time_mean_y;
    double resid_time_only;
    double resid_main_effects;
    double resid_interaction;
};

inline std::vector<Figure1Row> figure1_demo(double noise_sd, std::uint64_t seed,
                                            int n_units = 800) {
    ScenarioSpec spec = ScenarioSpec::protocol_default(ScenarioId::Toy);
    spec.n_units = n_units;
    spec.master_seed = seed;
    NoiseSwitches noise{0.0, noise_sd, 0.0, 1.0};
    const PanelDataset data = generate(spec, noise);
    const long n = static_cast<long>(data.rows().size());

    Eigen::VectorXd y(n);
    for (long i = 0; i < n; ++i) y(i) = data.rows()[i].outcome;

    // Columns: intercept, t (post period), x, x:t.
    DesignMatrix full;
    full.labels = {"(Intercept)", "t", "x", "x:t"};
    full.values.resize(n, 4);
    for (long i = 0; i < n; ++i) {
        const PanelRow& r = data.rows()[i];
        full.values(i, 0) = 1.0;
        full.values(i, 1) = r.time == 2 ? 1.0 : 0.0;
        full.values(i, 2) = r.covariate;
        full.values(i, 3) = (r.time == 2 ? 1.0 : 0.0) * r.covariate;
    }

    auto residuals_for = [&](int n_cols) {
        DesignMatrix d;
        d.labels.assign(full.labels.begin(), full.labels.begin() + n_cols);
        d.values = full.values.leftCols(n_cols);
        return ols_fit(d, y).residuals;
    };
    const Eigen::VectorXd r_time = residuals_for(2);
    const Eigen::VectorXd r_main = residuals_for(3);
    const Eigen::VectorXd r_inter = residuals_for(4);

    double mean_y[2][2] = {{0, 0}, {0, 0}};
    long count[2][2] = {{0, 0}, {0, 0}};
    for (const PanelRow& r : data.rows()) {
        mean_y[r.group][r.time - 1] += r.outcome;
        ++count[r.group][r.time - 1];
    }
    for (int a = 0; a < 2; ++a)
        for (int t = 0; t < 2; ++t) mean_y[a][t] /= count[a][t];

    std::vector<Figure1Row> out;
    out.reserve(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        const PanelRow& r = data.rows()[i];
        out.push_back({r.unit_id, r.time - 1, r.group, r.covariate, r.outcome,
                       mean_y[r.group][r.time - 1], r_time(i), r_main(i), r_inter(i)});
    }
    return out;
}

inline std::string figure1_to_csv(const std::vector<Figure1Row>& rows) {
    std::string out =
        "unit,t,group,x,y,group_time_mean_y,resid_time_only,resid_main_effects,resid_interaction\n";
    for (const Figure1Row& r : rows) {
        out += std::to_string(r.unit_id) + "," + std::to_string(r.t) + "," +
               std::to_string(r.group);
        out += "," + format_double(r.x) + "," + format_double(r.y);
        out += "," + format_double(r.group_time_mean_y);
        out += "," + format_double(r.resid_time_only);
        out += "," + format_double(r.resid_main_effects);
        out += "," + format_double(r.resid_interaction);
        out += "\n";
    }
    return out;
}

} // namespace didlab
