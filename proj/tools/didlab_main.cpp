// didlab command-line interface: simulate panels, print the closed-form
// oracle tables, run the Monte Carlo experiment, and export fits/matches.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "didlab/didlab.hpp"

namespace {

using namespace didlab;

int cmd_run(const std::string& config_path, const std::vector<std::string>& scenario_toks,
            const std::string& process_tok, const std::vector<std::string>& method_toks,
            int reps, long long seed, int workers, const std::string& distance_tok,
            const std::string& out_csv, const std::string& out_json, int n_units) {
    ExperimentConfig config;
    if (!config_path.empty()) {
        config = load_config(config_path);
    } else {
        config = ExperimentConfig::protocol_default();
        if (!scenario_toks.empty()) {
            config.scenarios.clear();
            for (const std::string& tok : scenario_toks)
                config.scenarios.emplace_back(scenario_from_token(tok),
                                              process_from_token(process_tok));
        }
        if (!method_toks.empty()) {
            config.methods.clear();
            for (const std::string& tok : method_toks)
                config.methods.push_back(method_from_token(tok));
        }
        config.reps = reps;
        config.n_units = n_units;
        config.master_seed = static_cast<std::uint64_t>(seed);
        config.parallelism = workers;
        config.matching_distance = distance_from_token(distance_tok);
        if (!out_csv.empty()) config.out_csv = out_csv;
        if (!out_json.empty()) config.out_json = out_json;
    }
    if (config.out_csv.empty()) config.out_csv = "results.csv";
    config.validate();

    const ResultTable table = run_experiment(config);
    write_file(config.out_csv, result_to_csv(table));
    if (!config.out_json.empty()) write_file(config.out_json, result_to_json(table).dump(2) + "\n");

    int failed_cells = 0;
    for (const CellSummary& c : table.cells) failed_cells += c.failed ? 1 : 0;
    std::cout << "wrote " << table.cells.size() << " cells to " << config.out_csv << " in "
              << table.wall_seconds << "s";
    if (failed_cells > 0) std::cout << " (" << failed_cells << " cells failed)";
    std::cout << "\n";
    if (failed_cells == static_cast<int>(table.cells.size())) {
        std::cerr << "error: every cell failed\n";
        return 2;
    }
    return 0;
}

int cmd_oracle(const std::string& scenario_tok) {
    const ScenarioId id = scenario_from_token(scenario_tok);
    if (id == ScenarioId::S6) {
        const MeanTable a = expected_means_scenario6(OutcomeProcess::ConstantEffect);
        const MeanTable b = expected_means_scenario6(OutcomeProcess::TimeVaryingEffect);
        std::cout << a.to_csv("a");
        // covariate rows are identical across processes; print outcomes only
        const std::string full = b.to_csv("b");
        std::cout << full.substr(full.find("outcome_b"));
        std::cout << "att,a,"
                  << format_double(true_att(ScenarioId::S6, OutcomeProcess::ConstantEffect))
                  << "\n";
        std::cout << "att,b,"
                  << format_double(true_att(ScenarioId::S6, OutcomeProcess::TimeVaryingEffect))
                  << "\n";
        return 0;
    }
    if (id == ScenarioId::Toy) {
        std::cout << "true_att,toy," << format_double(true_att(ScenarioId::Toy)) << "\n";
        return 0;
    }
    std::cout << "true_att," << to_token(id) << "," << format_double(true_att(id)) << "\n";
    return 0;
}

int cmd_generate(const std::string& scenario_tok, const std::string& process_tok, long long seed,
                 int n_units, int n_times, int first_post, long long replicate,
                 const std::string& out) {
    ScenarioSpec spec = ScenarioSpec::protocol_default(scenario_from_token(scenario_tok),
                                                    process_from_token(process_tok));
    spec.n_units = n_units;
    if (spec.scenario_id != ScenarioId::Toy) {
        spec.n_times = n_times;
        spec.first_post_time = first_post;
    }
    spec.master_seed = static_cast<std::uint64_t>(seed);
    spec.replicate_index = static_cast<std::uint64_t>(replicate);
    const PanelDataset data = generate(spec, NoiseSwitches{});
    write_file(out, panel_to_csv(data));
    std::cout << "wrote " << data.rows().size() << " rows to " << out << "\n";
    return 0;
}

int cmd_demo_figure1(double noise_sd, long long seed, int n_units, const std::string& out) {
    write_file(out, figure1_to_csv(figure1_demo(noise_sd, static_cast<std::uint64_t>(seed),
                                                n_units)));
    std::cout << "wrote figure-1 residual data to " << out << "\n";
    return 0;
}

int cmd_fit(const std::string& panel_path, const std::string& method_tok,
            const std::string& distance_tok, const std::string& out) {
    const PanelDataset data = load_panel_csv(panel_path);
    const AnalysisMethod method = method_from_token(method_tok);
    const MatchDistance distance = distance_from_token(distance_tok);

    const PanelDataset* panel = &data;
    std::optional<PanelDataset> matched;
    ModelSpec model;
    model.model = method == AnalysisMethod::CovariateAdjusted
                      ? RegressionModel::CovariateAdjusted
                      : (method == AnalysisMethod::TimeVaryingAdjusted
                             ? RegressionModel::TimeVaryingAdjusted
                             : RegressionModel::Simple);
    if (is_matched(method)) {
        MatchStrategy strategy;
        strategy.kind = method == AnalysisMethod::MatchPreOutcomes
                            ? MatchKind::PreOutcomes
                            : (method == AnalysisMethod::MatchPreDiffs
                                   ? MatchKind::PreOutcomeFirstDiffs
                                   : MatchKind::PreCovariates);
        strategy.distance = distance;
        matched.emplace(subset_panel(data, match_panel(data, strategy)));
        panel = &*matched;
        model.matched_subset = true;
    }

    const DesignMatrix design = build_design(*panel, model);
    Eigen::VectorXd y(panel->rows().size());
    std::vector<int> clusters(panel->rows().size());
    for (std::size_t i = 0; i < panel->rows().size(); ++i) {
        y(static_cast<long>(i)) = panel->rows()[i].outcome;
        clusters[i] = panel->rows()[i].unit_id;
    }
    FitResult fit = ols_fit(design, y);
    fit.method_label = method_tok;
    cluster_robust_vcov(fit, design, clusters);
    const std::string text = fit_to_json(fit).dump(2) + "\n";
    if (out.empty())
        std::cout << text;
    else
        write_file(out, text);
    return 0;
}

int cmd_match(const std::string& panel_path, const std::string& kind_tok,
              const std::string& distance_tok, const std::string& out) {
    const PanelDataset data = load_panel_csv(panel_path);
    MatchStrategy strategy;
    if (kind_tok == "outcomes")
        strategy.kind = MatchKind::PreOutcomes;
    else if (kind_tok == "diffs")
        strategy.kind = MatchKind::PreOutcomeFirstDiffs;
    else if (kind_tok == "covariates")
        strategy.kind = MatchKind::PreCovariates;
    else
        throw std::invalid_argument("unknown match kind '" + kind_tok +
                                    "' (expected outcomes, diffs, covariates)");
    strategy.distance = distance_from_token(distance_tok);
    const MatchResult match = match_panel(data, strategy);
    const std::string text = match_to_csv(match);
    if (out.empty())
        std::cout << text;
    else
        write_file(out, text);
    std::cout << "pairs: " << match.pairs.size() << ", unmatched units: " << match.unmatched.size()
              << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"difference-in-differences simulation lab"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "run a Monte Carlo experiment");
    std::string config_path, process_tok = "a", distance_tok = "euclidean";
    std::vector<std::string> scenario_toks, method_toks;
    std::string out_csv, out_json;
    int reps = 400, workers = 0, n_units = 800;
    long long seed = 42;
    run->add_option("--config", config_path, "experiment config JSON (overrides other flags)");
    run->add_option("--scenario", scenario_toks, "scenario token (toy, s1..s6); repeatable");
    run->add_option("--process", process_tok, "outcome process for s4..s6 (a|b)");
    run->add_option("--method", method_toks, "analysis method; repeatable (default: all six)");
    run->add_option("--reps", reps, "Monte Carlo replicates");
    run->add_option("--n", n_units, "units per replicate");
    run->add_option("--seed", seed, "master seed");
    run->add_option("--workers", workers, "worker threads (0 = all cores)");
    run->add_option("--distance", distance_tok, "matching distance (euclidean|propensity)");
    run->add_option("--out", out_csv, "result CSV path (default results.csv)");
    run->add_option("--out-json", out_json, "optional result JSON path");

    // oracle
    auto* oracle = app.add_subcommand("oracle", "print closed-form oracle values");
    std::string oracle_scenario = "s6";
    oracle->add_option("--scenario", oracle_scenario, "scenario token");

    // generate
    auto* gen = app.add_subcommand("generate", "write one simulated panel as CSV");
    std::string gen_scenario = "s1", gen_process = "a", gen_out = "panel.csv";
    int gen_n = 800, gen_times = 10, gen_post = 6;
    long long gen_seed = 42, gen_rep = 0;
    gen->add_option("--scenario", gen_scenario, "scenario token")->required();
    gen->add_option("--process", gen_process, "outcome process (a|b)");
    gen->add_option("--seed", gen_seed, "master seed");
    gen->add_option("--replicate", gen_rep, "replicate index");
    gen->add_option("--n", gen_n, "units");
    gen->add_option("--times", gen_times, "time points");
    gen->add_option("--first-post", gen_post, "first post-treatment time");
    gen->add_option("--out", gen_out, "output CSV path");

    // demo-figure1
    auto* demo = app.add_subcommand("demo-figure1", "toy-example residual demonstration");
    std::string demo_out = "fig1.csv";
    double demo_noise = 0.5;
    long long demo_seed = 42;
    int demo_n = 800;
    demo->add_option("--out", demo_out, "output CSV path");
    demo->add_option("--noise-sd", demo_noise, "outcome noise sd");
    demo->add_option("--seed", demo_seed, "seed");
    demo->add_option("--n", demo_n, "units");

    // fit
    auto* fit = app.add_subcommand("fit", "fit one analysis method to a panel CSV");
    std::string fit_panel, fit_method = "simple", fit_distance = "euclidean", fit_out;
    fit->add_option("--panel", fit_panel, "panel CSV path")->required();
    fit->add_option("--method", fit_method, "analysis method token");
    fit->add_option("--distance", fit_distance, "matching distance (matched methods)");
    fit->add_option("--out", fit_out, "output JSON path (default stdout)");

    // match
    auto* match = app.add_subcommand("match", "match a panel and export the pairs");
    std::string match_panel_path, match_kind = "covariates", match_distance = "euclidean",
                match_out;
    match->add_option("--panel", match_panel_path, "panel CSV path")->required();
    match->add_option("--on", match_kind, "matching variables (outcomes|diffs|covariates)");
    match->add_option("--distance", match_distance, "euclidean|propensity");
    match->add_option("--out", match_out, "output CSV path (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return cmd_run(config_path, scenario_toks, process_tok, method_toks, reps, seed,
                           workers, distance_tok, out_csv, out_json, n_units);
        if (oracle->parsed()) return cmd_oracle(oracle_scenario);
        if (gen->parsed())
            return cmd_generate(gen_scenario, gen_process, gen_seed, gen_n, gen_times, gen_post,
                                gen_rep, gen_out);
        if (demo->parsed()) return cmd_demo_figure1(demo_noise, demo_seed, demo_n, demo_out);
        if (fit->parsed()) return cmd_fit(fit_panel, fit_method, fit_distance, fit_out);
        if (match->parsed())
            return cmd_match(match_panel_path, match_kind, match_distance, match_out);
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
