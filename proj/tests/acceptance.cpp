// Acceptance suite: exercises each release criterion end to end and prints
// one PASS/FAIL line per criterion. Exit status is the number of failures.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "didlab/didlab.hpp"

using namespace didlab;

namespace {

struct Criterion {
    std::string name;
    bool ok = true;
    std::vector<std::string> notes;

    void check(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            notes.push_back("FAILED: " + what);
        }
    }
    void info(const std::string& what) { notes.push_back(what); }
};

std::vector<Criterion> criteria;

Criterion& begin(const std::string& name) {
    criteria.push_back({name});
    return criteria.back();
}

std::string run_cli(const std::string& args) {
#ifdef DIDLAB_CLI_PATH
    const std::string cmd = std::string(DIDLAB_CLI_PATH) + " " + args;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return "";
    std::string out;
    char buf[4096];
    while (std::size_t n = fread(buf, 1, sizeof(buf), pipe)) out.append(buf, n);
    pclose(pipe);
    return out;
#else
    (void)args;
    return "";
#endif
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// 1. Oracle exactness: counterfactual mean tables to 1e-12, ATTs exact.
void criterion_oracle() {
    Criterion& c = begin("oracle exactness (counterfactual mean tables, ATTs 0.85/0.87)");

    const double x0[10] = {1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9};
    const double x1[10] = {1.0, 1.1, 1.2, 1.3, 1.4, 1.45, 1.5, 1.55, 1.6, 1.65};
    const double y0a[10] = {3.225, 3.125, 3.225, 3.525, 4.025,
                            4.725, 5.625, 6.725, 8.025, 9.525};
    const double y1a[10] = {3.225, 3.125, 3.225, 3.525, 4.025,
                            5.675, 6.525, 7.575, 8.825, 10.275};
    const double y0b[10] = {2.325, 2.245, 2.385, 2.745, 3.325,
                            4.125, 5.145, 6.385, 7.845, 9.525};
    const double y1b[10] = {2.325, 2.245, 2.385, 2.745, 3.325,
                            5.095, 6.075, 7.265, 8.665, 10.275};

    const MeanTable a = expected_means_scenario6(OutcomeProcess::ConstantEffect);
    const MeanTable b = expected_means_scenario6(OutcomeProcess::TimeVaryingEffect);
    double max_err = 0.0;
    for (int t = 0; t < 10; ++t) {
        max_err = std::max(max_err, std::abs(a.covariate[0][t] - x0[t]));
        max_err = std::max(max_err, std::abs(a.covariate[1][t] - x1[t]));
        max_err = std::max(max_err, std::abs(b.covariate[0][t] - x0[t]));
        max_err = std::max(max_err, std::abs(b.covariate[1][t] - x1[t]));
        max_err = std::max(max_err, std::abs(a.outcome[0][t] - y0a[t]));
        max_err = std::max(max_err, std::abs(a.outcome[1][t] - y1a[t]));
        max_err = std::max(max_err, std::abs(b.outcome[0][t] - y0b[t]));
        max_err = std::max(max_err, std::abs(b.outcome[1][t] - y1b[t]));
    }
    c.check(max_err <= 1e-12, "table entries deviate by " + fmt(max_err));
    c.check(true_att(ScenarioId::S6, OutcomeProcess::ConstantEffect) == 0.85,
            "ATT(a) != 0.85 exactly");
    c.check(true_att(ScenarioId::S6, OutcomeProcess::TimeVaryingEffect) == 0.87,
            "ATT(b) != 0.87 exactly");
    c.info("max table deviation " + fmt(max_err));

    // The CLI must reproduce the same values: parse its CSV numerically.
    const std::string cli = run_cli("oracle --scenario s6");
    if (cli.empty()) {
        c.check(false, "CLI produced no oracle output");
        return;
    }
    c.check(cli.find("att,a,0.85\n") != std::string::npos, "CLI ATT(a) is not exactly 0.85");
    c.check(cli.find("att,b,0.87\n") != std::string::npos, "CLI ATT(b) is not exactly 0.87");
    std::istringstream in(cli);
    std::string line;
    double cli_err = 0.0;
    int cli_rows = 0;
    while (std::getline(in, line)) {
        const auto f = split_csv_line(line);
        if (f.size() != 14) continue;
        const double* expect = nullptr;
        if (f[1] == "treated_cf_untreated")
            expect = f[0] == "covariate" ? x0 : (f[0] == "outcome_a" ? y0a : y0b);
        else if (f[1] == "treated_cf_treated")
            expect = f[0] == "covariate" ? x1 : (f[0] == "outcome_a" ? y1a : y1b);
        if (!expect) continue;
        ++cli_rows;
        for (int t = 0; t < 10; ++t)
            cli_err = std::max(cli_err, std::abs(parse_double(f[2 + t]) - expect[t]));
    }
    c.check(cli_rows == 6, "CLI printed " + std::to_string(cli_rows) + " table rows, want 6");
    c.check(cli_err <= 1e-12, "CLI table entries deviate by " + fmt(cli_err));
}

// ---------------------------------------------------------------------------
// 2. Two-period estimator algebra against independently written formulas.
void criterion_two_period_algebra() {
    Criterion& c = begin("two-period estimator algebra (1000 random draws)");
    std::mt19937 gen(987654);
    std::uniform_real_distribution<double> real(-5.0, 5.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        TwoPeriodParams p;
        p.gamma = real(gen);
        p.lambda0 = real(gen);
        p.lambda1 = real(gen);
        p.tau00 = real(gen);
        p.tau01 = real(gen);
        p.tau10 = real(gen);
        p.tau11 = real(gen);
        p.tau1_cf_treated = real(gen);
        p.tau1_cf_untreated = real(gen);

        // hand evaluation of the derivations' endpoints
        const double unadj_by_hand =
            p.gamma + p.lambda1 * p.tau11 - p.lambda0 * p.tau10 - p.lambda1 * p.tau01 +
            p.lambda0 * p.tau00;
        const double att_by_hand =
            p.lambda1 * p.tau1_cf_treated + p.gamma - p.lambda1 * p.tau1_cf_untreated;

        worst = std::max(worst, std::abs(att_unadjusted_two_period(p) - unadj_by_hand));
        worst = std::max(worst, std::abs(att_true_two_period(p) - att_by_hand));
        if (att_adjusted_two_period(p) != p.gamma) {
            c.check(false, "adjusted estimator is not gamma");
            return;
        }
    }
    c.check(worst < 1e-9, "estimator algebra deviates by " + fmt(worst));
    c.info("max deviation " + fmt(worst));
}

// ---------------------------------------------------------------------------
// 3. Solver correctness: OLS vs normal equations, CR1 vs brute force.
void criterion_solver() {
    Criterion& c = begin("solver correctness (OLS 1e-8 rel, CR1 1e-10)");
    std::mt19937 gen(246810);
    std::normal_distribution<double> norm;

    double worst_ols = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 50, k = 6;
        Eigen::MatrixXd x(n, k);
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) {
            x(i, 0) = 1.0;
            for (int j = 1; j < k; ++j) x(i, j) = norm(gen);
            y(i) = norm(gen);
        }
        DesignMatrix d;
        for (int j = 0; j < k; ++j) d.labels.push_back("c" + std::to_string(j));
        d.values = x;
        const FitResult fit = ols_fit(d, y);
        const Eigen::VectorXd beta = (x.transpose() * x).inverse() * (x.transpose() * y);
        for (int j = 0; j < k; ++j)
            worst_ols = std::max(worst_ols, std::abs(fit.coef(j) - beta(j)) /
                                                std::max(1.0, std::abs(beta(j))));
    }
    c.check(worst_ols < 1e-8, "OLS vs normal equations relative error " + fmt(worst_ols));

    double worst_cr = 0.0;
    std::uniform_int_distribution<int> units(3, 20);
    std::uniform_int_distribution<int> times(2, 4);
    for (int trial = 0; trial < 100; ++trial) {
        const int g = units(gen), t = times(gen), k = 3;
        const int n = g * t;
        Eigen::MatrixXd x(n, k);
        Eigen::VectorXd y(n);
        std::vector<int> ids(n);
        for (int i = 0; i < n; ++i) {
            x(i, 0) = 1.0;
            x(i, 1) = norm(gen);
            x(i, 2) = norm(gen);
            y(i) = norm(gen);
            ids[i] = i / t + 1;
        }
        DesignMatrix d;
        d.labels = {"c0", "c1", "c2"};
        d.values = x;
        FitResult fit = ols_fit(d, y);
        cluster_robust_vcov(fit, d, ids);

        Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
        for (int cl = 1; cl <= g; ++cl) {
            Eigen::VectorXd s = Eigen::VectorXd::Zero(k);
            for (int i = 0; i < n; ++i)
                if (ids[i] == cl)
                    for (int a = 0; a < k; ++a) s(a) += x(i, a) * fit.residuals(i);
            meat += s * s.transpose();
        }
        const Eigen::MatrixXd bread = (x.transpose() * x).inverse();
        const double corr = (double(g) / (g - 1)) * (double(n - 1) / (n - k));
        const Eigen::MatrixXd expect = corr * bread * meat * bread;
        worst_cr = std::max(worst_cr, (fit.vcov - expect).lpNorm<Eigen::Infinity>());
    }
    c.check(worst_cr < 1e-10, "CR1 vs brute-force sandwich error " + fmt(worst_cr));
    c.info("OLS rel err " + fmt(worst_ols) + ", CR1 abs err " + fmt(worst_cr));
}

// ---------------------------------------------------------------------------
// 4. Noise-free fixed points at protocol size.
void criterion_fixed_points() {
    Criterion& c = begin("noise-free fixed points (1e-8)");
    const NoiseSwitches spread{0.0, 0.0, 0.0, 1.0}; // covariate spread only
    const NoiseSwitches none = NoiseSwitches::none();

    auto fixed = [&](ScenarioId id, OutcomeProcess p, AnalysisMethod m,
                     const NoiseSwitches& noise, double expect, const std::string& label) {
        ScenarioSpec spec = ScenarioSpec::protocol_default(id, p);
        spec.master_seed = 42;
        const ReplicateEstimate est = run_replicate(spec, noise, m);
        c.check(std::abs(est.att - expect) < 1e-8,
                label + ": got " + fmt(est.att) + ", want " + fmt(expect));
        return est.att;
    };

    fixed(ScenarioId::Toy, OutcomeProcess::ConstantEffect,
          AnalysisMethod::TimeVaryingAdjusted, spread, 0.0, "toy + tva");
    fixed(ScenarioId::S1, OutcomeProcess::ConstantEffect, AnalysisMethod::Simple, spread, 1.0,
          "s1 + simple");
    fixed(ScenarioId::S2, OutcomeProcess::ConstantEffect,
          AnalysisMethod::TimeVaryingAdjusted, spread, 1.0, "s2 + tva");
    fixed(ScenarioId::S5, OutcomeProcess::ConstantEffect, AnalysisMethod::CovariateAdjusted,
          spread, 1.0, "s5(a) + ca");
    fixed(ScenarioId::S6, OutcomeProcess::ConstantEffect, AnalysisMethod::Simple, none, 0.85,
          "s6(a) + simple on group-mean data");
    const double tva_a = fixed(ScenarioId::S6, OutcomeProcess::ConstantEffect,
                               AnalysisMethod::TimeVaryingAdjusted, spread, 1.0, "s6(a) + tva");
    const double tva_b =
        fixed(ScenarioId::S6, OutcomeProcess::TimeVaryingEffect,
              AnalysisMethod::TimeVaryingAdjusted, spread, 1.0, "s6(b) + tva");
    c.info("implied bias vs true ATT: " + fmt(100.0 * (tva_a - 0.85) / 0.85) + "% (a), " +
           fmt(100.0 * (tva_b - 0.87) / 0.87) + "% (b)");
}

// ---------------------------------------------------------------------------
// 5 + 6. Full Monte Carlo protocol and reproducibility.
const CellSummary& cell(const ResultTable& t, ScenarioId s, OutcomeProcess p,
                        AnalysisMethod m) {
    for (const CellSummary& c : t.cells)
        if (c.scenario == s && c.method == m &&
            (!time_varying_covariate(s) || c.process == p))
            return c;
    throw std::runtime_error("cell not found");
}

void criterion_monte_carlo_and_reproducibility() {
    ExperimentConfig config = ExperimentConfig::protocol_default();
    config.master_seed = 42;
    config.parallelism = 0; // all cores

    std::cout << "running the full Monte Carlo protocol (400 reps x 9 cells x 6 methods)..."
              << std::endl;
    const ResultTable table = run_experiment(config);
    std::cout << "  done in " << fmt(table.wall_seconds) << "s" << std::endl;

    Criterion& c = begin("Monte Carlo protocol (400 reps, n=800, seed 42)");
    const auto A = OutcomeProcess::ConstantEffect;
    const auto B = OutcomeProcess::TimeVaryingEffect;

    int total_failures = 0;
    for (const CellSummary& s : table.cells) total_failures += s.failures;
    c.check(total_failures == 0, std::to_string(total_failures) + " replicate failures");

    // Scenario 1: everything unbiased.
    for (AnalysisMethod m : kAllMethods) {
        const CellSummary& s = cell(table, ScenarioId::S1, A, m);
        c.check(std::abs(s.pct_bias) < 2.0,
                "s1 " + to_token(m) + " bias " + fmt(s.pct_bias) + "% (want |.| < 2)");
    }

    // Scenario 2: TVA unbiased, CA significantly biased, covariate matching works.
    {
        const CellSummary& tva = cell(table, ScenarioId::S2, A, AnalysisMethod::TimeVaryingAdjusted);
        c.check(std::abs(tva.pct_bias) < 2.0, "s2 tva bias " + fmt(tva.pct_bias) + "%");
        const CellSummary& ca = cell(table, ScenarioId::S2, A, AnalysisMethod::CovariateAdjusted);
        c.check(std::abs(ca.pct_bias) > 3.0 * ca.mc_se_of_bias,
                "s2 ca bias " + fmt(ca.pct_bias) + "% not significant (3 mc-se = " +
                    fmt(3.0 * ca.mc_se_of_bias) + ")");
        const CellSummary& mc = cell(table, ScenarioId::S2, A, AnalysisMethod::MatchPreCovariates);
        c.check(std::abs(mc.pct_bias) < 3.0, "s2 match-covariates bias " + fmt(mc.pct_bias) + "%");
    }

    // Scenario 3: pre-outcome matching regresses to the mean; TVA cuts the SE.
    {
        const CellSummary& mo = cell(table, ScenarioId::S3, A, AnalysisMethod::MatchPreOutcomes);
        c.check(mo.pct_bias >= 5.0 && mo.pct_bias <= 15.0,
                "s3 match-outcomes bias " + fmt(mo.pct_bias) + "% (want 5..15)");
        const CellSummary& tva = cell(table, ScenarioId::S3, A, AnalysisMethod::TimeVaryingAdjusted);
        const CellSummary& simple = cell(table, ScenarioId::S3, A, AnalysisMethod::Simple);
        const double se_cut = 100.0 * (1.0 - tva.mean_se / simple.mean_se);
        c.check(se_cut >= 13.0 && se_cut <= 27.0,
                "s3 tva SE reduction " + fmt(se_cut) + "% (want 13..27)");
        c.info("s3 tva mean SE is " + fmt(se_cut) + "% below simple");
    }

    // Scenario 4(b): TVA unbiased; covariate-vector matching nearly unbiased.
    {
        const CellSummary& tva = cell(table, ScenarioId::S4, B, AnalysisMethod::TimeVaryingAdjusted);
        c.check(std::abs(tva.pct_bias) < 2.0, "s4(b) tva bias " + fmt(tva.pct_bias) + "%");
        const CellSummary& mc = cell(table, ScenarioId::S4, B, AnalysisMethod::MatchPreCovariates);
        c.check(std::abs(mc.pct_bias) < 5.0,
                "s4(b) match-covariates bias " + fmt(mc.pct_bias) + "%");
    }

    // Scenario 5: the right regression works, matching cannot fix the drift.
    {
        const CellSummary& ca = cell(table, ScenarioId::S5, A, AnalysisMethod::CovariateAdjusted);
        c.check(std::abs(ca.pct_bias) < 2.0, "s5(a) ca bias " + fmt(ca.pct_bias) + "%");
        const CellSummary& tva = cell(table, ScenarioId::S5, B, AnalysisMethod::TimeVaryingAdjusted);
        c.check(std::abs(tva.pct_bias) < 2.0, "s5(b) tva bias " + fmt(tva.pct_bias) + "%");
        for (AnalysisMethod m : {AnalysisMethod::MatchPreOutcomes, AnalysisMethod::MatchPreDiffs,
                                 AnalysisMethod::MatchPreCovariates}) {
            const CellSummary& s = cell(table, ScenarioId::S5, B, m);
            c.check(std::abs(s.pct_bias) > 5.0,
                    "s5(b) " + to_token(m) + " bias " + fmt(s.pct_bias) + "% (want |.| > 5)");
        }
    }

    // Scenario 6: regression clusters at gamma, hence biased for the true ATT.
    {
        const double target_a = 100.0 * (1.0 - 0.85) / 0.85;
        const double target_b = 100.0 * (1.0 - 0.87) / 0.87;
        for (AnalysisMethod m :
             {AnalysisMethod::TimeVaryingAdjusted, AnalysisMethod::CovariateAdjusted}) {
            const CellSummary& sa = cell(table, ScenarioId::S6, A, m);
            c.check(std::abs(sa.pct_bias - target_a) <= 3.0 * sa.mc_se_of_bias,
                    "s6(a) " + to_token(m) + " bias " + fmt(sa.pct_bias) + "% vs " +
                        fmt(target_a) + " +/- " + fmt(3.0 * sa.mc_se_of_bias));
            const CellSummary& sb = cell(table, ScenarioId::S6, B, m);
            c.check(std::abs(sb.pct_bias - target_b) <= 3.0 * sb.mc_se_of_bias,
                    "s6(b) " + to_token(m) + " bias " + fmt(sb.pct_bias) + "% vs " +
                        fmt(target_b) + " +/- " + fmt(3.0 * sb.mc_se_of_bias));
        }
        const CellSummary& simple_a = cell(table, ScenarioId::S6, A, AnalysisMethod::Simple);
        c.info("reported, not asserted: s6(a) simple bias " + fmt(simple_a.pct_bias) +
               "% (the two-way DiD of the mean tables equals the true ATT here)");
    }

    // 6. Reproducibility across worker counts.
    Criterion& r = begin("reproducibility (byte-identical CSV across worker counts)");
    ExperimentConfig serial = config;
    serial.parallelism = 1;
    std::cout << "re-running the protocol single-threaded for the byte comparison..."
              << std::endl;
    const ResultTable again = run_experiment(serial);
    std::cout << "  done in " << fmt(again.wall_seconds) << "s" << std::endl;
    r.check(result_to_csv(table) == result_to_csv(again),
            "CSV bytes differ between worker counts");
}

} // namespace

int main() {
    criterion_oracle();
    criterion_two_period_algebra();
    criterion_solver();
    criterion_fixed_points();
    criterion_monte_carlo_and_reproducibility();

    int failures = 0;
    std::cout << "\n";
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const Criterion& c = criteria[i];
        std::cout << (c.ok ? "PASS" : "FAIL") << "  criterion " << (i + 1) << ": " << c.name
                  << "\n";
        for (const std::string& note : c.notes) std::cout << "      " << note << "\n";
        failures += c.ok ? 0 : 1;
    }
    std::cout << (failures == 0 ? "\nall criteria passed\n" : "\nsome criteria FAILED\n");
    return failures;
}
