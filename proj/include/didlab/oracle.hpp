#pragma once

#include <array>
#include <numeric>
#include <string>
#include <vector>

#include "didlab/dgp.hpp"
#include "didlab/io.hpp"
#include "didlab/types.hpp"

namespace didlab {

// Symbols of the two-period analysis: covariate effects lambda_t, observed
// group-time covariate means tau_{a,t}, and the counterfactual treated-group
// post-period means tau^1_{11} / tau^0_{11}.
struct TwoPeriodParams {
    double gamma = 0.0;
    double lambda0 = 0.0, lambda1 = 0.0;
    double tau00 = 0.0, tau01 = 0.0; // comparison group at t=0, t=1
    double tau10 = 0.0, tau11 = 0.0; // treated group at t=0, t=1
    double tau1_cf_treated = 0.0;    // E[X^1 | A=1] at t=1
    double tau1_cf_untreated = 0.0;  // E[X^0 | A=1] at t=1
};

// Differential change in untreated potential outcomes between groups:
// lambda1*(tau11 - tau01) - lambda0*(tau10 - tau00). Zero iff parallel trends
// holds under the linear untreated-outcome model.
inline double pt_divergence(const TwoPeriodParams& p) {
    return p.lambda1 * (p.tau11 - p.tau01) - p.lambda0 * (p.tau10 - p.tau00);
}

// Time-invariant covariate special case: (lambda1 - lambda0)*(tau1 - tau0).
inline double pt_divergence_time_invariant(double lambda0, double lambda1, double tau0,
                                           double tau1) {
    return (lambda1 - lambda0) * (tau1 - tau0);
}

// True ATT when treatment can move the covariate: gamma + lambda1*(tau^1_11 - tau^0_11).
inline double att_true_two_period(const TwoPeriodParams& p) {
    return p.gamma + p.lambda1 * (p.tau1_cf_treated - p.tau1_cf_untreated);
}

// Plain difference-in-means estimator: gamma + lambda1*(tau11 - tau01) - lambda0*(tau10 - tau00).
inline double att_unadjusted_two_period(const TwoPeriodParams& p) {
    return p.gamma + p.lambda1 * (p.tau11 - p.tau01) - p.lambda0 * (p.tau10 - p.tau00);
}

// The correctly specified regression recovers the interaction coefficient gamma,
// which differs from the true ATT whenever treatment moves the covariate.
inline double att_adjusted_two_period(const TwoPeriodParams& p) { return p.gamma; }

enum class Arm { TreatedCfUntreated = 0, TreatedCfTreated = 1, Comparison = 2 };

// Closed-form group-time means of covariate and outcome per arm. The two
// treated arms are the counterfactual-untreated and counterfactual-treated
// paths; the comparison arm is the observed untreated group.
struct MeanTable {
    int n_times = 0;
    int first_post_time = 0;
    std::array<std::vector<double>, 3> covariate; // [arm][t-1]
    std::array<std::vector<double>, 3> outcome;   // [arm][t-1]

    double pre_average(const std::vector<double>& v) const {
        const int k = first_post_time - 1;
        return std::accumulate(v.begin(), v.begin() + k, 0.0) / k;
    }
    double post_average(const std::vector<double>& v) const {
        const int k = n_times - first_post_time + 1;
        return std::accumulate(v.begin() + (first_post_time - 1), v.end(), 0.0) / k;
    }

    // Mean over post periods of the treated counterfactual outcome contrast.
    double att() const {
        const auto& y1 = outcome[static_cast<int>(Arm::TreatedCfTreated)];
        const auto& y0 = outcome[static_cast<int>(Arm::TreatedCfUntreated)];
        double sum = 0.0;
        for (int t = first_post_time; t <= n_times; ++t) sum += y1[t - 1] - y0[t - 1];
        return sum / (n_times - first_post_time + 1);
    }

    // Rows = arms, columns = t=1..T plus pre/post averages.
    std::string to_csv(const std::string& label) const {
        static const char* arm_names[3] = {"treated_cf_untreated", "treated_cf_treated",
                                           "comparison"};
        std::string out = "table,arm";
        for (int t = 1; t <= n_times; ++t) out += ",t" + std::to_string(t);
        out += ",pre_avg,post_avg\n";
        for (const auto* block : {&covariate, &outcome}) {
            const bool is_x = block == &covariate;
            for (int arm = 0; arm < 3; ++arm) {
                out += (is_x ? "covariate" : "outcome_" + label);
                out += ",";
                out += arm_names[arm];
                for (double v : (*block)[arm]) out += "," + format_double(v);
                out += "," + format_double(pre_average((*block)[arm]));
                out += "," + format_double(post_average((*block)[arm]));
                out += "\n";
            }
        }
        return out;
    }
};

// Evaluates the scenario-6 counterfactual mean tables from the DGP formulas
// (baseline covariates at their group means, z multipliers at their mean 1).
inline MeanTable expected_means_scenario6(const ScenarioSpec& spec) {
    if (spec.scenario_id != ScenarioId::S6)
        throw std::invalid_argument("mean tables are defined for scenario 6");
    spec.validate();

    MeanTable tab;
    tab.n_times = spec.n_times;
    tab.first_post_time = spec.first_post_time;
    const std::vector<double> z(spec.n_times, 1.0); // noise-free multipliers

    struct ArmDef {
        int group;
        bool treated;
    };
    const ArmDef arms[3] = {{1, false}, {1, true}, {0, false}};
    for (int a = 0; a < 3; ++a) {
        const double x1 = baseline_covariate_params(spec, arms[a].group).mean;
        tab.covariate[a].resize(spec.n_times);
        tab.outcome[a].resize(spec.n_times);
        for (int t = 1; t <= spec.n_times; ++t) {
            const double x = covariate_path(spec, arms[a].group, arms[a].treated, x1, z, t);
            tab.covariate[a][t - 1] = x;
            // post=false evaluates the counterfactual-untreated outcome.
            tab.outcome[a][t - 1] =
                outcome_mean(spec, arms[a].group, arms[a].treated && spec.post(t), x, t);
        }
    }
    return tab;
}

inline MeanTable expected_means_scenario6(OutcomeProcess process) {
    return expected_means_scenario6(ScenarioSpec::protocol_default(ScenarioId::S6, process));
}

// True ATT for a scenario: gamma everywhere except scenario 6, where treatment
// moves the covariate and the ATT is the post-period mean of the counterfactual
// outcome contrasts (0.85 / 0.87 for processes a / b at protocol defaults).
// The contrast at time t is gamma + lambda_t * (x^1_t - x^0_t) with the
// covariate contrast -(t - T0 + 1)/20; accumulating the integer numerator
// before the single division keeps the result exact in double precision.
inline double true_att(const ScenarioSpec& spec) {
    if (spec.scenario_id != ScenarioId::S6) return spec.gamma;
    spec.validate();
    const int t0 = spec.first_post_time;
    const int n_post = spec.n_times - t0 + 1;
    const bool tve = spec.outcome_process == OutcomeProcess::TimeVaryingEffect;
    long long numerator = 0;
    for (int t = t0; t <= spec.n_times; ++t)
        numerator += tve ? static_cast<long long>(t - t0 + 1) * t : (t - t0 + 1);
    const double denom = (tve ? 200.0 : 20.0) * n_post;
    return spec.gamma - static_cast<double>(numerator) / denom;
}

inline double true_att(ScenarioId id, OutcomeProcess p = OutcomeProcess::ConstantEffect) {
    return true_att(ScenarioSpec::protocol_default(id, p));
}

} // namespace didlab
