#pragma once

#include <cmath>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "didlab/rng.hpp"
#include "didlab/types.hpp"

namespace didlab {

// Toy-example coefficients: E[Y0 | a, x] = alpha0 + alpha1*a + zeta_t + lambda_t*x
// over the two periods, with period means tau0/tau1 for the covariate.
namespace toy {
inline constexpr double alpha0 = 1.0;
inline constexpr double alpha1 = -1.0;
inline constexpr double zeta[2] = {1.0, 2.0};   // zeta at t=1 (pre) and t=2 (post)
inline constexpr double lambda[2] = {0.0, 1.0}; // lambda at t=1 and t=2
inline constexpr double tau[2] = {0.0, 1.0};    // covariate mean by group
} // namespace toy

// Common time trend f(t) = (t - 2.5)^2 / 10.
inline double f_time(double t) { return (t - 2.5) * (t - 2.5) / 10.0; }

// Covariate-by-time interaction g(x, t) = x * t / 10.
inline double g_interaction(double x, double t) { return x * t / 10.0; }

struct CovariateParams {
    double mean;
    double sd;
};

// Baseline covariate distribution by group: N(1.5 - 0.5a, (1.5 - 0.5a)^2),
// except scenario 3 (N(1,1) in both groups) and the toy example (group mean
// tau_a with configurable spread).
inline CovariateParams baseline_covariate_params(const ScenarioSpec& spec, int group) {
    if (group != 0 && group != 1) throw std::invalid_argument("group must be 0 or 1");
    switch (spec.scenario_id) {
        case ScenarioId::Toy:
            return {toy::tau[group], spec.toy_covariate_sd};
        case ScenarioId::S3:
            return {1.0, 1.0};
        default:
            return {1.5 - 0.5 * group, 1.5 - 0.5 * group};
    }
}

// Covariate value at time t, anchored at the baseline draw x1. The path is
// non-recursive: each step applies (t-1)/10 once, which is what reproduces the
// counterfactual mean tables (1.0, 1.1, ..., 1.9 for the untreated arm).
// z holds the N(1, 0.1^2) multipliers with z[t-1] used at time t (t >= 2).
// `treated` switches on the scenario-6 post-period decrement; pass false to
// evaluate the counterfactual-untreated path for a treated-group unit.
inline double covariate_path(const ScenarioSpec& spec, int group, bool treated, double x1,
                             std::span<const double> z, int t) {
    if (t < 1 || t > spec.n_times) throw std::invalid_argument("time index out of range");
    const double zt = (t >= 2) ? z[static_cast<std::size_t>(t) - 1] : 1.0;
    const double drift = (t - 1) / 10.0 * zt;
    switch (spec.scenario_id) {
        case ScenarioId::Toy:
        case ScenarioId::S1:
        case ScenarioId::S2:
        case ScenarioId::S3:
            return x1;
        case ScenarioId::S4:
            return x1 + drift;
        case ScenarioId::S5:
            return x1 + (2 * group - 1) * drift;
        case ScenarioId::S6: {
            // Treated units lose a cumulative 1/20 per post period.
            const double cut = (treated && spec.post(t))
                                   ? (t - spec.first_post_time + 1) / 20.0
                                   : 0.0;
            return x1 + drift - cut;
        }
    }
    throw std::invalid_argument("unknown scenario id");
}

inline double covariate_path(const ScenarioSpec& spec, int group, double x1,
                             std::span<const double> z, int t) {
    return covariate_path(spec, group, /*treated=*/group == 1, x1, z, t);
}

// Systematic part of E[Y] given group, post status, covariate value, and time.
// `post` carries the gamma*a*p treatment term, so passing post=false for a
// treated-group unit evaluates its counterfactual-untreated mean.
inline double outcome_mean(const ScenarioSpec& spec, int group, bool post, double x, int t) {
    const double treat = spec.gamma * group * (post ? 1.0 : 0.0);
    switch (spec.scenario_id) {
        case ScenarioId::Toy:
            return toy::alpha0 + toy::alpha1 * group + toy::zeta[t - 1] +
                   toy::lambda[t - 1] * x + treat;
        case ScenarioId::S1:
            return 1.0 + group + treat + x + f_time(t);
        case ScenarioId::S2:
        case ScenarioId::S3:
            return 1.0 + group + treat + x + f_time(t) + g_interaction(x, t);
        case ScenarioId::S4:
        case ScenarioId::S5:
        case ScenarioId::S6:
            // Process (b) replaces the level term with the x*t/10 interaction.
            if (spec.outcome_process == OutcomeProcess::TimeVaryingEffect)
                return 1.0 + group + treat + g_interaction(x, t) + f_time(t);
            return 1.0 + group + treat + x + f_time(t);
    }
    throw std::invalid_argument("unknown scenario id");
}

// Draws one balanced panel. Draw order is fixed: group assignments, unit
// intercepts, baseline covariates, z multipliers (unit-major, time-minor;
// time-varying scenarios only), outcome errors (unit-major, time-minor).
// Every stochastic component is drawn as sd * N(0,1), so turning a switch to
// zero changes values but not the draw sequence consumed from `rng`.
inline PanelDataset generate(const ScenarioSpec& spec, const NoiseSwitches& noise,
                             std::mt19937_64& rng) {
    spec.validate();
    noise.validate();

    const int n = spec.n_units;
    const int T = spec.n_times;
    std::bernoulli_distribution assign(spec.treat_prob);
    std::normal_distribution<double> stdnorm(0.0, 1.0);

    std::vector<int> group(n);
    for (int i = 0; i < n; ++i) group[i] = assign(rng) ? 1 : 0;

    std::vector<double> u(n);
    for (int i = 0; i < n; ++i) u[i] = noise.unit_intercept_sd * stdnorm(rng);

    std::vector<double> x1(n);
    for (int i = 0; i < n; ++i) {
        const CovariateParams p = baseline_covariate_params(spec, group[i]);
        x1[i] = p.mean + p.sd * noise.baseline_covariate_scale * stdnorm(rng);
    }

    std::vector<double> z;
    if (spec.time_varying()) {
        z.assign(static_cast<std::size_t>(n) * T, 1.0);
        for (int i = 0; i < n; ++i)
            for (int t = 2; t <= T; ++t)
                z[static_cast<std::size_t>(i) * T + (t - 1)] =
                    1.0 + noise.covariate_noise_sd * stdnorm(rng);
    } else {
        z.assign(T, 1.0);
    }

    std::vector<double> eps(static_cast<std::size_t>(n) * T);
    for (double& e : eps) e = noise.outcome_error_sd * stdnorm(rng);

    int n_treated = 0;
    for (int g : group) n_treated += g;
    if (n_treated == 0 || n_treated == n)
        throw std::runtime_error("degenerate assignment: one group is empty");

    std::vector<PanelRow> rows;
    rows.reserve(static_cast<std::size_t>(n) * T);
    for (int i = 0; i < n; ++i) {
        const std::span<const double> zi =
            spec.time_varying()
                ? std::span<const double>(z).subspan(static_cast<std::size_t>(i) * T, T)
                : std::span<const double>(z);
        for (int t = 1; t <= T; ++t) {
            PanelRow r;
            r.unit_id = i + 1;
            r.time = t;
            r.group = group[i];
            r.post = spec.post(t) ? 1 : 0;
            r.covariate = covariate_path(spec, group[i], x1[i], zi, t);
            r.outcome = outcome_mean(spec, group[i], spec.post(t), r.covariate, t) + u[i] +
                        eps[static_cast<std::size_t>(i) * T + (t - 1)];
            rows.push_back(r);
        }
    }
    return PanelDataset(std::move(rows), spec);
}

inline PanelDataset generate(const ScenarioSpec& spec, const NoiseSwitches& noise) {
    std::mt19937_64 rng = replicate_stream(spec);
    return generate(spec, noise, rng);
}

} // namespace didlab
