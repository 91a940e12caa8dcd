#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace didlab {

// The seven data-generating scenarios: the two-period toy example plus the
// six panel scenarios (S1-S3 time-invariant covariate, S4-S6 time-varying).
enum class ScenarioId { Toy, S1, S2, S3, S4, S5, S6 };

// Outcome process for S4-S6: (a) constant covariate effect, (b) the covariate
// effect grows with time (x*t/10 replaces the level term). Ignored elsewhere.
enum class OutcomeProcess { ConstantEffect, TimeVaryingEffect };

inline bool time_varying_covariate(ScenarioId s) {
    return s == ScenarioId::S4 || s == ScenarioId::S5 || s == ScenarioId::S6;
}

inline std::string to_token(ScenarioId s) {
    switch (s) {
        case ScenarioId::Toy: return "toy";
        case ScenarioId::S1: return "s1";
        case ScenarioId::S2: return "s2";
        case ScenarioId::S3: return "s3";
        case ScenarioId::S4: return "s4";
        case ScenarioId::S5: return "s5";
        case ScenarioId::S6: return "s6";
    }
    throw std::invalid_argument("unknown scenario id");
}

inline ScenarioId scenario_from_token(const std::string& tok) {
    if (tok == "toy") return ScenarioId::Toy;
    if (tok == "s1") return ScenarioId::S1;
    if (tok == "s2") return ScenarioId::S2;
    if (tok == "s3") return ScenarioId::S3;
    if (tok == "s4") return ScenarioId::S4;
    if (tok == "s5") return ScenarioId::S5;
    if (tok == "s6") return ScenarioId::S6;
    throw std::invalid_argument("unknown scenario '" + tok + "' (expected toy, s1..s6)");
}

inline std::string to_token(OutcomeProcess p) {
    return p == OutcomeProcess::ConstantEffect ? "a" : "b";
}

inline OutcomeProcess process_from_token(const std::string& tok) {
    if (tok == "a") return OutcomeProcess::ConstantEffect;
    if (tok == "b") return OutcomeProcess::TimeVaryingEffect;
    throw std::invalid_argument("unknown outcome process '" + tok + "' (expected a or b)");
}

// Complete parameterization of one data-generating process. The defaults
// are the simulation protocol: n=800 units over T=10 times, treatment from
// t=6, Bernoulli(0.5) assignment, additive treatment effect 1.
struct ScenarioSpec {
    ScenarioId scenario_id = ScenarioId::S1;
    OutcomeProcess outcome_process = OutcomeProcess::ConstantEffect;
    int n_units = 800;
    int n_times = 10;
    int first_post_time = 6;
    double treat_prob = 0.5;
    double gamma = 1.0;            // additive treatment effect (a_i * p_t coefficient)
    double toy_covariate_sd = 0.2; // spread of the toy covariate around its group mean
    std::uint64_t master_seed = 42;
    std::uint64_t replicate_index = 0;

    bool post(int t) const { return t >= first_post_time; }
    bool time_varying() const { return time_varying_covariate(scenario_id); }

    // Process (a)/(b) only distinguishes the S4-S6 outcome equations; collapse
    // it elsewhere so RNG substreams and result cells do not split spuriously.
    OutcomeProcess effective_process() const {
        return time_varying() ? outcome_process : OutcomeProcess::ConstantEffect;
    }

    static ScenarioSpec protocol_default(ScenarioId id,
                                      OutcomeProcess p = OutcomeProcess::ConstantEffect) {
        ScenarioSpec s;
        s.scenario_id = id;
        s.outcome_process = p;
        if (id == ScenarioId::Toy) {
            s.n_times = 2;
            s.first_post_time = 2;
            s.gamma = 0.0; // the toy example carries no treatment effect
        }
        return s;
    }

    void validate() const {
        if (n_units < 2) throw std::invalid_argument("n_units must be >= 2");
        if (n_times < 2) throw std::invalid_argument("n_times must be >= 2");
        if (first_post_time < 2 || first_post_time > n_times)
            throw std::invalid_argument("first_post_time must be in [2, n_times]");
        if (!(treat_prob > 0.0 && treat_prob < 1.0))
            throw std::invalid_argument("treat_prob must be in (0,1)");
        if (toy_covariate_sd < 0.0)
            throw std::invalid_argument("toy_covariate_sd must be >= 0");
        if (scenario_id == ScenarioId::Toy && n_times != 2)
            throw std::invalid_argument("the toy scenario is defined for exactly 2 time points");
    }
};

// Scales of the stochastic components of the DGP. The protocol values are the
// defaults; setting every field to zero yields a fully deterministic panel
// whose group-time means equal the closed-form oracle values
// (baseline_covariate_scale = 0 pins each baseline covariate at its group mean).
struct NoiseSwitches {
    double unit_intercept_sd = 0.25;      // sd of u_i
    double outcome_error_sd = 1.0;        // sd of eps_it
    double covariate_noise_sd = 0.1;      // sd of the z increments around 1
    double baseline_covariate_scale = 1.0;// multiplies the baseline-covariate sd

    static NoiseSwitches none() { return NoiseSwitches{0.0, 0.0, 0.0, 0.0}; }

    void validate() const {
        if (unit_intercept_sd < 0 || outcome_error_sd < 0 || covariate_noise_sd < 0 ||
            baseline_covariate_scale < 0)
            throw std::invalid_argument("noise switches must be >= 0");
    }
};

struct PanelRow {
    int unit_id = 0;
    int time = 0;      // 1-based
    int group = 0;     // a_i
    int post = 0;      // p_t = 1{time >= first_post_time}
    double covariate = 0.0;
    double outcome = 0.0;
};

// Balanced long-format panel, rows sorted by (unit_id, time) with times
// 1..n_times per unit. Construction canonicalizes and validates, so any
// PanelDataset in flight satisfies the balance/sortedness invariants.
class PanelDataset {
  public:
    PanelDataset(std::vector<PanelRow> rows, ScenarioSpec spec)
        : rows_(std::move(rows)), spec_(spec) {
        canonicalize();
        validate();
    }

    const std::vector<PanelRow>& rows() const { return rows_; }
    const ScenarioSpec& spec() const { return spec_; }
    int n_units() const { return static_cast<int>(unit_ids_.size()); }
    int n_times() const { return spec_.n_times; }
    int first_post_time() const { return spec_.first_post_time; }
    const std::vector<int>& unit_ids() const { return unit_ids_; }

    // Row for the u-th unit (0-based, in unit_ids() order) at time t (1-based).
    const PanelRow& at(int unit_index, int t) const {
        return rows_[static_cast<std::size_t>(unit_index) * spec_.n_times + (t - 1)];
    }
    int group_of(int unit_index) const { return at(unit_index, 1).group; }

  private:
    void canonicalize() {
        std::stable_sort(rows_.begin(), rows_.end(), [](const PanelRow& a, const PanelRow& b) {
            if (a.unit_id != b.unit_id) return a.unit_id < b.unit_id;
            return a.time < b.time;
        });
    }

    void validate() {
        const int T = spec_.n_times;
        if (T < 2) throw std::invalid_argument("panel needs at least 2 time points");
        if (rows_.empty() || rows_.size() % static_cast<std::size_t>(T) != 0)
            throw std::invalid_argument("panel is not balanced");
        const std::size_t n = rows_.size() / static_cast<std::size_t>(T);
        unit_ids_.clear();
        unit_ids_.reserve(n);
        for (std::size_t u = 0; u < n; ++u) {
            const PanelRow& first = rows_[u * T];
            unit_ids_.push_back(first.unit_id);
            if (u > 0 && unit_ids_[u] == unit_ids_[u - 1])
                throw std::invalid_argument("duplicate (unit, time) rows in panel");
            for (int t = 1; t <= T; ++t) {
                const PanelRow& r = rows_[u * T + (t - 1)];
                if (r.unit_id != first.unit_id || r.time != t)
                    throw std::invalid_argument("panel is not balanced over times 1..T");
                if (r.group != first.group)
                    throw std::invalid_argument("group must be constant within unit");
                if (r.post != (spec_.post(t) ? 1 : 0))
                    throw std::invalid_argument("post flag inconsistent with first_post_time");
            }
        }
        if (static_cast<int>(n) != spec_.n_units)
            throw std::invalid_argument("row count inconsistent with spec.n_units");
    }

    std::vector<PanelRow> rows_;
    ScenarioSpec spec_;
    std::vector<int> unit_ids_;
};

} // namespace didlab
