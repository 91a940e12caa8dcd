#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "didlab/io.hpp"
#include "didlab/types.hpp"

namespace didlab {

enum class MatchKind { PreOutcomes, PreOutcomeFirstDiffs, PreCovariates };
enum class MatchDistance { Euclidean, PropensityLogit };
enum class MatchReplacement { Without, With };

inline std::string to_token(MatchDistance d) {
    return d == MatchDistance::Euclidean ? "euclidean" : "propensity";
}

inline MatchDistance distance_from_token(const std::string& tok) {
    if (tok == "euclidean") return MatchDistance::Euclidean;
    if (tok == "propensity") return MatchDistance::PropensityLogit;
    throw std::invalid_argument("unknown matching distance '" + tok +
                                "' (expected euclidean or propensity)");
}

// 1:1 nearest-neighbor matching strategy. Without replacement (the default),
// a comparison unit is consumed by the first treated unit that takes it, so
// with balanced groups nearly every unit ends up matched. With replacement,
// comparisons can be reused and the matched sample keeps only comparisons
// that resemble some treated unit.
struct MatchStrategy {
    MatchKind kind = MatchKind::PreCovariates;
    MatchDistance distance = MatchDistance::Euclidean;
    MatchReplacement replacement = MatchReplacement::Without;
};

struct UnitFeatures {
    std::vector<int> unit_ids;  // ascending
    std::vector<int> groups;    // aligned with unit_ids
    Eigen::MatrixXd features;   // units x dimensions
};

// Per-unit matching features. Pre-treatment outcomes are (y_1..y_{T0-1});
// first differences drop one dimension; covariates are the scalar baseline
// value when x is time-invariant in the data and the pre-treatment vector
// (x_1..x_{T0-1}) otherwise.
inline UnitFeatures feature_matrix(const PanelDataset& data, const MatchStrategy& strategy) {
    const int t0 = data.first_post_time();
    const int n_pre = t0 - 1;
    if (n_pre < 1) throw std::invalid_argument("matching needs at least one pre-treatment period");
    if (strategy.kind == MatchKind::PreOutcomeFirstDiffs && n_pre < 2)
        throw std::invalid_argument("first-difference matching needs >= 2 pre-treatment periods");

    const int n = data.n_units();
    UnitFeatures f;
    f.unit_ids = data.unit_ids();
    f.groups.resize(n);
    for (int u = 0; u < n; ++u) f.groups[u] = data.group_of(u);

    switch (strategy.kind) {
        case MatchKind::PreOutcomes: {
            f.features.resize(n, n_pre);
            for (int u = 0; u < n; ++u)
                for (int t = 1; t <= n_pre; ++t) f.features(u, t - 1) = data.at(u, t).outcome;
            break;
        }
        case MatchKind::PreOutcomeFirstDiffs: {
            f.features.resize(n, n_pre - 1);
            for (int u = 0; u < n; ++u)
                for (int t = 2; t <= n_pre; ++t)
                    f.features(u, t - 2) = data.at(u, t).outcome - data.at(u, t - 1).outcome;
            break;
        }
        case MatchKind::PreCovariates: {
            bool time_invariant = true;
            for (int u = 0; u < n && time_invariant; ++u)
                for (int t = 2; t <= data.n_times(); ++t)
                    if (data.at(u, t).covariate != data.at(u, 1).covariate) {
                        time_invariant = false;
                        break;
                    }
            if (time_invariant) {
                f.features.resize(n, 1);
                for (int u = 0; u < n; ++u) f.features(u, 0) = data.at(u, 1).covariate;
            } else {
                f.features.resize(n, n_pre);
                for (int u = 0; u < n; ++u)
                    for (int t = 1; t <= n_pre; ++t)
                        f.features(u, t - 1) = data.at(u, t).covariate;
            }
            break;
        }
    }
    return f;
}

struct MatchedPair {
    int treated_id = 0;
    int comparison_id = 0;
    double distance = 0.0;
};

struct MatchResult {
    std::vector<MatchedPair> pairs;
    std::vector<int> unmatched; // unit ids never placed in a pair
};

namespace detail {

// Iteratively reweighted least squares for logit(P(group=1)) = [1 F] beta.
// Returns the per-unit log-odds. Separation (any |log-odds| > 30) aborts.
inline Eigen::VectorXd propensity_log_odds(const UnitFeatures& f) {
    const long n = f.features.rows();
    const long d = f.features.cols() + 1;
    Eigen::MatrixXd x(n, d);
    x.col(0).setOnes();
    x.rightCols(f.features.cols()) = f.features;
    Eigen::VectorXd g(n);
    for (long i = 0; i < n; ++i) g(i) = f.groups[static_cast<std::size_t>(i)];

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
    for (int iter = 0; iter < 50; ++iter) {
        const Eigen::VectorXd p = (1.0 + (-eta.array()).exp()).inverse().matrix();
        const Eigen::VectorXd w = p.array() * (1.0 - p.array());
        const Eigen::MatrixXd xtwx = x.transpose() * w.asDiagonal() * x;
        const Eigen::VectorXd score = x.transpose() * (g - p);
        beta += xtwx.ldlt().solve(score);
        Eigen::VectorXd eta_new = x * beta;
        if (eta_new.array().abs().maxCoeff() > 30.0)
            throw std::runtime_error(
                "propensity model separated (|log-odds| > 30); use the Euclidean distance mode");
        const double change = (eta_new - eta).array().abs().maxCoeff();
        eta.swap(eta_new);
        if (change <= 1e-8) break;
    }
    return eta;
}

} // namespace detail

// Greedy 1:1 nearest-neighbor matching. Features are standardized by their
// pooled standard deviations (or replaced by the estimated propensity
// log-odds); treated units are processed hardest-first, i.e. by descending
// distance to the comparison-group centroid, with ties broken by ascending
// unit id on both sides.
inline MatchResult greedy_match(const UnitFeatures& f, const MatchStrategy& strategy) {
    const long n = f.features.rows();
    std::vector<int> treated, comparison;
    for (long i = 0; i < n; ++i)
        (f.groups[static_cast<std::size_t>(i)] == 1 ? treated : comparison).push_back(
            static_cast<int>(i));
    if (treated.empty() || comparison.empty())
        throw std::invalid_argument("matching needs units in both groups");

    Eigen::MatrixXd feat;
    if (strategy.distance == MatchDistance::PropensityLogit) {
        feat = detail::propensity_log_odds(f);
    } else {
        feat = f.features;
        for (long j = 0; j < feat.cols(); ++j) {
            const double mean = feat.col(j).mean();
            const double sd = std::sqrt((feat.col(j).array() - mean).square().sum() /
                                        static_cast<double>(n - 1));
            if (sd > 0.0) feat.col(j) /= sd;
        }
    }

    Eigen::RowVectorXd centroid = Eigen::RowVectorXd::Zero(feat.cols());
    for (int c : comparison) centroid += feat.row(c);
    centroid /= static_cast<double>(comparison.size());

    std::sort(treated.begin(), treated.end(), [&](int a, int b) {
        const double da = (feat.row(a) - centroid).norm();
        const double db = (feat.row(b) - centroid).norm();
        if (da != db) return da > db;
        return f.unit_ids[static_cast<std::size_t>(a)] < f.unit_ids[static_cast<std::size_t>(b)];
    });

    MatchResult result;
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    std::set<int> matched_units;
    for (int t : treated) {
        int best = -1;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (int c : comparison) {
            if (strategy.replacement == MatchReplacement::Without &&
                used[static_cast<std::size_t>(c)])
                continue;
            const double d2 = (feat.row(t) - feat.row(c)).squaredNorm();
            if (d2 < best_d2) { // comparison ids ascend, so first of equals wins
                best_d2 = d2;
                best = c;
            }
        }
        if (best < 0) continue; // comparisons exhausted; treated unit stays unmatched
        used[static_cast<std::size_t>(best)] = true;
        result.pairs.push_back({f.unit_ids[static_cast<std::size_t>(t)],
                                f.unit_ids[static_cast<std::size_t>(best)],
                                std::sqrt(best_d2)});
        matched_units.insert(f.unit_ids[static_cast<std::size_t>(t)]);
        matched_units.insert(f.unit_ids[static_cast<std::size_t>(best)]);
    }
    // pairs stay in processing (hardest-first) order
    for (int id : f.unit_ids)
        if (!matched_units.count(id)) result.unmatched.push_back(id);
    return result;
}

inline MatchResult match_panel(const PanelDataset& data, const MatchStrategy& strategy) {
    return greedy_match(feature_matrix(data, strategy), strategy);
}

// All rows (every time point) of the matched units only.
inline PanelDataset subset_panel(const PanelDataset& data, const MatchResult& match) {
    if (match.pairs.empty()) throw std::invalid_argument("empty match: no units to keep");
    std::set<int> keep;
    for (const MatchedPair& p : match.pairs) {
        keep.insert(p.treated_id);
        keep.insert(p.comparison_id);
    }
    std::vector<PanelRow> rows;
    rows.reserve(keep.size() * static_cast<std::size_t>(data.n_times()));
    for (const PanelRow& r : data.rows())
        if (keep.count(r.unit_id)) rows.push_back(r);
    ScenarioSpec spec = data.spec();
    spec.n_units = static_cast<int>(keep.size());
    return PanelDataset(std::move(rows), spec);
}

inline std::string match_to_csv(const MatchResult& match) {
    std::string out = "treated_id,comparison_id,distance\n";
    for (const MatchedPair& p : match.pairs) {
        out += std::to_string(p.treated_id);
        out += ",";
        out += std::to_string(p.comparison_id);
        out += ",";
        out += format_double(p.distance);
        out += "\n";
    }
    return out;
}

} // namespace didlab
