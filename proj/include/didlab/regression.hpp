#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "didlab/types.hpp"

namespace didlab {

enum class RegressionModel { Simple, CovariateAdjusted, TimeVaryingAdjusted };

inline std::string to_token(RegressionModel m) {
    switch (m) {
        case RegressionModel::Simple: return "simple";
        case RegressionModel::CovariateAdjusted: return "ca";
        case RegressionModel::TimeVaryingAdjusted: return "tva";
    }
    throw std::invalid_argument("unknown regression model");
}

struct ModelSpec {
    RegressionModel model = RegressionModel::Simple;
    bool matched_subset = false; // bookkeeping: fit runs on a matched panel
};

namespace detail {

// Sequential Householder QR that processes columns in a caller-fixed order and
// drops a column when its pivot falls below tol_rel times the largest pivot
// seen so far. The order encodes the aliasing policy: columns late in the
// order lose when an exact collinearity appears.
struct PolicyQr {
    std::vector<int> kept;    // column indices, in elimination order
    std::vector<int> dropped; // column indices, in order of discovery
    Eigen::MatrixXd r;        // rank x rank upper triangular over kept columns
    std::vector<Eigen::VectorXd> reflectors;
    long n_rows = 0;

    void apply_qt(Eigen::VectorXd& y) const {
        for (std::size_t s = 0; s < reflectors.size(); ++s) {
            auto tail = y.tail(n_rows - static_cast<long>(s));
            const Eigen::VectorXd& v = reflectors[s];
            tail -= v * (2.0 * v.dot(tail) / v.squaredNorm());
        }
    }
};

inline PolicyQr policy_qr(const Eigen::MatrixXd& x, std::span<const int> order,
                          double tol_rel = 1e-10) {
    const long n = x.rows();
    PolicyQr qr;
    qr.n_rows = n;
    Eigen::MatrixXd work(n, static_cast<long>(order.size()));
    for (std::size_t j = 0; j < order.size(); ++j) work.col(j) = x.col(order[j]);

    double max_pivot = 0.0;
    long rank = 0;
    Eigen::MatrixXd rfull(static_cast<long>(order.size()), static_cast<long>(order.size()));
    rfull.setZero();
    for (std::size_t j = 0; j < order.size(); ++j) {
        // rank == n leaves an empty tail, so further columns drop with pivot 0
        const double pivot = work.col(j).tail(n - rank).norm();
        if (pivot <= 0.0 || pivot < tol_rel * max_pivot) {
            qr.dropped.push_back(order[j]);
            continue;
        }
        max_pivot = std::max(max_pivot, pivot);

        Eigen::VectorXd v = work.col(j).tail(n - rank);
        const double alpha = (v(0) >= 0.0) ? -pivot : pivot;
        v(0) -= alpha;
        const double vsq = v.squaredNorm();
        for (std::size_t k = j + 1; k < order.size(); ++k) {
            auto tail = work.col(k).tail(n - rank);
            tail -= v * (2.0 * v.dot(tail) / vsq);
        }
        rfull.col(rank).head(rank) = work.col(j).head(rank);
        rfull(rank, rank) = alpha;
        qr.reflectors.push_back(std::move(v));
        qr.kept.push_back(order[j]);
        ++rank;
    }
    qr.r = rfull.topLeftCorner(rank, rank);
    return qr;
}

} // namespace detail

// Dense design matrix with the fixed nominal column order and the elimination
// order used to resolve exact collinearities. build_design fills retained/
// dropped and caches the factorization; treat the struct as immutable after.
struct DesignMatrix {
    std::vector<std::string> labels;    // nominal order
    Eigen::MatrixXd values;             // rows x nominal columns
    std::vector<int> elimination_order; // aliasing priority, low index wins
    int att_column = -1;                // nominal index of the a:p column
    std::vector<int> retained;          // nominal indices, ascending
    std::vector<std::string> dropped;   // labels, in order of discovery
    std::shared_ptr<const detail::PolicyQr> factor;

    int column_index(const std::string& label) const {
        for (std::size_t j = 0; j < labels.size(); ++j)
            if (labels[j] == label) return static_cast<int>(j);
        return -1;
    }
};

// Runs the policy QR over a fully specified matrix and records the aliasing
// outcome. Shared by build_design and ols_fit on hand-built matrices.
inline void resolve_design(DesignMatrix& design, double tol_rel = 1e-10) {
    if (design.elimination_order.empty()) {
        design.elimination_order.resize(design.labels.size());
        for (std::size_t j = 0; j < design.labels.size(); ++j)
            design.elimination_order[j] = static_cast<int>(j);
    }
    auto qr = std::make_shared<detail::PolicyQr>(
        detail::policy_qr(design.values, design.elimination_order, tol_rel));
    design.retained.assign(qr->kept.begin(), qr->kept.end());
    std::sort(design.retained.begin(), design.retained.end());
    design.dropped.clear();
    for (int j : qr->dropped) design.dropped.push_back(design.labels[j]);
    design.factor = std::move(qr);
}

// Builds the Table-2 design for a panel. Nominal column order is
// (intercept, a, p, a:p, t2..tT, x, x:t2..x:tT as applicable). The aliasing
// priority protects a:p and sacrifices p first (with a full set of time
// dummies, p is their linear combination and is always the column dropped).
inline DesignMatrix build_design(const PanelDataset& data, const ModelSpec& model) {
    const int T = data.n_times();
    if (T < 2) throw std::invalid_argument("need at least 2 time levels");
    const auto& rows = data.rows();
    const long n = static_cast<long>(rows.size());

    const bool with_x = model.model != RegressionModel::Simple;
    const bool with_xt = model.model == RegressionModel::TimeVaryingAdjusted;

    DesignMatrix d;
    d.labels = {"(Intercept)", "a", "p", "a:p"};
    for (int t = 2; t <= T; ++t) d.labels.push_back("t" + std::to_string(t));
    if (with_x) d.labels.push_back("x");
    if (with_xt)
        for (int t = 2; t <= T; ++t) d.labels.push_back("x:t" + std::to_string(t));
    d.att_column = 3;

    const int m = static_cast<int>(d.labels.size());
    // p is always a linear combination of the full time-dummy set, so the
    // structural column count is m - 1; fewer rows than that cannot be fit.
    if (n < m - 1) throw std::runtime_error("underdetermined: fewer rows than retained columns");
    d.values.resize(n, m);
    d.values.setZero();
    for (long i = 0; i < n; ++i) {
        const PanelRow& r = rows[i];
        d.values(i, 0) = 1.0;
        d.values(i, 1) = r.group;
        d.values(i, 2) = r.post;
        d.values(i, 3) = r.group * r.post;
        if (r.time >= 2) d.values(i, 4 + (r.time - 2)) = 1.0;
        if (with_x) d.values(i, 3 + T) = r.covariate;
        if (with_xt && r.time >= 2) d.values(i, 4 + T + (r.time - 2)) = r.covariate;
    }

    // Elimination priority: intercept, a, a:p, time dummies, covariate terms,
    // and p last so it is the designated alias victim.
    d.elimination_order = {0, 1, 3};
    for (int j = 4; j < m; ++j) d.elimination_order.push_back(j);
    d.elimination_order.push_back(2);

    resolve_design(d);
    return d;
}

// Least-squares fit over the retained columns plus the bookkeeping needed for
// ATT extraction and cluster-robust inference.
struct FitResult {
    std::string method_label;
    std::vector<std::string> labels; // retained, nominal order
    std::vector<int> retained;       // retained nominal indices, ascending
    Eigen::VectorXd coef;            // aligned with labels
    Eigen::VectorXd residuals;
    long df_residual = 0;
    std::vector<std::string> dropped;
    int att_index = -1; // position of a:p within labels, -1 if absent
    double att_hat = std::numeric_limits<double>::quiet_NaN();
    double se_att = std::numeric_limits<double>::quiet_NaN();
    Eigen::MatrixXd vcov;    // retained x retained, filled by cluster_robust_vcov
    Eigen::MatrixXd xtx_inv; // (X'X)^-1 over retained columns
    long n = 0;
    int k = 0;
    int g = 0; // clusters, filled by cluster_robust_vcov

    double coefficient(const std::string& label) const {
        for (std::size_t j = 0; j < labels.size(); ++j)
            if (labels[j] == label) return coef(static_cast<long>(j));
        throw std::invalid_argument("no retained coefficient '" + label + "'");
    }
};

inline FitResult ols_fit(const DesignMatrix& design_in, const Eigen::VectorXd& y) {
    if (design_in.values.rows() != y.size())
        throw std::invalid_argument("design and outcome row counts differ");
    DesignMatrix local;
    const DesignMatrix* design = &design_in;
    if (!design_in.factor) {
        local = design_in;
        resolve_design(local);
        design = &local;
    }
    const detail::PolicyQr& qr = *design->factor;
    const long rank = static_cast<long>(qr.kept.size());
    if (rank == 0) throw std::runtime_error("no retained columns to fit");

    Eigen::VectorXd qty = y;
    qr.apply_qt(qty);
    const Eigen::VectorXd beta_elim =
        qr.r.triangularView<Eigen::Upper>().solve(qty.head(rank));

    FitResult fit;
    fit.method_label = "ols";
    fit.retained = design->retained;
    fit.dropped = design->dropped;
    fit.n = design->values.rows();
    fit.k = static_cast<int>(rank);
    fit.df_residual = fit.n - rank;

    // Map elimination-order coefficients back to ascending nominal order.
    std::vector<int> nominal_pos(design->labels.size(), -1);
    for (std::size_t j = 0; j < design->retained.size(); ++j)
        nominal_pos[design->retained[j]] = static_cast<int>(j);
    fit.coef.resize(rank);
    Eigen::MatrixXd perm(rank, rank);
    perm.setZero();
    for (long s = 0; s < rank; ++s) {
        const int pos = nominal_pos[qr.kept[s]];
        fit.coef(pos) = beta_elim(s);
        perm(s, pos) = 1.0;
    }
    for (int j : design->retained) fit.labels.push_back(design->labels[j]);

    // (X'X)^-1 = P' R^-1 R^-T P, reordered to nominal positions.
    Eigen::MatrixXd rinv = Eigen::MatrixXd::Identity(rank, rank);
    qr.r.triangularView<Eigen::Upper>().solveInPlace(rinv);
    fit.xtx_inv = perm.transpose() * (rinv * rinv.transpose()) * perm;

    Eigen::VectorXd fitted = Eigen::VectorXd::Zero(fit.n);
    for (std::size_t j = 0; j < design->retained.size(); ++j)
        fitted += design->values.col(design->retained[j]) * fit.coef(static_cast<long>(j));
    fit.residuals = y - fitted;

    if (design->att_column >= 0 && nominal_pos[design->att_column] >= 0) {
        fit.att_index = nominal_pos[design->att_column];
        fit.att_hat = fit.coef(fit.att_index);
    }
    return fit;
}

enum class CrScaling { CR0, CR1 };

// Cluster-robust sandwich (X'X)^-1 [sum_g X_g' e_g e_g' X_g] (X'X)^-1, scaled
// by (G/(G-1)) * ((N-1)/(N-K)) under CR1 (CR0 leaves the scale at 1). Fills
// fit.vcov, fit.se_att, and fit.g; also returns the covariance.
inline Eigen::MatrixXd cluster_robust_vcov(FitResult& fit, const DesignMatrix& design,
                                           std::span<const int> cluster_ids,
                                           CrScaling scaling = CrScaling::CR1) {
    const long n = fit.n;
    const int k = fit.k;
    if (static_cast<long>(cluster_ids.size()) != n)
        throw std::invalid_argument("cluster ids must cover every row");
    if (k >= n) throw std::invalid_argument("more coefficients than rows");

    // Per-cluster score sums X_g' e_g, accumulated in cluster-id order so the
    // meat-matrix sum is deterministic regardless of row ordering.
    std::map<int, Eigen::VectorXd> scores;
    for (long i = 0; i < n; ++i) {
        auto it = scores.try_emplace(cluster_ids[i], Eigen::VectorXd::Zero(k)).first;
        for (int j = 0; j < k; ++j)
            it->second(j) += design.values(i, fit.retained[j]) * fit.residuals(i);
    }
    const int g = static_cast<int>(scores.size());
    if (g < 2) throw std::invalid_argument("cluster-robust variance needs >= 2 clusters");

    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
    for (const auto& [id, s] : scores) meat.noalias() += s * s.transpose();

    double c = 1.0;
    if (scaling == CrScaling::CR1)
        c = (static_cast<double>(g) / (g - 1)) *
            (static_cast<double>(n - 1) / static_cast<double>(n - k));

    fit.vcov = c * fit.xtx_inv * meat * fit.xtx_inv;
    fit.g = g;
    if (fit.att_index >= 0) fit.se_att = std::sqrt(fit.vcov(fit.att_index, fit.att_index));
    return fit.vcov;
}

// The diff-in-diff estimate: coefficient on a:p and its cluster-robust SE.
inline std::pair<double, double> extract_att(const FitResult& fit) {
    if (fit.att_index < 0)
        throw std::runtime_error("a:p was aliased away; no ATT coefficient to extract");
    return {fit.att_hat, fit.se_att};
}

inline nlohmann::json fit_to_json(const FitResult& fit) {
    nlohmann::json coeffs = nlohmann::json::array();
    for (std::size_t j = 0; j < fit.labels.size(); ++j)
        coeffs.push_back({{"label", fit.labels[j]}, {"estimate", fit.coef(static_cast<long>(j))}});
    return nlohmann::json{{"method", fit.method_label},
                          {"coefficients", coeffs},
                          {"dropped", fit.dropped},
                          {"att", {{"estimate", fit.att_hat}, {"se", fit.se_att}}},
                          {"n", fit.n},
                          {"k", fit.k},
                          {"g", fit.g}};
}

} // namespace didlab
