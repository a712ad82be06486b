#include "oasis/baselines.hpp"

#include "oasis/error.hpp"
#include "oasis/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace oasis::baselines {

namespace {

Eigen::Index regressor_count(const GwrData& d) { return 3 + d.extra.cols(); }

void check(const GwrData& d, bool needs_y) {
    if (d.coords.cols() != 2) throw Error(ErrorCode::ShapeMismatch, "coords must be n x 2 (lat, lon)");
    if (d.extra.rows() != d.coords.rows() && d.extra.cols() > 0) {
        throw Error(ErrorCode::ShapeMismatch, "extra regressors must have one row per point");
    }
    if (needs_y && d.y.size() != d.coords.rows()) throw Error(ErrorCode::ShapeMismatch, "one value per point required");
}

/// Row i of (1, lat, lon, extra) minus the query's regressors (intercept kept).
Eigen::RowVectorXd centered_row(const GwrData& d, Eigen::Index i, const Eigen::RowVectorXd& origin) {
    Eigen::RowVectorXd r(regressor_count(d));
    r(0) = 1.0;
    r(1) = d.coords(i, 0) - origin(0);
    r(2) = d.coords(i, 1) - origin(1);
    for (Eigen::Index j = 0; j < d.extra.cols(); ++j) r(3 + j) = d.extra(i, j) - origin(2 + j);
    return r;
}

Eigen::RowVectorXd origin_of(const GwrData& d, Eigen::Index i) {
    Eigen::RowVectorXd o(2 + d.extra.cols());
    o(0) = d.coords(i, 0);
    o(1) = d.coords(i, 1);
    for (Eigen::Index j = 0; j < d.extra.cols(); ++j) o(2 + j) = d.extra(i, j);
    return o;
}

struct LocalFit {
    double value = 0.0;
    bool rank_deficient = false;
    bool no_mass = false;
};

/// Weighted fit centred on `origin`; the intercept is the prediction there.
LocalFit local_fit(const GwrData& train, const Eigen::RowVectorXd& origin, double bandwidth, Metric metric,
                   Eigen::Index skip = -1) {
    const Eigen::Index n = train.coords.rows();
    const Eigen::Index p = regressor_count(train);
    Eigen::MatrixXd Z(n, p);
    Eigen::VectorXd y(n);
    double mass = 0.0;
    const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double d = distance(metric, origin(0), origin(1), train.coords(i, 0), train.coords(i, 1));
        const double w = i == skip ? 0.0 : std::exp(-d * d * inv);
        const double sw = std::sqrt(w);
        mass += w;
        Z.row(i) = sw * centered_row(train, i, origin);
        y(i) = sw * train.y(i);
    }
    LocalFit f;
    if (!(mass > 0.0)) {
        f.no_mass = true;
        return f;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
    qr.setThreshold(1e-10);
    if (qr.rank() == p) {
        f.value = qr.solve(y)(0);
    } else {
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Z);
        cod.setThreshold(1e-10);
        f.value = cod.solve(y)(0);
        f.rank_deficient = true;
    }
    return f;
}

double predict_ols(const Eigen::VectorXd& beta, const GwrData& d, Eigen::Index i) {
    double v = beta(0) + beta(1) * d.coords(i, 0) + beta(2) * d.coords(i, 1);
    for (Eigen::Index j = 0; j < d.extra.cols(); ++j) v += beta(3 + j) * d.extra(i, j);
    return v;
}

}  // namespace

Eigen::VectorXd ols_coefficients(const GwrData& data) {
    check(data, true);
    const Eigen::Index n = data.coords.rows();
    Eigen::MatrixXd X(n, regressor_count(data));
    for (Eigen::Index i = 0; i < n; ++i) X.row(i) = centered_row(data, i, Eigen::RowVectorXd::Zero(2 + data.extra.cols()));
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(X);
    return cod.solve(data.y);
}

double gwr_select_bandwidth(const GwrData& train, const GwrConfig& cfg, std::vector<std::pair<double, double>>* scores) {
    check(train, true);
    const Eigen::Index n = train.coords.rows();
    if (cfg.cv_grid < 2) throw Error(ErrorCode::InvalidConfig, "cv_grid must be >= 2");
    std::vector<Eigen::Index> sample(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) sample[static_cast<std::size_t>(i)] = i;
    Rng rng(cfg.seed);
    if (cfg.cv_max_points > 0 && n > cfg.cv_max_points) {
        rng.shuffle(sample.begin(), sample.end());
        sample.resize(static_cast<std::size_t>(cfg.cv_max_points));
    }
    // grid from the typical neighbour spacing to twice the data extent
    std::vector<double> nn;
    for (auto i : sample) {
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d = distance(cfg.metric, train.coords(i, 0), train.coords(i, 1), train.coords(j, 0), train.coords(j, 1));
            if (d > 0) best = std::min(best, d);
        }
        if (std::isfinite(best)) nn.push_back(best);
    }
    const Eigen::RowVector2d lo = train.coords.colwise().minCoeff(), hi = train.coords.colwise().maxCoeff();
    double extent = distance(cfg.metric, lo(0), lo(1), hi(0), hi(1));
    if (!(extent > 0)) extent = 1.0;
    double b_min = extent * 1e-3;
    if (!nn.empty()) {
        std::nth_element(nn.begin(), nn.begin() + static_cast<std::ptrdiff_t>(nn.size() / 2), nn.end());
        b_min = std::max(nn[nn.size() / 2], extent * 1e-6);
    }
    const double b_max = 2.0 * extent;
    double best_b = b_max, best_score = std::numeric_limits<double>::infinity();
    const auto beta = ols_coefficients(train);
    for (int g = 0; g < cfg.cv_grid; ++g) {
        const double b = b_min * std::pow(b_max / b_min, static_cast<double>(g) / (cfg.cv_grid - 1));
        double se = 0.0;
        for (auto i : sample) {
            auto f = local_fit(train, origin_of(train, i), b, cfg.metric, i);
            const double v = f.no_mass ? predict_ols(beta, train, i) : f.value;
            se += (v - train.y(i)) * (v - train.y(i));
        }
        const double score = se / static_cast<double>(sample.size());
        if (scores) scores->emplace_back(b, score);
        if (score < best_score) {
            best_score = score;
            best_b = b;
        }
    }
    return best_b;
}

GwrResult gwr_fit_predict(const GwrData& train, const GwrData& queries, const GwrConfig& cfg) {
    check(train, true);
    check(queries, false);
    if (queries.extra.cols() != train.extra.cols()) throw Error(ErrorCode::ShapeMismatch, "query regressors differ from training");
    const Eigen::Index p = regressor_count(train);
    if (train.coords.rows() < p + 1) {
        throw Error(ErrorCode::TooFewPoints, "GWR needs at least " + std::to_string(p + 1) + " points");
    }
    GwrResult r;
    if (cfg.bandwidth) {
        if (!(*cfg.bandwidth > 0)) throw Error(ErrorCode::InvalidConfig, "bandwidth must be positive");
        r.bandwidth = *cfg.bandwidth;
    } else {
        r.bandwidth = gwr_select_bandwidth(train, cfg, &r.cv_scores);
    }
    const auto beta = ols_coefficients(train);
    const Eigen::Index q = queries.coords.rows();
    r.values.resize(q);
    r.rank_deficient.assign(static_cast<std::size_t>(q), false);
    r.ols_fallback.assign(static_cast<std::size_t>(q), false);
    for (Eigen::Index i = 0; i < q; ++i) {
        auto f = local_fit(train, origin_of(queries, i), r.bandwidth, cfg.metric);
        if (f.no_mass) {
            r.values(i) = predict_ols(beta, queries, i);
            r.ols_fallback[static_cast<std::size_t>(i)] = true;
            r.rank_deficient[static_cast<std::size_t>(i)] = true;
        } else {
            r.values(i) = f.value;
            r.rank_deficient[static_cast<std::size_t>(i)] = f.rank_deficient;
        }
    }
    return r;
}

}  // namespace oasis::baselines
