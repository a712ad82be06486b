#include "oasis/baselines.hpp"

#include "oasis/error.hpp"
#include "oasis/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace oasis::baselines {

double distance(Metric metric, double lat1, double lon1, double lat2, double lon2) {
    if (metric == Metric::Degrees) return std::hypot(lat1 - lat2, lon1 - lon2);
    constexpr double kEarthKm = 6371.0088;
    constexpr double rad = std::numbers::pi / 180.0;
    const double dlat = (lat2 - lat1) * rad, dlon = (lon2 - lon1) * rad;
    const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                     std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
    return 2.0 * kEarthKm * std::asin(std::min(1.0, std::sqrt(a)));
}

VariogramModel parse_variogram_model(const std::string& s) {
    if (s == "exponential") return VariogramModel::Exponential;
    if (s == "spherical") return VariogramModel::Spherical;
    if (s == "gaussian") return VariogramModel::Gaussian;
    throw Error(ErrorCode::InvalidConfig, "unknown variogram model '" + s + "'");
}

std::string to_string(VariogramModel m) {
    switch (m) {
        case VariogramModel::Exponential: return "exponential";
        case VariogramModel::Spherical: return "spherical";
        case VariogramModel::Gaussian: return "gaussian";
    }
    return "?";
}

namespace {

double shape(VariogramModel m, double a) {
    switch (m) {
        case VariogramModel::Exponential: return 1.0 - std::exp(-a);
        case VariogramModel::Spherical: return a >= 1.0 ? 1.0 : 1.5 * a - 0.5 * a * a * a;
        case VariogramModel::Gaussian: return 1.0 - std::exp(-a * a);
    }
    return 1.0;
}

}  // namespace

double Variogram::operator()(double h) const {
    if (h <= 0.0) return 0.0;
    return nugget + (sill - nugget) * shape(model, h / range);
}

EmpiricalVariogram empirical_variogram(const std::vector<SpatialPoint>& points, int lags, Metric metric, int max_points,
                                       std::uint64_t seed) {
    if (lags < 1) throw Error(ErrorCode::InvalidConfig, "lags must be >= 1");
    std::vector<std::size_t> idx(points.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (max_points > 0 && idx.size() > static_cast<std::size_t>(max_points)) {
        Rng rng(seed);
        rng.shuffle(idx.begin(), idx.end());
        idx.resize(static_cast<std::size_t>(max_points));
    }
    double max_d = 0.0;
    for (std::size_t a = 0; a < idx.size(); ++a)
        for (std::size_t b = a + 1; b < idx.size(); ++b) {
            const auto& p = points[idx[a]];
            const auto& q = points[idx[b]];
            max_d = std::max(max_d, distance(metric, p.lat, p.lon, q.lat, q.lon));
        }
    EmpiricalVariogram emp;
    if (max_d <= 0.0) return emp;
    const double cutoff = 0.5 * max_d;
    const double width = cutoff / lags;
    std::vector<double> dsum(static_cast<std::size_t>(lags), 0.0), gsum(static_cast<std::size_t>(lags), 0.0);
    std::vector<long> count(static_cast<std::size_t>(lags), 0);
    for (std::size_t a = 0; a < idx.size(); ++a)
        for (std::size_t b = a + 1; b < idx.size(); ++b) {
            const auto& p = points[idx[a]];
            const auto& q = points[idx[b]];
            const double d = distance(metric, p.lat, p.lon, q.lat, q.lon);
            if (d <= 0.0 || d > cutoff) continue;
            const auto bin = std::min(static_cast<std::size_t>(d / width), static_cast<std::size_t>(lags - 1));
            dsum[bin] += d;
            gsum[bin] += 0.5 * (p.value - q.value) * (p.value - q.value);
            ++count[bin];
        }
    for (std::size_t k = 0; k < count.size(); ++k) {
        if (count[k] == 0) continue;
        emp.lag.push_back(dsum[k] / static_cast<double>(count[k]));
        emp.gamma.push_back(gsum[k] / static_cast<double>(count[k]));
        emp.pairs.push_back(count[k]);
    }
    return emp;
}

Variogram fit_variogram(const EmpiricalVariogram& emp, VariogramModel model, bool fit_nugget) {
    Variogram best;
    best.model = model;
    constexpr double kMinSill = 1e-12;
    if (emp.lag.empty()) {
        best.sill = kMinSill;
        return best;
    }
    const double max_lag = *std::max_element(emp.lag.begin(), emp.lag.end());
    double best_sse = std::numeric_limits<double>::infinity();
    constexpr int kGrid = 200;
    for (int i = 0; i < kGrid; ++i) {
        const double range = max_lag * std::pow(10.0, -2.0 + 3.0 * i / (kGrid - 1));  // [0.01, 10] x max lag
        // weighted normal equations for gamma ~ n + p f
        double sw = 0, sf = 0, sff = 0, sg = 0, sfg = 0;
        for (std::size_t k = 0; k < emp.lag.size(); ++k) {
            const double w = static_cast<double>(emp.pairs[k]);
            const double f = shape(model, emp.lag[k] / range);
            sw += w;
            sf += w * f;
            sff += w * f * f;
            sg += w * emp.gamma[k];
            sfg += w * f * emp.gamma[k];
        }
        double nugget = 0.0, partial = sff > 0 ? sfg / sff : 0.0;
        if (fit_nugget) {
            const double det = sw * sff - sf * sf;
            if (std::abs(det) > 1e-300) {
                const double n = (sff * sg - sf * sfg) / det;
                const double p = (sw * sfg - sf * sg) / det;
                if (n >= 0.0 && p >= 0.0) {
                    nugget = n;
                    partial = p;
                } else if (n < 0.0) {
                    partial = sff > 0 ? sfg / sff : 0.0;
                } else {
                    nugget = sg / sw;
                    partial = 0.0;
                }
            }
        }
        partial = std::max(partial, 0.0);
        double sse = 0.0;
        for (std::size_t k = 0; k < emp.lag.size(); ++k) {
            const double r = nugget + partial * shape(model, emp.lag[k] / range) - emp.gamma[k];
            sse += static_cast<double>(emp.pairs[k]) * r * r;
        }
        if (sse < best_sse) {
            best_sse = sse;
            best.nugget = nugget;
            best.sill = nugget + std::max(partial, kMinSill);
            best.range = range;
        }
    }
    return best;
}

KrigingModel KrigingModel::fit(std::vector<SpatialPoint> points, const KrigingConfig& cfg) {
    std::set<std::pair<double, double>> distinct;
    for (const auto& p : points) {
        if (!std::isfinite(p.lat) || !std::isfinite(p.lon) || !std::isfinite(p.value)) {
            throw Error(ErrorCode::NonFiniteInput, "kriging inputs must be finite");
        }
        distinct.insert({p.lat, p.lon});
    }
    if (distinct.size() < 3) {
        throw Error(ErrorCode::TooFewPoints, "kriging needs at least 3 distinct locations, got " +
                                                 std::to_string(distinct.size()));
    }
    if (cfg.neighbors < 3) throw Error(ErrorCode::InvalidConfig, "neighbors must be >= 3");
    KrigingModel m;
    m.cfg_ = cfg;
    m.points_ = std::move(points);
    if (cfg.variogram) {
        if (!(cfg.variogram->range > 0) || cfg.variogram->nugget < 0 || !(cfg.variogram->sill > cfg.variogram->nugget)) {
            throw Error(ErrorCode::InvalidConfig, "variogram needs range > 0 and sill > nugget >= 0");
        }
        m.variogram_ = *cfg.variogram;
    } else {
        auto emp = empirical_variogram(m.points_, cfg.lags, cfg.metric, cfg.max_variogram_points, cfg.seed);
        m.variogram_ = fit_variogram(emp, cfg.model, cfg.fit_nugget);
    }
    m.fitted_ = true;
    return m;
}

KrigingModel::Solve KrigingModel::solve(double lat, double lon) const {
    if (!fitted_) throw Error(ErrorCode::UnfittedModel, "kriging model has not been fitted");
    Solve s;
    const std::size_t n = points_.size();
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) dist[i] = distance(cfg_.metric, lat, lon, points_[i].lat, points_[i].lon);
    s.index.resize(n);
    for (std::size_t i = 0; i < n; ++i) s.index[i] = i;
    const auto k = std::min(n, static_cast<std::size_t>(cfg_.neighbors));
    if (k < n) {
        std::nth_element(s.index.begin(), s.index.begin() + static_cast<std::ptrdiff_t>(k), s.index.end(),
                         [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); });
        s.index.resize(k);
        std::sort(s.index.begin(), s.index.end());
    }
    const auto m = static_cast<Eigen::Index>(s.index.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m + 1, m + 1);
    Eigen::VectorXd rhs(m + 1);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto& p = points_[s.index[static_cast<std::size_t>(i)]];
        for (Eigen::Index j = i; j < m; ++j) {
            const auto& q = points_[s.index[static_cast<std::size_t>(j)]];
            const double c = variogram_.covariance(distance(cfg_.metric, p.lat, p.lon, q.lat, q.lon));
            A(i, j) = A(j, i) = c;
        }
        A(i, m) = A(m, i) = 1.0;
        rhs(i) = variogram_.covariance(dist[s.index[static_cast<std::size_t>(i)]]);
    }
    rhs(m) = 1.0;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (!lu.isInvertible()) {
        for (Eigen::Index i = 0; i < m; ++i) A(i, i) += 1e-10;
        lu.compute(A);
        if (!lu.isInvertible()) throw Error(ErrorCode::SingularSystem, "kriging system is singular after jitter");
    }
    Eigen::VectorXd x = lu.solve(rhs);
    if (!x.allFinite()) throw Error(ErrorCode::SingularSystem, "kriging system produced non-finite weights");
    s.lambda = x.head(m);
    s.mu = x(m);
    s.c0 = rhs.head(m);
    return s;
}

KrigingEstimate KrigingModel::predict(double lat, double lon) const {
    auto s = solve(lat, lon);
    KrigingEstimate e;
    for (Eigen::Index i = 0; i < s.lambda.size(); ++i) e.value += s.lambda(i) * points_[s.index[static_cast<std::size_t>(i)]].value;
    e.variance = std::max(0.0, variogram_.sill - s.lambda.dot(s.c0) - s.mu);
    return e;
}

std::vector<std::pair<std::size_t, double>> KrigingModel::weights(double lat, double lon) const {
    auto s = solve(lat, lon);
    std::vector<std::pair<std::size_t, double>> out;
    for (Eigen::Index i = 0; i < s.lambda.size(); ++i) out.emplace_back(s.index[static_cast<std::size_t>(i)], s.lambda(i));
    return out;
}

}  // namespace oasis::baselines
