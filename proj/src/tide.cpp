#include "oasis/tide.hpp"

#include "oasis/csv.hpp"
#include "oasis/error.hpp"

#include "json.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace oasis::tide {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_phase(double phi) {
    double w = std::fmod(phi + std::numbers::pi, kTwoPi);
    if (w < 0) w += kTwoPi;
    return w - std::numbers::pi;
}

Timestamp next_month(Timestamp t) {
    using namespace std::chrono;
    year_month_day ymd{floor<days>(t)};
    auto ym = year_month{ymd.year(), ymd.month()} + months{1};
    return sys_seconds{sys_days{ym / 1}};
}

Timestamp prev_month(Timestamp t) {
    using namespace std::chrono;
    year_month_day ymd{floor<days>(t)};
    auto ym = year_month{ymd.year(), ymd.month()} - months{1};
    return sys_seconds{sys_days{ym / 1}};
}

Timestamp window_begin(Timestamp t, FitMode mode) { return mode == FitMode::Daily ? floor_to_day(t) : floor_to_month(t); }

Timestamp window_after(Timestamp start, FitMode mode) {
    return mode == FitMode::Daily ? start + std::chrono::days{1} : next_month(start);
}

Timestamp window_before(Timestamp start, FitMode mode) {
    return mode == FitMode::Daily ? start - std::chrono::days{1} : prev_month(start);
}

struct LinearFit {
    double a = 0, b = 0, c = 0;  // a cos + b sin + c
    double rss = 0;
};

LinearFit solve_fixed(std::span<const TideEvent> events, Timestamp origin, double omega) {
    const auto n = static_cast<Eigen::Index>(events.size());
    Eigen::MatrixXd A(n, 3);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double dt = hours_between(origin, events[static_cast<std::size_t>(i)].timestamp);
        A(i, 0) = std::cos(omega * dt);
        A(i, 1) = std::sin(omega * dt);
        A(i, 2) = 1.0;
        y(i) = events[static_cast<std::size_t>(i)].height;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    qr.setThreshold(1e-10);
    if (qr.rank() < 3) throw Error(ErrorCode::DegenerateFit, "rank-deficient design: event times do not separate the sinusoid");
    Eigen::Vector3d x = qr.solve(y);
    LinearFit f{x(0), x(1), x(2), (A * x - y).squaredNorm()};
    return f;
}

}  // namespace

FitMode parse_fit_mode(const std::string& s) {
    if (s == "daily") return FitMode::Daily;
    if (s == "monthly") return FitMode::Monthly;
    throw Error(ErrorCode::InvalidConfig, "fit mode must be daily or monthly, got '" + s + "'");
}

OmegaMode parse_omega_mode(const std::string& s) {
    if (s == "fixed") return OmegaMode::Fixed;
    if (s == "free") return OmegaMode::Free;
    throw Error(ErrorCode::InvalidConfig, "omega mode must be fixed or free, got '" + s + "'");
}

std::string to_string(FitMode m) { return m == FitMode::Daily ? "daily" : "monthly"; }
std::string to_string(OmegaMode m) { return m == OmegaMode::Fixed ? "fixed" : "free"; }

double TideModel::period_hours() const { return omega > 0 ? kTwoPi / omega : 0.0; }

TidePrediction predict_tide(const TideModel& model, Timestamp t) {
    if (!model.fitted) throw Error(ErrorCode::UnfittedModel, "tide model has not been fitted");
    const double dt = hours_between(model.fit_start, t);
    return {model.A * std::sin(model.omega * dt + model.phi) + model.c, t < model.fit_start || t >= model.fit_end};
}

TideModel fit_sinusoid(std::span<const TideEvent> events, Timestamp window_start, Timestamp window_end,
                       const FitOptions& options) {
    const bool free = options.omega_mode == OmegaMode::Free;
    const std::size_t needed = free ? 4 : 3;
    if (events.size() < needed) {
        throw Error(ErrorCode::TooFewEvents, "need at least " + std::to_string(needed) + " events, got " +
                                                 std::to_string(events.size()));
    }
    for (const auto& e : events) {
        if (!std::isfinite(e.height)) throw Error(ErrorCode::ParseError, "tide height is not finite");
    }

    double omega = 0.0;
    LinearFit best;
    if (!free) {
        if (!(options.period_hours > 0)) throw Error(ErrorCode::InvalidConfig, "period must be positive");
        omega = kTwoPi / options.period_hours;
        best = solve_fixed(events, window_start, omega);
    } else {
        if (!(options.min_period_hours > 0) || options.max_period_hours <= options.min_period_hours) {
            throw Error(ErrorCode::InvalidConfig, "invalid period search range");
        }
        // coarse grid in frequency, then golden-section refinement
        const double w_lo = kTwoPi / options.max_period_hours;
        const double w_hi = kTwoPi / options.min_period_hours;
        constexpr int kGrid = 2000;
        best.rss = std::numeric_limits<double>::infinity();
        int best_i = -1;
        auto rss_at = [&](double w) {
            try {
                return solve_fixed(events, window_start, w).rss;
            } catch (const Error&) {
                return std::numeric_limits<double>::infinity();
            }
        };
        for (int i = 0; i <= kGrid; ++i) {
            const double w = w_lo + (w_hi - w_lo) * i / kGrid;
            const double r = rss_at(w);
            if (r < best.rss) {
                best.rss = r;
                best_i = i;
            }
        }
        if (best_i < 0) throw Error(ErrorCode::DegenerateFit, "no frequency in range gives a full-rank fit");
        const double step = (w_hi - w_lo) / kGrid;
        double lo = std::max(w_lo, w_lo + step * (best_i - 1));
        double hi = std::min(w_hi, w_lo + step * (best_i + 1));
        const double g = (std::sqrt(5.0) - 1.0) / 2.0;
        double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
        double f1 = rss_at(x1), f2 = rss_at(x2);
        for (int it = 0; it < 80; ++it) {
            if (f1 < f2) {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = rss_at(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = rss_at(x2);
            }
        }
        const double grid_w = w_lo + step * best_i;
        omega = 0.5 * (lo + hi);
        if (rss_at(omega) > best.rss) omega = grid_w;
        best = solve_fixed(events, window_start, omega);
    }

    TideModel m;
    m.A = std::hypot(best.a, best.b);
    m.phi = m.A > 0 ? wrap_phase(std::atan2(best.a, best.b)) : 0.0;
    m.c = best.c;
    m.omega = omega;
    m.fit_start = window_start;
    m.fit_end = window_end;
    m.rmse_fit = std::sqrt(best.rss / static_cast<double>(events.size()));
    m.events_used = static_cast<int>(events.size());
    m.fitted = true;
    return m;
}

TideModel fit_sinusoid(std::span<const TideEvent> events, FitMode mode, const FitOptions& options) {
    if (events.empty()) throw Error(ErrorCode::TooFewEvents, "no tide events");
    const Timestamp first = std::min_element(events.begin(), events.end(), [](const auto& a, const auto& b) {
                                return a.timestamp < b.timestamp;
                            })->timestamp;
    const Timestamp start = window_begin(first, mode);
    return fit_sinusoid(events, start, window_after(start, mode), options);
}

double residual_sum_squares(std::span<const TideEvent> events, const TideModel& model) {
    double rss = 0.0;
    for (const auto& e : events) {
        const double dt = hours_between(model.fit_start, e.timestamp);
        const double r = model.A * std::sin(model.omega * dt + model.phi) + model.c - e.height;
        rss += r * r;
    }
    return rss;
}

TidePrediction TideSeries::predict(Timestamp t) const {
    if (models.empty()) throw Error(ErrorCode::UnfittedModel, "tide series has no fitted windows");
    auto it = std::upper_bound(models.begin(), models.end(), t,
                               [](Timestamp v, const TideModel& m) { return v < m.fit_start; });
    if (it != models.begin()) {
        const auto& prev = *std::prev(it);
        if (t < prev.fit_end) return predict_tide(prev, t);
    }
    // nearest window by edge distance
    const TideModel* nearest = nullptr;
    double best = std::numeric_limits<double>::infinity();
    for (auto cand : {it == models.begin() ? models.end() : std::prev(it), it}) {
        if (cand == models.end()) continue;
        const double d = t < cand->fit_start ? hours_between(t, cand->fit_start) : hours_between(cand->fit_end, t);
        if (d < best) {
            best = d;
            nearest = &*cand;
        }
    }
    auto p = predict_tide(*nearest, t);
    p.extrapolated = true;
    return p;
}

TideSeries fit_series(std::span<const TideEvent> events, FitMode mode, const FitOptions& options) {
    if (events.empty()) throw Error(ErrorCode::TooFewEvents, "no tide events");
    std::vector<TideEvent> sorted(events.begin(), events.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    std::map<Timestamp, std::vector<TideEvent>> buckets;
    for (const auto& e : sorted) buckets[window_begin(e.timestamp, mode)].push_back(e);

    const std::size_t needed = options.omega_mode == OmegaMode::Free ? 4 : 3;
    TideSeries series;
    series.mode = mode;
    for (const auto& [start, own] : buckets) {
        const Timestamp end = window_after(start, mode);
        std::vector<TideEvent> use = own;
        if (use.size() < needed) {
            const Timestamp lo = window_before(start, mode);
            const Timestamp hi = window_after(end, mode);
            use.clear();
            for (const auto& e : sorted)
                if (e.timestamp >= lo && e.timestamp < hi) use.push_back(e);
        }
        try {
            series.models.push_back(fit_sinusoid(use, start, end, options));
        } catch (const Error& e) {
            throw Error(e.code(), "window starting " + format_iso8601(start) + ": " + e.detail());
        }
    }
    return series;
}

void annotate(TrajectorySet& set, const TideSeries& series, const std::string& channel) {
    for (auto& r : set.records) r.covariates[channel] = series.predict(r.timestamp).height;
}

// NOAA -----------------------------------------------------------------------

FixtureClient::FixtureClient(std::string dir) : dir_(std::move(dir)) {}

std::string FixtureClient::file_name(const std::string& station, const DateRange& range) {
    return station + "_" + format_yyyymmdd(range.begin) + "_" + format_yyyymmdd(range.end) + ".json";
}

std::string FixtureClient::fetch(const std::string& station, const DateRange& range) {
    const auto path = std::filesystem::path(dir_) / file_name(station, range);
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::NetworkError, "no recorded response for station " + station + " " +
                                                 format_yyyymmdd(range.begin) + "-" + format_yyyymmdd(range.end) +
                                                 " (" + path.string() + ")");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<TideEvent> parse_predictions(const std::string& body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("response is not JSON: ") + e.what());
    }
    if (j.is_object() && j.contains("error")) {
        std::string msg = j["error"].is_object() && j["error"].contains("message") ? j["error"]["message"].dump()
                                                                                    : j["error"].dump();
        throw Error(ErrorCode::EmptyResponse, "service returned an error: " + msg);
    }
    const nlohmann::json* list = &j;
    if (j.is_object()) {
        if (!j.contains("predictions")) throw Error(ErrorCode::ParseError, "response has no 'predictions' list");
        list = &j["predictions"];
    }
    if (!list->is_array()) throw Error(ErrorCode::ParseError, "'predictions' is not a list");
    if (list->empty()) throw Error(ErrorCode::EmptyResponse, "response holds no tide events");

    std::vector<TideEvent> events;
    for (std::size_t i = 0; i < list->size(); ++i) {
        const auto& row = (*list)[i];
        auto bad = [&](const std::string& why) {
            throw Error(ErrorCode::ParseError, "row " + std::to_string(i) + ": " + why);
        };
        if (!row.is_object() || !row.contains("t") || !row.contains("v")) bad("expected fields 't' and 'v'");
        if (!row["t"].is_string()) bad("'t' is not a string");
        TideEvent e;
        auto t = parse_iso8601(row["t"].get<std::string>());
        if (!t) bad("unparseable time '" + row["t"].get<std::string>() + "'");
        e.timestamp = *t;
        if (row["v"].is_number()) {
            e.height = row["v"].get<double>();
        } else if (row["v"].is_string()) {
            auto v = csv::parse_double(row["v"].get<std::string>());
            if (!v) bad("unparseable height '" + row["v"].get<std::string>() + "'");
            e.height = *v;
        } else {
            bad("'v' is neither number nor string");
        }
        if (!std::isfinite(e.height)) bad("height is not finite");
        events.push_back(e);
    }
    return events;
}

std::vector<TideEvent> fetch_noaa_predictions(NoaaClient& client, const std::string& station, const DateRange& range) {
    if (station.empty()) throw Error(ErrorCode::InvalidConfig, "station id is empty");
    if (range.end < range.begin) throw Error(ErrorCode::InvalidRange, "date range ends before it begins");
    const std::string body = client.fetch(station, range);
    try {
        return parse_predictions(body);
    } catch (const Error& e) {
        throw Error(e.code(), "station " + station + " " + format_yyyymmdd(range.begin) + "-" +
                                  format_yyyymmdd(range.end) + ": " + e.detail());
    }
}

}  // namespace oasis::tide
