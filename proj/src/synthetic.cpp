#include "oasis/synthetic.hpp"

#include "oasis/error.hpp"
#include "oasis/random.hpp"

#include "json.hpp"

#include <cmath>
#include <numbers>

namespace oasis {

void SyntheticConfig::validate() const {
    auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidConfig, why); };
    if (!(lat_min < lat_max) || !(lon_min < lon_max)) fail("region bounds must satisfy min < max");
    if (lat_min < -90 || lat_max > 90 || lon_min < -180 || lon_max > 180) fail("region outside valid coordinates");
    if (trajectories < 1) fail("trajectories must be >= 1");
    if (steps < 1) fail("steps must be >= 1");
    if (step_seconds <= 0) fail("step_seconds must be > 0");
    if (noise_sigma < 0 || !std::isfinite(noise_sigma)) fail("noise_sigma must be finite and >= 0");
    if (start_spread_hours < 0) fail("start_spread_hours must be >= 0");
    if (tide_period_hours <= 0) fail("tide_period_hours must be > 0");
    if (walk_sigma < 0) fail("walk_sigma must be >= 0");
    // salinity must stay nonnegative everywhere in the region
    if (c0 - std::abs(gradient) * (lon_max - lon_min) - std::abs(amplitude) - 6.0 * noise_sigma < 0) {
        fail("field parameters allow negative salinity");
    }
}

double SalinityField::omega() const { return 2.0 * std::numbers::pi / config.tide_period_hours; }

double SalinityField::operator()(Timestamp t, double /*lat*/, double lon) const {
    const double h = hours_between(config.start, t);
    return config.c0 + config.gradient * (lon - config.lon_min) + config.amplitude * std::sin(omega() * h);
}

double SalinityField::tide(Timestamp t) const {
    const double h = hours_between(config.start, t);
    return config.tide_amplitude * std::sin(omega() * h) + config.tide_offset;
}

tide::TideSeries synthetic_tide_series(const SyntheticConfig& config) {
    tide::TideModel m;
    m.A = config.tide_amplitude;
    m.omega = SalinityField{config}.omega();
    m.phi = 0.0;
    m.c = config.tide_offset;
    m.fit_start = config.start;
    const auto span = static_cast<std::int64_t>(config.start_spread_hours * 3600.0) +
                      static_cast<std::int64_t>(config.steps) * config.step_seconds;
    m.fit_end = config.start + std::chrono::seconds{span};
    m.fitted = true;
    tide::TideSeries s;
    s.mode = tide::FitMode::Monthly;
    s.models.push_back(m);
    return s;
}

SyntheticDataset generate_synthetic(const SyntheticConfig& config) {
    config.validate();
    SyntheticDataset out{{}, SalinityField{config}};
    Rng rng(config.seed);
    const double margin_lat = 0.1 * (config.lat_max - config.lat_min);
    const double margin_lon = 0.1 * (config.lon_max - config.lon_min);
    auto reflect = [](double x, double lo, double hi) {
        // clamp strictly inside [lo, hi)
        const double span = hi - lo;
        while (x < lo || x >= hi) {
            if (x < lo) x = lo + (lo - x);
            if (x >= hi) x = hi - (x - hi) - 1e-12 * span;
        }
        return x;
    };
    out.set.records.reserve(static_cast<std::size_t>(config.trajectories) * config.steps);
    for (int k = 0; k < config.trajectories; ++k) {
        const std::string id = "syn" + std::to_string(k);
        out.set.trajectory_ids.push_back(id);
        double lat = rng.uniform(config.lat_min + margin_lat, config.lat_max - margin_lat);
        double lon = rng.uniform(config.lon_min + margin_lon, config.lon_max - margin_lon);
        const auto offset = static_cast<std::int64_t>(rng.uniform() * config.start_spread_hours * 3600.0);
        Timestamp t = config.start + std::chrono::seconds{offset};
        for (int s = 0; s < config.steps; ++s) {
            DrifterRecord r;
            r.trajectory_id = id;
            r.timestamp = t;
            r.lat = lat;
            r.lon = lon;
            const double noise = config.noise_sigma > 0 ? rng.normal(0.0, config.noise_sigma) : 0.0;
            r.salinity = out.truth(t, lat, lon) + noise;
            if (config.with_tide) r.covariates["tide"] = out.truth.tide(t);
            out.set.records.push_back(std::move(r));
            lat = reflect(lat + rng.normal(0.0, config.walk_sigma), config.lat_min, config.lat_max);
            lon = reflect(lon + rng.normal(0.0, config.walk_sigma), config.lon_min, config.lon_max);
            t += std::chrono::seconds{config.step_seconds};
        }
    }
    return out;
}

SyntheticConfig synthetic_config_from_json(const std::string& text) {
    SyntheticConfig c;
    try {
        auto j = nlohmann::json::parse(text);
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("seed", c.seed);
        get("lat_min", c.lat_min);
        get("lat_max", c.lat_max);
        get("lon_min", c.lon_min);
        get("lon_max", c.lon_max);
        get("trajectories", c.trajectories);
        get("steps", c.steps);
        get("step_seconds", c.step_seconds);
        get("start_spread_hours", c.start_spread_hours);
        get("noise_sigma", c.noise_sigma);
        get("c0", c.c0);
        get("gradient", c.gradient);
        get("amplitude", c.amplitude);
        get("tide_period_hours", c.tide_period_hours);
        get("with_tide", c.with_tide);
        get("tide_amplitude", c.tide_amplitude);
        get("tide_offset", c.tide_offset);
        get("walk_sigma", c.walk_sigma);
        if (j.contains("start")) {
            auto t = parse_iso8601(j.at("start").get<std::string>());
            if (!t) throw Error(ErrorCode::InvalidConfig, "bad start timestamp");
            c.start = *t;
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("synthetic config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string synthetic_config_to_json(const SyntheticConfig& c) {
    nlohmann::json j = {{"seed", c.seed},
                        {"lat_min", c.lat_min},
                        {"lat_max", c.lat_max},
                        {"lon_min", c.lon_min},
                        {"lon_max", c.lon_max},
                        {"trajectories", c.trajectories},
                        {"steps", c.steps},
                        {"step_seconds", c.step_seconds},
                        {"start_spread_hours", c.start_spread_hours},
                        {"start", format_iso8601(c.start)},
                        {"noise_sigma", c.noise_sigma},
                        {"c0", c.c0},
                        {"gradient", c.gradient},
                        {"amplitude", c.amplitude},
                        {"tide_period_hours", c.tide_period_hours},
                        {"with_tide", c.with_tide},
                        {"tide_amplitude", c.tide_amplitude},
                        {"tide_offset", c.tide_offset},
                        {"walk_sigma", c.walk_sigma}};
    return j.dump(2);
}

}  // namespace oasis
