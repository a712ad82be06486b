#pragma once

#include "oasis/tensorize.hpp"
#include "oasis/tide.hpp"

#include <cstdint>
#include <string>

namespace oasis {

/// Desk-scale stand-in for the drifter datasets: seeded random-walk
/// trajectories sampling a closed-form salinity field
///   S*(t, lat, lon) = c0 + g (lon - lon_min) + a sin(omega t)
/// with t in hours since `start`.
struct SyntheticConfig {
    std::uint64_t seed = 7;
    double lat_min = 27.0;
    double lat_max = 28.0;
    double lon_min = -80.5;
    double lon_max = -79.5;
    int trajectories = 20;
    int steps = 250;
    std::int64_t step_seconds = 600;
    /// Each trajectory starts at a uniformly drawn offset in [0, spread).
    double start_spread_hours = 48.0;
    Timestamp start = from_epoch_seconds(1465430400);  // 2016-06-09T00:00:00Z
    double noise_sigma = 0.1;
    double c0 = 35.0;
    double gradient = 2.0;   // psu per degree longitude
    double amplitude = 1.5;  // psu of tidal salinity swing
    double tide_period_hours = 12.4206;
    /// Tide covariate written to every record: tide_amplitude sin(omega t) + tide_offset.
    bool with_tide = true;
    double tide_amplitude = 0.8;
    double tide_offset = 0.5;
    /// Standard deviation of each random-walk step, degrees.
    double walk_sigma = 0.01;

    /// Throws InvalidConfig on inconsistent values.
    void validate() const;
};

struct SalinityField {
    SyntheticConfig config;

    double operator()(Timestamp t, double lat, double lon) const;
    double tide(Timestamp t) const;
    double omega() const;  // rad / hour
};

struct SyntheticDataset {
    TrajectorySet set;
    SalinityField truth;
};

SyntheticDataset generate_synthetic(const SyntheticConfig& config);

/// The tide covariate as a one-window series covering the generated span.
tide::TideSeries synthetic_tide_series(const SyntheticConfig& config);

SyntheticConfig synthetic_config_from_json(const std::string& text);
std::string synthetic_config_to_json(const SyntheticConfig& config);

}  // namespace oasis
