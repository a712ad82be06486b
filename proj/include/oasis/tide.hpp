#pragma once

// Tide covariate: NOAA CO-OPS predictions, sinusoid fits per day or month,
// and evaluation of the fitted curve at arbitrary times.

#include "oasis/tensorize.hpp"
#include "oasis/timeutil.hpp"

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace oasis::tide {

struct TideEvent {
    Timestamp timestamp;
    double height = 0.0;  // meters
};

inline constexpr double kSemidiurnalHours = 12.4206;

enum class FitMode { Daily, Monthly };
enum class OmegaMode { Fixed, Free };

FitMode parse_fit_mode(const std::string& s);
OmegaMode parse_omega_mode(const std::string& s);
std::string to_string(FitMode m);
std::string to_string(OmegaMode m);

/// h(t) = A sin(omega dt + phi) + c with dt in hours from fit_start.
struct TideModel {
    double A = 0.0;
    double omega = 0.0;  // rad / hour
    double phi = 0.0;    // [-pi, pi)
    double c = 0.0;
    Timestamp fit_start{};
    Timestamp fit_end{};  // exclusive
    double rmse_fit = 0.0;
    int events_used = 0;
    bool fitted = false;

    double period_hours() const;
};

struct TidePrediction {
    double height = 0.0;
    bool extrapolated = false;  // t outside [fit_start, fit_end)
};

/// Throws UnfittedModel.
TidePrediction predict_tide(const TideModel& model, Timestamp t);

struct FitOptions {
    OmegaMode omega_mode = OmegaMode::Fixed;
    double period_hours = kSemidiurnalHours;  // used when fixed
    double min_period_hours = 6.0;            // free search range
    double max_period_hours = 26.0;
};

/// Least-squares sinusoid over all `events`, with dt measured from
/// `window_start`. Throws TooFewEvents (< 3 fixed, < 4 free) and DegenerateFit.
TideModel fit_sinusoid(std::span<const TideEvent> events, Timestamp window_start, Timestamp window_end,
                       const FitOptions& options = {});

/// Fit whose window is the calendar day (or month) of the first event.
TideModel fit_sinusoid(std::span<const TideEvent> events, FitMode mode, const FitOptions& options = {});

/// Fit residual sum of squares of a given parameter set.
double residual_sum_squares(std::span<const TideEvent> events, const TideModel& model);

/// Piecewise model: one fit per calendar day or month.
struct TideSeries {
    FitMode mode = FitMode::Daily;
    std::vector<TideModel> models;  // sorted, disjoint windows

    /// Model whose window holds `t`, or the nearest one (flagged extrapolated).
    TidePrediction predict(Timestamp t) const;
};

/// Windows with too few events borrow events from one neighbouring window
/// on each side (one day, or one month).
TideSeries fit_series(std::span<const TideEvent> events, FitMode mode, const FitOptions& options = {});

/// Writes the series prediction into every record's `channel` covariate.
void annotate(TrajectorySet& set, const TideSeries& series, const std::string& channel = "tide");

// NOAA CO-OPS ------------------------------------------------------------

struct DateRange {
    Timestamp begin;  // calendar dates, inclusive
    Timestamp end;
};

/// Raw response bodies for a station and date range.
class NoaaClient {
public:
    virtual ~NoaaClient() = default;
    /// Throws NetworkError.
    virtual std::string fetch(const std::string& station, const DateRange& range) = 0;
};

/// Recorded responses stored as `<dir>/<station>_<yyyymmdd>_<yyyymmdd>.json`.
class FixtureClient : public NoaaClient {
public:
    explicit FixtureClient(std::string dir);
    std::string fetch(const std::string& station, const DateRange& range) override;
    static std::string file_name(const std::string& station, const DateRange& range);

private:
    std::string dir_;
};

struct HttpClientConfig {
    std::string host = "api.tidesandcurrents.noaa.gov";
    std::string path = "/api/prod/datagetter";
    int port = 443;
    bool tls = true;
    int retries = 2;
    int timeout_seconds = 20;
    std::string datum = "MLLW";
};

class HttpNoaaClient : public NoaaClient {
public:
    explicit HttpNoaaClient(HttpClientConfig config = {});
    std::string fetch(const std::string& station, const DateRange& range) override;
    /// Query string for the hi/lo predictions product.
    std::string query(const std::string& station, const DateRange& range) const;

private:
    HttpClientConfig config_;
};

/// Parses a predictions body. Throws EmptyResponse and ParseError (naming the row).
std::vector<TideEvent> parse_predictions(const std::string& body);

std::vector<TideEvent> fetch_noaa_predictions(NoaaClient& client, const std::string& station, const DateRange& range);

}  // namespace oasis::tide
