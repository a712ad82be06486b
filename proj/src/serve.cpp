#include "oasis/serve.hpp"

#include "oasis/csv.hpp"
#include "oasis/error.hpp"
#include "oasis/hash.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace oasis::serve {

using nlohmann::json;

json to_json(const ImputeResponse& r) {
    json j{{"salinity", r.salinity}, {"tide_source", r.tide_source}, {"model_version", r.model_version}};
    j["tide_used"] = r.tide_used ? json(*r.tide_used) : json(nullptr);
    return j;
}

ImputeRequest request_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorCode::MalformedInput, "request must be a JSON object");
    ImputeRequest r;
    if (!j.contains("timestamp") || !j["timestamp"].is_string()) {
        throw Error(ErrorCode::MalformedInput, "field 'timestamp' must be an ISO-8601 string");
    }
    auto t = parse_iso8601(j["timestamp"].get<std::string>());
    if (!t) throw Error(ErrorCode::MalformedInput, "field 'timestamp' is not ISO-8601: " + j["timestamp"].get<std::string>());
    r.timestamp = *t;
    for (const char* key : {"lat", "lon"}) {
        if (!j.contains(key) || !j[key].is_number()) {
            throw Error(ErrorCode::MalformedInput, std::string("field '") + key + "' must be a number");
        }
    }
    r.lat = j["lat"].get<double>();
    r.lon = j["lon"].get<double>();
    for (const char* key : {"tide_override", "tide"}) {
        if (j.contains(key) && !j[key].is_null()) {
            if (!j[key].is_number()) throw Error(ErrorCode::MalformedInput, std::string("field '") + key + "' must be a number");
            r.tide_override = j[key].get<double>();
        }
    }
    return r;
}

std::shared_ptr<const ServingModel> ServingModel::from_checkpoint(checkpoint::Checkpoint ckpt, std::string path) {
    auto m = std::make_shared<ServingModel>();
    m->version = checkpoint::version_of(checkpoint::serialize(ckpt));
    m->ckpt = std::move(ckpt);
    m->path = std::move(path);
    return m;
}

std::shared_ptr<const ServingModel> ServingModel::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::CorruptCheckpoint, "cannot open checkpoint " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    auto m = std::make_shared<ServingModel>();
    m->ckpt = checkpoint::deserialize(text);
    m->version = checkpoint::version_of(text);
    m->path = path;
    return m;
}

NoaaTideSource::NoaaTideSource(std::shared_ptr<tide::NoaaClient> client, std::string station, tide::FitOptions options)
    : client_(std::move(client)), station_(std::move(station)), options_(options) {}

double NoaaTideSource::height(Timestamp t) {
    const Timestamp day = floor_to_day(t);
    std::lock_guard lock(mu_);
    auto it = by_day_.find(day);
    if (it == by_day_.end()) {
        try {
            const tide::DateRange range{day - std::chrono::days{1}, day + std::chrono::days{1}};
            auto events = tide::fetch_noaa_predictions(*client_, station_, range);
            auto series = tide::fit_series(events, tide::FitMode::Daily, options_);
            auto hit = std::find_if(series.models.begin(), series.models.end(),
                                    [&](const tide::TideModel& m) { return m.fit_start == day; });
            if (hit == series.models.end()) {
                throw Error(ErrorCode::TooFewEvents, "no tide events on " + format_yyyymmdd(day));
            }
            it = by_day_.emplace(day, *hit).first;
        } catch (const Error& e) {
            throw Error(ErrorCode::TideUnavailable, "station " + station_ + " on " + format_yyyymmdd(day) + ": " + e.detail());
        }
    }
    return tide::predict_tide(it->second, t).height;
}

ImputeResponse impute_point(const ImputeRequest& req, const ServingModel& model, NoaaTideSource* noaa) {
    if (!std::isfinite(req.lat) || !std::isfinite(req.lon)) throw Error(ErrorCode::MalformedInput, "coordinates must be finite");
    const auto& region = model.ckpt.region;
    if (!region.contains(req.lat, req.lon)) {
        std::ostringstream msg;
        msg << "(" << req.lat << ", " << req.lon << ") is outside lat [" << region.lat_min << ", " << region.lat_max
            << "], lon [" << region.lon_min << ", " << region.lon_max << "]";
        throw Error(ErrorCode::OutOfRegion, msg.str());
    }
    const auto& features = model.ckpt.model.features;
    ImputeResponse resp;
    resp.model_version = model.version;
    double tide = 0.0;
    if (!features.use_tide) {
        resp.tide_source = "unused";
    } else if (req.tide_override) {
        if (!std::isfinite(*req.tide_override)) throw Error(ErrorCode::MalformedInput, "tide_override must be finite");
        tide = *req.tide_override;
        resp.tide_source = "override";
    } else {
        bool resolved = false;
        std::string why = "no tide source configured";
        if (noaa) {
            try {
                tide = noaa->height(req.timestamp);
                resp.tide_source = "noaa";
                resolved = true;
            } catch (const Error& e) {
                why = e.detail();
            }
        }
        if (!resolved && model.ckpt.tide && !model.ckpt.tide->models.empty()) {
            tide = model.ckpt.tide->predict(req.timestamp).height;
            resp.tide_source = "model-extrapolated";
            resolved = true;
        }
        if (!resolved) throw Error(ErrorCode::TideUnavailable, why);
    }
    if (features.use_tide) resp.tide_used = tide;
    nn::Matrix X = encode_point(features, req.timestamp, req.lat, req.lon, tide);
    const double s = dan::predict_points(model.ckpt.model, X)(0);
    if (!std::isfinite(s)) throw Error(ErrorCode::NonFiniteInput, "model produced a non-finite salinity");
    resp.salinity = s;
    return resp;
}

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

int find_column(const std::vector<std::string>& header, std::initializer_list<const char*> names) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        const auto h = lower(csv::trim(header[i]));
        for (const char* n : names)
            if (h == n) return static_cast<int>(i);
    }
    return -1;
}

BatchRow row_error(std::size_t row, const Error& e) {
    BatchRow r;
    r.row = row;
    r.error_code = std::string(code_name(e.code()));
    r.error_message = e.detail();
    return r;
}

}  // namespace

BatchResult impute_batch(const std::vector<std::optional<ImputeRequest>>& rows,
                         const std::vector<std::pair<std::string, std::string>>& errors, const ServingModel& model,
                         NoaaTideSource* noaa) {
    BatchResult out;
    out.model_version = model.version;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i]) {
            BatchRow r;
            r.row = i + 1;
            r.error_code = i < errors.size() ? errors[i].first : "MalformedInput";
            r.error_message = i < errors.size() ? errors[i].second : "unparseable row";
            out.rows.push_back(r);
            continue;
        }
        try {
            BatchRow r;
            r.row = i + 1;
            r.response = impute_point(*rows[i], model, noaa);
            out.rows.push_back(std::move(r));
        } catch (const Error& e) {
            out.rows.push_back(row_error(i + 1, e));
        }
    }
    return out;
}

BatchResult impute_batch(const std::string& text, const ServingModel& model, NoaaTideSource* noaa) {
    const auto first_line = text.substr(0, text.find('\n'));
    const char delim = first_line.find('\t') != std::string::npos ? '\t' : (first_line.find(';') != std::string::npos && first_line.find(',') == std::string::npos ? ';' : ',');
    std::istringstream in(text);
    auto table = csv::read_table(in, delim);
    const int ct = find_column(table.header, {"timestamp", "time", "datetime"});
    const int clat = find_column(table.header, {"lat", "latitude"});
    const int clon = find_column(table.header, {"lon", "lng", "longitude"});
    const int ctide = find_column(table.header, {"tide", "tide_override"});
    if (ct < 0 || clat < 0 || clon < 0) {
        throw Error(ErrorCode::MalformedHeader, "header must name timestamp, lat and lon columns");
    }
    std::vector<std::optional<ImputeRequest>> rows;
    std::vector<std::pair<std::string, std::string>> errors;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& f = table.rows[i];
        auto field = [&](int c) -> std::string { return c >= 0 && static_cast<std::size_t>(c) < f.size() ? csv::trim(f[static_cast<std::size_t>(c)]) : ""; };
        std::string problem;
        ImputeRequest r;
        auto t = parse_iso8601(field(ct));
        auto lat = csv::parse_double(field(clat));
        auto lon = csv::parse_double(field(clon));
        if (!t) problem = "bad timestamp '" + field(ct) + "'";
        else if (!lat) problem = "bad lat '" + field(clat) + "'";
        else if (!lon) problem = "bad lon '" + field(clon) + "'";
        if (problem.empty()) {
            r.timestamp = *t;
            r.lat = *lat;
            r.lon = *lon;
            const auto tide = field(ctide);
            if (!tide.empty()) {
                auto v = csv::parse_double(tide);
                if (!v) problem = "bad tide '" + tide + "'";
                else r.tide_override = *v;
            }
        }
        if (problem.empty()) {
            rows.emplace_back(r);
            errors.emplace_back();
        } else {
            rows.emplace_back(std::nullopt);
            errors.emplace_back("MalformedInput", problem);
        }
    }
    return impute_batch(rows, errors, model, noaa);
}

json to_json(const BatchResult& r) {
    json rows = json::array();
    for (const auto& row : r.rows) {
        json j;
        if (row.response) {
            j = to_json(*row.response);
        } else {
            j["error"] = {{"code", row.error_code}, {"message", row.error_message}};
        }
        j["row"] = row.row;
        rows.push_back(j);
    }
    return {{"results", rows}, {"model_version", r.model_version}};
}

ModelRegistry::ModelRegistry(std::shared_ptr<const ServingModel> initial) : model_(std::move(initial)) {
    if (!model_) throw Error(ErrorCode::UnfittedModel, "registry needs an initial model");
}

std::shared_ptr<const ServingModel> ModelRegistry::current() const {
    std::lock_guard lock(mu_);
    return model_;
}

std::string ModelRegistry::swap(const std::string& path) {
    auto next = ServingModel::load(path);  // outside the lock: readers never wait on I/O
    std::lock_guard lock(mu_);
    model_ = std::move(next);
    return model_->version;
}

json model_info(const ServingModel& m) {
    const auto& c = m.ckpt;
    return {{"version", m.version},
            {"path", m.path},
            {"config_hash", checkpoint::config_hash(c.train)},
            {"region",
             {{"lat_min", c.region.lat_min},
              {"lat_max", c.region.lat_max},
              {"lon_min", c.region.lon_min},
              {"lon_max", c.region.lon_max}}},
            {"features", c.model.features.names()},
            {"use_tide", c.model.features.use_tide},
            {"flags", {{"use_norm", c.model.flags.use_norm}, {"use_gdc", c.model.flags.use_gdc}, {"use_sd", c.model.flags.use_sd}}},
            {"has_tide_series", c.tide.has_value()},
            {"metadata", c.metadata}};
}

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedInput:
        case ErrorCode::MalformedHeader:
        case ErrorCode::OutOfRegion:
        case ErrorCode::ParseError:
            return 400;
        case ErrorCode::UnknownModel:
            return 404;
        case ErrorCode::CorruptCheckpoint:
        case ErrorCode::VersionMismatch:
            return 422;
        case ErrorCode::TideUnavailable:
            return 503;
        default:
            return 500;
    }
}

}  // namespace oasis::serve
