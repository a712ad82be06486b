#pragma once

// Inference service: checkpoint-backed point and batch imputation, tide
// resolution, atomic model swap and the HTTP front end.

#include "oasis/checkpoint.hpp"
#include "oasis/error.hpp"
#include "oasis/tide.hpp"

#include "json.hpp"

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace oasis::serve {

struct ImputeRequest {
    Timestamp timestamp;
    double lat = 0.0;
    double lon = 0.0;
    std::optional<double> tide_override;
};

struct ImputeResponse {
    double salinity = 0.0;
    std::optional<double> tide_used;  // empty when the model has no tide input
    std::string tide_source;          // noaa | override | model-extrapolated | unused
    std::string model_version;
};

nlohmann::json to_json(const ImputeResponse& r);
/// Throws MalformedInput naming the offending field.
ImputeRequest request_from_json(const nlohmann::json& j);

/// Immutable once built; shared between concurrent requests.
struct ServingModel {
    checkpoint::Checkpoint ckpt;
    std::string version;
    std::string path;

    static std::shared_ptr<const ServingModel> load(const std::string& path);
    static std::shared_ptr<const ServingModel> from_checkpoint(checkpoint::Checkpoint ckpt, std::string path = {});
};

/// Live tide lookups: NOAA events around the query day, fitted per day.
class NoaaTideSource {
public:
    NoaaTideSource(std::shared_ptr<tide::NoaaClient> client, std::string station, tide::FitOptions options = {});
    /// Throws TideUnavailable.
    double height(Timestamp t);

private:
    std::shared_ptr<tide::NoaaClient> client_;
    std::string station_;
    tide::FitOptions options_;
    std::mutex mu_;
    std::map<Timestamp, tide::TideModel> by_day_;
};

/// Resolution order: override, NOAA (when configured), the checkpoint's
/// fitted series. Throws OutOfRegion, TideUnavailable, MalformedInput.
ImputeResponse impute_point(const ImputeRequest& req, const ServingModel& model, NoaaTideSource* noaa = nullptr);

struct BatchRow {
    std::size_t row = 0;  // 1-based data row
    std::optional<ImputeResponse> response;
    std::string error_code;
    std::string error_message;
};

struct BatchResult {
    std::vector<BatchRow> rows;
    std::string model_version;
};

/// Delimited text with a header holding timestamp, lat, lon and optionally
/// tide. Throws MalformedHeader; bad rows become per-row errors.
BatchResult impute_batch(const std::string& text, const ServingModel& model, NoaaTideSource* noaa = nullptr);
/// Same for already-parsed requests (JSON arrays); `errors` holds rows that failed to parse.
BatchResult impute_batch(const std::vector<std::optional<ImputeRequest>>& rows,
                         const std::vector<std::pair<std::string, std::string>>& errors, const ServingModel& model,
                         NoaaTideSource* noaa = nullptr);

nlohmann::json to_json(const BatchResult& r);

/// Current model behind a mutex; readers take a snapshot pointer.
class ModelRegistry {
public:
    explicit ModelRegistry(std::shared_ptr<const ServingModel> initial);

    std::shared_ptr<const ServingModel> current() const;
    /// Loads fully before publishing; on failure the old model stays and the error propagates.
    std::string swap(const std::string& path);

private:
    mutable std::mutex mu_;
    std::shared_ptr<const ServingModel> model_;
};

nlohmann::json model_info(const ServingModel& m);

struct ServerConfig {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    std::string admin_token;  // empty disables swapping
    std::string static_dir;   // optional web client
    int threads = 8;
};

/// Reads OASIS_ADMIN_TOKEN, OASIS_STATION, OASIS_FIXTURE_DIR, OASIS_BIND.
ServerConfig config_from_env(ServerConfig base = {});

class Server {
public:
    Server(ServerConfig cfg, std::shared_ptr<ModelRegistry> registry, std::shared_ptr<NoaaTideSource> noaa = nullptr);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds and serves on a background thread; returns the bound port.
    int start();
    /// Binds and serves on the calling thread.
    void run();
    void stop();
    int port() const { return port_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

/// HTTP status for an error code.
int http_status(ErrorCode code);

}  // namespace oasis::serve
