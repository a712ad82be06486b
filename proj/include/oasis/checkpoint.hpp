#pragma once

// Versioned on-disk container for a trained model, its normalizer, the
// training configuration and an optional fitted tide series.

#include "oasis/dan.hpp"
#include "oasis/tide.hpp"

#include "json.hpp"

#include <optional>
#include <string>

namespace oasis::checkpoint {

inline constexpr int kFormatVersion = 1;
inline constexpr std::string_view kMagic = "OASIS-CKPT";

struct Region {
    double lat_min = -90.0;
    double lat_max = 90.0;
    double lon_min = -180.0;
    double lon_max = 180.0;

    bool contains(double lat, double lon) const {
        return lat >= lat_min && lat <= lat_max && lon >= lon_min && lon <= lon_max;
    }
};

/// Bounding box of the records, padded by `margin` degrees.
Region region_of(const TrajectorySet& set, double margin = 0.0);

struct Checkpoint {
    dan::DanModel model;
    dan::TrainConfig train;  // hooks are not stored
    Region region;
    std::optional<tide::TideSeries> tide;
    nlohmann::json metadata = nlohmann::json::object();
};

/// Hash of the serialized training configuration.
std::string config_hash(const dan::TrainConfig& cfg);

/// Whole file text. The second line carries the body hash, which is also
/// the model version.
std::string serialize(const Checkpoint& ckpt);
/// Throws CorruptCheckpoint and VersionMismatch.
Checkpoint deserialize(const std::string& text);

/// Written to a temporary sibling and renamed into place.
void save(const Checkpoint& ckpt, const std::string& path);
Checkpoint load(const std::string& path);

/// Version tag of a serialized checkpoint (hash of its body).
std::string version_of(const std::string& text);

nlohmann::json tide_series_to_json(const tide::TideSeries& s);
tide::TideSeries tide_series_from_json(const nlohmann::json& j);

}  // namespace oasis::checkpoint
