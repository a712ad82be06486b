#pragma once

#include "oasis/timeutil.hpp"

#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace oasis {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct DrifterRecord {
    std::string trajectory_id;
    Timestamp timestamp{};
    double lat = 0.0;
    double lon = 0.0;
    double salinity = kMissing;  // psu, NaN when not measured
    std::map<std::string, double> covariates;

    bool has_salinity() const { return salinity == salinity; }
};

/// Records grouped by trajectory (in `trajectory_ids` order) and sorted by
/// timestamp inside each trajectory.
struct TrajectorySet {
    std::vector<DrifterRecord> records;
    std::vector<std::string> trajectory_ids;

    struct Range {
        std::size_t begin = 0;
        std::size_t end = 0;
    };
    /// Record index range of each trajectory, parallel to trajectory_ids.
    std::vector<Range> ranges() const;

    std::span<const DrifterRecord> trajectory(std::size_t i) const;

    /// Sorts, collapses duplicate (id, timestamp) rows by mean and rebuilds
    /// trajectory_ids in first-seen order.
    void normalize_order();

    /// Subset holding only the named trajectories, in the given order.
    TrajectorySet subset(const std::vector<std::string>& ids) const;
};

struct ColumnSchema {
    std::string trajectory_id = "trajectory_id";
    std::string timestamp = "timestamp";
    std::string lat = "lat";
    std::string lon = "lon";
    std::string salinity = "salinity";
    char delimiter = ',';
    /// Covariate columns to keep. Empty means every other numeric column.
    std::vector<std::string> covariates;
};

struct RowDiagnostic {
    std::size_t row = 0;   // 1-based data row index (header excluded)
    std::size_t line = 0;  // 1-based line in the source
    std::string reason;
};

struct ParseResult {
    TrajectorySet set;
    std::vector<RowDiagnostic> rejected;
    std::size_t duplicates_merged = 0;
};

/// Reads a delimited drifter table. Throws MalformedInput when required
/// columns cannot be mapped and EmptyInput when no row survives validation.
ParseResult parse_trajectories(std::istream& source, const ColumnSchema& schema = {});

void write_trajectories(std::ostream& out, const TrajectorySet& set);

struct GridSpec {
    double lat_min = 0.0;
    double lat_max = 1.0;
    double lon_min = 0.0;
    double lon_max = 1.0;
    int U = 32;
    int V = 32;
    Timestamp time_origin{};
    std::int64_t time_step = 3600;  // seconds
    int T_data = 1;

    double dlat() const { return (lat_max - lat_min) / U; }
    double dlon() const { return (lon_max - lon_min) / V; }
    bool contains(double lat, double lon) const {
        return lat >= lat_min && lat <= lat_max && lon >= lon_min && lon <= lon_max;
    }
};

/// Bounding box of the records (closed on the max edge by a tiny margin),
/// U = V = 32 and a time step equal to the median sampling interval.
GridSpec default_grid(const TrajectorySet& set, int U = 32, int V = 32);

struct ObservationTensor {
    int T = 0, U = 0, V = 0, D = 0;
    std::vector<double> X;        // row-major (T, U, V, D); NaN where missing
    std::vector<std::uint8_t> M;  // 1 where X is observed
    std::vector<std::string> channel_names;
    GridSpec grid;

    std::size_t index(int t, int u, int v, int d) const {
        return ((static_cast<std::size_t>(t) * U + u) * V + v) * D + d;
    }
    double at(int t, int u, int v, int d) const { return X[index(t, u, v, d)]; }
    bool observed(int t, int u, int v, int d) const { return M[index(t, u, v, d)] != 0; }
    std::size_t size() const { return X.size(); }
};

struct RasterResult {
    ObservationTensor tensor;
    std::vector<std::uint32_t> counts;  // observations aggregated into each cell
    std::size_t skipped = 0;            // records outside the grid or time range
};

/// Bins records on the half-open grid and averages observations per cell.
/// Channel names are "salinity" or covariate keys.
RasterResult rasterize(const TrajectorySet& set, const GridSpec& grid, const std::vector<std::string>& channels);

void write_tensor(std::ostream& out, const ObservationTensor& tensor);
ObservationTensor read_tensor(std::istream& in);
/// One row per (t, u, v) with at least one observed channel; missing
/// channels are empty fields and values use shortest round-trip formatting.
void export_tensor_csv(std::ostream& out, const ObservationTensor& tensor);

struct SplitAssignment {
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
    std::vector<std::string> test_ids;
    std::uint64_t seed = 42;
};

struct SplitRatios {
    double train = 0.70;
    double val = 0.15;
    double test = 0.15;
};

SplitAssignment split_trajectories(const TrajectorySet& set, SplitRatios ratios = {}, std::uint64_t seed = 42);

}  // namespace oasis
