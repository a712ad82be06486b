#include "oasis/tensorize.hpp"

#include "oasis/csv.hpp"
#include "oasis/error.hpp"
#include "oasis/random.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>
#include <unordered_map>

namespace oasis {

std::vector<TrajectorySet::Range> TrajectorySet::ranges() const {
    std::vector<Range> out;
    out.reserve(trajectory_ids.size());
    std::size_t i = 0;
    for (const auto& id : trajectory_ids) {
        Range r{i, i};
        while (r.end < records.size() && records[r.end].trajectory_id == id) ++r.end;
        out.push_back(r);
        i = r.end;
    }
    return out;
}

std::span<const DrifterRecord> TrajectorySet::trajectory(std::size_t i) const {
    auto r = ranges().at(i);
    return std::span<const DrifterRecord>(records).subspan(r.begin, r.end - r.begin);
}

namespace {

struct Accum {
    double sum = 0.0;
    int n = 0;
    void add(double v) {
        if (std::isfinite(v)) {
            sum += v;
            ++n;
        }
    }
    double mean() const { return n ? sum / n : kMissing; }
};

// Collapses rows sharing (id, timestamp); returns the number of rows merged away.
std::size_t collapse_duplicates(std::vector<DrifterRecord>& recs) {
    std::size_t merged = 0;
    std::vector<DrifterRecord> out;
    out.reserve(recs.size());
    for (std::size_t i = 0; i < recs.size();) {
        std::size_t j = i + 1;
        while (j < recs.size() && recs[j].trajectory_id == recs[i].trajectory_id &&
               recs[j].timestamp == recs[i].timestamp) {
            ++j;
        }
        if (j - i == 1) {
            out.push_back(std::move(recs[i]));
        } else {
            DrifterRecord r = recs[i];
            Accum lat, lon, sal;
            std::map<std::string, Accum> cov;
            for (std::size_t k = i; k < j; ++k) {
                lat.add(recs[k].lat);
                lon.add(recs[k].lon);
                sal.add(recs[k].salinity);
                for (const auto& [name, v] : recs[k].covariates) cov[name].add(v);
            }
            r.lat = lat.mean();
            r.lon = lon.mean();
            r.salinity = sal.mean();
            r.covariates.clear();
            for (const auto& [name, a] : cov) {
                if (a.n) r.covariates[name] = a.mean();
            }
            out.push_back(std::move(r));
            merged += j - i - 1;
        }
        i = j;
    }
    recs = std::move(out);
    return merged;
}

}  // namespace

void TrajectorySet::normalize_order() {
    std::unordered_map<std::string, std::size_t> first_seen;
    for (const auto& r : records) first_seen.emplace(r.trajectory_id, first_seen.size());
    std::stable_sort(records.begin(), records.end(), [&](const DrifterRecord& a, const DrifterRecord& b) {
        auto ia = first_seen.at(a.trajectory_id), ib = first_seen.at(b.trajectory_id);
        if (ia != ib) return ia < ib;
        return a.timestamp < b.timestamp;
    });
    collapse_duplicates(records);
    trajectory_ids.clear();
    for (const auto& r : records) {
        if (trajectory_ids.empty() || trajectory_ids.back() != r.trajectory_id) trajectory_ids.push_back(r.trajectory_id);
    }
}

TrajectorySet TrajectorySet::subset(const std::vector<std::string>& ids) const {
    TrajectorySet out;
    auto rs = ranges();
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < trajectory_ids.size(); ++i) pos[trajectory_ids[i]] = i;
    for (const auto& id : ids) {
        auto it = pos.find(id);
        if (it == pos.end()) continue;
        auto r = rs[it->second];
        out.records.insert(out.records.end(), records.begin() + static_cast<std::ptrdiff_t>(r.begin),
                           records.begin() + static_cast<std::ptrdiff_t>(r.end));
        out.trajectory_ids.push_back(id);
    }
    return out;
}

namespace {

int find_column(const std::vector<std::string>& header, const std::string& wanted,
                std::initializer_list<const char*> aliases) {
    auto lower = [](std::string s) {
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
        return s;
    };
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (lower(header[i]) == lower(wanted)) return static_cast<int>(i);
    }
    for (const char* alias : aliases) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (lower(header[i]) == alias) return static_cast<int>(i);
        }
    }
    return -1;
}

}  // namespace

ParseResult parse_trajectories(std::istream& source, const ColumnSchema& schema) {
    auto table = csv::read_table(source, schema.delimiter);
    if (table.header.empty()) throw Error(ErrorCode::MalformedInput, "missing header row");

    const int c_id = find_column(table.header, schema.trajectory_id, {"id", "trajectory", "drifter", "drifter_id"});
    const int c_time = find_column(table.header, schema.timestamp, {"time", "datetime", "date", "t"});
    const int c_lat = find_column(table.header, schema.lat, {"latitude"});
    const int c_lon = find_column(table.header, schema.lon, {"longitude", "long"});
    const int c_sal = find_column(table.header, schema.salinity, {"sal", "psu"});
    std::string missing;
    if (c_id < 0) missing += " " + schema.trajectory_id;
    if (c_time < 0) missing += " " + schema.timestamp;
    if (c_lat < 0) missing += " " + schema.lat;
    if (c_lon < 0) missing += " " + schema.lon;
    if (!missing.empty()) throw Error(ErrorCode::MalformedInput, "header lacks required columns:" + missing);

    std::vector<std::pair<int, std::string>> cov_cols;
    std::set<int> used{c_id, c_time, c_lat, c_lon, c_sal};
    if (schema.covariates.empty()) {
        for (std::size_t i = 0; i < table.header.size(); ++i) {
            if (!used.count(static_cast<int>(i))) cov_cols.emplace_back(static_cast<int>(i), table.header[i]);
        }
    } else {
        for (const auto& name : schema.covariates) {
            int c = find_column(table.header, name, {});
            if (c < 0) throw Error(ErrorCode::MalformedInput, "covariate column not found: " + name);
            cov_cols.emplace_back(c, table.header[static_cast<std::size_t>(c)]);
        }
    }

    ParseResult result;
    auto& recs = result.set.records;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        auto reject = [&](std::string why) {
            result.rejected.push_back({r + 1, table.line_numbers[r], std::move(why)});
        };
        auto field = [&](int c) -> std::string {
            return c >= 0 && static_cast<std::size_t>(c) < row.size() ? csv::trim(row[static_cast<std::size_t>(c)]) : "";
        };
        DrifterRecord rec;
        rec.trajectory_id = field(c_id);
        if (rec.trajectory_id.empty()) {
            reject("empty trajectory id");
            continue;
        }
        auto ts = parse_iso8601(field(c_time));
        if (!ts) {
            reject("unparseable timestamp '" + field(c_time) + "'");
            continue;
        }
        rec.timestamp = *ts;
        auto lat = csv::parse_double(field(c_lat));
        auto lon = csv::parse_double(field(c_lon));
        if (!lat || !std::isfinite(*lat) || *lat < -90.0 || *lat > 90.0) {
            reject("latitude out of range '" + field(c_lat) + "'");
            continue;
        }
        if (!lon || !std::isfinite(*lon) || *lon < -180.0 || *lon > 180.0) {
            reject("longitude out of range '" + field(c_lon) + "'");
            continue;
        }
        rec.lat = *lat;
        rec.lon = *lon;
        if (c_sal >= 0) {
            std::string s = field(c_sal);
            if (!s.empty()) {
                auto sal = csv::parse_double(s);
                if (!sal || !std::isfinite(*sal) || *sal < 0.0) {
                    reject("invalid salinity '" + s + "'");
                    continue;
                }
                rec.salinity = *sal;
            }
        }
        for (const auto& [c, name] : cov_cols) {
            auto v = csv::parse_double(field(c));
            if (v && std::isfinite(*v)) rec.covariates[name] = *v;
        }
        recs.push_back(std::move(rec));
    }
    if (recs.empty()) throw Error(ErrorCode::EmptyInput, "no valid rows");

    std::size_t before = recs.size();
    result.set.normalize_order();
    result.duplicates_merged = before - result.set.records.size();
    return result;
}

void write_trajectories(std::ostream& out, const TrajectorySet& set) {
    std::set<std::string> cov_names;
    for (const auto& r : set.records)
        for (const auto& [k, v] : r.covariates) cov_names.insert(k);
    out << "trajectory_id,timestamp,lat,lon,salinity";
    for (const auto& k : cov_names) out << ',' << k;
    out << '\n';
    for (const auto& r : set.records) {
        out << r.trajectory_id << ',' << format_iso8601(r.timestamp) << ',' << csv::format_double(r.lat) << ','
            << csv::format_double(r.lon) << ',' << csv::format_double(r.salinity);
        for (const auto& k : cov_names) {
            out << ',';
            auto it = r.covariates.find(k);
            if (it != r.covariates.end()) out << csv::format_double(it->second);
        }
        out << '\n';
    }
}

GridSpec default_grid(const TrajectorySet& set, int U, int V) {
    if (set.records.empty()) throw Error(ErrorCode::EmptyInput, "cannot derive a grid from zero records");
    GridSpec g;
    g.U = U;
    g.V = V;
    g.lat_min = g.lon_min = std::numeric_limits<double>::infinity();
    g.lat_max = g.lon_max = -std::numeric_limits<double>::infinity();
    Timestamp tmin = set.records.front().timestamp, tmax = tmin;
    for (const auto& r : set.records) {
        g.lat_min = std::min(g.lat_min, r.lat);
        g.lat_max = std::max(g.lat_max, r.lat);
        g.lon_min = std::min(g.lon_min, r.lon);
        g.lon_max = std::max(g.lon_max, r.lon);
        tmin = std::min(tmin, r.timestamp);
        tmax = std::max(tmax, r.timestamp);
    }
    // Nudge the max edges so the extreme records fall inside the half-open cells.
    const double pad_lat = std::max(1e-9, (g.lat_max - g.lat_min) * 1e-6);
    const double pad_lon = std::max(1e-9, (g.lon_max - g.lon_min) * 1e-6);
    g.lat_max += pad_lat;
    g.lon_max += pad_lon;

    std::vector<std::int64_t> gaps;
    for (const auto& r : set.ranges()) {
        for (std::size_t i = r.begin + 1; i < r.end; ++i) {
            auto dt = (set.records[i].timestamp - set.records[i - 1].timestamp).count();
            if (dt > 0) gaps.push_back(dt);
        }
    }
    std::int64_t step = 3600;
    if (!gaps.empty()) {
        std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2), gaps.end());
        step = gaps[gaps.size() / 2];
    }
    g.time_origin = tmin;
    g.time_step = step;
    g.T_data = static_cast<int>((tmax - tmin).count() / step) + 1;
    return g;
}

RasterResult rasterize(const TrajectorySet& set, const GridSpec& grid, const std::vector<std::string>& channels) {
    if (grid.U <= 0 || grid.V <= 0 || grid.T_data <= 0) {
        throw Error(ErrorCode::DegenerateGrid, "grid dimensions must be positive");
    }
    if (!(grid.lat_min < grid.lat_max) || !(grid.lon_min < grid.lon_max) || grid.time_step <= 0) {
        throw Error(ErrorCode::DegenerateGrid, "grid bounds or time step are degenerate");
    }
    if (channels.empty()) throw Error(ErrorCode::DegenerateGrid, "no channels requested");

    RasterResult out;
    auto& X = out.tensor;
    X.T = grid.T_data;
    X.U = grid.U;
    X.V = grid.V;
    X.D = static_cast<int>(channels.size());
    X.channel_names = channels;
    X.grid = grid;
    const std::size_t n = static_cast<std::size_t>(X.T) * X.U * X.V * X.D;
    std::vector<double> sums(n, 0.0);
    out.counts.assign(n, 0);

    for (const auto& r : set.records) {
        const auto dt = (r.timestamp - grid.time_origin).count();
        const double fu = (r.lat - grid.lat_min) / grid.dlat();
        const double fv = (r.lon - grid.lon_min) / grid.dlon();
        if (dt < 0 || fu < 0.0 || fv < 0.0 || r.lat >= grid.lat_max || r.lon >= grid.lon_max) {
            ++out.skipped;
            continue;
        }
        const auto t = dt / grid.time_step;
        const int u = std::min(static_cast<int>(fu), grid.U - 1);
        const int v = std::min(static_cast<int>(fv), grid.V - 1);
        if (t >= grid.T_data) {
            ++out.skipped;
            continue;
        }
        for (int d = 0; d < X.D; ++d) {
            double value = kMissing;
            if (channels[static_cast<std::size_t>(d)] == "salinity") {
                value = r.salinity;
            } else if (auto it = r.covariates.find(channels[static_cast<std::size_t>(d)]); it != r.covariates.end()) {
                value = it->second;
            }
            if (!std::isfinite(value)) continue;
            auto idx = X.index(static_cast<int>(t), u, v, d);
            sums[idx] += value;
            ++out.counts[idx];
        }
    }
    X.X.assign(n, kMissing);
    X.M.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (out.counts[i]) {
            X.X[i] = sums[i] / out.counts[i];
            X.M[i] = 1;
        }
    }
    return out;
}

namespace {

constexpr const char* kTensorMagic = "OASIS-TENSOR v1";

nlohmann::json grid_to_json(const GridSpec& g) {
    return {{"lat_min", g.lat_min}, {"lat_max", g.lat_max},   {"lon_min", g.lon_min},
            {"lon_max", g.lon_max}, {"U", g.U},               {"V", g.V},
            {"time_origin", format_iso8601(g.time_origin)},   {"time_step", g.time_step},
            {"T_data", g.T_data}};
}

GridSpec grid_from_json(const nlohmann::json& j) {
    GridSpec g;
    g.lat_min = j.at("lat_min");
    g.lat_max = j.at("lat_max");
    g.lon_min = j.at("lon_min");
    g.lon_max = j.at("lon_max");
    g.U = j.at("U");
    g.V = j.at("V");
    auto t = parse_iso8601(j.at("time_origin").get<std::string>());
    if (!t) throw Error(ErrorCode::MalformedInput, "bad time_origin in tensor header");
    g.time_origin = *t;
    g.time_step = j.at("time_step");
    g.T_data = j.at("T_data");
    return g;
}

void put_le64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

std::uint64_t get_le64(const unsigned char* b) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void write_tensor(std::ostream& out, const ObservationTensor& t) {
    nlohmann::json header = {{"shape", {t.T, t.U, t.V, t.D}}, {"channels", t.channel_names}, {"grid", grid_to_json(t.grid)}};
    out << kTensorMagic << '\n' << header.dump() << '\n';
    for (double v : t.X) put_le64(out, std::bit_cast<std::uint64_t>(v));
    out.write(reinterpret_cast<const char*>(t.M.data()), static_cast<std::streamsize>(t.M.size()));
}

ObservationTensor read_tensor(std::istream& in) {
    std::string magic, header_line;
    if (!std::getline(in, magic) || magic != kTensorMagic) {
        throw Error(ErrorCode::MalformedInput, "not an observation tensor (bad magic)");
    }
    if (!std::getline(in, header_line)) throw Error(ErrorCode::MalformedInput, "truncated tensor header");
    ObservationTensor t;
    try {
        auto h = nlohmann::json::parse(header_line);
        auto shape = h.at("shape");
        t.T = shape.at(0);
        t.U = shape.at(1);
        t.V = shape.at(2);
        t.D = shape.at(3);
        t.channel_names = h.at("channels").get<std::vector<std::string>>();
        t.grid = grid_from_json(h.at("grid"));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedInput, std::string("tensor header: ") + e.what());
    }
    if (t.T < 0 || t.U < 0 || t.V < 0 || t.D < 0 || static_cast<int>(t.channel_names.size()) != t.D) {
        throw Error(ErrorCode::MalformedInput, "tensor header shape is inconsistent");
    }
    const std::size_t n = static_cast<std::size_t>(t.T) * t.U * t.V * t.D;
    std::vector<unsigned char> raw(n * 8);
    t.M.resize(n);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())) ||
        !in.read(reinterpret_cast<char*>(t.M.data()), static_cast<std::streamsize>(n))) {
        throw Error(ErrorCode::MalformedInput, "truncated tensor payload");
    }
    t.X.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        t.X[i] = std::bit_cast<double>(get_le64(raw.data() + 8 * i));
        if ((t.M[i] != 0) != std::isfinite(t.X[i])) throw Error(ErrorCode::MalformedInput, "mask disagrees with values");
    }
    return t;
}

void export_tensor_csv(std::ostream& out, const ObservationTensor& t) {
    out << "t,u,v";
    for (const auto& c : t.channel_names) out << ',' << c;
    out << '\n';
    for (int ti = 0; ti < t.T; ++ti)
        for (int u = 0; u < t.U; ++u)
            for (int v = 0; v < t.V; ++v) {
                bool any = false;
                for (int d = 0; d < t.D; ++d) any = any || t.observed(ti, u, v, d);
                if (!any) continue;
                out << ti << ',' << u << ',' << v;
                for (int d = 0; d < t.D; ++d) out << ',' << (t.observed(ti, u, v, d) ? csv::format_double(t.at(ti, u, v, d)) : "");
                out << '\n';
            }
}

SplitAssignment split_trajectories(const TrajectorySet& set, SplitRatios ratios, std::uint64_t seed) {
    const std::size_t K = set.trajectory_ids.size();
    if (K < 3) throw Error(ErrorCode::TooFewTrajectories, "need at least 3 trajectories, got " + std::to_string(K));
    if (ratios.train < 0 || ratios.val < 0 || ratios.train + ratios.val > 1.0 + 1e-12) {
        throw Error(ErrorCode::InvalidConfig, "split ratios must be nonnegative and sum to at most 1");
    }
    std::vector<std::string> ids = set.trajectory_ids;
    Rng rng(seed);
    rng.shuffle(ids.begin(), ids.end());
    // 0.7 * 20 evaluates to 13.999...; the nudge floors it to 14
    const auto n_train = static_cast<std::size_t>(std::floor(ratios.train * static_cast<double>(K) + 1e-9));
    const auto n_val = static_cast<std::size_t>(std::floor(ratios.val * static_cast<double>(K) + 1e-9));
    SplitAssignment s;
    s.seed = seed;
    s.train_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                     ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
    return s;
}

}  // namespace oasis
