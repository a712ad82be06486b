#include "oasis/checkpoint.hpp"

#include "oasis/error.hpp"
#include "oasis/hash.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace oasis::checkpoint {

using nlohmann::json;

namespace {

json matrix_to_json(const nn::Matrix& m) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

nn::Matrix matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw Error(ErrorCode::CorruptCheckpoint, "matrix payload does not match its shape");
    }
    nn::Matrix m(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = data[k++].get<double>();
    return m;
}

json row_to_json(const Eigen::RowVectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::RowVectorXd row_from_json(const json& j) {
    auto v = j.get<std::vector<double>>();
    return Eigen::Map<Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json linear_to_json(const nn::Linear& l) { return {{"weight", matrix_to_json(l.weight.value())}, {"bias", matrix_to_json(l.bias.value())}}; }

nn::Linear linear_from_json(const json& j) {
    nn::Linear l{nn::parameter(matrix_from_json(j.at("weight"))), nn::parameter(matrix_from_json(j.at("bias")))};
    if (l.bias.rows() != 1 || l.bias.cols() != l.weight.cols()) {
        throw Error(ErrorCode::CorruptCheckpoint, "linear layer bias does not match its weight");
    }
    return l;
}

json model_to_json(const dan::DanModel& m) {
    const auto st = m.generator.revin.state();
    json fe = json::array();
    for (const auto& l : m.generator.fe) fe.push_back(linear_to_json(l));
    json dl = json::array();
    for (const auto& l : m.discriminator.layers) dl.push_back(linear_to_json(l));
    const auto& a = m.generator.attn;
    return {
        {"features",
         {{"time_origin", to_epoch_seconds(m.features.time_origin)},
          {"use_tide", m.features.use_tide},
          {"tide_channel", m.features.tide_channel}}},
        {"flags", {{"use_norm", m.flags.use_norm}, {"use_gdc", m.flags.use_gdc}, {"use_sd", m.flags.use_sd}}},
        {"window", m.window},
        {"revin",
         {{"mu", row_to_json(st.mu)},
          {"var", row_to_json(st.var)},
          {"gamma", row_to_json(st.gamma)},
          {"beta", row_to_json(st.beta)},
          {"eps", st.eps}}},
        {"fe", fe},
        {"attention",
         {{"d_model", a.config().d_model},
          {"n_heads", a.config().n_heads},
          {"W_Q", matrix_to_json(a.W_Q.value())},
          {"W_K", matrix_to_json(a.W_K.value())},
          {"W_V", matrix_to_json(a.W_V.value())},
          {"W_O", matrix_to_json(a.W_O.value())},
          {"ln_gain", matrix_to_json(a.ln_gain.value())},
          {"ln_bias", matrix_to_json(a.ln_bias.value())}}},
        {"head", linear_to_json(m.generator.head)},
        {"discriminator", {{"layers", dl}, {"feature_tap", m.discriminator.feature_tap}}},
    };
}

dan::DanModel model_from_json(const json& j, const dan::TrainConfig& train) {
    dan::DanModel m;
    m.arch = train.arch;
    const auto& f = j.at("features");
    m.features.time_origin = from_epoch_seconds(f.at("time_origin").get<std::int64_t>());
    m.features.use_tide = f.at("use_tide").get<bool>();
    m.features.tide_channel = f.at("tide_channel").get<std::string>();
    m.arch.in_dim = m.features.width();
    const auto& fl = j.at("flags");
    m.flags = {fl.at("use_norm").get<bool>(), fl.at("use_gdc").get<bool>(), fl.at("use_sd").get<bool>()};
    m.window = j.at("window").get<int>();

    const auto& r = j.at("revin");
    revin::RevinState st;
    st.mu = row_from_json(r.at("mu"));
    st.var = row_from_json(r.at("var"));
    st.gamma = row_from_json(r.at("gamma"));
    st.beta = row_from_json(r.at("beta"));
    st.eps = r.at("eps").get<double>();
    if (st.mu.size() != m.arch.in_dim + 1 || st.var.size() != st.mu.size() || st.gamma.size() != st.mu.size() ||
        st.beta.size() != st.mu.size()) {
        throw Error(ErrorCode::CorruptCheckpoint, "normalizer channels do not match the feature width");
    }
    m.generator.revin = revin::RevinLayer(st);
    for (const auto& l : j.at("fe")) m.generator.fe.push_back(linear_from_json(l));
    const auto& a = j.at("attention");
    gdc::AttentionConfig ac{a.at("d_model").get<int>(), a.at("n_heads").get<int>()};
    Rng scratch(0);
    m.generator.attn = gdc::GdcBlock(ac, scratch);
    auto set = [&](nn::Var& v, const char* key) {
        auto mat = matrix_from_json(a.at(key));
        if (mat.rows() != v.rows() || mat.cols() != v.cols()) {
            throw Error(ErrorCode::CorruptCheckpoint, std::string("attention ") + key + " has the wrong shape");
        }
        v.mutable_value() = mat;
    };
    set(m.generator.attn.W_Q, "W_Q");
    set(m.generator.attn.W_K, "W_K");
    set(m.generator.attn.W_V, "W_V");
    set(m.generator.attn.W_O, "W_O");
    set(m.generator.attn.ln_gain, "ln_gain");
    set(m.generator.attn.ln_bias, "ln_bias");
    m.generator.head = linear_from_json(j.at("head"));
    const auto& d = j.at("discriminator");
    for (const auto& l : d.at("layers")) m.discriminator.layers.push_back(linear_from_json(l));
    m.discriminator.feature_tap = d.at("feature_tap").get<int>();

    // shape chain: in -> hidden -> d_model -> 1
    Eigen::Index width = m.arch.in_dim;
    for (const auto& l : m.generator.fe) {
        if (l.in_features() != width) throw Error(ErrorCode::CorruptCheckpoint, "feature extractor shapes do not chain");
        width = l.out_features();
    }
    if (width != ac.d_model || m.generator.head.in_features() != ac.d_model || m.generator.head.out_features() != 1) {
        throw Error(ErrorCode::CorruptCheckpoint, "generator head does not match the attention width");
    }
    if (m.discriminator.layers.empty()) throw Error(ErrorCode::CorruptCheckpoint, "discriminator has no layers");
    return m;
}

std::string body_of(const std::string& text, std::string* hash_line, std::string* header) {
    const auto first = text.find('\n');
    if (first == std::string::npos) throw Error(ErrorCode::CorruptCheckpoint, "missing header line");
    const auto second = text.find('\n', first + 1);
    if (second == std::string::npos) throw Error(ErrorCode::CorruptCheckpoint, "missing hash line");
    if (header) *header = text.substr(0, first);
    if (hash_line) *hash_line = text.substr(first + 1, second - first - 1);
    return text.substr(second + 1);
}

}  // namespace

Region region_of(const TrajectorySet& set, double margin) {
    if (set.records.empty()) throw Error(ErrorCode::EmptyInput, "no records to bound");
    Region r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
             std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& rec : set.records) {
        r.lat_min = std::min(r.lat_min, rec.lat);
        r.lat_max = std::max(r.lat_max, rec.lat);
        r.lon_min = std::min(r.lon_min, rec.lon);
        r.lon_max = std::max(r.lon_max, rec.lon);
    }
    r.lat_min -= margin;
    r.lat_max += margin;
    r.lon_min -= margin;
    r.lon_max += margin;
    return r;
}

std::string config_hash(const dan::TrainConfig& cfg) { return hex64(fnv1a64(dan::train_config_to_json(cfg))); }

json tide_series_to_json(const tide::TideSeries& s) {
    json models = json::array();
    for (const auto& m : s.models) {
        models.push_back({{"A", m.A},
                          {"omega", m.omega},
                          {"phi", m.phi},
                          {"c", m.c},
                          {"fit_start", to_epoch_seconds(m.fit_start)},
                          {"fit_end", to_epoch_seconds(m.fit_end)},
                          {"rmse_fit", m.rmse_fit},
                          {"events_used", m.events_used}});
    }
    return {{"mode", tide::to_string(s.mode)}, {"models", models}};
}

tide::TideSeries tide_series_from_json(const json& j) {
    tide::TideSeries s;
    s.mode = tide::parse_fit_mode(j.at("mode").get<std::string>());
    for (const auto& m : j.at("models")) {
        tide::TideModel t;
        t.A = m.at("A").get<double>();
        t.omega = m.at("omega").get<double>();
        t.phi = m.at("phi").get<double>();
        t.c = m.at("c").get<double>();
        t.fit_start = from_epoch_seconds(m.at("fit_start").get<std::int64_t>());
        t.fit_end = from_epoch_seconds(m.at("fit_end").get<std::int64_t>());
        t.rmse_fit = m.at("rmse_fit").get<double>();
        t.events_used = m.at("events_used").get<int>();
        t.fitted = true;
        s.models.push_back(t);
    }
    std::sort(s.models.begin(), s.models.end(), [](const auto& a, const auto& b) { return a.fit_start < b.fit_start; });
    return s;
}

std::string serialize(const Checkpoint& c) {
    const std::string config = dan::train_config_to_json(c.train);
    json body{{"format_version", kFormatVersion},
              {"config", json::parse(config)},
              {"config_hash", hex64(fnv1a64(config))},
              {"schedule", {{"T_diff", c.train.T_diff}, {"beta0", c.train.beta0}, {"betaT", c.train.betaT}}},
              {"region",
               {{"lat_min", c.region.lat_min},
                {"lat_max", c.region.lat_max},
                {"lon_min", c.region.lon_min},
                {"lon_max", c.region.lon_max}}},
              {"model", model_to_json(c.model)},
              {"metadata", c.metadata}};
    if (c.tide) body["tide"] = tide_series_to_json(*c.tide);
    const std::string text = body.dump();
    return std::string(kMagic) + " v" + std::to_string(kFormatVersion) + "\n" + "fnv1a64 " + hex64(fnv1a64(text)) +
           "\n" + text;
}

std::string version_of(const std::string& text) {
    std::string hash_line;
    const auto body = body_of(text, &hash_line, nullptr);
    return hex64(fnv1a64(body));
}

Checkpoint deserialize(const std::string& text) {
    std::string header, hash_line;
    const std::string body = body_of(text, &hash_line, &header);
    const std::string magic(kMagic);
    if (header.rfind(magic + " v", 0) != 0) throw Error(ErrorCode::CorruptCheckpoint, "not a checkpoint (bad magic)");
    const std::string found = header.substr(magic.size() + 2);
    if (found != std::to_string(kFormatVersion)) {
        throw Error(ErrorCode::VersionMismatch,
                    "checkpoint format v" + found + ", expected v" + std::to_string(kFormatVersion));
    }
    if (hash_line != "fnv1a64 " + hex64(fnv1a64(body))) {
        throw Error(ErrorCode::CorruptCheckpoint, "body hash does not match (truncated or edited file)");
    }
    try {
        const json j = json::parse(body);
        if (j.at("format_version").get<int>() != kFormatVersion) {
            throw Error(ErrorCode::VersionMismatch, "body format_version " + j.at("format_version").dump() +
                                                        ", expected " + std::to_string(kFormatVersion));
        }
        const std::string config = j.at("config").dump();
        if (j.at("config_hash").get<std::string>() != hex64(fnv1a64(config))) {
            throw Error(ErrorCode::CorruptCheckpoint, "config hash is not self-consistent");
        }
        Checkpoint c;
        c.train = dan::train_config_from_json(config);
        const auto& r = j.at("region");
        c.region = {r.at("lat_min").get<double>(), r.at("lat_max").get<double>(), r.at("lon_min").get<double>(),
                    r.at("lon_max").get<double>()};
        c.model = model_from_json(j.at("model"), c.train);
        if (j.contains("tide")) c.tide = tide_series_from_json(j.at("tide"));
        c.metadata = j.value("metadata", json::object());
        return c;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::CorruptCheckpoint, std::string("malformed body: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::VersionMismatch || e.code() == ErrorCode::CorruptCheckpoint) throw;
        throw Error(ErrorCode::CorruptCheckpoint, e.detail());
    }
}

void save(const Checkpoint& ckpt, const std::string& path) {
    const std::string text = serialize(ckpt);
    const std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    const auto tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp);
        out << text;
        if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp);
    }
    std::filesystem::rename(tmp, target);
}

Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::CorruptCheckpoint, "cannot open checkpoint " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize(ss.str());
}

}  // namespace oasis::checkpoint
