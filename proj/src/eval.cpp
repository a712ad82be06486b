#include "oasis/eval.hpp"

#include "oasis/checkpoint.hpp"
#include "oasis/csv.hpp"
#include "oasis/error.hpp"
#include "oasis/hash.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace oasis::eval {

using nlohmann::json;

MetricReport metrics(std::span<const double> y, std::span<const double> yhat) {
    if (y.size() != yhat.size())
        throw Error(ErrorCode::LengthMismatch,
                    "y has " + std::to_string(y.size()) + " values, yhat has " + std::to_string(yhat.size()));
    if (y.empty()) throw Error(ErrorCode::EmptyInput, "no values to score");
    MetricReport r;
    r.n = y.size();
    double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0;
    std::size_t pct_n = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double e = y[i] - yhat[i];
        abs_sum += std::abs(e);
        sq_sum += e * e;
        if (std::abs(y[i]) < 1e-9) {
            ++r.mape_excluded;
        } else {
            pct_sum += std::abs(e / y[i]);
            ++pct_n;
        }
    }
    const double n = static_cast<double>(y.size());
    r.mae = abs_sum / n;
    r.rmse = std::sqrt(sq_sum / n);
    r.mape = pct_n ? 100.0 * pct_sum / static_cast<double>(pct_n) : 0.0;
    return r;
}

// Config ------------------------------------------------------------------------

namespace {

[[noreturn]] void bad_config(const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); }

template <class T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        bad_config(std::string("bad value for '") + key + "'");
    }
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) bad_config(where + " must be an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) bad_config("unknown key '" + k + "' in " + where);
}

baselines::Metric parse_metric(const std::string& s) {
    if (s == "degrees") return baselines::Metric::Degrees;
    if (s == "haversine_km") return baselines::Metric::HaversineKm;
    bad_config("unknown metric '" + s + "'");
}

std::string metric_name(baselines::Metric m) {
    return m == baselines::Metric::Degrees ? "degrees" : "haversine_km";
}

json neural_json(const baselines::NeuralConfig& c) {
    return {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"window", c.window},
            {"lr", c.lr},         {"lstm_hidden", c.lstm_hidden}, {"seed", c.seed}};
}

json kriging_json(const baselines::KrigingConfig& c) {
    json j{{"variogram", to_string(c.model)}, {"fit_nugget", c.fit_nugget},
           {"lags", c.lags},                   {"neighbors", c.neighbors},
           {"max_variogram_points", c.max_variogram_points},
           {"metric", metric_name(c.metric)},  {"seed", c.seed}};
    if (c.variogram)
        j["fixed"] = {{"nugget", c.variogram->nugget}, {"sill", c.variogram->sill}, {"range", c.variogram->range}};
    return j;
}

json gwr_json(const baselines::GwrConfig& c) {
    json j{{"cv_grid", c.cv_grid}, {"cv_max_points", c.cv_max_points}, {"metric", metric_name(c.metric)},
           {"seed", c.seed}};
    j["bandwidth"] = c.bandwidth ? json(*c.bandwidth) : json(nullptr);
    return j;
}

}  // namespace

ExperimentConfig experiment_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        bad_config(std::string("experiment config is not JSON: ") + e.what());
    }
    check_keys(j,
               {"dataset", "synthetic", "models", "ablation", "use_tide", "seeds", "split", "train", "neural",
                "kriging", "gwr", "output_dir"},
               "experiment config");
    ExperimentConfig c;
    read(j, "dataset", c.dataset);
    if (j.contains("synthetic")) c.synthetic = synthetic_config_from_json(j["synthetic"].dump());
    read(j, "models", c.models);
    const auto kinds = baselines::imputer_kinds();
    for (const auto& m : c.models)
        if (std::find(kinds.begin(), kinds.end(), m) == kinds.end())
            throw Error(ErrorCode::UnknownModel, "unknown model kind '" + m + "'");
    if (j.contains("ablation")) {
        const auto& a = j["ablation"];
        check_keys(a, {"use_norm", "use_gdc", "use_sd"}, "ablation");
        read(a, "use_norm", c.flags.use_norm);
        read(a, "use_gdc", c.flags.use_gdc);
        read(a, "use_sd", c.flags.use_sd);
    }
    read(j, "use_tide", c.use_tide);
    read(j, "seeds", c.seeds);
    if (c.seeds.empty()) bad_config("seeds must not be empty");
    if (j.contains("split")) {
        const auto& s = j["split"];
        check_keys(s, {"train", "val", "test"}, "split");
        read(s, "train", c.split.train);
        read(s, "val", c.split.val);
        read(s, "test", c.split.test);
    }
    if (j.contains("train")) c.options.train = dan::train_config_from_json(j["train"].dump());
    if (j.contains("neural")) {
        const auto& n = j["neural"];
        check_keys(n, {"epochs", "batch_size", "window", "lr", "lstm_hidden", "seed"}, "neural");
        auto& o = c.options.neural;
        read(n, "epochs", o.epochs);
        read(n, "batch_size", o.batch_size);
        read(n, "window", o.window);
        read(n, "lr", o.lr);
        read(n, "lstm_hidden", o.lstm_hidden);
        read(n, "seed", o.seed);
        if (o.epochs < 1 || o.batch_size < 1 || o.window < 1 || o.lstm_hidden < 1 || !(o.lr > 0))
            bad_config("neural settings must be positive");
    }
    if (j.contains("kriging")) {
        const auto& k = j["kriging"];
        check_keys(k, {"variogram", "fit_nugget", "lags", "neighbors", "max_variogram_points", "metric", "seed", "fixed"},
                   "kriging");
        auto& o = c.options.kriging;
        std::string model = to_string(o.model), metric = metric_name(o.metric);
        read(k, "variogram", model);
        read(k, "metric", metric);
        try {
            o.model = baselines::parse_variogram_model(model);
        } catch (const Error& e) {
            bad_config(e.detail());
        }
        o.metric = parse_metric(metric);
        read(k, "fit_nugget", o.fit_nugget);
        read(k, "lags", o.lags);
        read(k, "neighbors", o.neighbors);
        read(k, "max_variogram_points", o.max_variogram_points);
        read(k, "seed", o.seed);
        if (k.contains("fixed")) {
            baselines::Variogram v;
            v.model = o.model;
            read(k["fixed"], "nugget", v.nugget);
            read(k["fixed"], "sill", v.sill);
            read(k["fixed"], "range", v.range);
            o.variogram = v;
        }
        if (o.lags < 1 || o.neighbors < 3) bad_config("kriging lags must be >= 1 and neighbors >= 3");
    }
    if (j.contains("gwr")) {
        const auto& g = j["gwr"];
        check_keys(g, {"bandwidth", "cv_grid", "cv_max_points", "metric", "seed"}, "gwr");
        auto& o = c.options.gwr;
        if (g.contains("bandwidth") && !g["bandwidth"].is_null()) {
            double bw = 0.0;
            read(g, "bandwidth", bw);
            if (!(bw > 0)) bad_config("gwr bandwidth must be positive");
            o.bandwidth = bw;
        }
        std::string metric = metric_name(o.metric);
        read(g, "metric", metric);
        o.metric = parse_metric(metric);
        read(g, "cv_grid", o.cv_grid);
        read(g, "cv_max_points", o.cv_max_points);
        read(g, "seed", o.seed);
    }
    read(j, "output_dir", c.output_dir);
    return c;
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["dataset"] = c.dataset;
    if (c.dataset == "synthetic") j["synthetic"] = json::parse(synthetic_config_to_json(c.synthetic));
    j["models"] = c.models;
    j["ablation"] = {{"use_norm", c.flags.use_norm}, {"use_gdc", c.flags.use_gdc}, {"use_sd", c.flags.use_sd}};
    j["use_tide"] = c.use_tide;
    j["seeds"] = c.seeds;
    j["split"] = {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}};
    j["train"] = json::parse(dan::train_config_to_json(c.options.train));
    j["neural"] = neural_json(c.options.neural);
    j["kriging"] = kriging_json(c.options.kriging);
    j["gwr"] = gwr_json(c.options.gwr);
    j["output_dir"] = c.output_dir;
    return j;
}

std::string config_hash(const ExperimentConfig& cfg) {
    auto j = to_json(cfg);
    j.erase("output_dir");
    return hex64(fnv1a64(j.dump()));
}

// Results ------------------------------------------------------------------------

std::string ResultsTable::to_csv() const {
    std::ostringstream out;
    out << "model,dataset,variant,seed,mae,rmse,mape,n,seconds\n";
    for (const auto& r : rows)
        out << r.model << ',' << r.dataset << ',' << r.variant << ',' << r.seed << ',' << csv::format_double(r.report.mae)
            << ',' << csv::format_double(r.report.rmse) << ',' << csv::format_double(r.report.mape) << ','
            << r.report.n << ',' << std::fixed << std::setprecision(2) << r.seconds << std::defaultfloat << '\n';
    return out.str();
}

std::string ResultsTable::to_text() const {
    std::ostringstream out;
    out << std::left << std::setw(9) << "model" << std::setw(12) << "dataset" << std::setw(11) << "variant"
        << std::setw(6) << "seed" << std::right << std::setw(9) << "MAE" << std::setw(9) << "RMSE" << std::setw(9)
        << "MAPE%" << std::setw(8) << "n" << '\n';
    out << std::fixed;
    for (const auto& r : rows)
        out << std::left << std::setw(9) << r.model << std::setw(12) << r.dataset.substr(0, 11) << std::setw(11)
            << r.variant << std::setw(6) << r.seed << std::right << std::setprecision(4) << std::setw(9)
            << r.report.mae << std::setw(9) << r.report.rmse << std::setprecision(3) << std::setw(9) << r.report.mape
            << std::setw(8) << r.report.n << '\n';
    std::vector<std::pair<std::string, std::string>> keys;
    for (const auto& r : rows)
        if (std::find(keys.begin(), keys.end(), std::pair{r.model, r.variant}) == keys.end())
            keys.emplace_back(r.model, r.variant);
    std::set<std::uint64_t> seeds;
    for (const auto& r : rows) seeds.insert(r.seed);
    if (seeds.size() > 1) {
        out << "\nmean over " << seeds.size() << " seeds\n";
        for (const auto& [m, v] : keys)
            out << std::left << std::setw(9) << m << std::setw(11) << v << std::right << std::setprecision(4)
                << std::setw(9) << mean(m, v, &MetricReport::mae) << std::setw(9) << mean(m, v, &MetricReport::rmse)
                << std::setprecision(3) << std::setw(9) << mean(m, v, &MetricReport::mape) << '\n';
    }
    return out.str();
}

json ResultsTable::to_json() const {
    json rows_j = json::array();
    for (const auto& r : rows)
        rows_j.push_back({{"model", r.model},
                          {"dataset", r.dataset},
                          {"variant", r.variant},
                          {"seed", r.seed},
                          {"mae", r.report.mae},
                          {"rmse", r.report.rmse},
                          {"mape", r.report.mape},
                          {"n", r.report.n},
                          {"mape_excluded", r.report.mape_excluded},
                          {"seconds", r.seconds},
                          {"metadata", r.metadata}});
    return {{"config_hash", config_hash}, {"rows", rows_j}};
}

double ResultsTable::mean(const std::string& model, const std::string& variant, double MetricReport::*field) const {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : rows)
        if (r.model == model && r.variant == variant) {
            sum += r.report.*field;
            ++n;
        }
    return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

// Experiments ----------------------------------------------------------------------

std::vector<Variant> ablation_variants() {
    return {{"full", {true, true, true}, true},
            {"w/o Norm", {false, true, true}, true},
            {"w/o GDC", {true, false, true}, true},
            {"w/o SD", {true, true, false}, true}};
}

std::vector<Variant> tide_variants() {
    return {{"with tide", {true, true, true}, true}, {"no tide", {true, true, true}, false}};
}

namespace {

struct Dataset {
    std::string name;
    TrajectorySet set;
    Timestamp origin{};
    std::optional<tide::TideSeries> tide;
};

Dataset load_dataset(const ExperimentConfig& cfg) {
    Dataset d;
    if (cfg.dataset == "synthetic") {
        auto s = generate_synthetic(cfg.synthetic);
        d.name = "synthetic";
        d.set = std::move(s.set);
        d.origin = cfg.synthetic.start;
        if (cfg.synthetic.with_tide) d.tide = synthetic_tide_series(cfg.synthetic);
        return d;
    }
    std::ifstream in(cfg.dataset);
    if (!in) throw Error(ErrorCode::IoError, "cannot open dataset '" + cfg.dataset + "'");
    d.set = parse_trajectories(in).set;
    d.name = std::filesystem::path(cfg.dataset).stem().string();
    d.origin = d.set.records.front().timestamp;
    for (const auto& r : d.set.records) d.origin = std::min(d.origin, r.timestamp);
    return d;
}

/// Observed rows only.
std::pair<std::vector<double>, std::vector<double>> observed(const Eigen::VectorXd& s, const Eigen::VectorXd& yhat) {
    std::vector<double> y, p;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (std::isfinite(s[i])) {
            y.push_back(s[i]);
            p.push_back(yhat[i]);
        }
    return {y, p};
}

std::string slug(std::string s) {
    for (auto& c : s)
        if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
    return s;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
}

}  // namespace

ResultsTable run_experiment(const ExperimentConfig& cfg, const std::vector<Variant>& variants) {
    const auto data = load_dataset(cfg);
    ResultsTable table;
    table.config_hash = config_hash(cfg);
    std::filesystem::path run_dir;
    if (!cfg.output_dir.empty()) {
        run_dir = std::filesystem::path(cfg.output_dir) / table.config_hash;
        std::filesystem::create_directories(run_dir);
        write_text(run_dir / "config.json", to_json(cfg).dump(2) + "\n");
    }
    for (const auto seed : cfg.seeds) {
        const auto split = split_trajectories(data.set, cfg.split, seed);
        const auto train_set = data.set.subset(split.train_ids);
        const auto val_set = data.set.subset(split.val_ids);
        const auto test_set = data.set.subset(split.test_ids);
        for (const auto& variant : variants) {
            baselines::ImputerOptions o = cfg.options;
            o.features.time_origin = data.origin;
            o.features.use_tide = variant.use_tide;
            o.train.flags = variant.flags;
            o.train.seed = seed;
            o.train.arch.in_dim = o.features.width();
            o.neural.seed = seed;
            o.kriging.seed = seed;
            o.gwr.seed = seed;
            const auto tr = dan::build_features(train_set, o.features);
            const auto va = dan::build_features(val_set, o.features);
            const auto te = dan::build_features(test_set, o.features);
            const bool has_val = va.size() > 0;
            for (const auto& kind : cfg.models) {
                const std::string context = "model " + kind + ", variant " + variant.name + ", seed " + std::to_string(seed);
                ResultRow row{kind, data.name, variant.name, seed, {}, 0.0, {}};
                try {
                    const auto t0 = std::chrono::steady_clock::now();
                    auto model = baselines::make_imputer(kind, o);
                    model->fit(tr, has_val ? &va : nullptr);
                    const auto yhat = model->predict(te);
                    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                    const auto [y, p] = observed(te.s, yhat);
                    row.report = metrics(y, p);
                    row.metadata = model->metadata();
                    if (!run_dir.empty() && model->dan_result()) {
                        checkpoint::Checkpoint c;
                        c.model = model->dan_result()->model;
                        c.train = kind == "gan" ? baselines::vanilla_gan_config(o.train) : o.train;
                        c.region = checkpoint::region_of(data.set, 0.05);
                        if (variant.use_tide) c.tide = data.tide;
                        c.metadata = {{"dataset", data.name}, {"variant", variant.name}, {"seed", seed},
                                      {"experiment", table.config_hash}};
                        const auto name = kind + "_" + slug(variant.name) + "_seed" + std::to_string(seed) + ".ckpt";
                        checkpoint::save(c, (run_dir / name).string());
                        row.metadata["checkpoint"] = name;
                    }
                } catch (const Error& e) {
                    throw Error(e.code(), context + ": " + e.detail());
                }
                table.rows.push_back(std::move(row));
            }
        }
    }
    if (!run_dir.empty()) {
        write_text(run_dir / "metrics.json", table.to_json().dump(2) + "\n");
        write_text(run_dir / "table.csv", table.to_csv());
        write_text(run_dir / "table.txt", table.to_text());
    }
    return table;
}

ResultsTable run_experiment(const ExperimentConfig& cfg) {
    return run_experiment(cfg, {{"full", cfg.flags, cfg.use_tide}});
}

}  // namespace oasis::eval
