// oasis: command-line front end for ingestion, training, tides, baselines,
// evaluation, plotting and serving.

#include "oasis/checkpoint.hpp"
#include "oasis/csv.hpp"
#include "oasis/error.hpp"
#include "oasis/eval.hpp"
#include "oasis/serve.hpp"
#include "oasis/synthetic.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

using namespace oasis;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), {}};
}

TrajectorySet read_trajectories(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
    auto parsed = parse_trajectories(in);
    for (const auto& r : parsed.rejected)
        std::cerr << "warning: " << path << " row " << r.row << ": " << r.reason << "\n";
    return std::move(parsed.set);
}

Timestamp parse_time(const std::string& s) {
    auto t = parse_iso8601(s);
    if (!t) throw Error(ErrorCode::MalformedInput, "unparseable timestamp '" + s + "'");
    return *t;
}

/// "auto", "auto:U,V" or "lat_min,lat_max,lon_min,lon_max,U,V[,step_seconds]".
GridSpec parse_grid(const std::string& spec, const TrajectorySet& set) {
    if (spec == "auto") return default_grid(set);
    if (spec.rfind("auto:", 0) == 0) {
        auto f = csv::split_line(spec.substr(5));
        if (f.size() != 2) throw Error(ErrorCode::InvalidConfig, "grid 'auto:U,V' expects two sizes");
        return default_grid(set, std::stoi(f[0]), std::stoi(f[1]));
    }
    auto f = csv::split_line(spec);
    if (f.size() != 6 && f.size() != 7)
        throw Error(ErrorCode::InvalidConfig, "grid expects lat_min,lat_max,lon_min,lon_max,U,V[,step_seconds]");
    auto g = default_grid(set);
    std::vector<double> v;
    for (const auto& x : f) {
        auto d = csv::parse_double(x);
        if (!d) throw Error(ErrorCode::InvalidConfig, "bad grid value '" + x + "'");
        v.push_back(*d);
    }
    const auto end = g.time_origin + std::chrono::seconds(g.time_step * g.T_data);
    g.lat_min = v[0];
    g.lat_max = v[1];
    g.lon_min = v[2];
    g.lon_max = v[3];
    g.U = static_cast<int>(v[4]);
    g.V = static_cast<int>(v[5]);
    if (f.size() == 7) {
        g.time_step = static_cast<std::int64_t>(v[6]);
        if (g.time_step <= 0) throw Error(ErrorCode::InvalidConfig, "time step must be positive");
        const auto span = to_epoch_seconds(end) - to_epoch_seconds(g.time_origin);
        g.T_data = static_cast<int>((span + g.time_step - 1) / g.time_step);
    }
    return g;
}

/// Fits a daily tide series to the (timestamp, tide) pairs already on the records.
std::optional<tide::TideSeries> series_from_covariate(const TrajectorySet& set, const std::string& channel) {
    std::map<Timestamp, double> by_time;
    for (const auto& r : set.records) {
        auto it = r.covariates.find(channel);
        if (it == r.covariates.end()) return std::nullopt;
        by_time[r.timestamp] = it->second;
    }
    std::vector<tide::TideEvent> events;
    for (const auto& [t, h] : by_time) events.push_back({t, h});
    try {
        return tide::fit_series(events, tide::FitMode::Daily);
    } catch (const Error& e) {
        std::cerr << "warning: no tide series stored: " << e.what() << "\n";
        return std::nullopt;
    }
}

std::shared_ptr<tide::NoaaClient> noaa_client(const std::string& fixture) {
    if (!fixture.empty()) return std::make_shared<tide::FixtureClient>(fixture);
    return std::make_shared<tide::HttpNoaaClient>();
}

void print_table(const eval::ResultsTable& t, const std::string& out_dir) {
    std::cout << t.to_text();
    if (!out_dir.empty()) std::cout << "\nartifacts: " << out_dir << "/" << t.config_hash << "\n";
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
    std::vector<std::uint64_t> out;
    for (const auto& f : csv::split_line(s)) out.push_back(std::stoull(f));
    if (out.empty()) throw Error(ErrorCode::InvalidConfig, "no seeds given");
    return out;
}

eval::ExperimentConfig load_experiment(const std::string& path, const std::string& seeds, const std::string& out_dir) {
    auto cfg = path.empty() ? eval::ExperimentConfig{} : eval::experiment_config_from_json(read_file(path));
    if (!seeds.empty()) cfg.seeds = parse_seeds(seeds);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (cfg.output_dir.empty()) cfg.output_dir = "runs";
    return cfg;
}

std::atomic<serve::Server*> g_server{nullptr};

void on_signal(int) {
    if (auto* s = g_server.load()) s->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"OASIS salinity imputation"};
    app.require_subcommand(1);

    // ingest
    std::string in_path, out_path, grid_spec = "auto", channels = "salinity", csv_out;
    auto* ingest = app.add_subcommand("ingest", "Rasterize a drifter table into an observation tensor");
    ingest->add_option("--input", in_path, "Drifter CSV")->required();
    ingest->add_option("--grid", grid_spec, "auto | auto:U,V | lat_min,lat_max,lon_min,lon_max,U,V[,step_s]");
    ingest->add_option("--channels", channels, "Comma-separated channels");
    ingest->add_option("--out", out_path, "Tensor file")->required();
    ingest->add_option("--csv", csv_out, "Also export the tensor as delimited text");

    // synth
    std::string config_path;
    std::optional<std::uint64_t> synth_seed;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic drifter table");
    synth->add_option("--config", config_path, "Synthetic config JSON");
    synth->add_option("--seed", synth_seed);
    synth->add_option("--out", out_path, "Output CSV")->required();

    // train
    std::string data_path;
    std::vector<std::string> ablate;
    bool no_tide = false;
    std::uint64_t split_seed = 42;
    auto* train = app.add_subcommand("train", "Train the diffusion-adversarial model");
    train->add_option("--data", data_path, "Drifter CSV")->required();
    train->add_option("--config", config_path, "Training config JSON");
    train->add_option("--out", out_path, "Checkpoint path")->required();
    train->add_option("--ablate", ablate, "Disable norm, gdc or sd")->check(CLI::IsMember({"norm", "gdc", "sd"}));
    train->add_flag("--no-tide", no_tide, "Train without the tide covariate");
    train->add_option("--split-seed", split_seed, "Trajectory split seed");

    // tide
    std::string station = "8722212", date, fixture, fit_mode = "daily";
    bool free_omega = false;
    int samples = 25;
    auto* tide_cmd = app.add_subcommand("tide", "Fetch NOAA predictions and fit a sinusoid");
    tide_cmd->add_option("--station", station);
    tide_cmd->add_option("--date", date, "YYYY-MM-DD")->required();
    tide_cmd->add_option("--fixture", fixture, "Recorded response directory instead of the network");
    tide_cmd->add_option("--mode", fit_mode)->check(CLI::IsMember({"daily", "monthly"}));
    tide_cmd->add_flag("--free-omega", free_omega, "Search the frequency instead of fixing the semidiurnal period");
    tide_cmd->add_option("--samples", samples, "Curve samples over the window");

    // baseline
    std::string kind = "kriging", queries;
    auto* baseline = app.add_subcommand("baseline", "Fit a reference imputer and predict query rows");
    baseline->add_option("--kind", kind)->check(CLI::IsMember(baselines::imputer_kinds()));
    baseline->add_option("--data", data_path, "Training drifter CSV")->required();
    baseline->add_option("--queries", queries, "Query drifter CSV (salinity optional)")->required();
    baseline->add_option("--config", config_path, "Experiment-style config JSON for hyperparameters");
    baseline->add_option("--out", out_path, "Output CSV")->required();

    // eval / ablate
    std::string seeds, out_dir;
    auto* evalc = app.add_subcommand("eval", "Score every configured model on the test split");
    evalc->add_option("--config", config_path, "Experiment config JSON");
    evalc->add_option("--seeds", seeds, "Comma-separated seed sweep");
    evalc->add_option("--out-dir", out_dir, "Artifact root (default runs)");
    bool with_tide_cmp = false;
    auto* ablatec = app.add_subcommand("ablate", "Ablation sweep of the oasis model");
    ablatec->add_option("--config", config_path, "Experiment config JSON");
    ablatec->add_option("--seeds", seeds, "Comma-separated seed sweep");
    ablatec->add_option("--out-dir", out_dir, "Artifact root (default runs)");
    ablatec->add_flag("--tide", with_tide_cmp, "Also compare with and without the tide covariate");

    // plot
    std::string ckpt_path, time_str;
    std::optional<double> tide_value;
    double obs_window_hours = 3.0;
    int width = 240, height = 240;
    auto* plot = app.add_subcommand("plot", "Render the imputed field at one time");
    plot->add_option("--ckpt", ckpt_path)->required();
    plot->add_option("--time", time_str, "ISO-8601 UTC")->required();
    plot->add_option("--out", out_path, "PNG path")->required();
    plot->add_option("--data", data_path, "Overlay observations from this drifter CSV");
    plot->add_option("--window-hours", obs_window_hours, "Observation overlay half-width");
    plot->add_option("--tide", tide_value, "Tide height instead of the checkpoint series");
    plot->add_option("--width", width);
    plot->add_option("--height", height);

    // serve
    int port = 8080;
    std::string host = "127.0.0.1", static_dir;
    bool live_noaa = false;
    auto* servec = app.add_subcommand("serve", "Serve the HTTP imputation API");
    servec->add_option("--ckpt", ckpt_path)->required();
    servec->add_option("--port", port);
    servec->add_option("--host", host);
    servec->add_option("--fixture", fixture, "Recorded NOAA responses for tide lookups");
    servec->add_flag("--live-noaa", live_noaa, "Query NOAA over the network for tide lookups");
    servec->add_option("--station", station);
    servec->add_option("--static", static_dir, "Directory of web client files");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            auto set = read_trajectories(in_path);
            auto grid = parse_grid(grid_spec, set);
            auto raster = rasterize(set, grid, csv::split_line(channels));
            std::ofstream out(out_path, std::ios::binary);
            write_tensor(out, raster.tensor);
            if (!out) throw Error(ErrorCode::IoError, "cannot write '" + out_path + "'");
            if (!csv_out.empty()) {
                std::ofstream c(csv_out);
                export_tensor_csv(c, raster.tensor);
            }
            std::size_t observed = 0;
            for (auto m : raster.tensor.M) observed += m;
            std::cout << "tensor " << raster.tensor.T << "x" << raster.tensor.U << "x" << raster.tensor.V << "x"
                      << raster.tensor.D << ", " << observed << " observed cells, " << raster.skipped
                      << " records outside the grid\n";
        } else if (*synth) {
            auto cfg = config_path.empty() ? SyntheticConfig{} : synthetic_config_from_json(read_file(config_path));
            if (synth_seed) cfg.seed = *synth_seed;
            auto data = generate_synthetic(cfg);
            std::ofstream out(out_path);
            write_trajectories(out, data.set);
            if (!out) throw Error(ErrorCode::IoError, "cannot write '" + out_path + "'");
            std::cout << data.set.records.size() << " records in " << data.set.trajectory_ids.size()
                      << " trajectories\n";
        } else if (*train) {
            auto set = read_trajectories(data_path);
            auto cfg = config_path.empty() ? dan::TrainConfig{} : dan::train_config_from_json(read_file(config_path));
            for (const auto& a : ablate) {
                if (a == "norm") cfg.flags.use_norm = false;
                if (a == "gdc") cfg.flags.use_gdc = false;
                if (a == "sd") cfg.flags.use_sd = false;
            }
            dan::FeatureConfig f;
            f.use_tide = !no_tide;
            f.time_origin = set.records.front().timestamp;
            for (const auto& r : set.records) f.time_origin = std::min(f.time_origin, r.timestamp);
            const auto split = split_trajectories(set, {}, split_seed);
            const auto tr = dan::build_features(set.subset(split.train_ids), f);
            const auto va = dan::build_features(set.subset(split.val_ids), f);
            const auto te = dan::build_features(set.subset(split.test_ids), f);
            cfg.on_batch = nullptr;
            const auto schedule = scheduler::make_schedule(cfg.T_diff, cfg.beta0, cfg.betaT);
            auto result = dan::train(tr, va.size() ? &va : nullptr, f, cfg, schedule);
            for (const auto& e : result.history)
                std::cout << "epoch " << std::setw(3) << e.epoch << "  d " << std::fixed << std::setprecision(4)
                          << e.d_loss << "  g " << e.g_loss << "  mse " << e.mse << "  val_mae " << e.val_mae << "\n";
            std::cout << "best epoch " << result.best_epoch << "\n";
            if (te.size()) {
                const auto yhat = dan::predict(result.model, te);
                std::vector<double> y, p;
                for (Eigen::Index i = 0; i < te.s.size(); ++i)
                    if (std::isfinite(te.s[i])) {
                        y.push_back(te.s[i]);
                        p.push_back(yhat[i]);
                    }
                if (!y.empty()) {
                    auto m = eval::metrics(y, p);
                    std::cout << "test MAE " << m.mae << "  RMSE " << m.rmse << "  MAPE " << m.mape << "%\n";
                }
            }
            checkpoint::Checkpoint ck;
            ck.model = result.model;
            ck.train = cfg;
            ck.region = checkpoint::region_of(set, 0.05);
            if (f.use_tide) ck.tide = series_from_covariate(set, f.tide_channel);
            ck.metadata = {{"data", data_path}, {"split_seed", split_seed}, {"best_epoch", result.best_epoch}};
            checkpoint::save(ck, out_path);
            std::cout << "saved " << out_path << " (version " << checkpoint::version_of(read_file(out_path)) << ")\n";
        } else if (*tide_cmd) {
            const auto day = parse_time(date + "T00:00:00Z");
            const auto mode = tide::parse_fit_mode(fit_mode);
            tide::DateRange range{day, day};
            if (mode == tide::FitMode::Monthly) {
                range.begin = floor_to_month(day);
                range.end = floor_to_month(range.begin + std::chrono::days{32}) - std::chrono::days{1};
            }
            auto client = noaa_client(fixture);
            auto events = tide::fetch_noaa_predictions(*client, station, range);
            tide::FitOptions opt;
            opt.omega_mode = free_omega ? tide::OmegaMode::Free : tide::OmegaMode::Fixed;
            auto m = tide::fit_sinusoid(events, mode, opt);
            std::cout << std::setprecision(6) << "station " << station << "  events " << m.events_used << "\n"
                      << "A " << m.A << " m  omega " << m.omega << " rad/h  (period " << m.period_hours()
                      << " h)  phi " << m.phi << "  c " << m.c << " m  rmse " << m.rmse_fit << " m\n"
                      << "window " << format_iso8601(m.fit_start) << " .. " << format_iso8601(m.fit_end) << "\n"
                      << "time,height\n";
            const double span = hours_between(m.fit_start, m.fit_end);
            for (int i = 0; i < samples; ++i) {
                const double h = samples > 1 ? span * i / (samples - 1) : 0.0;
                const auto t = m.fit_start + std::chrono::seconds(static_cast<long>(std::lround(h * 3600)));
                std::cout << format_iso8601(t) << "," << csv::format_double(tide::predict_tide(m, t).height) << "\n";
            }
        } else if (*baseline) {
            auto cfg = config_path.empty() ? eval::ExperimentConfig{}
                                           : eval::experiment_config_from_json(read_file(config_path));
            auto train_set = read_trajectories(data_path);
            auto query_set = read_trajectories(queries);
            auto o = cfg.options;
            o.features.use_tide = cfg.use_tide;
            o.features.time_origin = train_set.records.front().timestamp;
            for (const auto& r : train_set.records) o.features.time_origin = std::min(o.features.time_origin, r.timestamp);
            o.train.flags = cfg.flags;
            const auto tr = dan::build_features(train_set, o.features);
            const auto q = dan::build_features(query_set, o.features);
            auto model = baselines::make_imputer(kind, o);
            model->fit(tr, nullptr);
            const auto yhat = model->predict(q);
            std::ofstream out(out_path);
            out << "trajectory_id,timestamp,lat,lon,salinity_hat\n";
            std::size_t row = 0;
            for (std::size_t t = 0; t < q.trajectories.size(); ++t)
                for (Eigen::Index i = q.trajectories[t].start; i < q.trajectories[t].start + q.trajectories[t].length;
                     ++i, ++row)
                    out << q.trajectory_ids[t] << "," << format_iso8601(q.timestamps[static_cast<std::size_t>(i)])
                        << "," << csv::format_double(q.X(i, 3)) << "," << csv::format_double(q.X(i, 4)) << ","
                        << csv::format_double(yhat[i]) << "\n";
            if (!out) throw Error(ErrorCode::IoError, "cannot write '" + out_path + "'");
            std::cout << kind << ": " << row << " predictions, " << model->metadata().dump() << "\n";
        } else if (*evalc) {
            auto cfg = load_experiment(config_path, seeds, out_dir);
            print_table(eval::run_experiment(cfg), cfg.output_dir);
        } else if (*ablatec) {
            auto cfg = load_experiment(config_path, seeds, out_dir);
            cfg.models = {"oasis"};
            auto variants = eval::ablation_variants();
            if (with_tide_cmp) variants.push_back({"no tide", {true, true, true}, false});
            print_table(eval::run_experiment(cfg, variants), cfg.output_dir);
        } else if (*plot) {
            const auto ck = checkpoint::load(ckpt_path);
            eval::FieldPlotSpec spec;
            spec.lat_min = ck.region.lat_min;
            spec.lat_max = ck.region.lat_max;
            spec.lon_min = ck.region.lon_min;
            spec.lon_max = ck.region.lon_max;
            spec.width = width;
            spec.height = height;
            spec.time = parse_time(time_str);
            if (tide_value) {
                spec.tide = *tide_value;
            } else if (ck.model.features.use_tide) {
                if (!ck.tide) throw Error(ErrorCode::TideUnavailable, "checkpoint has no tide series; pass --tide");
                spec.tide = ck.tide->predict(spec.time).height;
            }
            if (!data_path.empty()) {
                const auto set = read_trajectories(data_path);
                for (const auto& r : set.records)
                    if (r.has_salinity() && std::abs(hours_between(spec.time, r.timestamp)) <= obs_window_hours)
                        spec.observations.push_back({r.lat, r.lon, r.salinity});
            }
            auto p = eval::emit_field_plot(&ck.model, spec, out_path);
            std::cout << "wrote " << out_path << "  scale " << p.vmin << " .. " << p.vmax << " psu, "
                      << spec.observations.size() << " observations\n";
        } else if (*servec) {
            auto registry = std::make_shared<serve::ModelRegistry>(serve::ServingModel::load(ckpt_path));
            serve::ServerConfig cfg;
            cfg.host = host;
            cfg.port = port;
            cfg.static_dir = static_dir;
            cfg = serve::config_from_env(cfg);
            std::shared_ptr<serve::NoaaTideSource> noaa;
            if (!fixture.empty() || live_noaa)
                noaa = std::make_shared<serve::NoaaTideSource>(noaa_client(fixture), station);
            serve::Server server(cfg, registry, noaa);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cout << "serving " << registry->current()->version << " on " << cfg.host << ":" << cfg.port
                      << (cfg.admin_token.empty() ? " (model swap disabled)" : "") << std::endl;
            server.run();
            g_server = nullptr;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
