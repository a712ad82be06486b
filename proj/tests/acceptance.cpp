// Acceptance run: one PASS/FAIL verdict line per primary criterion, with the
// individual checks listed beneath it. Exit status is nonzero on any FAIL.

#include "gradcheck.hpp"
#include "oasis/checkpoint.hpp"
#include "oasis/csv.hpp"
#include "oasis/error.hpp"
#include "oasis/eval.hpp"
#include "oasis/gdc.hpp"
#include "oasis/revin.hpp"
#include "oasis/scheduler.hpp"
#include "oasis/serve.hpp"
#include "oasis/synthetic.hpp"

#include "httplib.h"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <thread>

using namespace oasis;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances -------------------------------------------------------------------
constexpr double kRevinTol = 1e-6;
constexpr double kSoftmaxTol = 1e-6;
constexpr double kScheduleTol = 1e-12;
constexpr double kLn2Tol = 1e-6;
constexpr double kGLossTol = 1e-9;
constexpr double kRmseExampleTol = 1e-4;
constexpr double kGradTol = 1e-3;
constexpr double kMseRatio = 0.5;
constexpr double kTideParamRel = 0.02;
constexpr double kTideRmse = 0.02;
constexpr double kKrigingTol = 1e-6;
constexpr double kRoundTripTol = 1e-9;
constexpr double kEquationBudget = 30.0;
constexpr double kGradientBudget = 120.0;
constexpr double kTrainingBudget = 600.0;
constexpr int kConcurrentRequests = 1000;

class Criterion {
public:
    explicit Criterion(std::string name) : name_(std::move(name)), start_(Clock::now()) {}

    bool check(bool ok, const std::string& what) {
        lines_.push_back(std::string(ok ? "    ok    " : "    FAIL  ") + what);
        pass_ = pass_ && ok;
        return ok;
    }

    double elapsed() const { return std::chrono::duration<double>(Clock::now() - start_).count(); }

    bool finish(double budget_seconds = 0.0) {
        if (budget_seconds > 0) check(elapsed() <= budget_seconds, fmt("runtime %.1f s <= %.0f s", elapsed(), budget_seconds));
        std::printf("%s  %s (%.1f s)\n", pass_ ? "PASS" : "FAIL", name_.c_str(), elapsed());
        for (const auto& l : lines_) std::printf("%s\n", l.c_str());
        std::fflush(stdout);
        return pass_;
    }

    template <class... A>
    static std::string fmt(const char* f, A... a) {
        char buf[512];
        std::snprintf(buf, sizeof buf, f, a...);
        return buf;
    }

private:
    std::string name_;
    Clock::time_point start_;
    std::vector<std::string> lines_;
    bool pass_ = true;
};

template <class F>
void guarded(Criterion& c, const char* what, F&& f) {
    try {
        f();
    } catch (const std::exception& e) {
        c.check(false, std::string(what) + " threw: " + e.what());
    }
}

nn::Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double mu = 0.0, double sd = 1.0) {
    nn::Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(mu, sd);
    return m;
}

// Equation exactness -----------------------------------------------------------------

bool equation_suite() {
    Criterion c("Equation-exactness suite");
    guarded(c, "revin", [&] {
        Rng rng(2024);
        double worst = 0.0;
        for (int k = 0; k < 1000; ++k) {
            const auto rows = 1 + static_cast<Eigen::Index>(rng.below(24));
            const auto cols = 1 + static_cast<Eigen::Index>(rng.below(5));
            auto x = random_matrix(rows, cols, rng, rng.normal(0.0, 20.0), 0.01 + 5.0 * rng.uniform());
            auto st = revin::fit_state(x);
            for (Eigen::Index j = 0; j < cols; ++j) {
                st.gamma[j] = 0.5 + rng.uniform();
                st.beta[j] = rng.normal();
            }
            worst = std::max(worst, (revin::denormalize(revin::normalize(x, st), st) - x).cwiseAbs().maxCoeff());
        }
        c.check(worst <= kRevinTol, Criterion::fmt("RevIN round trip over 1000 arrays: max error %.2e", worst));
    });
    guarded(c, "attention", [&] {
        Rng rng(5);
        double worst = 0.0;
        for (int k = 0; k < 50; ++k) {
            gdc::SequenceBatch x{2, 5, random_matrix(10, 8, rng)};
            auto qkv = gdc::project_qkv(x, random_matrix(8, 8, rng), random_matrix(8, 8, rng), random_matrix(8, 8, rng), 2);
            for (const auto& w : gdc::attention(qkv).weights)
                worst = std::max(worst, (w.rowwise().sum().array() - 1.0).abs().maxCoeff());
        }
        c.check(worst <= kSoftmaxTol, Criterion::fmt("attention rows sum to 1: max deviation %.2e", worst));
        gdc::SequenceBatch one{3, 1, random_matrix(3, 8, rng)};
        auto qkv = gdc::project_qkv(one, random_matrix(8, 8, rng), random_matrix(8, 8, rng), random_matrix(8, 8, rng), 4);
        c.check(gdc::attention(qkv).output == qkv.V, "N=1 attention output equals V exactly");
    });
    guarded(c, "schedule", [&] {
        const auto s = scheduler::make_schedule(50, 1e-4, 0.02);
        c.check(std::abs(s.beta_at(50) - 0.02) <= kScheduleTol, Criterion::fmt("beta(T) = betaT: %.3e off", std::abs(s.beta_at(50) - 0.02)));
        const double mid = (1e-4 + 0.02) / 2;
        c.check(std::abs(s.beta_at(25) - mid) <= kScheduleTol, Criterion::fmt("beta(T/2) = midpoint: %.3e off", std::abs(s.beta_at(25) - mid)));
        double rec = std::abs(s.alpha_bar_at(1) - s.alpha_at(1));
        for (int t = 2; t <= 50; ++t) rec = std::max(rec, std::abs(s.alpha_bar_at(t) - s.alpha_bar_at(t - 1) * s.alpha_at(t)));
        c.check(rec <= kScheduleTol, Criterion::fmt("alpha_bar recurrence: %.3e off", rec));
        Rng rng(9);
        auto x = random_matrix(7, 3, rng, 30.0, 4.0);
        double dev = 0.0;
        for (int t = 1; t <= 50; ++t)
            dev = std::max(dev, (scheduler::add_noise(x, t, nn::Matrix::Zero(7, 3), s) - std::sqrt(s.alpha_bar_at(t)) * x)
                                    .cwiseAbs()
                                    .maxCoeff());
        c.check(dev <= kScheduleTol, Criterion::fmt("zero-noise diffusion equals sqrt(alpha_bar) x: %.3e off", dev));
    });
    guarded(c, "losses", [&] {
        std::vector<double> half(16, 0.5);
        const double ld = dan::d_loss(half, half);
        c.check(std::abs(ld - std::log(2.0)) <= kLn2Tol, Criterion::fmt("L_D at 0.5 = %.9f (ln 2 = %.9f)", ld, std::log(2.0)));
        std::vector<double> s{1, 3}, sh{2, 2}, f{0.3, -1.2, 4.0};
        const double lg = dan::g_loss(s, sh, f, f);
        c.check(std::abs(lg - 1.0) <= kGLossTol, Criterion::fmt("g_loss worked example = %.12f", lg));
    });
    guarded(c, "metrics", [&] {
        std::vector<double> y{1, 2}, p{2, 4};
        auto m = eval::metrics(y, p);
        c.check(std::abs(m.mae - 1.5) <= 1e-12 && std::abs(m.rmse - 1.5811) <= kRmseExampleTol && std::abs(m.mape - 100.0) <= 1e-9,
                Criterion::fmt("metrics example: MAE %.4f RMSE %.4f MAPE %.2f%%", m.mae, m.rmse, m.mape));
    });
    return c.finish(kEquationBudget);
}

// Gradients ---------------------------------------------------------------------

bool gradient_suite() {
    Criterion c("Gradient suite");
    guarded(c, "normalize", [&] {
        Rng rng(8);
        auto x = random_matrix(4, 3, rng, 3.0, 2.0);
        auto st = revin::fit_state(x);
        st.gamma << 1.3, 0.8, 1.1;
        st.beta << 0.2, -0.5, 0.1;
        revin::RevinLayer layer(st);
        auto probe = random_matrix(4, 3, rng);
        auto loss = [&] { return nn::sum(nn::mul(layer.normalize(nn::constant(x)), nn::constant(probe))); };
        const double eg = gradcheck::max_relative_error(layer.gamma(), loss);
        const double eb = gradcheck::max_relative_error(layer.beta(), loss);
        c.check(eg <= kGradTol, Criterion::fmt("normalize d/dgamma relative error %.2e", eg));
        c.check(eb <= kGradTol, Criterion::fmt("normalize d/dbeta relative error %.2e", eb));
    });
    guarded(c, "attention", [&] {
        Rng rng(7);
        gdc::GdcBlock block({8, 2}, rng);
        auto x = random_matrix(4, 8, rng);
        auto probe = random_matrix(4, 8, rng);
        std::vector<nn::Segment> seg{{0, 4}};
        auto loss = [&] { return nn::sum(nn::mul(block.forward(nn::constant(x), seg, true), nn::constant(probe))); };
        const double e = gradcheck::max_relative_error(block.W_Q, loss);
        c.check(e <= kGradTol, Criterion::fmt("attention d/dW_Q relative error %.2e (d_model 8, N 4)", e));
    });
    guarded(c, "generator", [&] {
        SyntheticConfig sc;
        sc.trajectories = 1;
        sc.steps = 4;
        auto d = generate_synthetic(sc);
        dan::FeatureConfig f;
        f.time_origin = sc.start;
        auto fs_ = dan::build_features(d.set, f);
        dan::Architecture arch;
        arch.fe_hidden = {8};
        arch.attention = {8, 2};
        arch.d_hidden = {8, 4};
        arch.feature_tap = 1;
        nn::Matrix m(fs_.X.rows(), fs_.X.cols() + 1);
        m << fs_.X, fs_.s;
        Rng rng(13);
        auto g = dan::make_generator(arch, revin::fit_state(m), rng);
        auto D = dan::make_discriminator(arch, rng);
        dan::Flags flags{false, false, false};
        nn::Matrix target = (fs_.s.array() - fs_.s.mean()).matrix();
        nn::Matrix Xc = fs_.X;
        for (Eigen::Index j = 0; j < Xc.cols(); ++j) Xc.col(j).array() -= Xc.col(j).mean();
        std::vector<nn::Segment> singles;
        for (Eigen::Index i = 0; i < Xc.rows(); ++i) singles.push_back({i, 1});
        auto loss = [&] {
            auto y = dan::generator_forward(g, nn::constant(Xc), singles, flags);
            auto real = dan::discriminator_forward(D, nn::concat_cols({nn::constant(Xc), nn::constant(target)}));
            auto fake = dan::discriminator_forward(D, nn::concat_cols({nn::constant(Xc), y}));
            auto mse = nn::mean(nn::square(nn::sub(y, nn::constant(target))));
            auto fm = nn::mean(nn::abs(nn::sub(nn::constant(nn::mean_rows(real.features).value()), nn::mean_rows(fake.features))));
            return nn::add(mse, fm);
        };
        double worst = 0.0;
        for (auto p : {g.fe[0].weight, g.fe[0].bias, g.head.weight, g.head.bias})
            worst = std::max(worst, gradcheck::max_relative_error(p, loss));
        c.check(worst <= kGradTol, Criterion::fmt("g_loss through a 2-layer generator: max relative error %.2e", worst));
    });
    return c.finish(kGradientBudget);
}

// Desk-scale training -------------------------------------------------------------

bool training_suite() {
    Criterion c("Desk-scale training run");
    guarded(c, "training", [&] {
        eval::ExperimentConfig cfg;  // default synthetic set: 20 trajectories x 250 steps
        cfg.seeds = {42, 43, 44};
        cfg.models = {"oasis", "gan", "kriging"};
        const auto head = eval::run_experiment(cfg);
        cfg.models = {"oasis"};
        auto variants = eval::ablation_variants();
        variants.erase(variants.begin());
        variants.push_back(eval::tide_variants()[1]);
        const auto rest = eval::run_experiment(cfg, variants);

        const std::size_t points = generate_synthetic(cfg.synthetic).set.records.size();
        std::printf("    training data: %zu synthetic points\n", points);
        auto mae = [&](const eval::ResultsTable& t, const std::string& model, const std::string& variant, std::uint64_t seed) {
            for (const auto& r : t.rows)
                if (r.model == model && r.variant == variant && r.seed == seed) return r.report.mae;
            throw Error(ErrorCode::EmptyInput, "missing row " + model + "/" + variant);
        };
        int mse_ok = 0, vs_gan = 0, vs_krig = 0, tide_wins = 0;
        std::map<std::string, int> ablation_wins;
        for (auto seed : cfg.seeds) {
            const auto& meta = [&]() -> const nlohmann::json& {
                for (const auto& r : head.rows)
                    if (r.model == "oasis" && r.seed == seed) return r.metadata;
                throw Error(ErrorCode::EmptyInput, "missing oasis row");
            }();
            const double first = meta["mse_first_epoch"], last = meta["mse_final_epoch"];
            if (last < kMseRatio * first) ++mse_ok;
            const double full = mae(head, "oasis", "full", seed);
            const double gan = mae(head, "gan", "full", seed);
            const double krig = mae(head, "kriging", "full", seed);
            vs_gan += full <= gan;
            vs_krig += full <= krig;
            std::printf("    seed %llu: OASIS %.4f  GAN %.4f  Kriging %.4f  | w/o Norm %.4f  w/o GDC %.4f  w/o SD %.4f  no tide %.4f  | MSE epoch 1 %.4f -> final %.4f\n",
                        static_cast<unsigned long long>(seed), full, gan, krig, mae(rest, "oasis", "w/o Norm", seed),
                        mae(rest, "oasis", "w/o GDC", seed), mae(rest, "oasis", "w/o SD", seed),
                        mae(rest, "oasis", "no tide", seed), first, last);
            for (const auto& v : {"w/o Norm", "w/o GDC", "w/o SD"}) ablation_wins[v] += full <= mae(rest, "oasis", v, seed);
            tide_wins += full < mae(rest, "oasis", "no tide", seed);
        }
        const int n = static_cast<int>(cfg.seeds.size()), majority = n / 2 + 1;
        c.check(mse_ok == n, Criterion::fmt("final-epoch MSE < 50%% of epoch 1 on %d/%d seeds", mse_ok, n));
        c.check(vs_gan >= majority, Criterion::fmt("OASIS <= GAN on %d/%d seeds", vs_gan, n));
        c.check(vs_krig >= majority, Criterion::fmt("OASIS <= Kriging on %d/%d seeds", vs_krig, n));
        for (const auto& [v, wins] : ablation_wins)
            c.check(wins >= majority, Criterion::fmt("full <= %s on %d/%d seeds", v.c_str(), wins, n));
        c.check(tide_wins >= majority, Criterion::fmt("with tide < without tide on %d/%d seeds", tide_wins, n));
    });
    return c.finish(kTrainingBudget);
}

// Tide recovery ----------------------------------------------------------------

bool tide_suite() {
    Criterion c("Tide recovery");
    guarded(c, "tide", [&] {
        const double A = 1.0, phi = 0.5, off = 2.0, omega = 2.0 * std::numbers::pi / tide::kSemidiurnalHours;
        const auto day0 = *parse_iso8601("2016-06-16T00:00:00Z");
        auto at = [&](double h) { return day0 + std::chrono::seconds(std::llround(h * 3600.0)); };
        auto truth = [&](Timestamp t) { return A * std::sin(omega * hours_between(day0, t) + phi) + off; };
        Rng rng(8722212);
        std::vector<tide::TideEvent> ev;
        for (double h : {0.8, 5.8, 10.8, 15.8, 20.8, 25.8, 30.8, 35.8}) ev.push_back({at(h), truth(at(h)) + 0.01 * rng.normal()});
        const auto m = tide::fit_sinusoid(ev, day0, day0 + std::chrono::days{2});
        c.check(std::abs(m.A - A) / A <= kTideParamRel, Criterion::fmt("A = %.5f (true 1.0)", m.A));
        c.check(std::abs(m.phi - phi) / phi <= kTideParamRel, Criterion::fmt("phi = %.5f (true 0.5)", m.phi));
        c.check(std::abs(m.c - off) / off <= kTideParamRel, Criterion::fmt("c = %.5f (true 2.0)", m.c));
        double se = 0.0;
        int n = 0;
        for (double h = 1.5; h < 44.0; h += 2.3, ++n) {
            const double d = tide::predict_tide(m, at(h)).height - truth(at(h));
            se += d * d;
        }
        const double rmse = std::sqrt(se / n);
        c.check(rmse <= kTideRmse, Criterion::fmt("held-out RMSE %.4f m over %d times", rmse, n));
    });
    return c.finish();
}

// Kriging oracle --------------------------------------------------------------------

bool kriging_suite() {
    Criterion c("Kriging oracle");
    guarded(c, "kriging", [&] {
        // ordinary kriging by hand: exponential covariance exp(-h), points at lon 0, 1, 2
        const long double x[3] = {0, 1, 2}, v[3] = {0, 1, 2}, q = 0.5L;
        long double M[4][5];
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) M[i][j] = std::exp(-std::fabs(x[i] - x[j]));
            M[i][3] = 1;
            M[i][4] = std::exp(-std::fabs(x[i] - q));
        }
        for (int j = 0; j < 3; ++j) M[3][j] = 1;
        M[3][3] = 0;
        M[3][4] = 1;
        for (int k = 0; k < 4; ++k) {
            int piv = k;
            for (int i = k + 1; i < 4; ++i)
                if (std::fabs(M[i][k]) > std::fabs(M[piv][k])) piv = i;
            std::swap(M[k], M[piv]);
            for (int i = 0; i < 4; ++i)
                if (i != k) {
                    const long double f = M[i][k] / M[k][k];
                    for (int j = k; j < 5; ++j) M[i][j] -= f * M[k][j];
                }
        }
        long double expected = 0;
        for (int i = 0; i < 3; ++i) expected += M[i][4] / M[i][i] * v[i];

        baselines::KrigingConfig kc;
        kc.variogram = baselines::Variogram{baselines::VariogramModel::Exponential, 0.0, 1.0, 1.0};
        auto model = baselines::KrigingModel::fit({{0, 0, 0}, {0, 1, 1}, {0, 2, 2}}, kc);
        const double got = model.predict(0, 0.5).value;
        c.check(std::abs(got - static_cast<double>(expected)) <= kKrigingTol,
                Criterion::fmt("3-point collinear prediction %.12f vs hand solve %.12f", got, static_cast<double>(expected)));
        double worst = 0.0;
        for (int i = 0; i < 3; ++i) worst = std::max(worst, std::abs(model.predict(0, i).value - i));
        Rng rng(31);
        std::vector<baselines::SpatialPoint> pts;
        for (int i = 0; i < 40; ++i) pts.push_back({rng.uniform(), rng.uniform(), rng.normal(35.0, 1.0)});
        auto big = baselines::KrigingModel::fit(pts, kc);
        for (const auto& p : pts) worst = std::max(worst, std::abs(big.predict(p.lat, p.lon).value - p.value));
        c.check(worst <= kKrigingTol, Criterion::fmt("exact at data points with nugget 0: max error %.2e", worst));
    });
    return c.finish();
}

// Service ----------------------------------------------------------------------

checkpoint::Checkpoint small_checkpoint(const SyntheticDataset& d, std::uint64_t seed) {
    dan::FeatureConfig f;
    f.time_origin = d.truth.config.start;
    auto fs_ = dan::build_features(d.set, f);
    dan::TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = seed;
    cfg.arch.fe_hidden = {16};
    cfg.arch.attention = {16, 2};
    cfg.arch.d_hidden = {16, 8};
    checkpoint::Checkpoint ck;
    ck.model = dan::train(fs_, nullptr, f, cfg, scheduler::make_schedule(cfg.T_diff, cfg.beta0, cfg.betaT)).model;
    ck.train = cfg;
    ck.region = checkpoint::region_of(d.set, 0.05);
    ck.tide = synthetic_tide_series(d.truth.config);
    return ck;
}

bool service_suite() {
    Criterion c("Service suite");
    const auto dir = fs::temp_directory_path() / ("oasis_acceptance_" + std::to_string(::getpid()));
    guarded(c, "service", [&] {
        fs::create_directories(dir);
        SyntheticConfig sc;
        sc.trajectories = 5;
        sc.steps = 60;
        const auto data = generate_synthetic(sc);
        const auto pa = (dir / "a.ckpt").string(), pb = (dir / "b.ckpt").string(), pbad = (dir / "bad.ckpt").string();
        const auto ca = small_checkpoint(data, 1);
        checkpoint::save(ca, pa);
        checkpoint::save(small_checkpoint(data, 2), pb);

        const auto in_memory = serve::ServingModel::from_checkpoint(ca);
        const auto loaded = serve::ServingModel::load(pa);
        Rng rng(77);
        std::vector<serve::ImputeRequest> probe;
        for (int i = 0; i < 100; ++i) {
            const auto& r = data.set.records[rng.below(data.set.records.size())];
            probe.push_back({r.timestamp + std::chrono::seconds(rng.below(1800)), r.lat + 0.001 * rng.normal(),
                             r.lon + 0.001 * rng.normal(), std::nullopt});
        }
        double worst = 0.0;
        for (const auto& q : probe)
            worst = std::max(worst, std::abs(serve::impute_point(q, *in_memory).salinity - serve::impute_point(q, *loaded).salinity));
        c.check(worst <= kRoundTripTol, Criterion::fmt("save/load round trip on a 100-point probe: max difference %.2e", worst));

        const auto& q0 = probe.front();
        const std::string one = "timestamp,lat,lon\n" + format_iso8601(q0.timestamp) + "," + csv::format_double(q0.lat) +
                                "," + csv::format_double(q0.lon) + "\n";
        const auto batch = serve::impute_batch(one, *loaded);
        c.check(batch.rows.size() == 1 && batch.rows[0].response &&
                    batch.rows[0].response->salinity == serve::impute_point(q0, *loaded).salinity,
                "batch of one equals the single-point response");

        auto registry = std::make_shared<serve::ModelRegistry>(loaded);
        const auto va = loaded->version;
        {
            std::ofstream bad(pbad, std::ios::binary);
            const auto text = checkpoint::serialize(ca);
            bad << text.substr(0, text.size() * 2 / 3);
        }
        bool rejected = false;
        try {
            registry->swap(pbad);
        } catch (const Error& e) {
            rejected = e.code() == ErrorCode::CorruptCheckpoint;
        }
        const double after = serve::impute_point(q0, *registry->current()).salinity;
        c.check(rejected && registry->current()->version == va && after == serve::impute_point(q0, *loaded).salinity,
                "corrupt swap is rejected and the old model keeps serving");

        const auto mb = serve::ServingModel::load(pb);
        std::map<std::string, std::vector<double>> expected;
        for (const auto& q : probe) {
            expected[va].push_back(serve::impute_point(q, *loaded).salinity);
            expected[mb->version].push_back(serve::impute_point(q, *mb).salinity);
        }
        serve::ServerConfig scfg;
        scfg.port = 0;
        scfg.admin_token = "acceptance";
        serve::Server server(scfg, registry);
        const int port = server.start();
        std::atomic<int> good{0}, bad{0}, swaps{0};
        std::set<std::string> seen;
        std::mutex mu;
        std::atomic<bool> done{false};
        std::thread swapper([&] {
            httplib::Client cli("127.0.0.1", port);
            httplib::Headers auth{{"X-Admin-Token", "acceptance"}};
            for (int k = 0; !done; ++k) {
                nlohmann::json body{{"path", k % 2 ? pa : pb}};
                auto r = cli.Post("/v1/model/swap", auth, body.dump(), "application/json");
                if (r && r->status == 200) ++swaps;
            }
        });
        std::vector<std::thread> workers;
        constexpr int kWorkers = 8;
        for (int w = 0; w < kWorkers; ++w)
            workers.emplace_back([&, w] {
                httplib::Client cli("127.0.0.1", port);
                for (int i = w; i < kConcurrentRequests; i += kWorkers) {
                    const auto k = static_cast<std::size_t>(i) % probe.size();
                    const auto& q = probe[k];
                    nlohmann::json body{{"timestamp", format_iso8601(q.timestamp)}, {"lat", q.lat}, {"lon", q.lon}};
                    auto r = cli.Post("/v1/impute", body.dump(), "application/json");
                    if (!r || r->status != 200) {
                        ++bad;
                        continue;
                    }
                    auto j = nlohmann::json::parse(r->body);
                    const auto v = j["model_version"].get<std::string>();
                    auto it = expected.find(v);
                    if (it != expected.end() && it->second[k] == j["salinity"].get<double>()) {
                        ++good;
                        std::lock_guard lock(mu);
                        seen.insert(v);
                    } else {
                        ++bad;
                    }
                }
            });
        for (auto& t : workers) t.join();
        done = true;
        swapper.join();
        server.stop();
        c.check(good == kConcurrentRequests && bad == 0,
                Criterion::fmt("%d concurrent requests during %d swaps: %d consistent, %d inconsistent (versions seen: %zu)",
                               kConcurrentRequests, swaps.load(), good.load(), bad.load(), seen.size()));
    });
    fs::remove_all(dir);
    return c.finish();
}

}  // namespace

int main(int argc, char** argv) {
    // "--skip-training" leaves out the long training criterion (marked SKIP).
    bool skip_training = argc > 1 && std::string(argv[1]) == "--skip-training";
    int failed = 0;
    failed += !equation_suite();
    failed += !gradient_suite();
    if (skip_training) {
        std::printf("SKIP  Desk-scale training run\n");
    } else {
        failed += !training_suite();
    }
    failed += !tide_suite();
    failed += !kriging_suite();
    failed += !service_suite();
    std::printf("%d criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
