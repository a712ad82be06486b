#include "doctest.h"

#include "oasis/baselines.hpp"
#include "oasis/error.hpp"
#include "oasis/random.hpp"
#include "oasis/synthetic.hpp"

#include <cmath>

using namespace oasis;
using namespace oasis::baselines;

namespace {

KrigingConfig fixed_variogram(double sill, double range, double nugget = 0.0) {
    KrigingConfig c;
    c.variogram = Variogram{VariogramModel::Exponential, nugget, sill, range};
    return c;
}

std::vector<SpatialPoint> random_points(Rng& rng, int n, double spread = 1.0) {
    std::vector<SpatialPoint> p;
    for (int i = 0; i < n; ++i) p.push_back({spread * rng.uniform(), spread * rng.uniform(), rng.normal()});
    return p;
}

dan::FeatureSet synthetic_features(int traj, int steps, bool tide = true, std::uint64_t seed = 7) {
    SyntheticConfig c;
    c.trajectories = traj;
    c.steps = steps;
    c.seed = seed;
    auto d = generate_synthetic(c);
    dan::FeatureConfig f;
    f.time_origin = c.start;
    f.use_tide = tide;
    return dan::build_features(d.set, f);
}

}  // namespace

TEST_CASE("variogram shapes") {
    Variogram v{VariogramModel::Exponential, 0.1, 1.1, 2.0};
    CHECK(v(0.0) == 0.0);
    CHECK(v(1e-12) == doctest::Approx(0.1));
    CHECK(v(1e6) == doctest::Approx(1.1));
    CHECK(v(2.0) == doctest::Approx(0.1 + 1.0 * (1 - std::exp(-1.0))));
    Variogram s{VariogramModel::Spherical, 0.0, 1.0, 2.0};
    CHECK(s(1.0) == doctest::Approx(1.5 * 0.5 - 0.5 * 0.125));
    CHECK(s(3.0) == 1.0);
    Variogram g{VariogramModel::Gaussian, 0.0, 2.0, 1.0};
    CHECK(g(1.0) == doctest::Approx(2.0 * (1 - std::exp(-1.0))));
    CHECK(v.covariance(0.0) == 1.1);
    CHECK(parse_variogram_model("spherical") == VariogramModel::Spherical);
    CHECK_THROWS_AS(parse_variogram_model("linear"), Error);
}

TEST_CASE("variogram fit recovers a known exponential") {
    EmpiricalVariogram emp;
    Variogram truth{VariogramModel::Exponential, 0.0, 2.5, 0.3};
    for (int k = 1; k <= 15; ++k) {
        emp.lag.push_back(0.05 * k);
        emp.gamma.push_back(truth(0.05 * k));
        emp.pairs.push_back(100);
    }
    auto v = fit_variogram(emp, VariogramModel::Exponential);
    CHECK(v.nugget == 0.0);
    CHECK(v.sill == doctest::Approx(2.5).epsilon(0.03));
    CHECK(v.range == doctest::Approx(0.3).epsilon(0.03));

    Variogram with_nugget{VariogramModel::Exponential, 0.4, 2.0, 0.2};
    for (std::size_t k = 0; k < emp.lag.size(); ++k) emp.gamma[k] = with_nugget(emp.lag[k]);
    auto vn = fit_variogram(emp, VariogramModel::Exponential, true);
    CHECK(vn.nugget == doctest::Approx(0.4).epsilon(0.05));
    CHECK(vn.sill == doctest::Approx(2.0).epsilon(0.03));
}

TEST_CASE("hand-solved three point kriging system") {
    std::vector<SpatialPoint> pts{{0, 0, 0}, {0, 1, 1}, {0, 2, 2}};
    auto m = KrigingModel::fit(pts, fixed_variogram(1.0, 1.0));
    // 4x4 ordinary kriging system solved independently at high precision
    auto w = m.weights(0, 0.5);
    REQUIRE(w.size() == 3);
    CHECK(std::abs(w[0].second - 0.48640941615046731) <= 1e-6);
    CHECK(std::abs(w[1].second - 0.47059060968410233) <= 1e-6);
    CHECK(std::abs(w[2].second - 0.04299997416543036) <= 1e-6);
    auto e = m.predict(0, 0.5);
    CHECK(std::abs(e.value - 0.55659055801496305) <= 1e-6);
    CHECK(std::abs(e.variance - 0.46877433249543576) <= 1e-6);

    // the middle data point itself
    CHECK(std::abs(m.predict(0, 1).value - 1.0) <= 1e-6);
    CHECK(m.predict(0, 1).variance <= 1e-9);
}

TEST_CASE("kriging properties on random configurations") {
    Rng rng(100);
    for (int seed = 0; seed < 100; ++seed) {
        auto pts = random_points(rng, 12);
        auto m = KrigingModel::fit(pts, fixed_variogram(1.0 + rng.uniform(), 0.2 + rng.uniform()));
        const double qlat = rng.uniform(), qlon = rng.uniform();
        double sum = 0;
        for (const auto& [i, w] : m.weights(qlat, qlon)) sum += w;
        CHECK(std::abs(sum - 1.0) <= 1e-9);
        // exact interpolation at data locations
        const auto& p = pts[static_cast<std::size_t>(seed % 12)];
        CHECK(std::abs(m.predict(p.lat, p.lon).value - p.value) <= 1e-6);
        CHECK(m.predict(qlat, qlon).value == m.predict(qlat, qlon).value);
    }
}

TEST_CASE("kriging of a constant field and far queries") {
    std::vector<SpatialPoint> flat{{0, 0, 4.2}, {0, 1, 4.2}, {1, 0, 4.2}, {1, 1, 4.2}};
    auto m = KrigingModel::fit(flat);  // variogram fitted from zero semivariances
    CHECK(m.predict(0.3, 0.7).value == doctest::Approx(4.2).epsilon(1e-12));
    CHECK(m.predict(50, 50).value == doctest::Approx(4.2).epsilon(1e-12));

    // points spaced far beyond the range decorrelate: the far limit is the sample mean
    Rng rng(3);
    auto pts = random_points(rng, 20, 100.0);
    double mean = 0;
    for (const auto& p : pts) mean += p.value;
    mean /= 20.0;
    auto far = KrigingModel::fit(pts, fixed_variogram(1.0, 0.1));
    CHECK(std::abs(far.predict(1e4, 1e4).value - mean) <= 1e-3);
}

TEST_CASE("kriging errors and local neighbourhoods") {
    std::vector<SpatialPoint> two{{0, 0, 1}, {0, 1, 2}, {0, 1, 3}};
    CHECK_THROWS_AS(KrigingModel::fit(two), Error);
    KrigingModel unfitted;
    CHECK_THROWS_AS(unfitted.predict(0, 0), Error);

    // collocated points are solvable after jitter
    std::vector<SpatialPoint> dup{{0, 0, 1}, {0, 0, 1}, {0, 1, 2}, {1, 0, 3}};
    auto m = KrigingModel::fit(dup, fixed_variogram(1.0, 1.0));
    CHECK(std::isfinite(m.predict(0.5, 0.5).value));

    Rng rng(8);
    auto pts = random_points(rng, 200);
    auto cfg = fixed_variogram(1.0, 0.3);
    cfg.neighbors = 16;
    auto local = KrigingModel::fit(pts, cfg);
    auto w = local.weights(0.5, 0.5);
    CHECK(w.size() == 16);
    double sum = 0;
    for (const auto& [i, x] : w) sum += x;
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    CHECK(std::abs(local.predict(pts[5].lat, pts[5].lon).value - pts[5].value) <= 1e-6);
}

TEST_CASE("empirical variogram bins") {
    Rng rng(1);
    auto pts = random_points(rng, 50);
    auto emp = empirical_variogram(pts, 15, Metric::Degrees);
    CHECK(emp.lag.size() <= 15);
    CHECK_FALSE(emp.lag.empty());
    for (std::size_t k = 1; k < emp.lag.size(); ++k) CHECK(emp.lag[k] > emp.lag[k - 1]);
    CHECK(distance(Metric::HaversineKm, 0, 0, 0, 1) == doctest::Approx(111.195).epsilon(1e-4));
}

TEST_CASE("GWR at infinite bandwidth is global OLS") {
    Rng rng(4);
    GwrData d;
    const int n = 40;
    d.coords.resize(n, 2);
    d.extra.resize(n, 1);
    d.y.resize(n);
    for (int i = 0; i < n; ++i) {
        d.coords(i, 0) = rng.uniform();
        d.coords(i, 1) = rng.uniform();
        d.extra(i, 0) = rng.normal();
        d.y(i) = std::sin(3 * d.coords(i, 0)) + d.coords(i, 1) * d.coords(i, 1) + 0.3 * d.extra(i, 0) + 0.1 * rng.normal();
    }
    // direct normal-equation oracle
    Eigen::MatrixXd X(n, 4);
    X << Eigen::VectorXd::Ones(n), d.coords, d.extra;
    Eigen::VectorXd beta = (X.transpose() * X).ldlt().solve(X.transpose() * d.y);
    Eigen::VectorXd fitted = X * beta;

    GwrConfig cfg;
    cfg.bandwidth = 1e9;
    auto r = gwr_fit_predict(d, d, cfg);
    for (int i = 0; i < n; ++i) CHECK(std::abs(r.values(i) - fitted(i)) <= 1e-6);
    CHECK((ols_coefficients(d) - beta).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("GWR recovers an exact plane at any bandwidth") {
    Rng rng(2);
    GwrData d;
    d.coords.resize(30, 2);
    d.y.resize(30);
    for (int i = 0; i < 30; ++i) {
        d.coords(i, 0) = 27 + rng.uniform();
        d.coords(i, 1) = -80 + rng.uniform();
        d.y(i) = 2 + 3 * d.coords(i, 0);
    }
    GwrData q;
    q.coords.resize(5, 2);
    for (int i = 0; i < 5; ++i) q.coords.row(i) << 27 + rng.uniform(), -80 + rng.uniform();
    for (double b : {0.05, 0.3, 5.0}) {
        GwrConfig cfg;
        cfg.bandwidth = b;
        auto r = gwr_fit_predict(d, q, cfg);
        for (int i = 0; i < 5; ++i) CHECK(std::abs(r.values(i) - (2 + 3 * q.coords(i, 0))) <= 1e-6);
    }
    auto cv = gwr_fit_predict(d, q, {});
    CHECK(cv.bandwidth > 0);
    CHECK(cv.cv_scores.size() == 10);
}

TEST_CASE("GWR with a tiny bandwidth concentrates on the nearest point") {
    Rng rng(6);
    GwrData d;
    d.coords.resize(25, 2);
    d.y.resize(25);
    for (int i = 0; i < 25; ++i) {
        d.coords.row(i) << rng.uniform(), rng.uniform();
        d.y(i) = rng.normal();
    }
    GwrData q;
    q.coords = d.coords.row(7);
    GwrConfig cfg;
    cfg.bandwidth = 1e-4;
    auto r = gwr_fit_predict(d, q, cfg);
    CHECK(std::abs(r.values(0) - d.y(7)) <= 1e-6);
    CHECK(r.rank_deficient[0]);
    CHECK_FALSE(r.ols_fallback[0]);

    // no kernel mass: global OLS fills in
    GwrData far;
    far.coords.resize(1, 2);
    far.coords << 500, 500;
    auto f = gwr_fit_predict(d, far, cfg);
    CHECK(f.ols_fallback[0]);
    auto beta = ols_coefficients(d);
    CHECK(f.values(0) == doctest::Approx(beta(0) + 500 * beta(1) + 500 * beta(2)));

    GwrData tiny;
    tiny.coords = d.coords.topRows(3);
    tiny.y = d.y.head(3);
    CHECK_THROWS_AS(gwr_fit_predict(tiny, q, cfg), Error);
}

TEST_CASE("MLP converges on exact linear data") {
    Rng rng(10);
    dan::FeatureSet fs;
    fs.X.resize(200, 3);
    fs.s.resize(200);
    for (int i = 0; i < 200; ++i) {
        fs.X.row(i) << rng.normal(), rng.normal(), rng.normal();
        fs.s(i) = 1.0 + 0.5 * fs.X(i, 0) - 0.25 * fs.X(i, 1) + 0.1 * fs.X(i, 2);
    }
    fs.trajectories = {{0, 200}};
    NeuralConfig cfg;
    cfg.epochs = 500;
    auto m = train_mlp(fs, {16}, 1, cfg);
    REQUIRE(m.history.size() == 500);
    CHECK(m.history.back() < 1e-3);
    auto y = predict_mlp(m, fs.X);
    CHECK((y - fs.s).array().square().mean() < 1e-3);
}

TEST_CASE("LSTM emits one salinity per point") {
    auto fs = synthetic_features(3, 25);
    NeuralConfig cfg;
    cfg.epochs = 3;
    cfg.window = 8;
    cfg.lstm_hidden = 6;
    auto m = train_lstm(fs, cfg);
    CHECK(m.history.size() == 3);
    auto y = predict_lstm(m, fs);
    CHECK(y.size() == fs.size());
    CHECK(y.allFinite());
    CHECK(m.history.back() < m.history.front());
}

TEST_CASE("vanilla GAN starts at the discriminator equilibrium") {
    auto fs = synthetic_features(2, 20);
    dan::FeatureConfig f;
    dan::TrainConfig cfg = vanilla_gan_config({});
    CHECK_FALSE(cfg.flags.use_norm);
    CHECK_FALSE(cfg.flags.use_gdc);
    CHECK_FALSE(cfg.flags.use_sd);
    CHECK(cfg.fm_weight == 0.0);
    cfg.epochs = 1;
    cfg.arch.zero_init_d_head = true;
    cfg.arch.fe_hidden = {8};
    cfg.arch.attention = {8, 2};
    std::vector<double> first;
    cfg.on_batch = [&](int epoch, int batch, double ld, double) {
        if (epoch == 1 && batch == 1) first.push_back(ld);
    };
    dan::train(fs, nullptr, f, cfg, scheduler::make_schedule(50, 1e-4, 0.02));
    REQUIRE(first.size() == 1);
    CHECK(std::abs(first[0] - std::log(2.0)) <= 1e-6);
}

TEST_CASE("every imputer shares the interface") {
    auto train = synthetic_features(6, 30, true, 1);
    auto test = synthetic_features(2, 30, true, 2);
    ImputerOptions o;
    o.train.epochs = 2;
    o.train.arch.fe_hidden = {8};
    o.train.arch.attention = {8, 2};
    o.train.arch.d_hidden = {8, 4};
    o.neural.epochs = 2;
    o.neural.lstm_hidden = 4;
    o.gwr.cv_max_points = 40;
    for (const auto& kind : imputer_kinds()) {
        auto m = make_imputer(kind, o);
        CHECK(m->name() == kind);
        CHECK_THROWS_AS(m->predict(test), Error);
        m->fit(train, &train);
        auto y = m->predict(test);
        CHECK(y.size() == test.size());
        CHECK(y.allFinite());
        CHECK(m->metadata().is_object());
    }
    CHECK_THROWS_AS(make_imputer("random_forest", o), Error);
}
