#include "doctest.h"

#include "gradcheck.hpp"
#include "oasis/dan.hpp"
#include "oasis/error.hpp"
#include "oasis/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <vector>

using namespace oasis;
using namespace oasis::dan;

namespace {

SyntheticDataset small_data(int trajectories = 3, int steps = 20) {
    SyntheticConfig c;
    c.trajectories = trajectories;
    c.steps = steps;
    return generate_synthetic(c);
}

FeatureConfig feature_config(const SyntheticDataset& d) {
    FeatureConfig f;
    f.time_origin = d.truth.config.start;
    return f;
}

Architecture small_arch() {
    Architecture a;
    a.fe_hidden = {8};
    a.attention = {8, 2};
    a.d_hidden = {8, 4};
    a.feature_tap = 1;
    return a;
}

revin::RevinState stats_for(const FeatureSet& fs, double eps = 1e-5) {
    Matrix m(fs.X.rows(), fs.X.cols() + 1);
    m << fs.X, fs.s;
    return revin::fit_state(m, eps);
}

void zero(nn::Var v) { v.mutable_value().setZero(); }

std::vector<nn::Segment> singles(Eigen::Index n) {
    std::vector<nn::Segment> s;
    for (Eigen::Index i = 0; i < n; ++i) s.push_back({i, 1});
    return s;
}

TrainConfig quick_config(int epochs) {
    TrainConfig c;
    c.epochs = epochs;
    c.arch = small_arch();
    c.batch_size = 4;
    c.window = 8;
    return c;
}

}  // namespace

TEST_CASE("features encode time, position and tide") {
    auto d = small_data(1, 3);
    auto f = feature_config(d);
    auto fs = build_features(d.set, f);
    REQUIRE(fs.X.cols() == 6);
    REQUIRE(fs.size() == 3);
    const auto& r = d.set.records[1];
    CHECK(fs.X(1, 3) == r.lat);
    CHECK(fs.X(1, 4) == r.lon);
    CHECK(fs.X(1, 5) == r.covariates.at("tide"));
    CHECK(fs.X(1, 1) * fs.X(1, 1) + fs.X(1, 2) * fs.X(1, 2) == doctest::Approx(1.0));

    // noon is half a day: phase pi
    auto noon = from_epoch_seconds(43200);
    auto row = encode_point(f, noon, 0, 0, 0);
    CHECK(row(1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(row(2) == doctest::Approx(-1.0));

    f.use_tide = false;
    CHECK(build_features(d.set, f).X.cols() == 5);

    FeatureConfig needs_tide;
    d.set.records[0].covariates.clear();
    CHECK_THROWS_AS(build_features(d.set, needs_tide), Error);
}

TEST_CASE("windows cover every trajectory exactly once") {
    std::vector<nn::Segment> tr{{0, 10}, {10, 3}};
    auto w = make_windows(tr, 4);
    REQUIRE(w.size() == 4);
    CHECK(w[0].length == 4);
    CHECK(w[2].length == 2);
    CHECK(w[3].start == 10);
    CHECK(w[3].length == 3);

    Rng rng(3);
    auto j = make_windows(tr, 4, &rng);
    Eigen::Index covered = 0;
    for (const auto& s : j) {
        CHECK(s.length >= 1);
        CHECK(s.length <= 4);
        covered += s.length;
    }
    CHECK(covered == 13);
    CHECK_THROWS_AS(make_windows(tr, 0), Error);
}

TEST_CASE("zero network predicts the salinity mean") {
    auto d = small_data();
    auto fs = build_features(d.set, feature_config(d));
    auto st = stats_for(fs);
    Rng rng(1);
    auto g = make_generator(small_arch(), st, rng);
    for (auto& l : g.fe) {
        zero(l.weight);
        zero(l.bias);
    }
    zero(g.head.weight);
    zero(g.head.bias);
    Flags flags;
    for (bool gdc : {true, false}) {
        flags.use_gdc = gdc;
        auto y = generator_forward(g, nn::constant(fs.X), make_windows(fs.trajectories, 8), flags).value();
        for (Eigen::Index i = 0; i < y.rows(); ++i) CHECK(y(i, 0) == doctest::Approx(st.mu(6)).epsilon(1e-12));
    }
}

TEST_CASE("single-token attention reduces to the closed form") {
    auto d = small_data();
    auto fs = build_features(d.set, feature_config(d));
    Rng rng(2);
    auto arch = small_arch();
    auto g = make_generator(arch, stats_for(fs), rng);
    Flags on;
    Flags off;
    off.use_gdc = false;
    auto X = nn::constant(fs.X.topRows(5));
    auto with = generator_forward(g, X, singles(5), on).value();
    auto without = generator_forward(g, X, singles(5), off).value();

    // With one token A = [[1]] so attention is (h + pe0) W_V W_O.
    nn::Var h = g.revin.normalize(X, 0);
    for (const auto& l : g.fe) h = nn::activate(l(h), nn::Activation::LeakyRelu);
    Matrix pe = gdc::positional_encoding(1, arch.attention.d_model);
    Matrix hp = h.value().rowwise() + pe.row(0);
    Matrix mixed = hp + hp * g.attn.W_V.value() * g.attn.W_O.value();
    auto ln = nn::layer_norm(nn::constant(mixed), g.attn.ln_gain, g.attn.ln_bias, 1e-5);
    auto expect = g.revin.denormalize_channel(g.head(ln), g.salinity_channel()).value();
    for (Eigen::Index i = 0; i < 5; ++i) CHECK(with(i, 0) == doctest::Approx(expect(i, 0)).epsilon(1e-10));

    // Bypassing the block skips that path entirely.
    auto plain = g.revin.denormalize_channel(g.head(h), g.salinity_channel()).value();
    for (Eigen::Index i = 0; i < 5; ++i) CHECK(without(i, 0) == doctest::Approx(plain(i, 0)).epsilon(1e-12));
}

TEST_CASE("generator is deterministic under a seed") {
    auto d = small_data();
    auto fs = build_features(d.set, feature_config(d));
    auto st = stats_for(fs);
    Rng a(9), b(9);
    auto ga = make_generator(small_arch(), st, a);
    auto gb = make_generator(small_arch(), st, b);
    auto w = make_windows(fs.trajectories, 8);
    auto ya = generator_forward(ga, nn::constant(fs.X), w, {}).value();
    auto yb = generator_forward(gb, nn::constant(fs.X), w, {}).value();
    CHECK(ya == yb);
}

TEST_CASE("generator output ignores token order without attention") {
    auto d = small_data(1, 12);
    auto fs = build_features(d.set, feature_config(d));
    Rng rng(4);
    auto g = make_generator(small_arch(), stats_for(fs), rng);
    Flags flags;
    flags.use_gdc = false;
    std::vector<nn::Segment> one{{0, 12}};
    auto y = generator_forward(g, nn::constant(fs.X), one, flags).value();
    std::vector<int> perm{11, 3, 7, 0, 5, 2, 9, 1, 10, 4, 8, 6};
    Matrix Xp(12, fs.X.cols());
    for (int i = 0; i < 12; ++i) Xp.row(i) = fs.X.row(perm[static_cast<std::size_t>(i)]);
    auto yp = generator_forward(g, nn::constant(Xp), one, flags).value();
    for (int i = 0; i < 12; ++i) CHECK(std::abs(yp(i, 0) - y(perm[static_cast<std::size_t>(i)], 0)) <= 1e-6);

    flags.use_gdc = true;
    auto ya = generator_forward(g, nn::constant(fs.X), one, flags).value();
    auto yap = generator_forward(g, nn::constant(Xp), one, flags).value();
    double worst = 0;
    for (int i = 0; i < 12; ++i) worst = std::max(worst, std::abs(yap(i, 0) - ya(perm[static_cast<std::size_t>(i)], 0)));
    CHECK(worst > 1e-6);
}

TEST_CASE("generator rejects the wrong feature width") {
    auto d = small_data();
    auto fs = build_features(d.set, feature_config(d));
    Rng rng(1);
    auto g = make_generator(small_arch(), stats_for(fs), rng);
    CHECK_THROWS_AS(generator_forward(g, nn::constant(Matrix::Zero(2, 5)), singles(2), {}), Error);
}

TEST_CASE("discriminator examples") {
    Rng rng(5);
    auto arch = small_arch();
    auto D = make_discriminator(arch, rng);
    CHECK(D.input_width() == 7);
    Matrix sample = Matrix::Random(6, 7);
    auto out = discriminator_forward(D, nn::constant(sample));
    CHECK(out.features.cols() == arch.d_hidden[1]);
    CHECK(out.features.rows() == 6);
    CHECK((out.prob.value().array() > 0).all());
    CHECK((out.prob.value().array() < 1).all());

    for (auto p : D.parameters()) zero(p);
    auto half = discriminator_forward(D, nn::constant(sample));
    for (Eigen::Index i = 0; i < 6; ++i) CHECK(half.prob.value()(i, 0) == 0.5);

    // Saturate the head through a constant positive bias direction.
    Rng r2(5);
    auto S = make_discriminator(arch, r2);
    S.layers.back().weight.mutable_value().setZero();
    S.layers.back().bias.mutable_value()(0, 0) = 1e3;
    CHECK(discriminator_forward(S, nn::constant(sample)).prob.value()(0, 0) == doctest::Approx(1.0));
    S.layers.back().bias.mutable_value()(0, 0) = -1e3;
    CHECK(discriminator_forward(S, nn::constant(sample)).prob.value()(0, 0) == doctest::Approx(0.0));

    arch.feature_tap = 0;
    Rng r3(5);
    auto T = make_discriminator(arch, r3);
    CHECK(discriminator_forward(T, nn::constant(sample)).features.cols() == arch.d_hidden[0]);

    sample(0, 0) = std::nan("");
    CHECK_THROWS_AS(discriminator_forward(D, nn::constant(sample)), Error);

    arch.conditional_d = false;
    Rng r4(5);
    CHECK(make_discriminator(arch, r4).input_width() == 1);
}

TEST_CASE("d_loss worked examples") {
    std::vector<double> half{0.5, 0.5};
    CHECK(d_loss(half, half) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    std::vector<double> one{1.0}, zero_p{0.0};
    const double perfect = d_loss(one, zero_p);
    CHECK(perfect >= 0.0);
    CHECK(perfect < 1e-6);

    std::vector<double> r{0.9}, f{0.1};
    CHECK(d_loss(r, f) == doctest::Approx(-std::log(0.9)).epsilon(1e-12));
    CHECK(d_loss(r, f) == doctest::Approx(0.1054).epsilon(1e-3));

    // worst case is finite thanks to clamping
    CHECK(std::isfinite(d_loss(zero_p, one)));
}

TEST_CASE("g_loss worked examples") {
    std::vector<double> s{1, 3}, same{1, 3}, mid{2, 2}, f{0.3, -0.2};
    CHECK(g_loss(s, same, f, f) == 0.0);
    CHECK(g_loss(s, mid, f, f) == doctest::Approx(1.0));
    std::vector<double> fr{1, 2}, ff{0, 0};
    CHECK(g_loss(s, same, fr, ff) == doctest::Approx(1.5));
    CHECK(g_loss(s, mid, fr, ff) == g_loss(s, mid, ff, fr));
    std::vector<double> short_f{1};
    CHECK_THROWS_AS(g_loss(s, mid, fr, short_f), Error);
    std::vector<double> short_s{1};
    CHECK_THROWS_AS(g_loss(s, short_s, fr, ff), Error);
}

TEST_CASE("zero-initialized discriminator head gives ln 2") {
    auto arch = small_arch();
    arch.zero_init_d_head = true;
    Rng rng(11);
    auto D = make_discriminator(arch, rng);
    for (int trial = 0; trial < 5; ++trial) {
        Matrix real = Matrix::Random(9, 7) * 10.0;
        Matrix fake = Matrix::Random(9, 7) * 10.0;
        auto pr = discriminator_forward(D, nn::constant(real)).prob.value();
        auto pf = discriminator_forward(D, nn::constant(fake)).prob.value();
        std::vector<double> vr(pr.data(), pr.data() + pr.size()), vf(pf.data(), pf.data() + pf.size());
        CHECK(std::abs(d_loss(vr, vf) - std::log(2.0)) <= 1e-6);
        auto lr = discriminator_forward(D, nn::constant(real)).logit;
        auto lf = discriminator_forward(D, nn::constant(fake)).logit;
        auto fused = nn::scale(nn::add(nn::bce_with_logits(lf, 0.0), nn::bce_with_logits(lr, 1.0)), 0.5);
        CHECK(std::abs(fused.item() - std::log(2.0)) <= 1e-6);
    }
}

TEST_CASE("generator loss gradients match finite differences") {
    // two-layer toy: one hidden FE layer, no attention, no normalization
    auto d = small_data(1, 6);
    auto fs = build_features(d.set, feature_config(d));
    Architecture arch = small_arch();
    arch.fe_hidden = {};
    Rng rng(13);
    auto g = make_generator(arch, stats_for(fs), rng);
    auto D = make_discriminator(arch, rng);
    Flags flags{false, false, false};
    Matrix target = (fs.s.array() - fs.s.mean()).matrix();
    Matrix Xc = fs.X;
    Xc.col(0).array() -= Xc.col(0).mean();
    Xc.col(3).array() -= 27.5;
    Xc.col(4).array() += 80.0;
    auto loss = [&] {
        auto y = generator_forward(g, nn::constant(Xc), singles(6), flags);
        auto real = discriminator_forward(D, nn::concat_cols({nn::constant(Xc), nn::constant(target)}));
        auto fake = discriminator_forward(D, nn::concat_cols({nn::constant(Xc), y}));
        auto mse = nn::mean(nn::square(nn::sub(y, nn::constant(target))));
        auto fm = nn::mean(nn::abs(nn::sub(nn::constant(nn::mean_rows(real.features).value()), nn::mean_rows(fake.features))));
        return nn::add(mse, fm);
    };
    CHECK(gradcheck::max_relative_error(g.fe[0].weight, loss) <= 1e-3);
    CHECK(gradcheck::max_relative_error(g.head.weight, loss) <= 1e-3);
    CHECK(gradcheck::max_relative_error(g.head.bias, loss) <= 1e-3);
}

TEST_CASE("one epoch on ten points") {
    auto d = small_data(1, 10);
    auto f = feature_config(d);
    auto fs = build_features(d.set, f);
    auto cfg = quick_config(1);
    auto result = train(fs, nullptr, f, cfg, scheduler::make_schedule(cfg.T_diff, cfg.beta0, cfg.betaT));
    REQUIRE(result.history.size() == 1);
    CHECK(std::isfinite(result.history[0].d_loss));
    CHECK(std::isfinite(result.history[0].g_loss));
    CHECK(result.history[0].d_loss >= 0.0);
    CHECK(result.history[0].g_loss >= 0.0);
    CHECK(result.best_epoch == 1);
    CHECK(predict(result.model, fs).allFinite());
}

TEST_CASE("training is reproducible under a fixed seed") {
    auto d = small_data(2, 15);
    auto f = feature_config(d);
    auto fs = build_features(d.set, f);
    auto cfg = quick_config(3);
    auto sched = scheduler::make_schedule(cfg.T_diff, cfg.beta0, cfg.betaT);
    auto a = train(fs, &fs, f, cfg, sched);
    auto b = train(fs, &fs, f, cfg, sched);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].d_loss == b.history[i].d_loss);
        CHECK(a.history[i].g_loss == b.history[i].g_loss);
        CHECK(a.history[i].val_mae == b.history[i].val_mae);
    }
    CHECK(predict(a.model, fs) == predict(b.model, fs));
}

TEST_CASE("training reduces the reconstruction term") {
    auto d = small_data(4, 60);
    auto f = feature_config(d);
    auto fs = build_features(d.set, f);
    auto cfg = quick_config(30);
    auto result = train(fs, nullptr, f, cfg, scheduler::make_schedule(cfg.T_diff, cfg.beta0, cfg.betaT));
    CHECK(result.history.back().mse < result.history.front().mse);
}

TEST_CASE("disabled diffusion leaves discriminator inputs untouched") {
    auto d = small_data(2, 12);
    auto f = feature_config(d);
    auto fs = build_features(d.set, f);
    auto cfg = quick_config(2);
    auto sched = scheduler::make_schedule(cfg.T_diff, cfg.beta0, cfg.betaT);
    int calls = 0;
    bool all_equal = true;
    bool any_salinity_changed = false;
    bool conditioning_kept = true;
    cfg.on_discriminator_batch = [&](const Matrix& r, const Matrix& fk, const Matrix& rc, const Matrix& fc) {
        ++calls;
        all_equal = all_equal && r == rc && fk == fc;
        any_salinity_changed = any_salinity_changed || r.rightCols(1) != rc.rightCols(1) || fk.rightCols(1) != fc.rightCols(1);
        conditioning_kept = conditioning_kept && r.leftCols(6) == rc.leftCols(6);
    };
    cfg.flags.use_sd = false;
    train(fs, nullptr, f, cfg, sched);
    CHECK(calls > 0);
    CHECK(all_equal);

    calls = 0;
    all_equal = true;
    cfg.flags.use_sd = true;
    train(fs, nullptr, f, cfg, sched);
    CHECK(calls > 0);
    CHECK_FALSE(all_equal);
    CHECK(any_salinity_changed);
    CHECK(conditioning_kept);
}

TEST_CASE("training errors") {
    auto d = small_data(1, 10);
    auto f = feature_config(d);
    auto fs = build_features(d.set, f);
    fs.s.setConstant(std::nan(""));
    auto cfg = quick_config(1);
    auto sched = scheduler::make_schedule(cfg.T_diff, cfg.beta0, cfg.betaT);
    try {
        train(fs, nullptr, f, cfg, sched);
        FAIL("expected EmptyTrainingSet");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyTrainingSet);
    }
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    auto fs2 = build_features(d.set, f);
    auto bad = quick_config(1);
    bad.lr_g = 1e300;
    bad.lr_d = 1e300;
    bad.epochs = 20;
    try {
        train(fs2, nullptr, f, bad, sched);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DivergedLoss);
    }
}

TEST_CASE("train config json round trip") {
    TrainConfig c;
    c.epochs = 7;
    c.flags.use_gdc = false;
    c.arch.d_hidden = {16, 8};
    auto back = train_config_from_json(train_config_to_json(c));
    CHECK(back.epochs == 7);
    CHECK_FALSE(back.flags.use_gdc);
    CHECK(back.arch.d_hidden == std::vector<int>{16, 8});
    CHECK(train_config_from_json(R"({"train":{"epochs":3}})").epochs == 3);
    CHECK_THROWS_AS(train_config_from_json(R"({"epochs":-1})"), Error);
    CHECK_THROWS_AS(train_config_from_json("{"), Error);
}
