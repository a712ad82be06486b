#include "oasis/dan.hpp"

#include "oasis/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace oasis::dan {

std::vector<std::string> FeatureConfig::names() const {
    std::vector<std::string> n{"day", "day_sin", "day_cos", "lat", "lon"};
    if (use_tide) n.push_back(tide_channel);
    return n;
}

Eigen::RowVectorXd encode_point(const FeatureConfig& cfg, Timestamp t, double lat, double lon, double tide) {
    Eigen::RowVectorXd row(cfg.width());
    const auto secs = (t - cfg.time_origin).count();
    const double day_phase =
        2.0 * std::numbers::pi * static_cast<double>(((to_epoch_seconds(t) % 86400) + 86400) % 86400) / 86400.0;
    row(0) = static_cast<double>(secs) / 86400.0;
    row(1) = std::sin(day_phase);
    row(2) = std::cos(day_phase);
    row(3) = lat;
    row(4) = lon;
    if (cfg.use_tide) row(5) = tide;
    return row;
}

FeatureSet build_features(const TrajectorySet& set, const FeatureConfig& cfg) {
    FeatureSet fs;
    const auto n = static_cast<Eigen::Index>(set.records.size());
    fs.X.resize(n, cfg.width());
    fs.s.resize(n);
    fs.timestamps.reserve(set.records.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = set.records[static_cast<std::size_t>(i)];
        double tide = kMissing;
        if (cfg.use_tide) {
            auto it = r.covariates.find(cfg.tide_channel);
            if (it == r.covariates.end() || !std::isfinite(it->second)) {
                throw Error(ErrorCode::MalformedInput, "record " + std::to_string(i) + " of trajectory " + r.trajectory_id +
                                                           " has no '" + cfg.tide_channel + "' covariate");
            }
            tide = it->second;
        }
        fs.X.row(i) = encode_point(cfg, r.timestamp, r.lat, r.lon, tide);
        fs.s(i) = r.salinity;
        fs.timestamps.push_back(r.timestamp);
    }
    for (const auto& rg : set.ranges()) {
        fs.trajectories.push_back({static_cast<Eigen::Index>(rg.begin), static_cast<Eigen::Index>(rg.end - rg.begin)});
    }
    fs.trajectory_ids = set.trajectory_ids;
    return fs;
}

std::vector<nn::Segment> make_windows(const std::vector<nn::Segment>& trajectories, int window, Rng* rng) {
    if (window < 1) throw Error(ErrorCode::InvalidConfig, "window must be >= 1");
    std::vector<nn::Segment> out;
    for (const auto& tr : trajectories) {
        Eigen::Index pos = tr.start;
        const Eigen::Index end = tr.start + tr.length;
        while (pos < end) {
            Eigen::Index len = window;
            if (rng) len = 1 + static_cast<Eigen::Index>(rng->below(static_cast<std::uint64_t>(window)));
            len = std::min(len, end - pos);
            out.push_back({pos, len});
            pos += len;
        }
    }
    return out;
}

std::vector<nn::Var> GeneratorParams::parameters() const {
    std::vector<nn::Var> p = revin.parameters();
    for (const auto& l : fe) {
        p.push_back(l.weight);
        p.push_back(l.bias);
    }
    for (const auto& v : attn.parameters()) p.push_back(v);
    p.push_back(head.weight);
    p.push_back(head.bias);
    return p;
}

std::vector<nn::Var> DiscriminatorParams::parameters() const {
    std::vector<nn::Var> p;
    for (const auto& l : layers) {
        p.push_back(l.weight);
        p.push_back(l.bias);
    }
    return p;
}

GeneratorParams make_generator(const Architecture& arch, const revin::RevinState& stats, Rng& rng) {
    if (stats.channels() != arch.in_dim + 1) {
        throw Error(ErrorCode::ShapeMismatch, "normalizer must cover the inputs plus salinity");
    }
    arch.attention.validate();
    GeneratorParams g;
    g.revin = revin::RevinLayer(stats);
    int width = arch.in_dim;
    for (int h : arch.fe_hidden) {
        g.fe.push_back(nn::make_linear(width, h, rng));
        width = h;
    }
    g.fe.push_back(nn::make_linear(width, arch.attention.d_model, rng));
    g.attn = gdc::GdcBlock(arch.attention, rng);
    g.head = nn::make_linear(arch.attention.d_model, 1, rng);
    return g;
}

DiscriminatorParams make_discriminator(const Architecture& arch, Rng& rng) {
    if (arch.d_hidden.empty()) throw Error(ErrorCode::InvalidConfig, "discriminator needs a hidden layer");
    DiscriminatorParams d;
    d.feature_tap = std::clamp(arch.feature_tap, 0, static_cast<int>(arch.d_hidden.size()) - 1);
    int width = 1 + (arch.conditional_d ? arch.in_dim : 0);
    for (int h : arch.d_hidden) {
        d.layers.push_back(nn::make_linear(width, h, rng));
        width = h;
    }
    d.layers.push_back(arch.zero_init_d_head ? nn::make_zero_linear(width, 1) : nn::make_linear(width, 1, rng));
    return d;
}

namespace {

constexpr nn::Activation kHidden = nn::Activation::LeakyRelu;

nn::Var d_leaky(const nn::Var& x) { return nn::leaky_relu(x, 0.2); }

}  // namespace

nn::Var generator_forward(const GeneratorParams& g, const nn::Var& X, const std::vector<nn::Segment>& windows,
                          const Flags& flags) {
    if (g.fe.empty()) throw Error(ErrorCode::UnfittedModel, "generator has no layers");
    if (X.cols() != g.fe.front().in_features()) {
        throw Error(ErrorCode::ShapeMismatch, "generator expects " + std::to_string(g.fe.front().in_features()) +
                                                  " features, got " + std::to_string(X.cols()));
    }
    nn::Var h = flags.use_norm ? g.revin.normalize(X, 0) : X;
    for (const auto& layer : g.fe) h = nn::activate(layer(h), kHidden);
    if (flags.use_gdc) h = g.attn.forward(h, windows, true);
    nn::Var y = g.head(h);
    if (flags.use_norm) y = g.revin.denormalize_channel(y, g.salinity_channel());
    return y;
}

DiscriminatorOutput discriminator_forward(const DiscriminatorParams& d, const nn::Var& sample) {
    if (!sample.value().allFinite()) throw Error(ErrorCode::NonFiniteInput, "discriminator input is not finite");
    if (sample.cols() != d.input_width()) {
        throw Error(ErrorCode::ShapeMismatch, "discriminator expects width " + std::to_string(d.input_width()));
    }
    DiscriminatorOutput out;
    nn::Var h = sample;
    for (std::size_t i = 0; i + 1 < d.layers.size(); ++i) {
        h = d_leaky(d.layers[i](h));
        if (static_cast<int>(i) == d.feature_tap) out.features = h;
    }
    out.logit = d.layers.back()(h);
    out.prob = nn::sigmoid(out.logit);
    return out;
}

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

double mean_bce(std::span<const double> probs, double label) {
    if (probs.empty()) return 0.0;
    double acc = 0.0;
    for (double p : probs) {
        const double q = clamp_prob(p);
        acc += -(label * std::log(q) + (1.0 - label) * std::log(1.0 - q));
    }
    return acc / static_cast<double>(probs.size());
}

}  // namespace

double d_loss(std::span<const double> real_probs, std::span<const double> fake_probs) {
    return 0.5 * (mean_bce(fake_probs, 0.0) + mean_bce(real_probs, 1.0));
}

double g_loss(std::span<const double> s_true, std::span<const double> s_hat, std::span<const double> f_real,
              std::span<const double> f_fake) {
    if (s_true.size() != s_hat.size() || f_real.size() != f_fake.size()) {
        throw Error(ErrorCode::ShapeMismatch, "g_loss: length mismatch");
    }
    double mse = 0.0;
    for (std::size_t i = 0; i < s_true.size(); ++i) mse += (s_true[i] - s_hat[i]) * (s_true[i] - s_hat[i]);
    if (!s_true.empty()) mse /= static_cast<double>(s_true.size());
    double fm = 0.0;
    for (std::size_t j = 0; j < f_real.size(); ++j) fm += std::abs(f_real[j] - f_fake[j]);
    if (!f_real.empty()) fm /= static_cast<double>(f_real.size());
    return mse + fm;
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidConfig, why); };
    if (epochs < 1) fail("epochs must be >= 1");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (window < 1) fail("window must be >= 1");
    if (!(lr_g > 0) || !(lr_d > 0)) fail("learning rates must be positive");
    if (fm_weight < 0 || adv_weight < 0) fail("loss weights must be >= 0");
    if (arch.attention.d_model % 2 != 0) fail("d_model must be even");
    if (arch.attention.n_heads < 1 || arch.attention.d_model % arch.attention.n_heads != 0) {
        fail("n_heads must divide d_model");
    }
    if (arch.d_hidden.empty()) fail("discriminator needs at least one hidden layer");
}

TrainConfig train_config_from_json(const std::string& text, TrainConfig c) {
    try {
        auto j = nlohmann::json::parse(text);
        if (j.contains("train")) j = j.at("train");
        auto get = [&](const nlohmann::json& src, const char* key, auto& field) {
            if (src.contains(key)) field = src.at(key).get<std::decay_t<decltype(field)>>();
        };
        get(j, "epochs", c.epochs);
        get(j, "batch_size", c.batch_size);
        get(j, "window", c.window);
        get(j, "jitter_windows", c.jitter_windows);
        get(j, "lr_g", c.lr_g);
        get(j, "lr_d", c.lr_d);
        get(j, "seed", c.seed);
        get(j, "use_norm", c.flags.use_norm);
        get(j, "use_gdc", c.flags.use_gdc);
        get(j, "use_sd", c.flags.use_sd);
        get(j, "noise_reals", c.noise_reals);
        get(j, "step_per_sample", c.step_per_sample);
        get(j, "fm_weight", c.fm_weight);
        get(j, "adv_weight", c.adv_weight);
        get(j, "T_diff", c.T_diff);
        get(j, "beta0", c.beta0);
        get(j, "betaT", c.betaT);
        get(j, "fe_hidden", c.arch.fe_hidden);
        get(j, "d_model", c.arch.attention.d_model);
        get(j, "n_heads", c.arch.attention.n_heads);
        get(j, "d_hidden", c.arch.d_hidden);
        get(j, "feature_tap", c.arch.feature_tap);
        get(j, "conditional_d", c.arch.conditional_d);
        get(j, "zero_init_d_head", c.arch.zero_init_d_head);
        get(j, "revin_eps", c.arch.revin_eps);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string train_config_to_json(const TrainConfig& c) {
    nlohmann::json j = {{"epochs", c.epochs},
                        {"batch_size", c.batch_size},
                        {"window", c.window},
                        {"jitter_windows", c.jitter_windows},
                        {"lr_g", c.lr_g},
                        {"lr_d", c.lr_d},
                        {"seed", c.seed},
                        {"use_norm", c.flags.use_norm},
                        {"use_gdc", c.flags.use_gdc},
                        {"use_sd", c.flags.use_sd},
                        {"noise_reals", c.noise_reals},
                        {"step_per_sample", c.step_per_sample},
                        {"fm_weight", c.fm_weight},
                        {"adv_weight", c.adv_weight},
                        {"T_diff", c.T_diff},
                        {"beta0", c.beta0},
                        {"betaT", c.betaT},
                        {"fe_hidden", c.arch.fe_hidden},
                        {"d_model", c.arch.attention.d_model},
                        {"n_heads", c.arch.attention.n_heads},
                        {"d_hidden", c.arch.d_hidden},
                        {"feature_tap", c.arch.feature_tap},
                        {"conditional_d", c.arch.conditional_d},
                        {"zero_init_d_head", c.arch.zero_init_d_head},
                        {"revin_eps", c.arch.revin_eps}};
    return j.dump();
}

namespace {

struct Batch {
    Matrix X;
    Eigen::VectorXd s;
    std::vector<nn::Segment> windows;
};

Batch gather(const FeatureSet& set, std::span<const nn::Segment> windows) {
    Eigen::Index rows = 0;
    for (const auto& w : windows) rows += w.length;
    Batch b;
    b.X.resize(rows, set.X.cols());
    b.s.resize(rows);
    Eigen::Index r = 0;
    for (const auto& w : windows) {
        b.X.middleRows(r, w.length) = set.X.middleRows(w.start, w.length);
        b.s.segment(r, w.length) = set.s.segment(w.start, w.length);
        b.windows.push_back({r, w.length});
        r += w.length;
    }
    return b;
}

/// Scales salinity and conditioning features into the space the
/// discriminator sees (z-scores when normalization is on, raw otherwise).
struct DiscriminatorView {
    bool normalize = true;
    bool conditional = true;
    double sal_mu = 0.0;
    double sal_inv = 1.0;
    Eigen::RowVectorXd cond_mu;
    Eigen::RowVectorXd cond_inv;

    DiscriminatorView(const revin::RevinState& st, bool use_norm, bool conditional_d)
        : normalize(use_norm), conditional(conditional_d) {
        const auto c = st.channels() - 1;
        sal_mu = st.mu(c);
        sal_inv = 1.0 / (std::sqrt(st.var(c)) + st.eps);
        cond_mu = st.mu.head(c);
        cond_inv = (st.var.head(c).array().sqrt() + st.eps).inverse();
    }

    Matrix condition(const Matrix& X) const {
        if (!normalize) return X;
        return (X.rowwise() - cond_mu).array().rowwise() * cond_inv.array();
    }

    nn::Var salinity(const nn::Var& s) const {
        if (!normalize) return s;
        return nn::scale(nn::add_scalar(s, -sal_mu), sal_inv);
    }

    nn::Var input(const Matrix& cond, const nn::Var& sal) const {
        if (!conditional) return sal;
        return nn::concat_cols({nn::constant(cond), sal});
    }
};

/// Forward diffusion with either one step for the batch or one per row.
struct NoisePlan {
    Matrix a;  // sqrt(alpha_bar) per row
    Matrix b;  // sqrt(1 - alpha_bar) per row

    nn::Var apply(const nn::Var& x, const Matrix& noise) const {
        return nn::add(nn::mul(x, nn::constant(a)), nn::constant(b.cwiseProduct(noise)));
    }
};

std::vector<Matrix> snapshot(const std::vector<nn::Var>& params) {
    std::vector<Matrix> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.value());
    return out;
}

void restore(std::vector<nn::Var>& params, const std::vector<Matrix>& values) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].mutable_value() = values[i];
}

double mae_observed(const Eigen::VectorXd& truth, const Eigen::VectorXd& pred) {
    double acc = 0.0;
    Eigen::Index n = 0;
    for (Eigen::Index i = 0; i < truth.size(); ++i) {
        if (std::isfinite(truth(i))) {
            acc += std::abs(truth(i) - pred(i));
            ++n;
        }
    }
    return n ? acc / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

Matrix observed_stats_matrix(const FeatureSet& set) {
    Matrix m(set.X.rows(), set.X.cols() + 1);
    m << set.X, set.s;
    return m;
}

}  // namespace

TrainResult train(const FeatureSet& train_set, const FeatureSet* val_set, const FeatureConfig& features,
                  const TrainConfig& cfg, const scheduler::DiffusionSchedule& schedule) {
    cfg.validate();
    Eigen::Index observed = 0;
    for (Eigen::Index i = 0; i < train_set.s.size(); ++i) observed += std::isfinite(train_set.s(i)) ? 1 : 0;
    if (train_set.size() == 0 || observed == 0) throw Error(ErrorCode::EmptyTrainingSet, "no observed salinity to train on");
    if (train_set.X.cols() != features.width()) throw Error(ErrorCode::ShapeMismatch, "feature width mismatch");

    Architecture arch = cfg.arch;
    arch.in_dim = features.width();
    Rng rng(cfg.seed);
    auto stats = revin::fit_state(observed_stats_matrix(train_set), arch.revin_eps);

    TrainResult result;
    DanModel& model = result.model;
    model.arch = arch;
    model.flags = cfg.flags;
    model.features = features;
    model.window = cfg.window;
    model.generator = make_generator(arch, stats, rng);
    model.discriminator = make_discriminator(arch, rng);

    auto g_params = model.generator.parameters();
    auto d_params = model.discriminator.parameters();
    nn::Adam opt_g(g_params, {.lr = cfg.lr_g});
    nn::Adam opt_d(d_params, {.lr = cfg.lr_d});
    auto zero_all = [&] {
        opt_g.zero_grad();
        opt_d.zero_grad();
    };

    const DiscriminatorView view(stats, cfg.flags.use_norm, arch.conditional_d);
    const bool has_val = val_set && val_set->size() > 0 && val_set->s.array().isFinite().any();
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<Matrix> best;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto windows = make_windows(train_set.trajectories, cfg.window, cfg.jitter_windows ? &rng : nullptr);
        rng.shuffle(windows.begin(), windows.end());
        EpochRecord rec;
        rec.epoch = epoch;
        int batches = 0;
        double last_d = 0.0, last_g = 0.0;
        for (std::size_t start = 0; start < windows.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const auto count = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), windows.size() - start);
            Batch batch = gather(train_set, std::span<const nn::Segment>(windows).subspan(start, count));

            // Only rows with observed salinity take part in losses.
            std::vector<Eigen::Index> obs;
            for (Eigen::Index i = 0; i < batch.s.size(); ++i)
                if (std::isfinite(batch.s(i))) obs.push_back(i);
            if (obs.empty()) continue;
            const auto n_obs = static_cast<Eigen::Index>(obs.size());
            const bool full = n_obs == batch.s.size();
            Matrix select;
            if (!full) {
                select = Matrix::Zero(n_obs, batch.s.size());
                for (Eigen::Index i = 0; i < n_obs; ++i) select(i, obs[static_cast<std::size_t>(i)]) = 1.0;
            }
            auto pick = [&](const nn::Var& v) { return full ? v : nn::matmul(nn::constant(select), v); };
            Matrix s_obs(n_obs, 1), x_obs(n_obs, batch.X.cols());
            for (Eigen::Index i = 0; i < n_obs; ++i) {
                s_obs(i, 0) = batch.s(obs[static_cast<std::size_t>(i)]);
                x_obs.row(i) = batch.X.row(obs[static_cast<std::size_t>(i)]);
            }
            const Matrix cond = view.condition(x_obs);

            NoisePlan plan;
            Matrix noise_real = Matrix::Zero(n_obs, 1), noise_fake = Matrix::Zero(n_obs, 1);
            if (cfg.flags.use_sd) {
                plan.a.resize(n_obs, 1);
                plan.b.resize(n_obs, 1);
                int t = scheduler::sample_step(rng, schedule.T_diff);
                for (Eigen::Index i = 0; i < n_obs; ++i) {
                    if (cfg.step_per_sample && i > 0) t = scheduler::sample_step(rng, schedule.T_diff);
                    plan.a(i, 0) = std::sqrt(schedule.alpha_bar_at(t));
                    plan.b(i, 0) = std::sqrt(1.0 - schedule.alpha_bar_at(t));
                }
                for (Eigen::Index i = 0; i < n_obs; ++i) noise_real(i, 0) = rng.normal();
                for (Eigen::Index i = 0; i < n_obs; ++i) noise_fake(i, 0) = rng.normal();
            }
            auto diffuse = [&](const nn::Var& x, const Matrix& noise, bool enabled) {
                return (cfg.flags.use_sd && enabled) ? plan.apply(x, noise) : x;
            };

            nn::Var s_hat = generator_forward(model.generator, nn::constant(batch.X), batch.windows, cfg.flags);
            nn::Var fake_sal = pick(s_hat);
            nn::Var real_in =
                view.input(cond, diffuse(view.salinity(nn::constant(s_obs)), noise_real, cfg.noise_reals));

            // discriminator step on a detached fake
            {
                nn::Var fake_in = view.input(cond, diffuse(view.salinity(nn::constant(fake_sal.value())), noise_fake, true));
                if (cfg.on_discriminator_batch) {
                    const Matrix fake_clean = view.input(cond, view.salinity(nn::constant(fake_sal.value()))).value();
                    const Matrix real_clean = view.input(cond, view.salinity(nn::constant(s_obs))).value();
                    cfg.on_discriminator_batch(real_in.value(), fake_in.value(), real_clean, fake_clean);
                }
                auto real_out = discriminator_forward(model.discriminator, real_in);
                auto fake_out = discriminator_forward(model.discriminator, fake_in);
                nn::Var ld = nn::scale(
                    nn::add(nn::bce_with_logits(fake_out.logit, 0.0), nn::bce_with_logits(real_out.logit, 1.0)), 0.5);
                if (!std::isfinite(ld.item())) {
                    throw Error(ErrorCode::DivergedLoss, "discriminator loss is not finite at epoch " + std::to_string(epoch));
                }
                zero_all();
                nn::backward(ld);
                opt_d.step();
                rec.d_loss += ld.item();
                last_d = ld.item();
            }

            // generator step
            {
                nn::Var fake_in = view.input(cond, diffuse(view.salinity(fake_sal), noise_fake, true));
                auto real_out = discriminator_forward(model.discriminator, real_in);
                auto fake_out = discriminator_forward(model.discriminator, fake_in);
                nn::Var mse = nn::mean(nn::square(nn::sub(fake_sal, nn::constant(s_obs))));
                nn::Var fm = nn::mean(nn::abs(nn::sub(nn::constant(nn::mean_rows(real_out.features).value()),
                                                      nn::mean_rows(fake_out.features))));
                nn::Var lg = mse;
                if (cfg.fm_weight > 0) lg = nn::add(lg, nn::scale(fm, cfg.fm_weight));
                if (cfg.adv_weight > 0) lg = nn::add(lg, nn::scale(nn::bce_with_logits(fake_out.logit, 1.0), cfg.adv_weight));
                if (!std::isfinite(lg.item())) {
                    throw Error(ErrorCode::DivergedLoss, "generator loss is not finite at epoch " + std::to_string(epoch));
                }
                zero_all();
                nn::backward(lg);
                opt_g.step();
                zero_all();
                rec.g_loss += lg.item();
                last_g = lg.item();
                rec.mse += mse.item();
                rec.feature_matching += fm.item();
            }
            ++batches;
            if (cfg.on_batch) cfg.on_batch(epoch, batches, last_d, last_g);
        }
        if (batches > 0) {
            rec.d_loss /= batches;
            rec.g_loss /= batches;
            rec.mse /= batches;
            rec.feature_matching /= batches;
        }
        rec.val_mae = std::numeric_limits<double>::quiet_NaN();
        if (has_val) {
            rec.val_mae = mae_observed(val_set->s, predict(model, *val_set));
            if (rec.val_mae < best_val) {
                best_val = rec.val_mae;
                result.best_epoch = epoch;
                best = snapshot(g_params);
                auto d_snap = snapshot(d_params);
                best.insert(best.end(), d_snap.begin(), d_snap.end());
            }
        }
        result.history.push_back(rec);
    }
    if (has_val && !best.empty()) {
        std::vector<Matrix> g_vals(best.begin(), best.begin() + static_cast<std::ptrdiff_t>(g_params.size()));
        std::vector<Matrix> d_vals(best.begin() + static_cast<std::ptrdiff_t>(g_params.size()), best.end());
        restore(g_params, g_vals);
        restore(d_params, d_vals);
    } else {
        result.best_epoch = cfg.epochs;
    }
    return result;
}

Eigen::VectorXd predict(const DanModel& model, const FeatureSet& set) {
    Eigen::VectorXd out(set.size());
    auto windows = make_windows(set.trajectories, model.window, nullptr);
    constexpr std::size_t kChunk = 64;
    for (std::size_t start = 0; start < windows.size(); start += kChunk) {
        const auto count = std::min(kChunk, windows.size() - start);
        Batch b = gather(set, std::span<const nn::Segment>(windows).subspan(start, count));
        auto y = generator_forward(model.generator, nn::constant(b.X), b.windows, model.flags).value();
        for (std::size_t w = 0; w < count; ++w) {
            const auto& src = windows[start + w];
            out.segment(src.start, src.length) = y.col(0).segment(b.windows[w].start, src.length);
        }
    }
    return out;
}

Eigen::VectorXd predict_points(const DanModel& model, const Matrix& X) {
    std::vector<nn::Segment> singles;
    singles.reserve(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) singles.push_back({i, 1});
    return generator_forward(model.generator, nn::constant(X), singles, model.flags).value().col(0);
}

}  // namespace oasis::dan
