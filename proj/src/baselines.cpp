#include "oasis/baselines.hpp"

#include "oasis/error.hpp"
#include "oasis/random.hpp"

#include <algorithm>
#include <cmath>

namespace oasis::baselines {

// Neural baselines ----------------------------------------------------------------

Standardizer Standardizer::fit(const dan::FeatureSet& data) {
    Standardizer s;
    std::vector<Eigen::Index> obs;
    for (Eigen::Index i = 0; i < data.s.size(); ++i)
        if (std::isfinite(data.s(i))) obs.push_back(i);
    if (obs.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no observed salinity to train on");
    Matrix X(static_cast<Eigen::Index>(obs.size()), data.X.cols());
    Eigen::VectorXd y(static_cast<Eigen::Index>(obs.size()));
    for (std::size_t k = 0; k < obs.size(); ++k) {
        X.row(static_cast<Eigen::Index>(k)) = data.X.row(obs[k]);
        y(static_cast<Eigen::Index>(k)) = data.s(obs[k]);
    }
    s.x_mu = X.colwise().mean();
    s.x_sd = ((X.rowwise() - s.x_mu).array().square().colwise().mean()).sqrt();
    for (Eigen::Index j = 0; j < s.x_sd.size(); ++j)
        if (!(s.x_sd(j) > 1e-12)) s.x_sd(j) = 1.0;
    s.y_mu = y.mean();
    s.y_sd = std::sqrt((y.array() - s.y_mu).square().mean());
    if (!(s.y_sd > 1e-12)) s.y_sd = 1.0;
    return s;
}

Matrix Standardizer::inputs(const Matrix& X) const {
    return (X.rowwise() - x_mu).array().rowwise() / x_sd.array();
}

namespace {

nn::Var mlp_forward(const std::vector<nn::Linear>& layers, const nn::Var& x) {
    nn::Var h = x;
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) h = nn::leaky_relu(layers[i](h));
    return layers.back()(h);
}

std::vector<nn::Var> linear_params(const std::vector<nn::Linear>& layers) {
    std::vector<nn::Var> p;
    for (const auto& l : layers) {
        p.push_back(l.weight);
        p.push_back(l.bias);
    }
    return p;
}

void check_neural(const NeuralConfig& cfg) {
    if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.window < 1 || !(cfg.lr > 0) || cfg.lstm_hidden < 1) {
        throw Error(ErrorCode::InvalidConfig, "neural baseline needs positive epochs, batch_size, window, lr, hidden");
    }
}

}  // namespace

MlpModel train_mlp(const dan::FeatureSet& train, const std::vector<int>& hidden, int out_width, const NeuralConfig& cfg) {
    check_neural(cfg);
    MlpModel m;
    m.scaler = Standardizer::fit(train);
    Rng rng(cfg.seed);
    auto width = train.X.cols();
    for (int h : hidden) {
        m.layers.push_back(nn::make_linear(width, h, rng));
        width = h;
    }
    m.layers.push_back(nn::make_linear(width, out_width, rng));

    std::vector<Eigen::Index> obs;
    for (Eigen::Index i = 0; i < train.s.size(); ++i)
        if (std::isfinite(train.s(i))) obs.push_back(i);
    const Matrix Xs = m.scaler.inputs(train.X);
    const auto rows = static_cast<std::size_t>(std::max(1, cfg.batch_size * (cfg.window + 1) / 2));
    nn::Adam opt(linear_params(m.layers), {.lr = cfg.lr});
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(obs.begin(), obs.end());
        double total = 0.0;
        for (std::size_t start = 0; start < obs.size(); start += rows) {
            const auto count = std::min(rows, obs.size() - start);
            Matrix xb(static_cast<Eigen::Index>(count), Xs.cols()), yb(static_cast<Eigen::Index>(count), 1);
            for (std::size_t k = 0; k < count; ++k) {
                xb.row(static_cast<Eigen::Index>(k)) = Xs.row(obs[start + k]);
                yb(static_cast<Eigen::Index>(k), 0) = (train.s(obs[start + k]) - m.scaler.y_mu) / m.scaler.y_sd;
            }
            auto loss = nn::mean(nn::square(nn::sub(mlp_forward(m.layers, nn::constant(xb)), nn::constant(yb))));
            if (!std::isfinite(loss.item())) throw Error(ErrorCode::DivergedLoss, "MLP loss is not finite");
            opt.zero_grad();
            nn::backward(loss);
            opt.step();
            total += loss.item() * static_cast<double>(count);
        }
        m.history.push_back(total / static_cast<double>(obs.size()) * m.scaler.y_sd * m.scaler.y_sd);
    }
    opt.zero_grad();
    return m;
}

Eigen::VectorXd predict_mlp(const MlpModel& m, const Matrix& X) {
    if (m.layers.empty()) throw Error(ErrorCode::UnfittedModel, "MLP has not been fitted");
    auto y = mlp_forward(m.layers, nn::constant(m.scaler.inputs(X))).value();
    return (y.col(0).array() * m.scaler.y_sd + m.scaler.y_mu).matrix();
}

namespace {

/// Runs the recurrence over `windows` (rows of X). Returns outputs stacked
/// step-major together with the source row of each output.
nn::Var lstm_run(const LstmModel& m, const Matrix& X, std::vector<nn::Segment> windows, std::vector<Eigen::Index>& rows) {
    std::stable_sort(windows.begin(), windows.end(), [](const auto& a, const auto& b) { return a.length > b.length; });
    const auto H = m.hidden;
    const auto n = static_cast<Eigen::Index>(windows.size());
    nn::Var h = nn::constant(Matrix::Zero(n, H));
    nn::Var c = nn::constant(Matrix::Zero(n, H));
    std::vector<nn::Var> outputs;
    rows.clear();
    const Eigen::Index steps = windows.empty() ? 0 : windows.front().length;
    for (Eigen::Index k = 0; k < steps; ++k) {
        Eigen::Index active = 0;
        while (active < n && windows[static_cast<std::size_t>(active)].length > k) ++active;
        Matrix xk(active, X.cols());
        for (Eigen::Index w = 0; w < active; ++w) {
            const auto r = windows[static_cast<std::size_t>(w)].start + k;
            xk.row(w) = X.row(r);
            rows.push_back(r);
        }
        if (active < h.rows()) {
            h = nn::slice_rows(h, 0, active);
            c = nn::slice_rows(c, 0, active);
        }
        auto z = m.gates(nn::concat_cols({nn::constant(xk), h}));
        auto i = nn::sigmoid(nn::slice_cols(z, 0, H));
        auto f = nn::sigmoid(nn::slice_cols(z, H, H));
        auto g = nn::tanh(nn::slice_cols(z, 2 * H, H));
        auto o = nn::sigmoid(nn::slice_cols(z, 3 * H, H));
        c = nn::add(nn::mul(f, c), nn::mul(i, g));
        h = nn::mul(o, nn::tanh(c));
        outputs.push_back(m.head(h));
    }
    return nn::concat_rows(outputs);
}

}  // namespace

LstmModel train_lstm(const dan::FeatureSet& train, const NeuralConfig& cfg) {
    check_neural(cfg);
    LstmModel m;
    m.scaler = Standardizer::fit(train);
    m.hidden = cfg.lstm_hidden;
    m.window = cfg.window;
    Rng rng(cfg.seed);
    const auto in = train.X.cols();
    m.gates = nn::make_linear(in + m.hidden, 4 * m.hidden, rng);
    m.gates.bias.mutable_value().middleCols(m.hidden, m.hidden).setOnes();  // forget gate starts open
    m.head = nn::make_linear(m.hidden, 1, rng);
    const Matrix Xs = m.scaler.inputs(train.X);
    nn::Adam opt({m.gates.weight, m.gates.bias, m.head.weight, m.head.bias}, {.lr = cfg.lr});
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto windows = dan::make_windows(train.trajectories, cfg.window, &rng);
        rng.shuffle(windows.begin(), windows.end());
        double total = 0.0;
        long counted = 0;
        for (std::size_t start = 0; start < windows.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const auto count = std::min(static_cast<std::size_t>(cfg.batch_size), windows.size() - start);
            std::vector<nn::Segment> batch(windows.begin() + static_cast<std::ptrdiff_t>(start),
                                           windows.begin() + static_cast<std::ptrdiff_t>(start + count));
            std::vector<Eigen::Index> rows;
            auto y = lstm_run(m, Xs, batch, rows);
            Matrix target(y.rows(), 1), mask(y.rows(), 1);
            long obs = 0;
            for (std::size_t k = 0; k < rows.size(); ++k) {
                const double s = train.s(rows[k]);
                const bool ok = std::isfinite(s);
                target(static_cast<Eigen::Index>(k), 0) = ok ? (s - m.scaler.y_mu) / m.scaler.y_sd : 0.0;
                mask(static_cast<Eigen::Index>(k), 0) = ok ? 1.0 : 0.0;
                obs += ok;
            }
            if (obs == 0) continue;
            auto loss = nn::scale(nn::sum(nn::mul(nn::square(nn::sub(y, nn::constant(target))), nn::constant(mask))),
                                  1.0 / static_cast<double>(obs));
            if (!std::isfinite(loss.item())) throw Error(ErrorCode::DivergedLoss, "LSTM loss is not finite");
            opt.zero_grad();
            nn::backward(loss);
            opt.step();
            total += loss.item() * static_cast<double>(obs);
            counted += obs;
        }
        m.history.push_back(counted ? total / static_cast<double>(counted) * m.scaler.y_sd * m.scaler.y_sd : 0.0);
    }
    opt.zero_grad();
    return m;
}

Eigen::VectorXd predict_lstm(const LstmModel& m, const dan::FeatureSet& data) {
    if (!m.gates.weight.defined()) throw Error(ErrorCode::UnfittedModel, "LSTM has not been fitted");
    const Matrix Xs = m.scaler.inputs(data.X);
    auto windows = dan::make_windows(data.trajectories, m.window);
    Eigen::VectorXd out = Eigen::VectorXd::Constant(data.size(), std::numeric_limits<double>::quiet_NaN());
    constexpr std::size_t kChunk = 64;
    for (std::size_t start = 0; start < windows.size(); start += kChunk) {
        std::vector<nn::Segment> chunk(windows.begin() + static_cast<std::ptrdiff_t>(start),
                                       windows.begin() + static_cast<std::ptrdiff_t>(std::min(windows.size(), start + kChunk)));
        std::vector<Eigen::Index> rows;
        auto y = lstm_run(m, Xs, chunk, rows).value();
        for (std::size_t k = 0; k < rows.size(); ++k)
            out(rows[k]) = y(static_cast<Eigen::Index>(k), 0) * m.scaler.y_sd + m.scaler.y_mu;
    }
    return out;
}

// Imputers ---------------------------------------------------------------------

dan::TrainConfig vanilla_gan_config(dan::TrainConfig base) {
    base.flags = {false, false, false};
    base.fm_weight = 0.0;
    base.adv_weight = 1.0;
    return base;
}

namespace {

constexpr Eigen::Index kLat = 3;
constexpr Eigen::Index kLon = 4;
constexpr Eigen::Index kTide = 5;

void require_fitted(bool fitted, const std::string& name) {
    if (!fitted) throw Error(ErrorCode::UnfittedModel, name + " has not been fitted");
}

class DanImputer : public Imputer {
public:
    DanImputer(std::string name, dan::TrainConfig cfg, dan::FeatureConfig features)
        : name_(std::move(name)), cfg_(std::move(cfg)), features_(std::move(features)) {}

    std::string name() const override { return name_; }

    void fit(const dan::FeatureSet& train, const dan::FeatureSet* val) override {
        auto schedule = scheduler::make_schedule(cfg_.T_diff, cfg_.beta0, cfg_.betaT);
        result_ = dan::train(train, val, features_, cfg_, schedule);
        fitted_ = true;
    }

    Eigen::VectorXd predict(const dan::FeatureSet& data) const override {
        require_fitted(fitted_, name_);
        return dan::predict(result_.model, data);
    }

    nlohmann::json metadata() const override {
        auto j = nlohmann::json::parse(dan::train_config_to_json(cfg_));
        j["use_tide"] = features_.use_tide;
        if (fitted_) {
            j["best_epoch"] = result_.best_epoch;
            j["mse_first_epoch"] = result_.history.front().mse;
            j["mse_final_epoch"] = result_.history.back().mse;
        }
        return j;
    }

    const dan::TrainResult* dan_result() const override { return fitted_ ? &result_ : nullptr; }

private:
    std::string name_;
    dan::TrainConfig cfg_;
    dan::FeatureConfig features_;
    dan::TrainResult result_;
    bool fitted_ = false;
};

class KrigingImputer : public Imputer {
public:
    explicit KrigingImputer(KrigingConfig cfg) : cfg_(std::move(cfg)) {}
    std::string name() const override { return "kriging"; }

    void fit(const dan::FeatureSet& train, const dan::FeatureSet*) override {
        std::vector<SpatialPoint> pts;
        for (Eigen::Index i = 0; i < train.size(); ++i)
            if (std::isfinite(train.s(i))) pts.push_back({train.X(i, kLat), train.X(i, kLon), train.s(i)});
        model_ = KrigingModel::fit(std::move(pts), cfg_);
    }

    Eigen::VectorXd predict(const dan::FeatureSet& data) const override {
        require_fitted(model_.fitted(), "kriging");
        Eigen::VectorXd out(data.size());
        for (Eigen::Index i = 0; i < data.size(); ++i) out(i) = model_.predict(data.X(i, kLat), data.X(i, kLon)).value;
        return out;
    }

    nlohmann::json metadata() const override {
        nlohmann::json j{{"variogram", to_string(cfg_.model)},
                         {"fit_nugget", cfg_.fit_nugget},
                         {"lags", cfg_.lags},
                         {"neighbors", cfg_.neighbors},
                         {"metric", cfg_.metric == Metric::Degrees ? "degrees" : "haversine_km"}};
        if (model_.fitted()) {
            j["nugget"] = model_.variogram().nugget;
            j["sill"] = model_.variogram().sill;
            j["range"] = model_.variogram().range;
        }
        return j;
    }

private:
    KrigingConfig cfg_;
    KrigingModel model_;
};

class GwrImputer : public Imputer {
public:
    GwrImputer(GwrConfig cfg, bool use_tide) : cfg_(std::move(cfg)), use_tide_(use_tide) {}
    std::string name() const override { return "gwr"; }

    void fit(const dan::FeatureSet& train, const dan::FeatureSet*) override {
        std::vector<Eigen::Index> obs;
        for (Eigen::Index i = 0; i < train.size(); ++i)
            if (std::isfinite(train.s(i))) obs.push_back(i);
        train_ = to_data(train, obs);
        for (std::size_t k = 0; k < obs.size(); ++k) train_.y(static_cast<Eigen::Index>(k)) = train.s(obs[k]);
        bandwidth_ = cfg_.bandwidth ? *cfg_.bandwidth : gwr_select_bandwidth(train_, cfg_);
        fitted_ = true;
    }

    Eigen::VectorXd predict(const dan::FeatureSet& data) const override {
        require_fitted(fitted_, "gwr");
        std::vector<Eigen::Index> all(static_cast<std::size_t>(data.size()));
        for (Eigen::Index i = 0; i < data.size(); ++i) all[static_cast<std::size_t>(i)] = i;
        GwrConfig c = cfg_;
        c.bandwidth = bandwidth_;
        return gwr_fit_predict(train_, to_data(data, all), c).values;
    }

    nlohmann::json metadata() const override {
        nlohmann::json j{{"kernel", "gaussian"}, {"use_tide", tide_used()}, {"bandwidth_selection", cfg_.bandwidth ? "fixed" : "loo_cv"}};
        if (fitted_) j["bandwidth"] = bandwidth_;
        return j;
    }

private:
    bool tide_used() const { return use_tide_; }

    GwrData to_data(const dan::FeatureSet& fs, const std::vector<Eigen::Index>& rows) const {
        GwrData d;
        const auto n = static_cast<Eigen::Index>(rows.size());
        const bool tide = use_tide_ && fs.X.cols() > kTide;
        d.coords.resize(n, 2);
        d.extra.resize(n, tide ? 1 : 0);
        d.y = Eigen::VectorXd::Zero(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            d.coords(k, 0) = fs.X(rows[static_cast<std::size_t>(k)], kLat);
            d.coords(k, 1) = fs.X(rows[static_cast<std::size_t>(k)], kLon);
            if (tide) d.extra(k, 0) = fs.X(rows[static_cast<std::size_t>(k)], kTide);
        }
        return d;
    }

    GwrConfig cfg_;
    bool use_tide_;
    GwrData train_;
    double bandwidth_ = 0.0;
    bool fitted_ = false;
};

class MlpImputer : public Imputer {
public:
    MlpImputer(NeuralConfig cfg, std::vector<int> hidden) : cfg_(cfg), hidden_(std::move(hidden)) {}
    std::string name() const override { return "mlp"; }
    void fit(const dan::FeatureSet& train, const dan::FeatureSet*) override {
        model_ = train_mlp(train, hidden_, 1, cfg_);
        fitted_ = true;
    }
    Eigen::VectorXd predict(const dan::FeatureSet& data) const override {
        require_fitted(fitted_, "mlp");
        return predict_mlp(model_, data.X);
    }
    nlohmann::json metadata() const override {
        return {{"hidden", hidden_}, {"epochs", cfg_.epochs}, {"lr", cfg_.lr}, {"seed", cfg_.seed}};
    }

private:
    NeuralConfig cfg_;
    std::vector<int> hidden_;
    MlpModel model_;
    bool fitted_ = false;
};

class LstmImputer : public Imputer {
public:
    explicit LstmImputer(NeuralConfig cfg) : cfg_(cfg) {}
    std::string name() const override { return "lstm"; }
    void fit(const dan::FeatureSet& train, const dan::FeatureSet*) override {
        model_ = train_lstm(train, cfg_);
        fitted_ = true;
    }
    Eigen::VectorXd predict(const dan::FeatureSet& data) const override {
        require_fitted(fitted_, "lstm");
        return predict_lstm(model_, data);
    }
    nlohmann::json metadata() const override {
        return {{"hidden", cfg_.lstm_hidden}, {"window", cfg_.window}, {"epochs", cfg_.epochs}, {"lr", cfg_.lr}, {"seed", cfg_.seed}};
    }

private:
    NeuralConfig cfg_;
    LstmModel model_;
    bool fitted_ = false;
};

}  // namespace

std::vector<std::string> imputer_kinds() { return {"oasis", "kriging", "gwr", "mlp", "lstm", "gan"}; }

std::unique_ptr<Imputer> make_imputer(const std::string& kind, const ImputerOptions& o) {
    if (kind == "oasis") return std::make_unique<DanImputer>("oasis", o.train, o.features);
    if (kind == "gan") return std::make_unique<DanImputer>("gan", vanilla_gan_config(o.train), o.features);
    if (kind == "kriging") return std::make_unique<KrigingImputer>(o.kriging);
    if (kind == "gwr") return std::make_unique<GwrImputer>(o.gwr, o.features.use_tide);
    if (kind == "mlp") {
        auto hidden = o.train.arch.fe_hidden;
        hidden.push_back(o.train.arch.attention.d_model);
        return std::make_unique<MlpImputer>(o.neural, hidden);
    }
    if (kind == "lstm") return std::make_unique<LstmImputer>(o.neural);
    throw Error(ErrorCode::UnknownModel, "unknown model kind '" + kind + "'");
}

}  // namespace oasis::baselines
