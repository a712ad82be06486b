#pragma once

// Reference imputers: ordinary kriging, geographically weighted regression,
// MLP, LSTM and a vanilla GAN, plus the diffusion-adversarial model, all
// behind one fit/predict interface.

#include "oasis/dan.hpp"

#include "json.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace oasis::baselines {

using nn::Matrix;

enum class Metric { Degrees, HaversineKm };

/// Degrees: plain Euclidean distance in (lat, lon).
double distance(Metric metric, double lat1, double lon1, double lat2, double lon2);

// Kriging ------------------------------------------------------------------

enum class VariogramModel { Exponential, Spherical, Gaussian };

VariogramModel parse_variogram_model(const std::string& s);
std::string to_string(VariogramModel m);

struct Variogram {
    VariogramModel model = VariogramModel::Exponential;
    double nugget = 0.0;
    double sill = 1.0;
    double range = 1.0;

    /// Semivariance; 0 at h = 0, nugget + (sill - nugget) f(h / range) beyond.
    double operator()(double h) const;
    /// sill - gamma(h), with C(0) = sill.
    double covariance(double h) const { return sill - (*this)(h); }
};

struct SpatialPoint {
    double lat = 0.0;
    double lon = 0.0;
    double value = 0.0;
};

struct EmpiricalVariogram {
    std::vector<double> lag;    // mean pair distance per bin
    std::vector<double> gamma;  // half mean squared difference
    std::vector<long> pairs;
};

/// Bins pair semivariances into `lags` equal bins up to half the largest
/// pair distance. Uses a seeded subsample of at most `max_points`.
EmpiricalVariogram empirical_variogram(const std::vector<SpatialPoint>& points, int lags, Metric metric,
                                       int max_points = 2000, std::uint64_t seed = 42);

/// Pair-count weighted least squares: grid over range, closed form for
/// (nugget, partial sill) or sill alone when the nugget is held at 0.
Variogram fit_variogram(const EmpiricalVariogram& emp, VariogramModel model, bool fit_nugget = false);

struct KrigingConfig {
    VariogramModel model = VariogramModel::Exponential;
    bool fit_nugget = false;
    int lags = 15;
    /// Local neighbourhood size; all points are used when there are fewer.
    int neighbors = 64;
    int max_variogram_points = 2000;
    Metric metric = Metric::Degrees;
    std::uint64_t seed = 42;
    /// Skips variogram fitting.
    std::optional<Variogram> variogram;
};

struct KrigingEstimate {
    double value = 0.0;
    double variance = 0.0;
};

class KrigingModel {
public:
    /// Throws TooFewPoints (< 3 distinct locations).
    static KrigingModel fit(std::vector<SpatialPoint> points, const KrigingConfig& cfg = {});

    /// Throws UnfittedModel and SingularSystem.
    KrigingEstimate predict(double lat, double lon) const;
    /// Weights over the neighbourhood used for this query, paired with point indices.
    std::vector<std::pair<std::size_t, double>> weights(double lat, double lon) const;

    const Variogram& variogram() const { return variogram_; }
    const std::vector<SpatialPoint>& points() const { return points_; }
    bool fitted() const { return fitted_; }

private:
    struct Solve {
        std::vector<std::size_t> index;
        Eigen::VectorXd lambda;
        double mu = 0.0;
        Eigen::VectorXd c0;
    };
    Solve solve(double lat, double lon) const;

    std::vector<SpatialPoint> points_;
    Variogram variogram_;
    KrigingConfig cfg_;
    bool fitted_ = false;
};

// GWR ------------------------------------------------------------------------

struct GwrConfig {
    /// Gaussian kernel width in distance units; nullopt selects by
    /// leave-one-out cross-validation over a log grid.
    std::optional<double> bandwidth;
    int cv_grid = 10;
    int cv_max_points = 500;
    Metric metric = Metric::Degrees;
    std::uint64_t seed = 42;
};

/// Regressors are (1, lat, lon, extra...).
struct GwrData {
    Matrix coords;       // n x 2 (lat, lon)
    Matrix extra;        // n x q, may have 0 columns
    Eigen::VectorXd y;   // ignored for queries
};

struct GwrResult {
    Eigen::VectorXd values;
    /// Local design rank below the regressor count (minimum-norm local fit used).
    std::vector<bool> rank_deficient;
    /// No kernel mass at all; filled from the global OLS fit.
    std::vector<bool> ols_fallback;
    double bandwidth = 0.0;
    std::vector<std::pair<double, double>> cv_scores;  // (bandwidth, LOO MSE)
};

/// Global ordinary least squares coefficients for (1, lat, lon, extra...).
Eigen::VectorXd ols_coefficients(const GwrData& data);

/// Throws TooFewPoints when n < number of regressors + 1.
GwrResult gwr_fit_predict(const GwrData& train, const GwrData& queries, const GwrConfig& cfg = {});

/// Bandwidth minimizing leave-one-out squared error.
double gwr_select_bandwidth(const GwrData& train, const GwrConfig& cfg,
                            std::vector<std::pair<double, double>>* scores = nullptr);

// Common interface ------------------------------------------------------------

struct NeuralConfig {
    int epochs = 100;
    int batch_size = 8;  // windows
    int window = 32;
    double lr = 1e-3;
    int lstm_hidden = 32;
    std::uint64_t seed = 42;
};

struct ImputerOptions {
    dan::FeatureConfig features;
    dan::TrainConfig train;  // used by the diffusion-adversarial model and the GAN
    NeuralConfig neural;
    KrigingConfig kriging;
    GwrConfig gwr;
};

class Imputer {
public:
    virtual ~Imputer() = default;
    virtual std::string name() const = 0;
    /// `val` may be null.
    virtual void fit(const dan::FeatureSet& train, const dan::FeatureSet* val) = 0;
    /// Throws UnfittedModel before fit.
    virtual Eigen::VectorXd predict(const dan::FeatureSet& data) const = 0;
    /// Hyperparameters and fitted summaries.
    virtual nlohmann::json metadata() const = 0;
    /// The underlying training result for the diffusion-adversarial kinds.
    virtual const dan::TrainResult* dan_result() const { return nullptr; }
};

/// oasis, kriging, gwr, mlp, lstm, gan. Throws UnknownModel.
std::unique_ptr<Imputer> make_imputer(const std::string& kind, const ImputerOptions& options);
std::vector<std::string> imputer_kinds();

/// The vanilla GAN configuration: no normalization, attention, diffusion or
/// feature matching; BCE adversary plus MSE.
dan::TrainConfig vanilla_gan_config(dan::TrainConfig base);

// Standalone neural baselines -----------------------------------------------------

/// z-score of the training inputs and target.
struct Standardizer {
    Eigen::RowVectorXd x_mu, x_sd;
    double y_mu = 0.0, y_sd = 1.0;

    static Standardizer fit(const dan::FeatureSet& data);
    Matrix inputs(const Matrix& X) const;
};

struct MlpModel {
    Standardizer scaler;
    std::vector<nn::Linear> layers;  // hidden layers then the head
    std::vector<double> history;     // training MSE per epoch (standardized)
};

MlpModel train_mlp(const dan::FeatureSet& train, const std::vector<int>& hidden, int out_width,
                   const NeuralConfig& cfg);
Eigen::VectorXd predict_mlp(const MlpModel& m, const Matrix& X);

struct LstmModel {
    Standardizer scaler;
    nn::Linear gates;  // (in + hidden) -> 4 hidden: input, forget, cell, output
    nn::Linear head;
    int hidden = 32;
    int window = 32;
    std::vector<double> history;
};

LstmModel train_lstm(const dan::FeatureSet& train, const NeuralConfig& cfg);
/// One output per input row; tokens run through windows of `m.window`.
Eigen::VectorXd predict_lstm(const LstmModel& m, const dan::FeatureSet& data);

}  // namespace oasis::baselines
