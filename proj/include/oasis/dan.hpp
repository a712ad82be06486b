#pragma once

// Diffusion-adversarial imputation model: generator, discriminator, their
// losses and the alternating training loop.

#include "oasis/gdc.hpp"
#include "oasis/nn.hpp"
#include "oasis/revin.hpp"
#include "oasis/scheduler.hpp"
#include "oasis/tensorize.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace oasis::dan {

using nn::Matrix;

/// Per-point model inputs: [fractional day, sin(daily phase), cos(daily phase), lat, lon, tide?].
struct FeatureConfig {
    Timestamp time_origin{};
    bool use_tide = true;
    std::string tide_channel = "tide";

    int width() const { return use_tide ? 6 : 5; }
    std::vector<std::string> names() const;
};

Eigen::RowVectorXd encode_point(const FeatureConfig& cfg, Timestamp t, double lat, double lon, double tide);

/// Rows grouped by trajectory in time order.
struct FeatureSet {
    Matrix X;                   // points x width
    Eigen::VectorXd s;          // salinity, NaN where unobserved
    std::vector<nn::Segment> trajectories;
    std::vector<std::string> trajectory_ids;
    std::vector<Timestamp> timestamps;

    Eigen::Index size() const { return X.rows(); }
};

/// Throws MalformedInput when use_tide is set and a record lacks the tide covariate.
FeatureSet build_features(const TrajectorySet& set, const FeatureConfig& cfg);

/// Splits every trajectory into consecutive windows of at most `window`
/// tokens. With `rng` the lengths are drawn uniformly from [1, window].
std::vector<nn::Segment> make_windows(const std::vector<nn::Segment>& trajectories, int window, Rng* rng = nullptr);

struct Flags {
    bool use_norm = true;
    bool use_gdc = true;
    bool use_sd = true;
};

struct Architecture {
    int in_dim = 6;
    std::vector<int> fe_hidden{64, 64};
    gdc::AttentionConfig attention{64, 4};
    std::vector<int> d_hidden{64, 32};
    /// Hidden layer of the discriminator whose activations feed feature matching.
    int feature_tap = 1;
    /// The discriminator also sees the generator's input features.
    bool conditional_d = true;
    bool zero_init_d_head = false;
    double revin_eps = 1e-5;
};

struct GeneratorParams {
    revin::RevinLayer revin;  // channels: inputs then salinity
    std::vector<nn::Linear> fe;
    gdc::GdcBlock attn;
    nn::Linear head;

    std::vector<nn::Var> parameters() const;
    Eigen::Index salinity_channel() const { return revin.state().channels() - 1; }
};

struct DiscriminatorParams {
    std::vector<nn::Linear> layers;
    int feature_tap = 1;

    std::vector<nn::Var> parameters() const;
    int input_width() const { return static_cast<int>(layers.front().in_features()); }
};

/// Random initialization; the normalizer starts from `stats`.
GeneratorParams make_generator(const Architecture& arch, const revin::RevinState& stats, Rng& rng);
DiscriminatorParams make_discriminator(const Architecture& arch, Rng& rng);

/// Salinity in psu, one per input row. Tokens attend within `windows`.
nn::Var generator_forward(const GeneratorParams& g, const nn::Var& X, const std::vector<nn::Segment>& windows,
                          const Flags& flags);

struct DiscriminatorOutput {
    nn::Var logit;
    nn::Var prob;
    nn::Var features;  // activations at the tap layer
};

/// Throws NonFiniteInput.
DiscriminatorOutput discriminator_forward(const DiscriminatorParams& d, const nn::Var& sample);

inline constexpr double kProbClamp = 1e-7;

/// 0.5 (mean BCE(fake, 0) + mean BCE(real, 1)) with probabilities clamped to [1e-7, 1 - 1e-7].
double d_loss(std::span<const double> real_probs, std::span<const double> fake_probs);

/// mean (s - s_hat)^2 + mean_j |f_real_j - f_fake_j| over batch-mean feature vectors.
double g_loss(std::span<const double> s_true, std::span<const double> s_hat, std::span<const double> f_real,
              std::span<const double> f_fake);

struct TrainConfig {
    int epochs = 100;
    int batch_size = 8;  // windows per batch
    int window = 32;
    bool jitter_windows = true;
    double lr_g = 1e-3;
    double lr_d = 1e-3;
    Flags flags;
    std::uint64_t seed = 42;
    bool noise_reals = true;
    bool step_per_sample = false;
    double fm_weight = 1.0;
    double adv_weight = 0.0;
    int T_diff = scheduler::kDefaultSteps;
    double beta0 = scheduler::kDefaultBeta0;
    double betaT = scheduler::kDefaultBetaT;
    Architecture arch;

    /// Observer for each discriminator step: the (real, fake) inputs it saw
    /// and the same samples before diffusion.
    std::function<void(const Matrix& real_in, const Matrix& fake_in, const Matrix& real_clean,
                       const Matrix& fake_clean)>
        on_discriminator_batch;
    /// Observer for per-batch losses (epoch and batch are 1-based).
    std::function<void(int epoch, int batch, double d_loss, double g_loss)> on_batch;

    /// Throws InvalidConfig.
    void validate() const;
};

TrainConfig train_config_from_json(const std::string& text, TrainConfig base = {});
std::string train_config_to_json(const TrainConfig& cfg);

struct EpochRecord {
    int epoch = 0;
    double d_loss = 0.0;
    double g_loss = 0.0;
    double mse = 0.0;
    double feature_matching = 0.0;
    double val_mae = 0.0;  // NaN without a validation set
};

struct DanModel {
    Architecture arch;
    Flags flags;
    FeatureConfig features;
    int window = 32;
    GeneratorParams generator;
    DiscriminatorParams discriminator;
};

struct TrainResult {
    DanModel model;
    std::vector<EpochRecord> history;
    int best_epoch = 0;
};

/// Alternating discriminator / generator optimization. The best epoch by
/// validation MAE is kept; without validation data the last epoch is.
TrainResult train(const FeatureSet& train_set, const FeatureSet* val_set, const FeatureConfig& features,
                  const TrainConfig& cfg, const scheduler::DiffusionSchedule& schedule);

/// Generator output for every row, windows of `model.window` tokens.
Eigen::VectorXd predict(const DanModel& model, const FeatureSet& set);

/// Prediction for explicit rows forming a single token window each.
Eigen::VectorXd predict_points(const DanModel& model, const Matrix& X);

}  // namespace oasis::dan
