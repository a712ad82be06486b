#pragma once

// Metrics, experiment orchestration and field plots.

#include "oasis/baselines.hpp"
#include "oasis/synthetic.hpp"

#include "json.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace oasis::eval {

struct MetricReport {
    double mae = 0.0;
    double rmse = 0.0;
    double mape = 0.0;  // percent
    std::size_t n = 0;
    /// Terms with |y| < 1e-9, left out of MAPE.
    std::size_t mape_excluded = 0;
};

/// Throws LengthMismatch and EmptyInput.
MetricReport metrics(std::span<const double> y, std::span<const double> yhat);

struct ExperimentConfig {
    /// "synthetic" or the path of a delimited drifter table.
    std::string dataset = "synthetic";
    SyntheticConfig synthetic;
    std::vector<std::string> models = baselines::imputer_kinds();
    dan::Flags flags;
    bool use_tide = true;
    std::vector<std::uint64_t> seeds{42};
    SplitRatios split;
    baselines::ImputerOptions options;
    /// Run artifacts go under <output_dir>/<config hash>; empty disables persistence.
    std::string output_dir;
};

/// Recognized keys: dataset, synthetic, models, ablation {use_norm, use_gdc,
/// use_sd}, use_tide, seeds, split {train, val, test}, train, neural,
/// kriging, gwr, output_dir. Throws InvalidConfig.
ExperimentConfig experiment_config_from_json(const std::string& text);
nlohmann::json to_json(const ExperimentConfig& cfg);
/// Hash of everything that affects results (output_dir excluded).
std::string config_hash(const ExperimentConfig& cfg);

struct ResultRow {
    std::string model;
    std::string dataset;
    std::string variant;  // "full", "w/o Norm", "with tide", ...
    std::uint64_t seed = 42;
    MetricReport report;
    double seconds = 0.0;
    nlohmann::json metadata;
};

struct ResultsTable {
    std::vector<ResultRow> rows;
    std::string config_hash;

    std::string to_csv() const;
    /// Fixed-width rows followed by per (model, variant) means over seeds.
    std::string to_text() const;
    nlohmann::json to_json() const;
    /// Mean of a metric over seeds for one (model, variant); NaN if absent.
    double mean(const std::string& model, const std::string& variant, double MetricReport::*field) const;
};

struct Variant {
    std::string name;
    dan::Flags flags;
    bool use_tide = true;
};

/// Train on the train split, select on val, score the test split, for every
/// (seed, variant, model). Errors carry the failing model and seed.
ResultsTable run_experiment(const ExperimentConfig& cfg, const std::vector<Variant>& variants);
/// One "full" variant with the configured flags and tide setting.
ResultsTable run_experiment(const ExperimentConfig& cfg);
/// full, w/o Norm, w/o GDC, w/o SD on the oasis model.
std::vector<Variant> ablation_variants();
/// The oasis model with and without the tide covariate.
std::vector<Variant> tide_variants();

// Plots ---------------------------------------------------------------------

struct FieldPlotSpec {
    double lat_min = 0.0;
    double lat_max = 1.0;
    double lon_min = 0.0;
    double lon_max = 1.0;
    int width = 240;  // field pixels
    int height = 240;
    Timestamp time{};
    double tide = 0.0;
    /// Drawn on top of the field in the same color scale.
    std::vector<baselines::SpatialPoint> observations;
    std::string title;
};

struct FieldPlot {
    nn::Matrix field;  // height x width, first row at lat_max
    double vmin = 0.0;
    double vmax = 0.0;
};

/// Writes a PNG of the imputed field with a color bar; the scale spans the
/// field and observation extremes and is recorded in Legend-Min/Legend-Max
/// text chunks. Throws UnfittedModel for a null model and IoError.
FieldPlot emit_field_plot(const dan::DanModel* model, const FieldPlotSpec& spec, const std::string& path);

/// 8-bit RGB PNG with optional tEXt chunks.
void write_png(const std::string& path, int width, int height, const std::vector<std::uint8_t>& rgb,
               const std::vector<std::pair<std::string, std::string>>& text = {});
/// Reads back tEXt chunks; for tests and tooling.
std::vector<std::pair<std::string, std::string>> read_png_text(const std::string& path);

/// Maps t in [0, 1] onto a perceptual blue-green-yellow ramp.
std::array<std::uint8_t, 3> colormap(double t);

}  // namespace oasis::eval
