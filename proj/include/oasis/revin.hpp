#pragma once

// Reversible instance normalization: per-channel standardization with a
// learnable affine map and its exact inverse.

#include "oasis/nn.hpp"

#include <Eigen/Dense>

#include <span>

namespace oasis::revin {

using Eigen::RowVectorXd;

struct Stats {
    double mu = 0.0;
    double var = 0.0;
};

/// Mean and population variance (divisor M) of the finite entries of
/// `values`; NaN entries are treated as unobserved. Throws EmptySequence
/// when nothing is observed.
Stats compute_stats(std::span<const double> values);

struct RevinState {
    RowVectorXd mu;
    RowVectorXd var;
    RowVectorXd gamma;
    RowVectorXd beta;
    double eps = 1e-5;

    /// gamma = 1, beta = 0, mu = 0, var = 1.
    static RevinState identity(Eigen::Index channels, double eps = 1e-5);

    Eigen::Index channels() const { return mu.size(); }
};

/// Column-wise stats over the observed (finite) entries of `x` (rows x C),
/// with a fresh affine.
RevinState fit_state(const Eigen::MatrixXd& x, double eps = 1e-5);

/// gamma (x - mu) / (sqrt(var) + eps) + beta column-wise; NaN entries pass through.
Eigen::MatrixXd normalize(const Eigen::MatrixXd& x, const RevinState& state);

/// (y - beta) / gamma (sqrt(var) + eps) + mu; throws ZeroGamma if any gamma is 0.
Eigen::MatrixXd denormalize(const Eigen::MatrixXd& y, const RevinState& state);

/// Trainable form used inside models. Statistics are constants, gamma and
/// beta are parameters.
class RevinLayer {
public:
    RevinLayer() = default;
    explicit RevinLayer(const RevinState& state);

    /// Normalizes the columns of `x` as channels [first, first + x.cols()).
    nn::Var normalize(const nn::Var& x, Eigen::Index first = 0) const;
    /// Inverse map for a single channel; y is (rows x 1).
    nn::Var denormalize_channel(const nn::Var& y, Eigen::Index channel) const;

    RevinState state() const;
    std::vector<nn::Var> parameters() const { return {gamma_, beta_}; }
    nn::Var gamma() const { return gamma_; }
    nn::Var beta() const { return beta_; }
    bool fitted() const { return gamma_.defined(); }

private:
    RowVectorXd mu_;
    RowVectorXd var_;
    double eps_ = 1e-5;
    nn::Var gamma_;
    nn::Var beta_;
};

}  // namespace oasis::revin
