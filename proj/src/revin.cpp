#include "oasis/revin.hpp"

#include "oasis/error.hpp"

#include <cmath>
#include <string>

namespace oasis::revin {

Stats compute_stats(std::span<const double> values) {
    double sum = 0.0;
    std::size_t m = 0;
    for (double v : values) {
        if (std::isfinite(v)) {
            sum += v;
            ++m;
        }
    }
    if (m == 0) throw Error(ErrorCode::EmptySequence, "no observed values to normalize");
    Stats s;
    s.mu = sum / static_cast<double>(m);
    double sq = 0.0;
    for (double v : values) {
        if (std::isfinite(v)) sq += (v - s.mu) * (v - s.mu);
    }
    s.var = sq / static_cast<double>(m);
    return s;
}

RevinState RevinState::identity(Eigen::Index channels, double eps) {
    RevinState s;
    s.mu = RowVectorXd::Zero(channels);
    s.var = RowVectorXd::Ones(channels);
    s.gamma = RowVectorXd::Ones(channels);
    s.beta = RowVectorXd::Zero(channels);
    s.eps = eps;
    return s;
}

RevinState fit_state(const Eigen::MatrixXd& x, double eps) {
    if (!(eps > 0)) throw Error(ErrorCode::InvalidConfig, "eps must be positive");
    RevinState s = RevinState::identity(x.cols(), eps);
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        Eigen::VectorXd col = x.col(c);
        auto st = compute_stats(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())));
        s.mu(c) = st.mu;
        s.var(c) = st.var;
    }
    return s;
}

namespace {

void check_width(const Eigen::MatrixXd& x, const RevinState& s) {
    if (x.cols() != s.channels() || s.var.size() != s.channels() || s.gamma.size() != s.channels() ||
        s.beta.size() != s.channels()) {
        throw Error(ErrorCode::ShapeMismatch, "array has " + std::to_string(x.cols()) + " channels, state has " +
                                                  std::to_string(s.channels()));
    }
}

}  // namespace

Eigen::MatrixXd normalize(const Eigen::MatrixXd& x, const RevinState& s) {
    check_width(x, s);
    Eigen::MatrixXd out = x;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double denom = std::sqrt(s.var(c)) + s.eps;
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            if (std::isfinite(x(r, c))) out(r, c) = s.gamma(c) * (x(r, c) - s.mu(c)) / denom + s.beta(c);
        }
    }
    return out;
}

Eigen::MatrixXd denormalize(const Eigen::MatrixXd& y, const RevinState& s) {
    check_width(y, s);
    for (Eigen::Index c = 0; c < s.channels(); ++c) {
        if (s.gamma(c) == 0.0) throw Error(ErrorCode::ZeroGamma, "gamma is zero for channel " + std::to_string(c));
    }
    Eigen::MatrixXd out = y;
    for (Eigen::Index c = 0; c < y.cols(); ++c) {
        const double denom = std::sqrt(s.var(c)) + s.eps;
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            if (std::isfinite(y(r, c))) out(r, c) = (y(r, c) - s.beta(c)) / s.gamma(c) * denom + s.mu(c);
        }
    }
    return out;
}

RevinLayer::RevinLayer(const RevinState& state)
    : mu_(state.mu),
      var_(state.var),
      eps_(state.eps),
      gamma_(nn::parameter(state.gamma)),
      beta_(nn::parameter(state.beta)) {}

nn::Var RevinLayer::normalize(const nn::Var& x, Eigen::Index first) const {
    if (!fitted()) throw Error(ErrorCode::UnfittedNormalizer, "normalizer has no statistics");
    const Eigen::Index n = x.cols();
    if (first < 0 || first + n > mu_.size()) throw Error(ErrorCode::ShapeMismatch, "normalize: channel count differs");
    Eigen::RowVectorXd mu = mu_.segment(first, n);
    Eigen::RowVectorXd inv = (var_.segment(first, n).array().sqrt() + eps_).inverse();
    nn::Matrix z = (x.value().rowwise() - mu).array().rowwise() * inv.array();
    const bool whole = first == 0 && n == mu_.size();
    nn::Var g = whole ? gamma_ : nn::slice_cols(gamma_, first, n);
    nn::Var b = whole ? beta_ : nn::slice_cols(beta_, first, n);
    return nn::add(nn::mul(nn::constant(std::move(z)), g), b);
}

nn::Var RevinLayer::denormalize_channel(const nn::Var& y, Eigen::Index c) const {
    if (!fitted()) throw Error(ErrorCode::UnfittedNormalizer, "normalizer has no statistics");
    if (y.cols() != 1 || c < 0 || c >= mu_.size()) throw Error(ErrorCode::ShapeMismatch, "denormalize: bad channel");
    if (gamma_.value()(0, c) == 0.0) throw Error(ErrorCode::ZeroGamma, "gamma is zero for channel " + std::to_string(c));
    nn::Var g = nn::slice_cols(gamma_, c, 1);
    nn::Var b = nn::slice_cols(beta_, c, 1);
    const double denom = std::sqrt(var_(c)) + eps_;
    return nn::add_scalar(nn::scale(nn::div(nn::sub(y, b), g), denom), mu_(c));
}

RevinState RevinLayer::state() const {
    RevinState s;
    s.mu = mu_;
    s.var = var_;
    s.eps = eps_;
    s.gamma = gamma_.value().row(0);
    s.beta = beta_.value().row(0);
    return s;
}

}  // namespace oasis::revin
