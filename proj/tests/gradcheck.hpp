#pragma once

// Central finite-difference oracle for gradients computed by oasis::nn.

#include "oasis/nn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace gradcheck {

/// Largest relative error between backprop and central differences over
/// every entry of `param`. `loss` must rebuild the graph from scratch.
inline double max_relative_error(oasis::nn::Var param, const std::function<oasis::nn::Var()>& loss,
                                 double step = 1e-5) {
    param.zero_grad();
    oasis::nn::backward(loss());
    oasis::nn::Matrix analytic = param.grad();
    if (analytic.size() == 0) analytic = oasis::nn::Matrix::Zero(param.rows(), param.cols());
    double worst = 0.0;
    for (Eigen::Index i = 0; i < param.rows(); ++i) {
        for (Eigen::Index j = 0; j < param.cols(); ++j) {
            const double saved = param.value()(i, j);
            param.mutable_value()(i, j) = saved + step;
            const double up = loss().item();
            param.mutable_value()(i, j) = saved - step;
            const double down = loss().item();
            param.mutable_value()(i, j) = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double denom = std::max({std::abs(numeric), std::abs(analytic(i, j)), 1e-6});
            worst = std::max(worst, std::abs(numeric - analytic(i, j)) / denom);
        }
    }
    param.zero_grad();
    return worst;
}

}  // namespace gradcheck
