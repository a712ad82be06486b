#pragma once

// Cosine-scheduled forward diffusion used to perturb discriminator inputs.

#include "oasis/nn.hpp"
#include "oasis/random.hpp"

#include <vector>

namespace oasis::scheduler {

/// Steps are 1-based: index t in [1, T_diff].
struct DiffusionSchedule {
    int T_diff = 0;
    double beta0 = 0.0;
    double betaT = 0.0;
    std::vector<double> beta;       // beta[t-1]
    std::vector<double> alpha;      // 1 - beta
    std::vector<double> alpha_bar;  // running product of alpha

    double beta_at(int t) const { return beta.at(static_cast<std::size_t>(t - 1)); }
    double alpha_at(int t) const { return alpha.at(static_cast<std::size_t>(t - 1)); }
    double alpha_bar_at(int t) const { return alpha_bar.at(static_cast<std::size_t>(t - 1)); }
};

inline constexpr int kDefaultSteps = 50;
inline constexpr double kDefaultBeta0 = 1e-4;
inline constexpr double kDefaultBetaT = 0.02;

/// beta_t = beta0 + (betaT - beta0) (1 + cos(pi (T - t) / T)) / 2.
/// Throws InvalidRange unless T_diff >= 1 and 0 < beta0 < betaT < 1.
DiffusionSchedule make_schedule(int T_diff = kDefaultSteps, double beta0 = kDefaultBeta0,
                                double betaT = kDefaultBetaT);

/// sqrt(alpha_bar_t) x + sqrt(1 - alpha_bar_t) noise.
nn::Matrix add_noise(const nn::Matrix& x, int t, const nn::Matrix& noise, const DiffusionSchedule& schedule);

/// Differentiable in `x`; the noise term is a constant.
nn::Var add_noise(const nn::Var& x, int t, const nn::Matrix& noise, const DiffusionSchedule& schedule);

/// Uniform step in [1, T_diff].
int sample_step(Rng& rng, int T_diff);

}  // namespace oasis::scheduler
