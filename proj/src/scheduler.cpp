#include "oasis/scheduler.hpp"

#include "oasis/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace oasis::scheduler {

DiffusionSchedule make_schedule(int T_diff, double beta0, double betaT) {
    if (T_diff < 1) throw Error(ErrorCode::InvalidRange, "T_diff must be >= 1");
    if (!(beta0 > 0.0 && beta0 < betaT && betaT < 1.0)) {
        throw Error(ErrorCode::InvalidRange, "need 0 < beta0 < betaT < 1");
    }
    DiffusionSchedule s;
    s.T_diff = T_diff;
    s.beta0 = beta0;
    s.betaT = betaT;
    double prod = 1.0;
    for (int t = 1; t <= T_diff; ++t) {
        const double phase = std::numbers::pi * static_cast<double>(T_diff - t) / static_cast<double>(T_diff);
        const double b = beta0 + 0.5 * (betaT - beta0) * (1.0 + std::cos(phase));
        s.beta.push_back(b);
        s.alpha.push_back(1.0 - b);
        prod *= 1.0 - b;
        s.alpha_bar.push_back(prod);
    }
    return s;
}

namespace {

void check_step(int t, const DiffusionSchedule& s) {
    if (t < 1 || t > s.T_diff) {
        throw Error(ErrorCode::StepOutOfRange, "step " + std::to_string(t) + " outside [1, " + std::to_string(s.T_diff) + "]");
    }
}

}  // namespace

nn::Matrix add_noise(const nn::Matrix& x, int t, const nn::Matrix& noise, const DiffusionSchedule& s) {
    check_step(t, s);
    if (noise.rows() != x.rows() || noise.cols() != x.cols()) throw Error(ErrorCode::ShapeMismatch, "noise shape differs");
    const double ab = s.alpha_bar_at(t);
    return std::sqrt(ab) * x + std::sqrt(1.0 - ab) * noise;
}

nn::Var add_noise(const nn::Var& x, int t, const nn::Matrix& noise, const DiffusionSchedule& s) {
    check_step(t, s);
    if (noise.rows() != x.rows() || noise.cols() != x.cols()) throw Error(ErrorCode::ShapeMismatch, "noise shape differs");
    const double ab = s.alpha_bar_at(t);
    return nn::add(nn::scale(x, std::sqrt(ab)), nn::constant(std::sqrt(1.0 - ab) * noise));
}

int sample_step(Rng& rng, int T_diff) {
    if (T_diff < 1) throw Error(ErrorCode::InvalidRange, "T_diff must be >= 1");
    return 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(T_diff)));
}

}  // namespace oasis::scheduler
