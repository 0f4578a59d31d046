// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "matmvp/core/error.hpp"
#include "matmvp/core/rng.hpp"

namespace matmvp::diffusion {

enum class ScheduleKind { Linear, Cosine };
enum class ReverseMode { Ddpm, DdimEta0 };

// Discrete epsilon-prediction schedule. Arrays are 1-based conceptually:
// beta[t-1] and alpha_bar[t-1] hold the values for step t in [1, T];
// alpha_bar(0) == 1 by convention.
struct NoiseSchedule {
    int T = 0;
    ScheduleKind kind = ScheduleKind::Linear;
    bool zsnr_rescaled = false;
    std::vector<double> beta;
    std::vector<double> alpha_bar;

    double alpha_bar_at(int t) const {
        require(t >= 0 && t <= T, "alpha_bar_at: t out of range");
        return t == 0 ? 1.0 : alpha_bar[static_cast<size_t>(t) - 1];
    }
    double snr(int t) const {
        const double ab = alpha_bar_at(t);
        return ab / (1.0 - ab);
    }
};

NoiseSchedule make_schedule(int T, ScheduleKind kind);

// Shift-and-scale rescale of sqrt(alpha_bar) so that alpha_bar_T == 0 exactly
// while alpha_bar_1 is unchanged; betas are regenerated from the new cumprod.
NoiseSchedule enforce_zero_terminal_snr(const NoiseSchedule& sched);

// Uniform training timestep in [1, T]; skips t == T on rescaled schedules
// (the epsilon target is degenerate at alpha_bar == 0).
int sample_timestep(const NoiseSchedule& sched, Rng& rng);

// z_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps, elementwise.
template <class S>
std::vector<S> q_sample(const std::vector<S>& x0, int t, const std::vector<S>& eps,
                        const NoiseSchedule& sched) {
    require(x0.size() == eps.size(), "q_sample: x0/eps shape mismatch");
    require(t >= 1 && t <= sched.T, "q_sample: t out of range");
    const S a = static_cast<S>(std::sqrt(sched.alpha_bar_at(t)));
    const S b = static_cast<S>(std::sqrt(1.0 - sched.alpha_bar_at(t)));
    std::vector<S> z(x0.size());
    for (size_t i = 0; i < x0.size(); ++i) z[i] = a * x0[i] + b * eps[i];
    return z;
}

// x0 estimate implied by an epsilon prediction; zero when alpha_bar_t == 0.
template <class S>
std::vector<S> predict_x0(const std::vector<S>& z_t, int t, const std::vector<S>& eps_hat,
                          const NoiseSchedule& sched) {
    require(z_t.size() == eps_hat.size(), "predict_x0: shape mismatch");
    const double ab = sched.alpha_bar_at(t);
    std::vector<S> x0(z_t.size(), S(0));
    if (ab == 0.0) return x0;
    const S inv = static_cast<S>(1.0 / std::sqrt(ab));
    const S b = static_cast<S>(std::sqrt(1.0 - ab));
    for (size_t i = 0; i < z_t.size(); ++i) x0[i] = inv * (z_t[i] - b * eps_hat[i]);
    return x0;
}

// One reverse update from step t to t_prev (default t-1). Ddpm mode requires
// t_prev == t-1 and draws schedule-scaled gaussian noise from `rng` (none at
// t == 1); ddim_eta0 is deterministic and accepts any 0 <= t_prev < t.
template <class S>
std::vector<S> reverse_step(const std::vector<S>& z_t, int t, const std::vector<S>& eps_hat,
                            const NoiseSchedule& sched, ReverseMode mode, Rng& rng,
                            int t_prev = -1) {
    require(t >= 1 && t <= sched.T, "reverse_step: t must be in [1, T]");
    require(z_t.size() == eps_hat.size(), "reverse_step: shape mismatch");
    if (t_prev < 0) t_prev = t - 1;
    require(t_prev >= 0 && t_prev < t, "reverse_step: t_prev must be in [0, t)");

    const size_t n = z_t.size();
    std::vector<S> out(n);
    if (mode == ReverseMode::DdimEta0) {
        const std::vector<S> x0 = predict_x0(z_t, t, eps_hat, sched);
        const double abp = sched.alpha_bar_at(t_prev);
        const S a = static_cast<S>(std::sqrt(abp));
        const S b = static_cast<S>(std::sqrt(1.0 - abp));
        for (size_t i = 0; i < n; ++i) out[i] = a * x0[i] + b * eps_hat[i];
        return out;
    }
    require(t_prev == t - 1, "reverse_step: ddpm mode supports single-step decrements only");
    const double ab_t = sched.alpha_bar_at(t);
    const double ab_p = sched.alpha_bar_at(t - 1);
    const double alpha_t = ab_t / ab_p;
    const double beta_t = 1.0 - alpha_t;
    const S c1 = static_cast<S>(1.0 / std::sqrt(alpha_t));
    const S c2 = static_cast<S>(beta_t / std::sqrt(1.0 - ab_t));
    const double beta_tilde = (1.0 - ab_p) / (1.0 - ab_t) * beta_t;
    const S sigma = static_cast<S>(t == 1 ? 0.0 : std::sqrt(beta_tilde));
    for (size_t i = 0; i < n; ++i) {
        const S mu = c1 * (z_t[i] - c2 * eps_hat[i]);
        out[i] = t == 1 ? mu : mu + sigma * static_cast<S>(rng.gaussian());
    }
    return out;
}

// Decreasing inference ladder with `steps` entries ending at the final step;
// starts at T-1 instead of T on rescaled schedules.
std::vector<int> ddim_timesteps(const NoiseSchedule& sched, int steps);

}  // namespace matmvp::diffusion
