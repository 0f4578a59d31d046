// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#include "matmvp/diffusion/schedule.hpp"

#include <algorithm>
#include <cmath>

namespace matmvp::diffusion {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kBetaStart = 1e-4;
constexpr double kBetaEnd = 0.02;
constexpr double kCosineS = 0.008;


}  // namespace

NoiseSchedule make_schedule(int T, ScheduleKind kind) {
    require(T >= 2, "make_schedule: T must be >= 2");
    NoiseSchedule s;
    s.T = T;
    s.kind = kind;
    s.beta.resize(static_cast<size_t>(T));
    s.alpha_bar.resize(static_cast<size_t>(T));

    if (kind == ScheduleKind::Linear) {
        double cum = 1.0;
        for (int t = 0; t < T; ++t) {
            const double b = kBetaStart + (kBetaEnd - kBetaStart) * (T == 1 ? 0.0 : static_cast<double>(t) / (T - 1));
            s.beta[static_cast<size_t>(t)] = b;
            cum *= 1.0 - b;
            s.alpha_bar[static_cast<size_t>(t)] = cum;
        }
    } else {
        // Squared-cosine alpha_bar, taken directly from the closed form (no
        // beta clipping, so alpha_bar_T == f(1)/f(0) exactly).
        auto f = [](double u) {
            const double v = std::cos((u + kCosineS) / (1.0 + kCosineS) * kPi / 2.0);
            return v * v;
        };
        const double f0 = f(0.0);
        double prev_ab = 1.0;
        for (int t = 0; t < T; ++t) {
            const double ab = f(static_cast<double>(t + 1) / T) / f0;
            s.beta[static_cast<size_t>(t)] = 1.0 - ab / prev_ab;
            s.alpha_bar[static_cast<size_t>(t)] = ab;
            prev_ab = ab;
        }
    }

    for (int t = 0; t < T; ++t) {
        const double ab = s.alpha_bar[static_cast<size_t>(t)];
        require(ab > 0.0 && ab < 1.0, "make_schedule: alpha_bar out of (0,1)");
        if (t > 0) require(ab < s.alpha_bar[static_cast<size_t>(t) - 1], "make_schedule: alpha_bar not strictly decreasing");
    }
    return s;
}

NoiseSchedule enforce_zero_terminal_snr(const NoiseSchedule& sched) {
    NoiseSchedule out = sched;
    const size_t T = out.alpha_bar.size();
    std::vector<double> sq(T);
    for (size_t i = 0; i < T; ++i) sq[i] = std::sqrt(sched.alpha_bar[i]);
    const double sq_1 = sq.front();
    const double sq_T = sq.back();
    // Shift so the terminal sqrt(alpha_bar) is zero, then scale so the first
    // step keeps its original value.
    const double scale = sq_1 / (sq_1 - sq_T);
    for (size_t i = 0; i < T; ++i) {
        const double v = (sq[i] - sq_T) * scale;
        out.alpha_bar[i] = v * v;
    }
    out.alpha_bar.back() = 0.0;  // exact by construction; pin against roundoff
    // Regenerate betas from the rescaled cumprod.
    double prev = 1.0;
    for (size_t i = 0; i < T; ++i) {
        out.beta[i] = 1.0 - out.alpha_bar[i] / prev;
        prev = out.alpha_bar[i];
        if (prev == 0.0) break;  // beta_T == 1
    }
    out.beta.back() = 1.0;
    out.zsnr_rescaled = true;
    return out;
}

int sample_timestep(const NoiseSchedule& sched, Rng& rng) {
    const int hi = sched.zsnr_rescaled ? sched.T - 1 : sched.T;
    return 1 + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(hi)));
}

std::vector<int> ddim_timesteps(const NoiseSchedule& sched, int steps) {
    require(steps >= 1, "ddim_timesteps: steps must be >= 1");
    const int hi = sched.zsnr_rescaled ? sched.T - 1 : sched.T;
    const int n = std::min(steps, hi);
    std::vector<int> ts;
    ts.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        // Evenly spaced from hi down to 1, inclusive.
        const int t = n == 1 ? hi : static_cast<int>(std::lround(hi - static_cast<double>(i) * (hi - 1) / (n - 1)));
        if (ts.empty() || t < ts.back()) ts.push_back(t);
    }
    return ts;
}

}  // namespace matmvp::diffusion
