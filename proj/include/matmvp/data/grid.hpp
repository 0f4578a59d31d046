// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "matmvp/core/rng.hpp"
#include "matmvp/render/camera.hpp"
#include "matmvp/render/lighting.hpp"
#include "matmvp/render/render.hpp"
#include "matmvp/render/scene.hpp"

namespace matmvp::data {

// Rendering grid for one dataset. Candidates: fixed elevations x `azimuths` x
// `env_count` presets, plus (optionally) one random-elevation point-light pose
// per azimuth. Targets: ground-truth map rings of `target_azimuths` views per
// fixed elevation.
struct GridConfig {
    std::vector<double> fixed_elevations{-20.0, 0.0, 20.0};
    int azimuths = 24;
    int env_count = 3;
    bool random_tier = true;
    std::vector<double> light_elevations{-30.0, 0.0, 30.0};
    std::vector<double> light_azimuths{-45.0, 0.0, 45.0};
    double point_intensity = 3.0;
    double random_elev_min = -30.0;
    double random_elev_max = 45.0;
    int target_azimuths = 0;  // 0 = auto: azimuths if divisible by 6, else 12
    double radius = 2.7;
    double fov_deg = 40.0;
    int resolution = 32;
    uint64_t seed = 1234;

    double delta_phi() const { return 360.0 / azimuths; }
    int resolved_target_azimuths() const {
        if (target_azimuths > 0) return target_azimuths;
        return azimuths % 6 == 0 ? azimuths : 12;
    }
    // Closed-form enumeration count of the candidate set.
    int candidate_count() const {
        return static_cast<int>(fixed_elevations.size()) * azimuths * env_count +
               (random_tier ? azimuths : 0);
    }
    void validate() const;
};

struct CandidateEntry {
    render::CameraPose pose;
    render::LightingCondition lighting;
    bool point_tier = false;
    std::string view_dir;  // e.g. "e0_a45", "e12.3_a90"
    std::string rgb_file;  // e.g. "rgb_env1.png"
};

struct CandidateSet {
    uint64_t scene_seed = 0;
    double delta_phi = 15.0;
    std::vector<CandidateEntry> entries;
    std::vector<int> point_indices;
    std::vector<int> env_indices;
};

// Deterministic in (scene.seed, grid.seed).
CandidateSet build_candidate_grid(const render::SceneSpec& scene, const GridConfig& grid);

struct PairSamplerConfig {
    double p = 0.4;  // probability that I1 comes from the point-light tier
    void validate() const;
};

// Indices into CandidateSet::entries.
struct ReferencePair {
    int i1 = -1;
    int i2 = -1;
};

// S(I1): all candidates whose camera azimuth is phi_c(I1) or phi_c(I1) +/- one
// grid step (circular).
std::vector<int> azimuth_neighbors(const CandidateSet& cands, int i1);

int sample_i1(const CandidateSet& cands, const PairSamplerConfig& cfg, Rng& rng);
int sample_i2(const CandidateSet& cands, int i1, Rng& rng);
ReferencePair sample_reference_pair(const CandidateSet& cands, const PairSamplerConfig& cfg,
                                    Rng& rng);

// "e<elev>_a<azim>"; integral angles print without decimals, others with one.
std::string format_view_dir(double elev_deg, double azim_deg);

}  // namespace matmvp::data
