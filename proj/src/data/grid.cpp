// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#include "matmvp/data/grid.hpp"

#include <cmath>
#include <cstdio>

#include "matmvp/core/error.hpp"

namespace matmvp::data {

void GridConfig::validate() const {
    require(azimuths >= 2, "grid: azimuth count must be >= 2");
    require(env_count >= 1 && env_count <= render::env_preset_count(),
            "grid: env preset count out of range");
    require(!fixed_elevations.empty(), "grid: need at least one fixed elevation");
    require(resolved_target_azimuths() % 6 == 0, "grid: target azimuths must be a multiple of 6");
    require(!light_elevations.empty() && !light_azimuths.empty(), "grid: point-light angle sets empty");
    require(render::valid_resolution(resolution), "grid: resolution must be one of {32, 64, 128}");
}

void PairSamplerConfig::validate() const {
    require(p >= 0.0 && p <= 1.0, "pair sampler: p must lie in [0, 1]");
}

std::string format_view_dir(double elev_deg, double azim_deg) {
    auto fmt = [](double deg) {
        char buf[32];
        if (std::abs(deg - std::nearbyint(deg)) < 1e-9)
            std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(std::llround(deg)));
        else
            std::snprintf(buf, sizeof(buf), "%.1f", deg);
        return std::string(buf);
    };
    return "e" + fmt(elev_deg) + "_a" + fmt(azim_deg);
}

CandidateSet build_candidate_grid(const render::SceneSpec& scene, const GridConfig& grid) {
    grid.validate();
    CandidateSet set;
    set.scene_seed = scene.seed;
    set.delta_phi = grid.delta_phi();

    for (double elev : grid.fixed_elevations) {
        for (int a = 0; a < grid.azimuths; ++a) {
            const double azim = a * grid.delta_phi();
            for (int e = 0; e < grid.env_count; ++e) {
                CandidateEntry entry;
                entry.pose = render::make_pose(elev, azim, grid.radius, grid.fov_deg);
                entry.lighting = render::LightingCondition::env(e);
                entry.point_tier = false;
                entry.view_dir = format_view_dir(elev, azim);
                entry.rgb_file = "rgb_" + entry.lighting.tag() + ".png";
                set.env_indices.push_back(static_cast<int>(set.entries.size()));
                set.entries.push_back(std::move(entry));
            }
        }
    }

    if (grid.random_tier) {
        Rng rng(derive_seed(grid.seed ^ splitmix64(scene.seed), "grid-random-tier"));
        for (int a = 0; a < grid.azimuths; ++a) {
            const double azim = a * grid.delta_phi();
            const double elev = rng.uniform(grid.random_elev_min, grid.random_elev_max);
            const double theta =
                grid.light_elevations[rng.uniform_index(grid.light_elevations.size())];
            const double phi = grid.light_azimuths[rng.uniform_index(grid.light_azimuths.size())];
            CandidateEntry entry;
            entry.pose = render::make_pose(elev, azim, grid.radius, grid.fov_deg);
            entry.lighting = render::LightingCondition::point(theta, phi, grid.point_intensity);
            entry.point_tier = true;
            entry.view_dir = format_view_dir(elev, azim);
            entry.rgb_file = "rgb_" + entry.lighting.tag() + ".png";
            set.point_indices.push_back(static_cast<int>(set.entries.size()));
            set.entries.push_back(std::move(entry));
        }
    }

    require(static_cast<int>(set.entries.size()) == grid.candidate_count(),
            "grid: enumeration does not match the closed-form count");
    return set;
}

std::vector<int> azimuth_neighbors(const CandidateSet& cands, int i1) {
    require(i1 >= 0 && i1 < static_cast<int>(cands.entries.size()), "azimuth_neighbors: bad index");
    const double phi1 = cands.entries[static_cast<size_t>(i1)].pose.azimuth_deg;
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(cands.entries.size()); ++i) {
        const double d = render::azimuth_distance(cands.entries[static_cast<size_t>(i)].pose.azimuth_deg, phi1);
        if (d < 1e-6 || std::abs(d - cands.delta_phi) < 1e-6) out.push_back(i);
    }
    return out;
}

int sample_i1(const CandidateSet& cands, const PairSamplerConfig& cfg, Rng& rng) {
    cfg.validate();
    if (cands.point_indices.empty() || cands.env_indices.empty())
        throw ConfigError("pair sampler: candidate set must populate both lighting tiers");
    const auto& tier = rng.bernoulli(cfg.p) ? cands.point_indices : cands.env_indices;
    return tier[rng.uniform_index(tier.size())];
}

int sample_i2(const CandidateSet& cands, int i1, Rng& rng) {
    const std::vector<int> s = azimuth_neighbors(cands, i1);
    return s[rng.uniform_index(s.size())];
}

ReferencePair sample_reference_pair(const CandidateSet& cands, const PairSamplerConfig& cfg,
                                    Rng& rng) {
    ReferencePair pair;
    pair.i1 = sample_i1(cands, cfg, rng);
    pair.i2 = sample_i2(cands, pair.i1, rng);
    return pair;
}

}  // namespace matmvp::data
