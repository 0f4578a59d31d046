// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "matmvp/core/image.hpp"
#include "matmvp/data/grid.hpp"
#include "matmvp/render/render.hpp"

namespace matmvp::data {

struct TargetView {
    render::CameraPose pose;
    render::MaterialMaps maps;
    render::GeometryMaps geometry;
};

struct RefView {
    Image rgb;
    render::CameraPose pose;
    render::LightingCondition lighting;
    std::string view_dir;
};

// Six GT target views sharing one elevation plus a reference pair.
struct TrainingSample {
    int scene_index = -1;
    uint64_t scene_seed = 0;
    double elevation = 0.0;
    std::vector<double> target_azimuths;
    std::vector<TargetView> targets;
    RefView ref1, ref2;
};

// Renders and persists the full grid for every scene seed. Layout:
//   root/index.json
//   root/<scene_id>/views/<view_dir>/{albedo.png, mr.png, normal.f32,
//       position.f32, mask.png, rgb_<light_tag>.png...}
// index.json records the grid, scene seeds and a crc32 per file.
void write_dataset(const std::string& root, const std::vector<uint64_t>& scene_seeds,
                   const GridConfig& grid);

class Dataset {
public:
    static Dataset open(const std::string& root);

    const std::string& root() const { return root_; }
    const GridConfig& grid() const { return grid_; }
    int scene_count() const { return static_cast<int>(scenes_.size()); }
    uint64_t scene_seed(int scene_index) const;
    const std::string& scene_id(int scene_index) const;
    int file_count(int scene_index) const;

    const CandidateSet& candidates(int scene_index) const;
    std::vector<double> target_ring_azimuths() const;

    TargetView load_target(int scene_index, double elev_deg, double azim_deg) const;
    RefView load_ref(int scene_index, const CandidateEntry& entry) const;

    // Elevation, rotational offset and the reference pair all come from `rng`
    // in a fixed draw order, so equal seeds give equal samples.
    TrainingSample assemble_training_sample(int scene_index, const PairSamplerConfig& cfg,
                                            Rng& rng) const;

    // Checksum-verified raw access (paths relative to the scene directory).
    Image load_png_checked(int scene_index, const std::string& rel) const;
    Image load_f32_checked(int scene_index, const std::string& rel) const;

private:
    struct SceneRec {
        std::string id;
        uint64_t seed = 0;
        std::map<std::string, uint32_t> files;  // rel path -> crc32
    };

    void verify_crc(const SceneRec& scene, const std::string& rel) const;
    const Image& cached(const std::string& abs, bool f32) const;

    std::string root_;
    GridConfig grid_;
    std::vector<SceneRec> scenes_;
    mutable std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
    mutable std::unordered_map<std::string, Image> image_cache_;
    mutable std::unordered_map<int, CandidateSet> candidate_cache_;
};

}  // namespace matmvp::data
