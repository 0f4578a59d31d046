// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#include "matmvp/data/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "matmvp/core/error.hpp"
#include "matmvp/core/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace matmvp::data {

namespace {

constexpr const char* kFormat = "matmvp.dataset";
constexpr int kVersion = 1;

json grid_to_json(const GridConfig& g) {
    json j;
    j["fixed_elevations"] = g.fixed_elevations;
    j["azimuths"] = g.azimuths;
    j["env_count"] = g.env_count;
    j["random_tier"] = g.random_tier;
    j["light_elevations"] = g.light_elevations;
    j["light_azimuths"] = g.light_azimuths;
    j["point_intensity"] = g.point_intensity;
    j["random_elev_min"] = g.random_elev_min;
    j["random_elev_max"] = g.random_elev_max;
    j["target_azimuths"] = g.resolved_target_azimuths();
    j["radius"] = g.radius;
    j["fov_deg"] = g.fov_deg;
    j["resolution"] = g.resolution;
    j["seed"] = g.seed;
    return j;
}

GridConfig grid_from_json(const json& j) {
    GridConfig g;
    g.fixed_elevations = j.at("fixed_elevations").get<std::vector<double>>();
    g.azimuths = j.at("azimuths").get<int>();
    g.env_count = j.at("env_count").get<int>();
    g.random_tier = j.at("random_tier").get<bool>();
    g.light_elevations = j.at("light_elevations").get<std::vector<double>>();
    g.light_azimuths = j.at("light_azimuths").get<std::vector<double>>();
    g.point_intensity = j.at("point_intensity").get<double>();
    g.random_elev_min = j.at("random_elev_min").get<double>();
    g.random_elev_max = j.at("random_elev_max").get<double>();
    g.target_azimuths = j.at("target_azimuths").get<int>();
    g.radius = j.at("radius").get<double>();
    g.fov_deg = j.at("fov_deg").get<double>();
    g.resolution = j.at("resolution").get<int>();
    g.seed = j.at("seed").get<uint64_t>();
    return g;
}

std::string scene_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%04d", index);
    return buf;
}

// One view directory to render: pose plus the lighting conditions needing an
// rgb file there.
struct ViewJob {
    render::CameraPose pose;
    std::vector<render::LightingCondition> lightings;
};

std::map<std::string, ViewJob> plan_views(const render::SceneSpec& scene, const GridConfig& grid) {
    std::map<std::string, ViewJob> jobs;
    const int T = grid.resolved_target_azimuths();
    for (double elev : grid.fixed_elevations) {
        for (int a = 0; a < T; ++a) {
            const double azim = a * (360.0 / T);
            const std::string dir = format_view_dir(elev, azim);
            jobs[dir].pose = render::make_pose(elev, azim, grid.radius, grid.fov_deg);
        }
    }
    const CandidateSet cands = build_candidate_grid(scene, grid);
    for (const CandidateEntry& e : cands.entries) {
        ViewJob& job = jobs[e.view_dir];
        job.pose = e.pose;
        job.lightings.push_back(e.lighting);
    }
    return jobs;
}

}  // namespace

void write_dataset(const std::string& root, const std::vector<uint64_t>& scene_seeds,
                   const GridConfig& grid) {
    grid.validate();
    require(!scene_seeds.empty(), "write_dataset: need at least one scene");
    fs::create_directories(root);

    std::vector<std::map<std::string, uint32_t>> file_maps(scene_seeds.size());

    parallel_for_each(static_cast<int64_t>(scene_seeds.size()), [&](int64_t si) {
        const render::SceneSpec scene = render::make_scene(scene_seeds[static_cast<size_t>(si)]);
        const fs::path scene_dir = fs::path(root) / scene_name(static_cast<int>(si)) / "views";
        auto& files = file_maps[static_cast<size_t>(si)];

        for (const auto& [dir, job] : plan_views(scene, grid)) {
            const fs::path view_dir = scene_dir / dir;
            fs::create_directories(view_dir);
            const render::MaterialMaps maps = render_gt_maps(scene, job.pose, grid.resolution);
            const render::GeometryMaps geom = render_geometry(scene, job.pose, grid.resolution);

            auto emit = [&](const std::string& name, auto&& writer) {
                const fs::path p = view_dir / name;
                writer(p.string());
                files["views/" + dir + "/" + name] = crc32_of_file(p.string());
            };
            emit("albedo.png", [&](const std::string& p) { write_png(p, maps.albedo_map); });
            emit("mr.png", [&](const std::string& p) { write_png(p, maps.mr_map); });
            emit("mask.png", [&](const std::string& p) { write_png(p, geom.mask); });
            emit("normal.f32", [&](const std::string& p) { write_f32(p, geom.normal01); });
            emit("position.f32", [&](const std::string& p) { write_f32(p, geom.position01); });
            for (const auto& light : job.lightings) {
                const Image rgb = relight(maps, geom, job.pose, light);
                emit("rgb_" + light.tag() + ".png", [&](const std::string& p) { write_png(p, rgb); });
            }
        }
    });

    json scenes = json::array();
    for (size_t si = 0; si < scene_seeds.size(); ++si) {
        json s;
        s["id"] = scene_name(static_cast<int>(si));
        s["seed"] = scene_seeds[si];
        json files = json::object();
        for (const auto& [rel, crc] : file_maps[si]) {
            char hex[16];
            std::snprintf(hex, sizeof(hex), "%08x", crc);
            files[rel] = hex;
        }
        s["files"] = std::move(files);
        scenes.push_back(std::move(s));
    }
    json index;
    index["format"] = kFormat;
    index["version"] = kVersion;
    index["grid"] = grid_to_json(grid);
    index["scenes"] = std::move(scenes);

    std::ofstream out(fs::path(root) / "index.json");
    if (!out) throw DataIntegrityError("write_dataset: cannot write index.json under " + root);
    out << index.dump(2) << '\n';
}

Dataset Dataset::open(const std::string& root) {
    Dataset d;
    d.root_ = root;
    std::ifstream in(fs::path(root) / "index.json");
    if (!in) throw DataIntegrityError("dataset: missing index.json under " + root);
    json index;
    try {
        in >> index;
    } catch (const json::exception& e) {
        throw DataIntegrityError(std::string("dataset: malformed index.json: ") + e.what());
    }
    try {
        if (index.at("format").get<std::string>() != kFormat || index.at("version").get<int>() != kVersion)
            throw DataIntegrityError("dataset: unsupported index format/version");
        d.grid_ = grid_from_json(index.at("grid"));
        for (const auto& s : index.at("scenes")) {
            SceneRec rec;
            rec.id = s.at("id").get<std::string>();
            rec.seed = s.at("seed").get<uint64_t>();
            for (const auto& [rel, crc] : s.at("files").items())
                rec.files[rel] = static_cast<uint32_t>(std::stoul(crc.get<std::string>(), nullptr, 16));
            d.scenes_.push_back(std::move(rec));
        }
    } catch (const json::exception& e) {
        throw DataIntegrityError(std::string("dataset: malformed index.json: ") + e.what());
    }
    d.grid_.validate();
    return d;
}

uint64_t Dataset::scene_seed(int scene_index) const {
    require(scene_index >= 0 && scene_index < scene_count(), "dataset: scene index out of range");
    return scenes_[static_cast<size_t>(scene_index)].seed;
}

const std::string& Dataset::scene_id(int scene_index) const {
    require(scene_index >= 0 && scene_index < scene_count(), "dataset: scene index out of range");
    return scenes_[static_cast<size_t>(scene_index)].id;
}

int Dataset::file_count(int scene_index) const {
    require(scene_index >= 0 && scene_index < scene_count(), "dataset: scene index out of range");
    return static_cast<int>(scenes_[static_cast<size_t>(scene_index)].files.size());
}

const CandidateSet& Dataset::candidates(int scene_index) const {
    require(scene_index >= 0 && scene_index < scene_count(), "dataset: scene index out of range");
    std::lock_guard<std::mutex> lock(*mu_);
    auto it = candidate_cache_.find(scene_index);
    if (it == candidate_cache_.end()) {
        const render::SceneSpec scene = render::make_scene(scenes_[static_cast<size_t>(scene_index)].seed);
        it = candidate_cache_.emplace(scene_index, build_candidate_grid(scene, grid_)).first;
    }
    return it->second;
}

std::vector<double> Dataset::target_ring_azimuths() const {
    const int T = grid_.resolved_target_azimuths();
    std::vector<double> az(static_cast<size_t>(T));
    for (int a = 0; a < T; ++a) az[static_cast<size_t>(a)] = a * (360.0 / T);
    return az;
}

void Dataset::verify_crc(const SceneRec& scene, const std::string& rel) const {
    const auto it = scene.files.find(rel);
    if (it == scene.files.end())
        throw DataIntegrityError("dataset: file not in index: " + scene.id + "/" + rel);
    const std::string abs = (fs::path(root_) / scene.id / rel).string();
    uint32_t crc;
    try {
        crc = crc32_of_file(abs);
    } catch (const DataIntegrityError&) {
        throw DataIntegrityError("dataset: missing file: " + abs);
    }
    if (crc != it->second) throw DataIntegrityError("dataset: checksum mismatch for " + abs);
}

const Image& Dataset::cached(const std::string& abs, bool f32) const {
    std::lock_guard<std::mutex> lock(*mu_);
    auto it = image_cache_.find(abs);
    if (it == image_cache_.end())
        it = image_cache_.emplace(abs, f32 ? read_f32(abs) : read_png(abs)).first;
    return it->second;
}

Image Dataset::load_png_checked(int scene_index, const std::string& rel) const {
    require(scene_index >= 0 && scene_index < scene_count(), "dataset: scene index out of range");
    const SceneRec& scene = scenes_[static_cast<size_t>(scene_index)];
    verify_crc(scene, rel);
    return cached((fs::path(root_) / scene.id / rel).string(), false);
}

Image Dataset::load_f32_checked(int scene_index, const std::string& rel) const {
    require(scene_index >= 0 && scene_index < scene_count(), "dataset: scene index out of range");
    const SceneRec& scene = scenes_[static_cast<size_t>(scene_index)];
    verify_crc(scene, rel);
    return cached((fs::path(root_) / scene.id / rel).string(), true);
}

TargetView Dataset::load_target(int scene_index, double elev_deg, double azim_deg) const {
    const std::string dir = "views/" + format_view_dir(elev_deg, azim_deg) + "/";
    TargetView t;
    t.pose = render::make_pose(elev_deg, azim_deg, grid_.radius, grid_.fov_deg);
    t.maps.albedo_map = load_png_checked(scene_index, dir + "albedo.png");
    t.maps.mr_map = load_png_checked(scene_index, dir + "mr.png");
    t.geometry.mask = load_png_checked(scene_index, dir + "mask.png");
    t.geometry.normal01 = load_f32_checked(scene_index, dir + "normal.f32");
    t.geometry.position01 = load_f32_checked(scene_index, dir + "position.f32");
    return t;
}

RefView Dataset::load_ref(int scene_index, const CandidateEntry& entry) const {
    RefView r;
    r.rgb = load_png_checked(scene_index, "views/" + entry.view_dir + "/" + entry.rgb_file);
    r.pose = entry.pose;
    r.lighting = entry.lighting;
    r.view_dir = entry.view_dir;
    return r;
}

TrainingSample Dataset::assemble_training_sample(int scene_index, const PairSamplerConfig& cfg,
                                                 Rng& rng) const {
    require(scene_index >= 0 && scene_index < scene_count(), "dataset: scene index out of range");
    TrainingSample sample;
    sample.scene_index = scene_index;
    sample.scene_seed = scenes_[static_cast<size_t>(scene_index)].seed;

    sample.elevation = grid_.fixed_elevations[rng.uniform_index(grid_.fixed_elevations.size())];
    const int T = grid_.resolved_target_azimuths();
    const int stride = T / 6;
    const int offset = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(stride)));
    for (int j = 0; j < 6; ++j) {
        const double azim = (offset + j * stride) * (360.0 / T);
        sample.target_azimuths.push_back(azim);
        sample.targets.push_back(load_target(scene_index, sample.elevation, azim));
    }

    const CandidateSet& cands = candidates(scene_index);
    const ReferencePair pair = sample_reference_pair(cands, cfg, rng);
    sample.ref1 = load_ref(scene_index, cands.entries[static_cast<size_t>(pair.i1)]);
    sample.ref2 = load_ref(scene_index, cands.entries[static_cast<size_t>(pair.i2)]);
    return sample;
}

}  // namespace matmvp::data
