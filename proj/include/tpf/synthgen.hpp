#pragma once

#include "tpf/geometry.hpp"
#include "tpf/image.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace tpf {

struct SceneSpec {
    std::uint64_t seed = 1;
    int width = 128;
    int height = 128;
    int min_instances = 1;
    int max_instances = 4;
    double min_aspect = 3.0;
    double max_aspect = 10.0;
    bool curved = false;    // half of the instances become quadratic-arc ribbons
    bool adjacent = false;  // instance 1 runs parallel to instance 0 within 2 grid cells
    double min_gap_cells = 2.0;
    double min_stroke_px = 0.0;  // 0: derived from the image size
    double max_stroke_px = 0.0;

    void validate() const;
    double stroke_min() const;
    double stroke_max() const;
};

enum class ShapeKind { Quad, Arc };

struct InstanceInfo {
    ShapeKind kind = ShapeKind::Quad;
    double stroke = 0.0;  // ribbon thickness, px
    double length = 0.0;  // centerline length, px
    std::array<double, 3> color{};
};

struct SceneSample {
    Image image;
    std::vector<Polygon> polygons;
    std::vector<InstanceInfo> instances;
    SceneSpec spec;
};

/// Pure function of the spec. Throws PlacementFailed when an instance cannot be placed under the
/// gap constraint within 100 attempts.
SceneSample generate_scene(const SceneSpec& spec);

struct CorpusEntry {
    std::string image_file;
    std::string annotation_file;
    std::uint64_t seed = 0;
    int instances = 0;
};

struct CorpusManifest {
    std::uint64_t base_seed = 0;
    int width = 0;
    int height = 0;
    std::vector<CorpusEntry> scenes;
    int total_instances = 0;
};

/// Writes scene_<i>.ppm, scene_<i>.txt and manifest.json; scene i uses seed base + i.
CorpusManifest generate_corpus(const SceneSpec& base, int count, const std::string& out_dir);

CorpusManifest read_manifest(const std::string& corpus_dir);

struct CorpusScene {
    std::string name;  // file stem, e.g. scene_3
    Image image;
    std::vector<Polygon> polygons;
};

/// Loads every scene listed in the manifest (images and validated annotations).
std::vector<CorpusScene> load_corpus(const std::string& corpus_dir);

} // namespace tpf
