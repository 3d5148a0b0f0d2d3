#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmd/simulator.hpp"

namespace pmd {

/// Albedo texture selection for scene files.
struct AlbedoSpec {
    enum class Kind { Uniform, Checker, Noise } kind = Kind::Uniform;
    double value = 1.0;    // uniform
    double cell_mm = 5.0;  // checker
    double scale_mm = 4.0; // noise
    double lo = 0.2, hi = 1.0;
    std::uint64_t seed = 7;
};

/// Declarative scene description (the `simulate` input file). One bundle is
/// rendered per device position; camera and screen translate together.
struct SceneConfig {
    SurfaceSpec surface;
    AlbedoSpec albedo;
    int image_width = 512;
    int image_height = 512;
    double fx = 800.0, fy = 800.0;
    double cx = -1.0, cy = -1.0; // <0 means image center
    double k1 = 0.0, k2 = 0.0;
    int screen_width_px = 512;
    int screen_height_px = 320;
    double screen_width_mm = 120.0;
    double screen_height_mm = 75.0;
    double standoff_mm = 200.0;
    int frequency = 1;
    double ambient = 0.1;
    double specular_fraction = 0.7;
    double noise_sigma = 0.0;
    std::uint64_t seed = 1;
    std::vector<std::array<double, 2>> device_positions_mm = {{0.0, 0.0}};

    static SceneConfig from_json(const nlohmann::json& j);
    static SceneConfig load(const std::filesystem::path& path);
};

/// Builds the renderable scene for one device position. The screen is
/// centered over the camera with its axes mirrored relative to the camera
/// image axes, as on a tablet whose display faces the object.
SyntheticScene build_scene(const SceneConfig& cfg, size_t view_index);

/// Writes bundles to the on-disk layout (16-bit PNG images, view
/// subdirectories, manifest.json, ground-truth PFMs for simulated data).
/// Returns the manifest path.
std::filesystem::path write_bundle_dir(const std::vector<CaptureBundle>& bundles,
                                       const std::filesystem::path& dir);

/// Convenience: render every configured device position.
std::vector<CaptureBundle> render_scene_bundles(const SceneConfig& cfg, int jobs = 0);

} // namespace pmd
