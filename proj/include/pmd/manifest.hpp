#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmd/geometry.hpp"
#include "pmd/registration.hpp"

namespace pmd {

/// One view entry of a bundle manifest: a directory with 8 fringe image
/// files (build_sequence order), an optional frequency-1 stack, and an
/// optional white image.
struct ManifestView {
    std::string dir;
    std::vector<std::string> fringe;
    std::vector<std::string> fringe_lo;
    std::string white; // may be empty; required only for multi-view runs
};

/// Per-bundle processing defaults, overridable from the command line.
struct ProcessingDefaults {
    std::optional<double> hp_sigma;
    std::optional<double> mod_threshold;
    std::optional<double> ransac_tol_px;
    std::optional<int> ransac_max_iters;
    std::optional<std::uint64_t> seed;
};

struct Manifest {
    int schema_version = 1;
    int frequency = 1;
    std::vector<ManifestView> views;
    std::optional<CameraIntrinsics> intrinsics;
    std::optional<SceneGeometry> geometry;
    ProcessingDefaults defaults;

    static Manifest from_json(const nlohmann::json& j);
    static Manifest load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
    void save(const std::filesystem::path& path) const;

    /// Structural validation plus existence of every referenced file.
    void validate(const std::filesystem::path& base_dir) const;
};

/// Loads and decodes every view of the manifest into CaptureBundles,
/// in manifest order.
std::vector<CaptureBundle> load_bundle(const std::filesystem::path& manifest_path);

nlohmann::json intrinsics_to_json(const CameraIntrinsics& k);
CameraIntrinsics intrinsics_from_json(const nlohmann::json& j);
nlohmann::json scene_geometry_to_json(const SceneGeometry& g);
SceneGeometry scene_geometry_from_json(const nlohmann::json& j);

} // namespace pmd
