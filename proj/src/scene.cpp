#include "pmd/scene.hpp"

#include <fstream>

#include "pmd/image_io.hpp"
#include "pmd/manifest.hpp"

namespace pmd {

using nlohmann::json;

SceneConfig SceneConfig::from_json(const json& j) {
    SceneConfig c;
    if (j.contains("surface")) {
        const json& s = j.at("surface");
        const std::string kind = s.value("kind", "flat");
        if (kind == "flat")
            c.surface.kind = SurfaceKind::Flat;
        else if (kind == "sinusoid")
            c.surface.kind = SurfaceKind::Sinusoid;
        else if (kind == "gaussian_bumps")
            c.surface.kind = SurfaceKind::GaussianBumps;
        else
            fail(ErrorCode::FormatError, "unknown surface kind: " + kind);
        c.surface.amplitude_mm = s.value("amplitude_mm", c.surface.amplitude_mm);
        c.surface.period_mm = s.value("period_mm", c.surface.period_mm);
        c.surface.sigma_mm = s.value("sigma_mm", c.surface.sigma_mm);
        c.surface.seed = s.value("seed", c.surface.seed);
        if (s.contains("albedo")) {
            const json& a = s.at("albedo");
            const std::string akind = a.value("kind", "uniform");
            if (akind == "uniform")
                c.albedo.kind = AlbedoSpec::Kind::Uniform;
            else if (akind == "checker")
                c.albedo.kind = AlbedoSpec::Kind::Checker;
            else if (akind == "noise")
                c.albedo.kind = AlbedoSpec::Kind::Noise;
            else
                fail(ErrorCode::FormatError, "unknown albedo kind: " + akind);
            c.albedo.value = a.value("value", c.albedo.value);
            c.albedo.cell_mm = a.value("cell_mm", c.albedo.cell_mm);
            c.albedo.scale_mm = a.value("scale_mm", c.albedo.scale_mm);
            c.albedo.lo = a.value("lo", c.albedo.lo);
            c.albedo.hi = a.value("hi", c.albedo.hi);
            c.albedo.seed = a.value("seed", c.albedo.seed);
        }
    }
    if (j.contains("camera")) {
        const json& cam = j.at("camera");
        c.image_width = cam.value("width", c.image_width);
        c.image_height = cam.value("height", c.image_height);
        c.fx = cam.value("fx", c.fx);
        c.fy = cam.value("fy", c.fy);
        c.cx = cam.value("cx", c.cx);
        c.cy = cam.value("cy", c.cy);
        c.k1 = cam.value("k1", c.k1);
        c.k2 = cam.value("k2", c.k2);
    }
    if (j.contains("screen")) {
        const json& s = j.at("screen");
        c.screen_width_px = s.value("width_px", c.screen_width_px);
        c.screen_height_px = s.value("height_px", c.screen_height_px);
        c.screen_width_mm = s.value("width_mm", c.screen_width_mm);
        c.screen_height_mm = s.value("height_mm", c.screen_height_mm);
    }
    c.standoff_mm = j.value("standoff_mm", c.standoff_mm);
    c.frequency = j.value("frequency", c.frequency);
    c.ambient = j.value("ambient", c.ambient);
    c.specular_fraction = j.value("specular_fraction", c.specular_fraction);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.seed = j.value("seed", c.seed);
    if (j.contains("device_positions_mm")) {
        c.device_positions_mm.clear();
        for (const auto& p : j.at("device_positions_mm")) {
            if (!p.is_array() || p.size() != 2)
                fail(ErrorCode::FormatError, "device position must be [x, y]");
            c.device_positions_mm.push_back({p[0].get<double>(), p[1].get<double>()});
        }
        if (c.device_positions_mm.empty())
            fail(ErrorCode::FormatError, "device_positions_mm must not be empty");
    }
    return c;
}

SceneConfig SceneConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        fail(ErrorCode::IoError, "cannot open scene file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail(ErrorCode::FormatError, "scene parse error in " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

SyntheticScene build_scene(const SceneConfig& cfg, size_t view_index) {
    if (view_index >= cfg.device_positions_mm.size())
        fail(ErrorCode::InvalidArgument, "view index out of range");
    const double dx = cfg.device_positions_mm[view_index][0];
    const double dy = cfg.device_positions_mm[view_index][1];

    SyntheticScene scene;
    scene.surface = make_analytic_surface(cfg.surface);
    switch (cfg.albedo.kind) {
    case AlbedoSpec::Kind::Uniform:
        scene.surface.albedo = uniform_albedo(cfg.albedo.value);
        break;
    case AlbedoSpec::Kind::Checker:
        scene.surface.albedo = checker_albedo(cfg.albedo.cell_mm, cfg.albedo.lo, cfg.albedo.hi);
        break;
    case AlbedoSpec::Kind::Noise:
        scene.surface.albedo =
            noise_albedo(cfg.albedo.seed, cfg.albedo.scale_mm, cfg.albedo.lo, cfg.albedo.hi);
        break;
    }

    scene.image_width = cfg.image_width;
    scene.image_height = cfg.image_height;
    scene.camera.fx = cfg.fx;
    scene.camera.fy = cfg.fy;
    scene.camera.cx = cfg.cx >= 0.0 ? cfg.cx : (cfg.image_width - 1) / 2.0;
    scene.camera.cy = cfg.cy >= 0.0 ? cfg.cy : (cfg.image_height - 1) / 2.0;
    scene.camera.k1 = cfg.k1;
    scene.camera.k2 = cfg.k2;

    // Camera looks straight down at the surface plane.
    scene.camera_pose.position = Eigen::Vector3d(dx, dy, cfg.standoff_mm);
    scene.camera_pose.rotation.col(0) = Eigen::Vector3d(1, 0, 0);
    scene.camera_pose.rotation.col(1) = Eigen::Vector3d(0, -1, 0);
    scene.camera_pose.rotation.col(2) = Eigen::Vector3d(0, 0, -1);

    // Screen centered over the camera, facing the surface. Its pixel axes are
    // mirrored relative to the camera image axes (front camera and display
    // face the same way), which makes phase grow with surface slope.
    const double pu = cfg.screen_width_mm / cfg.screen_width_px;
    const double pv = cfg.screen_height_mm / cfg.screen_height_px;
    scene.screen.u_axis = Eigen::Vector3d(-pu, 0.0, 0.0);
    scene.screen.v_axis = Eigen::Vector3d(0.0, -pv, 0.0);
    scene.screen.origin =
        Eigen::Vector3d(dx + cfg.screen_width_mm / 2.0, dy + cfg.screen_height_mm / 2.0,
                        cfg.standoff_mm);
    scene.screen.width_px = cfg.screen_width_px;
    scene.screen.height_px = cfg.screen_height_px;

    scene.frequency = cfg.frequency;
    scene.ambient = cfg.ambient;
    scene.specular_fraction = cfg.specular_fraction;
    scene.noise_sigma = cfg.noise_sigma;
    scene.seed = cfg.seed + view_index; // distinct noise per view
    scene.standoff_mm = cfg.standoff_mm;
    return scene;
}

std::vector<CaptureBundle> render_scene_bundles(const SceneConfig& cfg, int jobs) {
    std::vector<CaptureBundle> bundles;
    bundles.reserve(cfg.device_positions_mm.size());
    for (size_t i = 0; i < cfg.device_positions_mm.size(); ++i)
        bundles.push_back(render_bundle(build_scene(cfg, i), jobs));
    return bundles;
}

std::filesystem::path write_bundle_dir(const std::vector<CaptureBundle>& bundles,
                                       const std::filesystem::path& dir) {
    if (bundles.empty())
        fail(ErrorCode::InvalidArgument, "write_bundle_dir: no bundles");
    std::filesystem::create_directories(dir);

    Manifest m;
    m.frequency = bundles.front().frequency;
    m.intrinsics = bundles.front().intrinsics;
    m.geometry = bundles.front().geometry;

    char name[64];
    for (size_t i = 0; i < bundles.size(); ++i) {
        const CaptureBundle& b = bundles[i];
        std::snprintf(name, sizeof(name), "view%02zu", i);
        ManifestView v;
        v.dir = name;
        const auto view_dir = dir / name;
        std::filesystem::create_directories(view_dir);
        for (size_t k = 0; k < b.fringe_images.size(); ++k) {
            std::snprintf(name, sizeof(name), "fringe_%02zu.png", k);
            write_png_gray16(view_dir / name, b.fringe_images[k]);
            v.fringe.push_back(name);
        }
        for (size_t k = 0; k < b.fringe_lo.size(); ++k) {
            std::snprintf(name, sizeof(name), "fringe_lo_%02zu.png", k);
            write_png_gray16(view_dir / name, b.fringe_lo[k]);
            v.fringe_lo.push_back(name);
        }
        write_png_gray16(view_dir / "white.png", b.white_image);
        v.white = "white.png";
        if (b.ground_truth) {
            const SimGroundTruth& gt = *b.ground_truth;
            write_pfm_rgb(view_dir / "gt_normals.pfm", gt.nx, gt.ny, gt.nz);
            write_pfm(view_dir / "gt_gx.pfm", gt.gx);
            write_pfm(view_dir / "gt_gy.pfm", gt.gy);
            write_mask_png(view_dir / "gt_footprint.png",
                           ValidityMask{gt.footprint, 0.0});
        }
        m.views.push_back(std::move(v));
    }
    const auto manifest_path = dir / "manifest.json";
    m.save(manifest_path);
    return manifest_path;
}

} // namespace pmd
