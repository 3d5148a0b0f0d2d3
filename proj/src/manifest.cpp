#include "pmd/manifest.hpp"

#include <fstream>

#include "pmd/image_io.hpp"

namespace pmd {

using nlohmann::json;

namespace {

json vec3_to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec3_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3)
        fail(ErrorCode::FormatError, "expected 3-element array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

} // namespace

json intrinsics_to_json(const CameraIntrinsics& k) {
    return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx},
            {"cy", k.cy}, {"k1", k.k1}, {"k2", k.k2}};
}

CameraIntrinsics intrinsics_from_json(const json& j) {
    CameraIntrinsics k;
    k.fx = j.at("fx").get<double>();
    k.fy = j.at("fy").get<double>();
    k.cx = j.at("cx").get<double>();
    k.cy = j.at("cy").get<double>();
    k.k1 = j.value("k1", 0.0);
    k.k2 = j.value("k2", 0.0);
    if (k.fx <= 0.0 || k.fy <= 0.0)
        fail(ErrorCode::FormatError, "intrinsics: focal lengths must be > 0");
    return k;
}

json scene_geometry_to_json(const SceneGeometry& g) {
    json rot = json::array();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            rot.push_back(g.camera.rotation(r, c));
    return {{"screen",
             {{"origin", vec3_to_json(g.screen.origin)},
              {"u_axis", vec3_to_json(g.screen.u_axis)},
              {"v_axis", vec3_to_json(g.screen.v_axis)},
              {"width_px", g.screen.width_px},
              {"height_px", g.screen.height_px}}},
            {"camera", {{"position", vec3_to_json(g.camera.position)}, {"rotation", rot}}},
            {"standoff_mm", g.standoff_mm}};
}

SceneGeometry scene_geometry_from_json(const json& j) {
    SceneGeometry g;
    const json& s = j.at("screen");
    g.screen.origin = vec3_from_json(s.at("origin"));
    g.screen.u_axis = vec3_from_json(s.at("u_axis"));
    g.screen.v_axis = vec3_from_json(s.at("v_axis"));
    g.screen.width_px = s.at("width_px").get<int>();
    g.screen.height_px = s.at("height_px").get<int>();
    if (g.screen.width_px < 1 || g.screen.height_px < 1)
        fail(ErrorCode::FormatError, "screen resolution must be >= 1");
    const json& c = j.at("camera");
    g.camera.position = vec3_from_json(c.at("position"));
    const json& rot = c.at("rotation");
    if (!rot.is_array() || rot.size() != 9)
        fail(ErrorCode::FormatError, "camera rotation must have 9 elements");
    for (int r = 0; r < 3; ++r)
        for (int col = 0; col < 3; ++col)
            g.camera.rotation(r, col) = rot[3 * r + col].get<double>();
    g.standoff_mm = j.at("standoff_mm").get<double>();
    return g;
}

Manifest Manifest::from_json(const json& j) {
    Manifest m;
    m.schema_version = j.value("schema_version", 1);
    if (m.schema_version != 1)
        fail(ErrorCode::FormatError,
             "unsupported manifest schema_version " + std::to_string(m.schema_version));
    m.frequency = j.value("frequency", 1);
    if (m.frequency < 1)
        fail(ErrorCode::InvalidFrequency, "manifest frequency must be >= 1");
    if (!j.contains("views") || !j.at("views").is_array() || j.at("views").empty())
        fail(ErrorCode::FormatError, "manifest must list at least one view");
    for (const auto& jv : j.at("views")) {
        ManifestView v;
        v.dir = jv.value("dir", std::string());
        v.fringe = jv.value("fringe", std::vector<std::string>{});
        v.fringe_lo = jv.value("fringe_lo", std::vector<std::string>{});
        v.white = jv.value("white", std::string());
        m.views.push_back(std::move(v));
    }
    if (j.contains("intrinsics"))
        m.intrinsics = intrinsics_from_json(j.at("intrinsics"));
    if (j.contains("geometry"))
        m.geometry = scene_geometry_from_json(j.at("geometry"));
    if (j.contains("defaults")) {
        const json& d = j.at("defaults");
        if (d.contains("hp_sigma"))
            m.defaults.hp_sigma = d.at("hp_sigma").get<double>();
        if (d.contains("mod_threshold"))
            m.defaults.mod_threshold = d.at("mod_threshold").get<double>();
        if (d.contains("ransac_tol_px"))
            m.defaults.ransac_tol_px = d.at("ransac_tol_px").get<double>();
        if (d.contains("ransac_max_iters"))
            m.defaults.ransac_max_iters = d.at("ransac_max_iters").get<int>();
        if (d.contains("seed"))
            m.defaults.seed = d.at("seed").get<std::uint64_t>();
    }
    return m;
}

Manifest Manifest::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        fail(ErrorCode::IoError, "cannot open manifest " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail(ErrorCode::FormatError, "manifest parse error in " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

json Manifest::to_json() const {
    json j;
    j["schema_version"] = schema_version;
    j["frequency"] = frequency;
    j["views"] = json::array();
    for (const auto& v : views) {
        json jv;
        jv["dir"] = v.dir;
        jv["fringe"] = v.fringe;
        if (!v.fringe_lo.empty())
            jv["fringe_lo"] = v.fringe_lo;
        if (!v.white.empty())
            jv["white"] = v.white;
        j["views"].push_back(jv);
    }
    if (intrinsics)
        j["intrinsics"] = intrinsics_to_json(*intrinsics);
    if (geometry)
        j["geometry"] = scene_geometry_to_json(*geometry);
    json d;
    if (defaults.hp_sigma)
        d["hp_sigma"] = *defaults.hp_sigma;
    if (defaults.mod_threshold)
        d["mod_threshold"] = *defaults.mod_threshold;
    if (defaults.ransac_tol_px)
        d["ransac_tol_px"] = *defaults.ransac_tol_px;
    if (defaults.ransac_max_iters)
        d["ransac_max_iters"] = *defaults.ransac_max_iters;
    if (defaults.seed)
        d["seed"] = *defaults.seed;
    if (!d.empty())
        j["defaults"] = d;
    return j;
}

void Manifest::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out)
        fail(ErrorCode::IoError, "cannot write manifest " + path.string());
    out << to_json().dump(2) << "\n";
}

void Manifest::validate(const std::filesystem::path& base_dir) const {
    for (size_t i = 0; i < views.size(); ++i) {
        const ManifestView& v = views[i];
        const std::string view_name = "view " + std::to_string(i + 1);
        if (v.fringe.size() != 8)
            fail(ErrorCode::FormatError, view_name + " must list 8 fringe images, got " +
                                             std::to_string(v.fringe.size()));
        if (!v.fringe_lo.empty() && v.fringe_lo.size() != 8)
            fail(ErrorCode::FormatError, view_name + " low-frequency stack must list 8 images");
        if (frequency > 1 && v.fringe_lo.empty())
            fail(ErrorCode::FormatError,
                 view_name + " needs a frequency-1 stack (fringe_lo) when frequency > 1");
        auto check = [&](const std::string& name) {
            const auto p = base_dir / v.dir / name;
            if (!std::filesystem::exists(p))
                fail(ErrorCode::IoError, "missing file " + p.string() + " (" + view_name + ")");
        };
        for (const auto& f : v.fringe)
            check(f);
        for (const auto& f : v.fringe_lo)
            check(f);
        if (!v.white.empty())
            check(v.white);
    }
}

std::vector<CaptureBundle> load_bundle(const std::filesystem::path& manifest_path) {
    const Manifest m = Manifest::load(manifest_path);
    const std::filesystem::path base = manifest_path.parent_path();
    m.validate(base);

    std::vector<CaptureBundle> bundles;
    bundles.reserve(m.views.size());
    for (size_t i = 0; i < m.views.size(); ++i) {
        const ManifestView& v = m.views[i];
        CaptureBundle b;
        b.frequency = m.frequency;
        b.intrinsics = m.intrinsics;
        b.geometry = m.geometry;
        for (const auto& f : v.fringe)
            b.fringe_images.push_back(read_png_gray(base / v.dir / f));
        for (const auto& f : v.fringe_lo)
            b.fringe_lo.push_back(read_png_gray(base / v.dir / f));
        if (!v.white.empty())
            b.white_image = read_png_gray(base / v.dir / v.white);
        else
            b.white_image = ImageGrid(b.fringe_images.front().width,
                                      b.fringe_images.front().height, 0.0);
        try {
            b.validate();
        } catch (const Error& e) {
            fail(e.code(), "view " + std::to_string(i + 1) + ": " + e.what());
        }
        bundles.push_back(std::move(b));
    }
    return bundles;
}

} // namespace pmd
