#include "pmd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>

#include "pmd/image_io.hpp"
#include "pmd/parallel.hpp"

namespace pmd {

using nlohmann::json;

json PipelineConfig::to_json() const {
    return {{"hp_sigma", hp_sigma},
            {"mod_threshold", mod_threshold},
            {"scale", scale == ScaleMode::Geometric ? "geometric" : "none"},
            {"seed", seed},
            {"debug_intermediates", debug_intermediates},
            {"ransac",
             {{"inlier_tol_px", ransac.inlier_tol_px},
              {"max_iters", ransac.max_iters},
              {"seed", ransac.seed}}},
            {"formats", formats}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
    PipelineConfig c;
    c.hp_sigma = j.value("hp_sigma", c.hp_sigma);
    c.mod_threshold = j.value("mod_threshold", c.mod_threshold);
    const std::string scale = j.value("scale", "none");
    if (scale == "geometric")
        c.scale = ScaleMode::Geometric;
    else if (scale == "none")
        c.scale = ScaleMode::None;
    else
        fail(ErrorCode::FormatError, "unknown scale mode: " + scale);
    c.seed = j.value("seed", c.seed);
    c.debug_intermediates = j.value("debug_intermediates", c.debug_intermediates);
    if (j.contains("ransac")) {
        const json& r = j.at("ransac");
        c.ransac.inlier_tol_px = r.value("inlier_tol_px", c.ransac.inlier_tol_px);
        c.ransac.max_iters = r.value("max_iters", c.ransac.max_iters);
        c.ransac.seed = r.value("seed", c.ransac.seed);
    }
    if (j.contains("formats"))
        c.formats = j.at("formats").get<std::vector<std::string>>();
    return c;
}

void apply_manifest_defaults(PipelineConfig& cfg, const Manifest& manifest,
                             const std::vector<std::string>& explicit_flags) {
    auto fixed = [&](const char* name) {
        return std::find(explicit_flags.begin(), explicit_flags.end(), name) !=
               explicit_flags.end();
    };
    const ProcessingDefaults& d = manifest.defaults;
    if (d.hp_sigma && !fixed("hp-sigma"))
        cfg.hp_sigma = *d.hp_sigma;
    if (d.mod_threshold && !fixed("mod-threshold"))
        cfg.mod_threshold = *d.mod_threshold;
    if (d.ransac_tol_px && !fixed("ransac-tol"))
        cfg.ransac.inlier_tol_px = *d.ransac_tol_px;
    if (d.ransac_max_iters && !fixed("ransac-iters"))
        cfg.ransac.max_iters = *d.ransac_max_iters;
    if (d.seed && !fixed("seed")) {
        cfg.seed = *d.seed;
        cfg.ransac.seed = *d.seed;
    }
}

namespace {

bool has_format(const PipelineConfig& cfg, const char* fmt) {
    return std::find(cfg.formats.begin(), cfg.formats.end(), fmt) != cfg.formats.end();
}

} // namespace

SingleViewResult run_single_view(const CaptureBundle& bundle, const PipelineConfig& cfg) {
    bundle.validate();

    SingleViewResult r;
    const auto& f = bundle.fringe_images;
    r.horizontal = retrieve_phase(f[0], f[1], f[2], f[3]);
    r.vertical = retrieve_phase(f[4], f[5], f[6], f[7]);

    const ValidityMask mask_h = validity_mask(r.horizontal.modulation, cfg.mod_threshold);
    const ValidityMask mask_v = validity_mask(r.vertical.modulation, cfg.mod_threshold);
    r.mask = mask_and(mask_h, mask_v);
    if (r.mask.count() == 0)
        fail(ErrorCode::NoValidPixels, "no valid pixels");

    if (bundle.frequency == 1) {
        r.unwrapped_x = rewrap_from_screen_edge(r.horizontal.phase);
        r.unwrapped_y = rewrap_from_screen_edge(r.vertical.phase);
    } else {
        if (bundle.fringe_lo.size() != 8)
            fail(ErrorCode::InvalidArgument,
                 "frequency > 1 requires the frequency-1 stack for temporal unwrapping");
        const auto& lo = bundle.fringe_lo;
        const PhaseRetrievalResult lo_h = retrieve_phase(lo[0], lo[1], lo[2], lo[3]);
        const PhaseRetrievalResult lo_v = retrieve_phase(lo[4], lo[5], lo[6], lo[7]);
        r.unwrapped_x = unwrap_two_freq(rewrap_from_screen_edge(lo_h.phase), r.horizontal.phase,
                                        bundle.frequency);
        r.unwrapped_y = unwrap_two_freq(rewrap_from_screen_edge(lo_v.phase), r.vertical.phase,
                                        bundle.frequency);
    }

    r.hp_sigma_used = cfg.hp_sigma > 0.0 ? cfg.hp_sigma : auto_hp_sigma(r.mask);
    r.gradients = highpass_gradients(r.unwrapped_x, r.unwrapped_y, r.mask, r.hp_sigma_used,
                                     cfg.jobs);

    double depth_unit = 1.0; // pixels of slope -> relative height
    if (cfg.scale == ScaleMode::Geometric) {
        if (!bundle.geometry)
            fail(ErrorCode::InvalidArgument,
                 "geometric scale requested but the bundle has no scene geometry");
        const SceneGeometry& g = *bundle.geometry;
        const double sx = phase_to_slope_scale(g.screen, g.standoff_mm, bundle.frequency,
                                               Orientation::Horizontal);
        const double sy = phase_to_slope_scale(g.screen, g.standoff_mm, bundle.frequency,
                                               Orientation::Vertical);
        for (double& v : r.gradients.gx.data)
            v *= sx;
        for (double& v : r.gradients.gy.data)
            v *= sy;
        // per-pixel surface footprint turns slopes into mm of height
        if (bundle.intrinsics)
            depth_unit = g.standoff_mm / bundle.intrinsics->fx;
    }

    r.normals = normals_from_gradients(r.gradients);

    GradientMap for_depth = r.gradients;
    if (depth_unit != 1.0) {
        for (double& v : for_depth.gx.data)
            v *= depth_unit;
        for (double& v : for_depth.gy.data)
            v *= depth_unit;
    }
    r.depth = integrate_frankot_chellappa(for_depth);
    return r;
}

MultiViewResult run_multi_view(const std::vector<CaptureBundle>& bundles,
                               const PipelineConfig& cfg) {
    if (bundles.size() < 2)
        fail(ErrorCode::InvalidArgument, "multi-view needs at least 2 views");

    MultiViewResult result;
    result.views.resize(bundles.size());
    std::vector<ImageGrid> whites(bundles.size());

    // Per-view reconstructions (parallel across views).
    PipelineConfig view_cfg = cfg;
    view_cfg.jobs = 1;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    parallel_for(0, static_cast<int>(bundles.size()), cfg.jobs, [&](int i) {
        try {
            result.views[i] = run_single_view(bundles[i], view_cfg);
            ImageGrid white = bundles[i].white_image;
            if (bundles[i].intrinsics && (bundles[i].intrinsics->k1 != 0.0 ||
                                          bundles[i].intrinsics->k2 != 0.0))
                white = undistort_image(white, *bundles[i].intrinsics);
            whites[i] = std::move(white);
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error)
                first_error = std::current_exception();
        }
    });
    if (first_error)
        std::rethrow_exception(first_error);

    // Undistort the per-view normal maps so they live in the same (ideal)
    // image space as the registration.
    std::vector<NormalMap> maps;
    maps.reserve(bundles.size());
    for (size_t i = 0; i < bundles.size(); ++i) {
        NormalMap nm = result.views[i].normals;
        if (bundles[i].intrinsics && (bundles[i].intrinsics->k1 != 0.0 ||
                                      bundles[i].intrinsics->k2 != 0.0)) {
            const CameraIntrinsics& k = *bundles[i].intrinsics;
            auto mapping = [&k](double x, double y) {
                const Eigen::Vector2d dn =
                    distort_normalized(k, {(x - k.cx) / k.fx, (y - k.cy) / k.fy});
                return Eigen::Vector2d(k.cx + k.fx * dn.x(), k.cy + k.fy * dn.y());
            };
            NormalMap und{ImageGrid(nm.width(), nm.height(),
                                    std::numeric_limits<double>::quiet_NaN()),
                          ImageGrid(nm.width(), nm.height(),
                                    std::numeric_limits<double>::quiet_NaN()),
                          ImageGrid(nm.width(), nm.height(),
                                    std::numeric_limits<double>::quiet_NaN()),
                          ValidityMask{ImageGrid(nm.width(), nm.height(), 0.0),
                                       nm.mask.threshold_used}};
            for (int y = 0; y < nm.height(); ++y)
                for (int x = 0; x < nm.width(); ++x) {
                    const Eigen::Vector2d src = mapping(x, y);
                    const int rx = static_cast<int>(std::lround(src.x()));
                    const int ry = static_cast<int>(std::lround(src.y()));
                    if (rx < 0 || rx >= nm.width() || ry < 0 || ry >= nm.height() ||
                        !nm.mask.at(rx, ry))
                        continue;
                    const auto vx = bilinear_sample(nm.nx, src.x(), src.y());
                    const auto vy = bilinear_sample(nm.ny, src.x(), src.y());
                    const auto vz = bilinear_sample(nm.nz, src.x(), src.y());
                    if (!vx || !vy || !vz || !std::isfinite(*vx) || !std::isfinite(*vy) ||
                        !std::isfinite(*vz))
                        continue;
                    const double norm = std::sqrt(*vx * *vx + *vy * *vy + *vz * *vz);
                    if (norm < 1e-12)
                        continue;
                    und.nx.at(x, y) = *vx / norm;
                    und.ny.at(x, y) = *vy / norm;
                    und.nz.at(x, y) = *vz / norm;
                    und.mask.mask.at(x, y) = 1.0;
                }
            nm = std::move(und);
        }
        maps.push_back(std::move(nm));
    }

    // Chain consecutive pairs to the first view.
    std::vector<ViewInput> views;
    views.push_back({maps[0], Homography::identity()});
    Homography to_reference = Homography::identity();
    std::vector<int> inlier_counts;
    std::vector<double> reproj_errors;
    for (size_t i = 1; i < bundles.size(); ++i) {
        MatchSet matches;
        RansacResult rr;
        try {
            matches = detect_and_match(whites[i], whites[i - 1]);
            RansacParams params = cfg.ransac;
            rr = estimate_homography_ransac(matches, params);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::InsufficientFeatures ||
                e.code() == ErrorCode::RegistrationFailure)
                fail(ErrorCode::RegistrationFailure,
                     "registration failed for view pair (" + std::to_string(i) + ", " +
                         std::to_string(i + 1) + "): " + e.what());
            throw;
        }
        to_reference = rr.h.then(to_reference); // view i -> i-1 -> ... -> 0
        views.push_back({maps[i], to_reference});

        PairReport pr;
        pr.view_a = static_cast<int>(i);
        pr.view_b = static_cast<int>(i + 1);
        pr.match_count = static_cast<int>(matches.size());
        pr.inlier_count = rr.inlier_count;
        pr.mean_reproj_error_px = rr.mean_reproj_error_px;
        pr.to_previous = rr.h;
        result.pairs.push_back(pr);
        inlier_counts.push_back(rr.inlier_count);
        reproj_errors.push_back(rr.mean_reproj_error_px);
    }

    result.stitch = blend_stitch(views);
    result.stitch.inlier_counts = inlier_counts;
    result.stitch.mean_reproj_errors_px = reproj_errors;
    return result;
}

json registration_report(const MultiViewResult& result) {
    json pairs = json::array();
    for (const auto& p : result.pairs)
        pairs.push_back({{"view_a", p.view_a},
                         {"view_b", p.view_b},
                         {"matches", p.match_count},
                         {"inliers", p.inlier_count},
                         {"mean_reproj_error_px", p.mean_reproj_error_px}});
    return {{"pairs", pairs},
            {"overlap_disagreement_deg", result.stitch.overlap_disagreement_deg},
            {"overlap_pixels", result.stitch.overlap_pixel_count},
            {"coverage_pixels", result.stitch.coverage_pixels},
            {"canvas_offset", {result.stitch.offset_x, result.stitch.offset_y}}};
}

namespace {

void encode_products(const NormalMap& normals, const GradientMap* gradients, const DepthMap* depth,
                     const std::filesystem::path& out_dir, const PipelineConfig& cfg) {
    std::filesystem::create_directories(out_dir);
    if (has_format(cfg, "png16")) {
        write_normal_map_png(out_dir / "normals.png", normals);
        write_mask_png(out_dir / "mask.png", normals.mask);
    }
    if (has_format(cfg, "pfm")) {
        write_pfm_rgb(out_dir / "normals.pfm", normals.nx, normals.ny, normals.nz);
        if (gradients) {
            write_pfm(out_dir / "gradient_x.pfm", gradients->gx);
            write_pfm(out_dir / "gradient_y.pfm", gradients->gy);
        }
        if (depth)
            write_pfm(out_dir / "depth.pfm", depth->z);
    }
    if (has_format(cfg, "preview"))
        write_png_gray8(out_dir / "preview.png", shaded_relief(normals));
}

void encode_debug(const SingleViewResult& r, const std::filesystem::path& out_dir) {
    write_pfm(out_dir / "phase_h.pfm", r.horizontal.phase);
    write_pfm(out_dir / "phase_v.pfm", r.vertical.phase);
    write_pfm(out_dir / "bias_h.pfm", r.horizontal.bias);
    write_pfm(out_dir / "bias_v.pfm", r.vertical.bias);
    write_pfm(out_dir / "modulation_h.pfm", r.horizontal.modulation);
    write_pfm(out_dir / "modulation_v.pfm", r.vertical.modulation);
    write_pfm(out_dir / "unwrapped_h.pfm", r.unwrapped_x);
    write_pfm(out_dir / "unwrapped_v.pfm", r.unwrapped_y);
}

} // namespace

void encode_outputs(const SingleViewResult& result, const std::filesystem::path& out_dir,
                    const PipelineConfig& cfg) {
    encode_products(result.normals, &result.gradients, &result.depth, out_dir, cfg);
    if (cfg.debug_intermediates)
        encode_debug(result, out_dir);
}

void encode_outputs(const MultiViewResult& result, const std::filesystem::path& out_dir,
                    const PipelineConfig& cfg) {
    encode_products(result.stitch.stitched, nullptr, nullptr, out_dir, cfg);
    std::ofstream report(out_dir / "registration_report.json");
    if (!report)
        fail(ErrorCode::IoError, "cannot write registration report");
    report << registration_report(result).dump(2) << "\n";
    if (cfg.debug_intermediates) {
        char name[32];
        for (size_t i = 0; i < result.views.size(); ++i) {
            std::snprintf(name, sizeof(name), "view%02zu", i);
            const auto dir = out_dir / name;
            std::filesystem::create_directories(dir);
            encode_products(result.views[i].normals, &result.views[i].gradients,
                            &result.views[i].depth, dir, cfg);
            encode_debug(result.views[i], dir);
        }
    }
}

std::vector<std::string> artifact_names(const PipelineConfig& cfg, bool multi_view) {
    std::vector<std::string> names;
    if (has_format(cfg, "png16")) {
        names.push_back("normals.png");
        names.push_back("mask.png");
    }
    if (has_format(cfg, "pfm")) {
        names.push_back("normals.pfm");
        if (!multi_view) {
            names.push_back("gradient_x.pfm");
            names.push_back("gradient_y.pfm");
            names.push_back("depth.pfm");
        }
    }
    if (has_format(cfg, "preview"))
        names.push_back("preview.png");
    if (multi_view)
        names.push_back("registration_report.json");
    return names;
}

} // namespace pmd
