#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "pmd/image_io.hpp"
#include "pmd/pipeline.hpp"
#include "pmd/scene.hpp"
#include "test_scenes.hpp"

using namespace pmd;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("pmd_pipe_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

double angle_to_deg(double nx, double ny, double nz, double tx, double ty, double tz) {
    const double dot = nx * tx + ny * ty + nz * tz;
    return std::acos(std::clamp(dot, -1.0, 1.0)) * 180.0 / kPi;
}

} // namespace

TEST_CASE("flat mirror reconstructs to straight-down normals") {
    const CaptureBundle bundle = render_bundle(build_scene(pmd_test::flat_mirror_scene(256), 0));
    PipelineConfig cfg;
    const SingleViewResult r = run_single_view(bundle, cfg);
    REQUIRE(r.mask.count() > 5000);
    int good = 0, total = 0;
    for (int y = 0; y < 256; ++y)
        for (int x = 0; x < 256; ++x) {
            if (!r.normals.mask.at(x, y))
                continue;
            ++total;
            good += angle_to_deg(r.normals.nx.at(x, y), r.normals.ny.at(x, y),
                                 r.normals.nz.at(x, y), 0, 0, -1) < 0.1;
        }
    CHECK(good >= static_cast<int>(0.99 * total));
}

TEST_CASE("sinusoid relief matches ground truth with the geometric scale") {
    const CaptureBundle bundle = render_bundle(build_scene(pmd_test::sinusoid_scene(256), 0));
    PipelineConfig cfg;
    cfg.scale = ScaleMode::Geometric;
    const SingleViewResult r = run_single_view(bundle, cfg);
    const SimGroundTruth& gt = *bundle.ground_truth;

    double angle_sum = 0.0;
    long n = 0;
    for (int y = 0; y < 256; ++y)
        for (int x = 0; x < 256; ++x) {
            if (!r.normals.mask.at(x, y) || std::isnan(gt.nx.at(x, y)))
                continue;
            angle_sum += angle_to_deg(r.normals.nx.at(x, y), r.normals.ny.at(x, y),
                                      r.normals.nz.at(x, y), gt.nx.at(x, y), gt.ny.at(x, y),
                                      gt.nz.at(x, y));
            ++n;
        }
    REQUIRE(n > 5000);
    CHECK(angle_sum / n < 0.5);

    // slope amplitude via sqrt(2) * std of the x-gradient
    double mean = 0.0, sq = 0.0;
    long m = 0;
    for (int y = 0; y < 256; ++y)
        for (int x = 0; x < 256; ++x)
            if (r.gradients.mask.at(x, y)) {
                mean += r.gradients.gx.at(x, y);
                sq += r.gradients.gx.at(x, y) * r.gradients.gx.at(x, y);
                ++m;
            }
    mean /= m;
    const double amplitude = std::sqrt(2.0 * (sq / m - mean * mean));
    CHECK(amplitude == doctest::Approx(2 * kPi * 0.1 / 20.0).epsilon(0.2));
}

TEST_CASE("screen never visible raises no-valid-pixels") {
    SceneConfig cfg_scene = pmd_test::base_scene(64);
    SyntheticScene scene = build_scene(cfg_scene, 0);
    scene.screen.origin += Eigen::Vector3d(5000.0, 0.0, 0.0);
    const CaptureBundle bundle = render_bundle(scene);
    PipelineConfig cfg;
    CHECK_THROWS_AS(run_single_view(bundle, cfg), Error);
    try {
        run_single_view(bundle, cfg);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NoValidPixels);
        CHECK(std::string(e.what()) == "no valid pixels");
    }
}

TEST_CASE("simulated bundles survive the 16-bit disk round-trip") {
    TempDir tmp;
    const CaptureBundle bundle = render_bundle(build_scene(pmd_test::textured_scene(96), 0));
    write_bundle_dir({bundle}, tmp.path / "bundle");
    const auto reloaded = load_bundle(tmp.path / "bundle" / "manifest.json");
    REQUIRE(reloaded.size() == 1);
    for (int i = 0; i < 8; ++i)
        for (size_t p = 0; p < bundle.fringe_images[i].data.size(); ++p)
            CHECK(std::abs(reloaded[0].fringe_images[i].data[p] -
                           bundle.fringe_images[i].data[p]) <= 1.0 / 65535.0);
    CHECK(reloaded[0].geometry.has_value());
    CHECK(reloaded[0].intrinsics.has_value());
    CHECK(reloaded[0].geometry->standoff_mm ==
          doctest::Approx(bundle.geometry->standoff_mm));
}

TEST_CASE("two-frequency bundles reconstruct like frequency-1 bundles") {
    SceneConfig lo_cfg = pmd_test::sinusoid_scene(192);
    const CaptureBundle lo_bundle = render_bundle(build_scene(lo_cfg, 0));

    SceneConfig hi_cfg = lo_cfg;
    hi_cfg.frequency = 4;
    const CaptureBundle hi_bundle = render_bundle(build_scene(hi_cfg, 0));
    REQUIRE(hi_bundle.fringe_lo.size() == 8);

    PipelineConfig cfg;
    cfg.scale = ScaleMode::Geometric;
    const SingleViewResult r1 = run_single_view(lo_bundle, cfg);
    const SingleViewResult r4 = run_single_view(hi_bundle, cfg);

    double angle_sum = 0.0;
    long n = 0;
    for (int y = 0; y < 192; ++y)
        for (int x = 0; x < 192; ++x) {
            if (!r1.normals.mask.at(x, y) || !r4.normals.mask.at(x, y))
                continue;
            angle_sum += angle_to_deg(r1.normals.nx.at(x, y), r1.normals.ny.at(x, y),
                                      r1.normals.nz.at(x, y), r4.normals.nx.at(x, y),
                                      r4.normals.ny.at(x, y), r4.normals.nz.at(x, y));
            ++n;
        }
    REQUIRE(n > 3000);
    CHECK(angle_sum / n < 0.2);
}

TEST_CASE("frequency > 1 without the low stack is rejected") {
    SceneConfig cfg_scene = pmd_test::sinusoid_scene(96);
    cfg_scene.frequency = 4;
    CaptureBundle bundle = render_bundle(build_scene(cfg_scene, 0));
    bundle.fringe_lo.clear();
    PipelineConfig cfg;
    CHECK_THROWS_AS(run_single_view(bundle, cfg), Error);
}

TEST_CASE("two shifted views stitch with wider coverage and small disagreement") {
    SceneConfig cfg_scene = pmd_test::textured_scene(192);
    cfg_scene.device_positions_mm = {{0.0, 0.0}, {12.0, 0.0}};
    const auto bundles = render_scene_bundles(cfg_scene);
    REQUIRE(bundles.size() == 2);

    PipelineConfig cfg;
    cfg.scale = ScaleMode::Geometric; // angular disagreement is meaningful on real normals
    const MultiViewResult r = run_multi_view(bundles, cfg);

    long cov0 = 0, cov1 = 0;
    for (double v : r.views[0].normals.mask.mask.data)
        cov0 += v != 0.0;
    for (double v : r.views[1].normals.mask.mask.data)
        cov1 += v != 0.0;
    CHECK(r.stitch.coverage_pixels > std::max(cov0, cov1));
    CHECK(r.stitch.overlap_disagreement_deg < 2.0);
    REQUIRE(r.pairs.size() == 1);
    CHECK(r.pairs[0].inlier_count >= 10);
}

TEST_CASE("a view stitched with itself is the identity registration") {
    SceneConfig cfg_scene = pmd_test::textured_scene(160);
    const CaptureBundle bundle = render_bundle(build_scene(cfg_scene, 0));
    PipelineConfig cfg;
    const MultiViewResult r = run_multi_view({bundle, bundle}, cfg);

    // corner transfer of the estimated homography vs identity
    REQUIRE(r.pairs.size() == 1);
    double max_corner = 0.0;
    for (const auto& c : {Eigen::Vector2d(0, 0), Eigen::Vector2d(159, 0),
                          Eigen::Vector2d(0, 159), Eigen::Vector2d(159, 159)}) {
        const Eigen::Vector2d mapped = r.pairs[0].to_previous.apply(c.x(), c.y());
        max_corner = std::max(max_corner, (mapped - c).norm());
    }
    CHECK(max_corner < 1e-3);
    CHECK(r.pairs[0].mean_reproj_error_px < 1e-3);
    CHECK(r.stitch.overlap_disagreement_deg < 1e-6);

    // output equals the single view inside the canvas
    const SingleViewResult single = run_single_view(bundle, cfg);
    long single_cov = 0;
    for (double v : single.normals.mask.mask.data)
        single_cov += v != 0.0;
    CHECK(std::abs(r.stitch.coverage_pixels - single_cov) <=
          static_cast<long>(0.02 * single_cov));
}

TEST_CASE("registration failure names the offending pair") {
    SceneConfig textured = pmd_test::textured_scene(128);
    SceneConfig blank = pmd_test::sinusoid_scene(128);
    blank.albedo.kind = AlbedoSpec::Kind::Uniform; // featureless white image
    const CaptureBundle a = render_bundle(build_scene(textured, 0));
    const CaptureBundle b = render_bundle(build_scene(blank, 0));
    PipelineConfig cfg;
    try {
        run_multi_view({a, b}, cfg);
        FAIL("expected registration failure");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::RegistrationFailure);
        CHECK(std::string(e.what()).find("(1, 2)") != std::string::npos);
    }
}

TEST_CASE("multi-view needs two views") {
    const CaptureBundle bundle = render_bundle(build_scene(pmd_test::textured_scene(64), 0));
    PipelineConfig cfg;
    CHECK_THROWS_AS(run_multi_view({bundle}, cfg), Error);
}

TEST_CASE("encoded outputs are byte-deterministic") {
    TempDir tmp;
    const CaptureBundle bundle = render_bundle(build_scene(pmd_test::sinusoid_scene(128), 0));
    PipelineConfig cfg;
    const SingleViewResult r1 = run_single_view(bundle, cfg);
    const SingleViewResult r2 = run_single_view(bundle, cfg);
    encode_outputs(r1, tmp.path / "a", cfg);
    encode_outputs(r2, tmp.path / "b", cfg);
    for (const char* name : {"normals.png", "normals.pfm", "depth.pfm", "gradient_x.pfm",
                             "gradient_y.pfm", "mask.png", "preview.png"}) {
        const std::string a = slurp(tmp.path / "a" / name);
        const std::string b = slurp(tmp.path / "b" / name);
        REQUIRE(!a.empty());
        CHECK(a == b);
    }
}

TEST_CASE("debug intermediates appear only when requested") {
    TempDir tmp;
    const CaptureBundle bundle = render_bundle(build_scene(pmd_test::sinusoid_scene(96), 0));
    PipelineConfig cfg;
    const SingleViewResult r = run_single_view(bundle, cfg);
    encode_outputs(r, tmp.path / "plain", cfg);
    CHECK_FALSE(fs::exists(tmp.path / "plain" / "phase_h.pfm"));
    cfg.debug_intermediates = true;
    encode_outputs(r, tmp.path / "debug", cfg);
    CHECK(fs::exists(tmp.path / "debug" / "phase_h.pfm"));
    CHECK(fs::exists(tmp.path / "debug" / "unwrapped_v.pfm"));
}

TEST_CASE("config precedence: flag beats manifest beats built-in") {
    Manifest m;
    m.defaults.hp_sigma = 17.0;
    m.defaults.mod_threshold = 0.05;
    m.defaults.seed = 777;

    // no explicit flags: manifest defaults land in the config
    PipelineConfig cfg;
    apply_manifest_defaults(cfg, m, {});
    CHECK(cfg.hp_sigma == 17.0);
    CHECK(cfg.mod_threshold == 0.05);
    CHECK(cfg.seed == 777);
    CHECK(cfg.ransac.seed == 777);

    // explicit flags survive
    PipelineConfig cfg2;
    cfg2.hp_sigma = 9.0;
    cfg2.mod_threshold = 0.03;
    cfg2.seed = 5;
    apply_manifest_defaults(cfg2, m, {"hp-sigma", "mod-threshold", "seed"});
    CHECK(cfg2.hp_sigma == 9.0);
    CHECK(cfg2.mod_threshold == 0.03);
    CHECK(cfg2.seed == 5);

    // manifest without defaults leaves built-ins alone
    Manifest empty;
    PipelineConfig cfg3;
    apply_manifest_defaults(cfg3, empty, {});
    CHECK(cfg3.hp_sigma == 0.0);
    CHECK(cfg3.mod_threshold == 0.02);

    // per-parameter precedence
    PipelineConfig cfg4;
    cfg4.hp_sigma = 9.0;
    apply_manifest_defaults(cfg4, m, {"hp-sigma"});
    CHECK(cfg4.hp_sigma == 9.0);      // flag wins
    CHECK(cfg4.mod_threshold == 0.05); // manifest wins
    CHECK(cfg4.seed == 777);
}

TEST_CASE("validity mask agrees with the simulator footprint") {
    const CaptureBundle bundle = render_bundle(build_scene(pmd_test::flat_mirror_scene(192), 0));
    PipelineConfig cfg;
    const SingleViewResult r = run_single_view(bundle, cfg);
    const ImageGrid& fp = bundle.ground_truth->footprint;
    long diff = 0, total = 0;
    for (int y = 0; y < 192; ++y)
        for (int x = 0; x < 192; ++x) {
            const bool a = r.mask.at(x, y);
            const bool b = fp.at(x, y) != 0.0;
            diff += a != b;
            total += b;
        }
    CHECK(diff <= static_cast<long>(0.01 * total));
}
