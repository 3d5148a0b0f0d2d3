#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmd/geometry.hpp"
#include "pmd/manifest.hpp"
#include "pmd/normals.hpp"
#include "pmd/phase.hpp"
#include "pmd/registration.hpp"

namespace pmd {

enum class ScaleMode { None, Geometric };

struct PipelineConfig {
    double hp_sigma = 0.0;        // <= 0 selects the automatic value
    double mod_threshold = 0.02;
    ScaleMode scale = ScaleMode::None;
    std::uint64_t seed = 12345;
    int jobs = 0;
    bool debug_intermediates = false;
    RansacParams ransac{};
    std::vector<std::string> formats = {"png16", "pfm", "preview"};

    nlohmann::json to_json() const;
    static PipelineConfig from_json(const nlohmann::json& j);
};

/// Fills unset pipeline parameters from the manifest's processing defaults.
/// `explicit_flags` lists parameter names already pinned on the command line.
void apply_manifest_defaults(PipelineConfig& cfg, const Manifest& manifest,
                             const std::vector<std::string>& explicit_flags = {});

struct SingleViewResult {
    PhaseRetrievalResult horizontal; // phase of the horizontally modulated stack
    PhaseRetrievalResult vertical;
    ValidityMask mask;
    ImageGrid unwrapped_x;
    ImageGrid unwrapped_y;
    GradientMap gradients;
    NormalMap normals;
    DepthMap depth;
    double hp_sigma_used = 0.0;
};

/// The single-view path: phase retrieval for both fringe directions,
/// validity masking, unwrap (temporal two-frequency when the bundle carries a
/// frequency-1 stack), high-pass filtering, normals, and integration.
SingleViewResult run_single_view(const CaptureBundle& bundle, const PipelineConfig& cfg);

struct PairReport {
    int view_a = 0; // 1-based
    int view_b = 0;
    int match_count = 0;
    int inlier_count = 0;
    double mean_reproj_error_px = 0.0;
    Homography to_previous; // maps view_b image coords into view_a
};

struct MultiViewResult {
    StitchResult stitch;
    std::vector<SingleViewResult> views;
    std::vector<PairReport> pairs;
};

/// The multi-view path: per-view single-view runs, undistortion when
/// intrinsics are present, feature registration between consecutive white
/// images, homography chaining to the first view, warping and blending.
MultiViewResult run_multi_view(const std::vector<CaptureBundle>& bundles,
                               const PipelineConfig& cfg);

/// Registration diagnostics (per-pair inliers and reprojection errors; the
/// chain drift shows up here when views do not close).
nlohmann::json registration_report(const MultiViewResult& result);

void encode_outputs(const SingleViewResult& result, const std::filesystem::path& out_dir,
                    const PipelineConfig& cfg);
void encode_outputs(const MultiViewResult& result, const std::filesystem::path& out_dir,
                    const PipelineConfig& cfg);

/// Names of the files encode_outputs writes for the given config (used by the
/// job service to publish artifacts).
std::vector<std::string> artifact_names(const PipelineConfig& cfg, bool multi_view);

} // namespace pmd
