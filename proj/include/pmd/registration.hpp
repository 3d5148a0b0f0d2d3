#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pmd/geometry.hpp"
#include "pmd/image.hpp"
#include "pmd/normals.hpp"

namespace pmd {

/// One putative correspondence between two views, in pixel coordinates.
struct Match {
    double ax = 0.0, ay = 0.0;
    double bx = 0.0, by = 0.0;
    double distance = 0.0; // descriptor distance
};

using MatchSet = std::vector<Match>;

/// Invertible 3x3 projective map, normalized so m(2,2) = 1.
struct Homography {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();

    Eigen::Vector2d apply(double x, double y) const {
        const Eigen::Vector3d p = m * Eigen::Vector3d(x, y, 1.0);
        return {p.x() / p.z(), p.y() / p.z()};
    }
    Homography inverse() const;
    Homography then(const Homography& next) const; // next.m * m
    static Homography identity() { return {}; }
    static Homography translation(double tx, double ty);
    void normalize();
    bool invertible() const { return std::abs(m.determinant()) > 1e-12; }
};

struct RansacParams {
    double inlier_tol_px = 2.0;
    int max_iters = 2000;
    std::uint64_t seed = 12345;
};

struct RansacResult {
    Homography h;
    std::vector<bool> inliers; // aligned with the input match order
    int inlier_count = 0;
    double mean_reproj_error_px = 0.0;
};

// --- Radial distortion -----------------------------------------------------

/// Forward model on normalized coordinates: x_d = x_u (1 + k1 r^2 + k2 r^4).
Eigen::Vector2d distort_normalized(const CameraIntrinsics& k, const Eigen::Vector2d& undist);

/// Inverts the forward model by fixed-point iteration (10 iterations).
Eigen::Vector2d undistort_normalized(const CameraIntrinsics& k, const Eigen::Vector2d& dist);

/// Resamples the image so straight world lines become straight: each output
/// (undistorted) pixel pulls from its forward-distorted source position via
/// bilinear interpolation. Out-of-field pixels become 0.
ImageGrid undistort_image(const ImageGrid& img, const CameraIntrinsics& k);

// --- Features & matching ---------------------------------------------------

struct FeaturePoint {
    double x = 0.0, y = 0.0;
    double response = 0.0;
    double orientation = 0.0; // radians
};

struct FeatureDescriptor {
    FeaturePoint point;
    std::array<float, 64> v{};
};

std::vector<FeaturePoint> detect_corners(const ImageGrid& img, int max_features = 1500);
std::vector<FeatureDescriptor> describe_features(const ImageGrid& img,
                                                 const std::vector<FeaturePoint>& points);

/// Corner detection + orientation-normalized patch descriptors on both
/// images, mutual-nearest-neighbor matching with ratio test 0.8.
/// Throws InsufficientFeatures when fewer than 4 matches survive.
MatchSet detect_and_match(const ImageGrid& white_a, const ImageGrid& white_b);

/// Robust homography fit (a -> b): RANSAC over 4-point DLT hypotheses with
/// symmetric transfer error, then least-squares refit on the inliers.
/// Deterministic for a given seed and invariant to match ordering.
/// Fails (RegistrationFailure) when the best model has fewer than 10 inliers
/// or explains less than half the matches.
RansacResult estimate_homography_ransac(const MatchSet& matches, const RansacParams& params);

// --- Warping & stitching ---------------------------------------------------

/// Inverse-warp resampling of the component grids with bilinear sampling and
/// per-pixel renormalization; the mask is warped nearest-neighbor. Vectors are
/// resampled, not reoriented.
NormalMap warp_normal_map(const NormalMap& nm, const Homography& h, int target_width,
                          int target_height);

struct ViewInput {
    NormalMap map;
    Homography to_reference;
};

struct StitchResult {
    NormalMap stitched;
    std::vector<int> inlier_counts;              // per chained pair (filled by the pipeline)
    std::vector<double> mean_reproj_errors_px;   // per chained pair
    double overlap_disagreement_deg = 0.0;       // mean angle between contributing vectors
    long overlap_pixel_count = 0;
    long coverage_pixels = 0;
    double offset_x = 0.0, offset_y = 0.0;       // canvas translation applied to the reference frame
};

/// Warps every view into a common canvas (union of the mapped view corners)
/// and averages contributing unit vectors, renormalizing per pixel.
StitchResult blend_stitch(const std::vector<ViewInput>& views);

} // namespace pmd
