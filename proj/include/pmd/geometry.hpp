#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "pmd/image.hpp"

namespace pmd {

/// Pinhole intrinsics with two radial distortion coefficients.
struct CameraIntrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    double k1 = 0.0;
    double k2 = 0.0;
};

/// Rigid camera pose. `rotation` maps camera coordinates to world coordinates
/// (columns are the camera axes expressed in the world frame).
struct CameraPose {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
};

/// Planar display described in world millimeters. Screen pixel (u, v) sits at
/// origin + u * u_axis + v * v_axis.
struct ScreenGeometry {
    Eigen::Vector3d origin = Eigen::Vector3d::Zero();
    Eigen::Vector3d u_axis = Eigen::Vector3d::UnitX(); // mm per screen pixel
    Eigen::Vector3d v_axis = Eigen::Vector3d::UnitY();
    int width_px = 1;
    int height_px = 1;

    double width_mm() const { return u_axis.norm() * width_px; }
    double height_mm() const { return v_axis.norm() * height_px; }
    Eigen::Vector3d unit_normal() const { return u_axis.cross(v_axis).normalized(); }
};

/// Screen/camera arrangement recorded with simulated bundles so geometric
/// phase-to-slope conversion can be applied on reload.
struct SceneGeometry {
    ScreenGeometry screen;
    CameraPose camera;
    double standoff_mm = 200.0;
};

/// Per-pixel ground truth kept by the simulator (in memory only).
struct SimGroundTruth {
    ImageGrid nx, ny, nz;   // unit normals, camera-facing convention (nz < 0), NaN off-surface
    ImageGrid gx, gy;       // surface slopes dz/dx, dz/dy at the hit point
    ImageGrid footprint;    // 1 where the reflected ray lands on the screen
};

/// One viewpoint's full acquisition: 8 fringe images (horizontal m=1..4 then
/// vertical m=1..4), the white image, and optional metadata.
struct CaptureBundle {
    std::vector<ImageGrid> fringe_images;
    std::vector<ImageGrid> fringe_lo; // 8 images at frequency 1, present when frequency > 1
    ImageGrid white_image;
    int frequency = 1;
    std::optional<CameraIntrinsics> intrinsics;
    std::optional<SceneGeometry> geometry;
    std::optional<SimGroundTruth> ground_truth;

    void validate() const;
};

} // namespace pmd
