#pragma once

#include <cstdint>
#include <functional>

#include "pmd/geometry.hpp"
#include "pmd/image.hpp"
#include "pmd/patterns.hpp"

namespace pmd {

/// Analytic ground-truth surface: height and exact gradient in mm over
/// object-plane coordinates in mm, plus a diffuse albedo texture used by the
/// white image.
struct HeightField {
    std::function<double(double, double)> z;
    std::function<void(double, double, double&, double&)> gradient;
    std::function<double(double, double)> albedo = [](double, double) { return 1.0; };
    double extent_x_mm = 60.0;
    double extent_y_mm = 60.0;
    double max_abs_z_mm = 1.0; // bound used to start the ray march just above the surface
};

HeightField make_flat_surface();
HeightField make_sinusoid_surface(double amplitude_mm, double period_mm);
HeightField make_gaussian_bumps_surface(std::uint64_t seed, double amplitude_mm, double sigma_mm);

enum class SurfaceKind { Flat, Sinusoid, GaussianBumps };

struct SurfaceSpec {
    SurfaceKind kind = SurfaceKind::Flat;
    double amplitude_mm = 0.1;
    double period_mm = 20.0;
    double sigma_mm = 5.0;
    std::uint64_t seed = 1;
};

/// Factory over the analytic test surfaces. amplitude must stay within the
/// shallow-relief regime (<= 1 mm).
HeightField make_analytic_surface(const SurfaceSpec& spec);

/// Albedo textures (assignable onto HeightField::albedo).
std::function<double(double, double)> uniform_albedo(double value);
std::function<double(double, double)> checker_albedo(double cell_mm, double lo = 0.25,
                                                     double hi = 1.0);
std::function<double(double, double)> noise_albedo(std::uint64_t seed, double scale_mm,
                                                   double lo = 0.2, double hi = 1.0);

/// Full imaging arrangement: surface near z=0, screen and camera at the
/// standoff, additive illumination model.
struct SyntheticScene {
    HeightField surface;
    ScreenGeometry screen;
    CameraPose camera_pose;
    CameraIntrinsics camera;
    int image_width = 512;
    int image_height = 512;
    int frequency = 1;
    double ambient = 0.1;            // bias intensity
    double specular_fraction = 0.7;  // weight of the mirrored screen term
    double noise_sigma = 0.0;        // additive Gaussian, applied last, clamped
    std::uint64_t seed = 1;
    double standoff_mm = 200.0;
};

/// Mirror law r = d - 2 (d.n) n for unit vectors.
Eigen::Vector3d reflect_ray(const Eigen::Vector3d& d, const Eigen::Vector3d& n);

/// Geometry of one camera pixel: where its ray hits the surface and where the
/// reflected ray meets the screen.
struct PixelTrace {
    bool surface_hit = false;
    bool screen_hit = false;
    double u = 0.0, v = 0.0;       // screen pixel coordinates of the reflection
    double albedo = 0.0;
    double gx = 0.0, gy = 0.0;     // surface slopes at the hit point
    Eigen::Vector3d hit_point = Eigen::Vector3d::Zero();
};

PixelTrace trace_pixel(const SyntheticScene& scene, double px, double py);

/// Renders the specular reflection of one displayed pattern. Per pixel:
/// ambient + diffuse albedo term + specular_fraction * S(u,v) where the
/// reflected ray lands on the screen, Gaussian noise last, clamped to [0,1].
ImageGrid render_pattern_image(const SyntheticScene& scene, const PatternSpec& spec,
                               int jobs = 0);

/// Diffuse-only rendering: ambient * albedo where the surface is hit, plus
/// noise. No screen term.
ImageGrid render_white_image(const SyntheticScene& scene, int jobs = 0);

/// Renders the full acquisition (8 fringe images, white image, and the
/// frequency-1 stack when scene.frequency > 1), sharing the per-pixel
/// geometry across images. Pixel values are identical to per-image
/// render_pattern_image / render_white_image calls. Ground truth and scene
/// geometry are attached to the bundle.
CaptureBundle render_bundle(const SyntheticScene& scene, int jobs = 0);

/// Deterministic counter-based Gaussian noise; independent of thread count.
double gaussian_noise(std::uint64_t seed, std::uint64_t image_index, int x, int y);

} // namespace pmd
