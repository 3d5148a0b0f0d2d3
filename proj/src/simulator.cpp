#include "pmd/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

#include "pmd/parallel.hpp"
#include "pmd/registration.hpp"

namespace pmd {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double uniform01(std::uint64_t h) {
    // 53 mantissa bits, in (0, 1]
    return (static_cast<double>(h >> 11) + 1.0) * 0x1p-53;
}

// Smooth value noise: bilinear interpolation of hashed lattice values.
double value_noise(std::uint64_t seed, double x, double y) {
    const double xi = std::floor(x), yi = std::floor(y);
    const double fx = x - xi, fy = y - yi;
    auto lattice = [&](long ix, long iy) {
        std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x9e3779b9ULL +
                                                       static_cast<std::uint64_t>(iy) * 0x85ebca6bULL +
                                                       0x100000001ULL));
        return uniform01(h);
    };
    const long ix = static_cast<long>(xi), iy = static_cast<long>(yi);
    const double sx = fx * fx * (3.0 - 2.0 * fx);
    const double sy = fy * fy * (3.0 - 2.0 * fy);
    const double a = lattice(ix, iy), b = lattice(ix + 1, iy);
    const double c = lattice(ix, iy + 1), d = lattice(ix + 1, iy + 1);
    return (a * (1 - sx) + b * sx) * (1 - sy) + (c * (1 - sx) + d * sx) * sy;
}

} // namespace

double gaussian_noise(std::uint64_t seed, std::uint64_t image_index, int x, int y) {
    const std::uint64_t key = splitmix64(seed) ^ splitmix64(image_index * 0x9e3779b97f4a7c15ULL + 1) ^
                              (static_cast<std::uint64_t>(static_cast<std::uint32_t>(y)) << 32 |
                               static_cast<std::uint32_t>(x));
    const std::uint64_t h1 = splitmix64(key);
    const std::uint64_t h2 = splitmix64(h1 ^ 0x6a09e667f3bcc909ULL);
    const double u1 = uniform01(h1);
    const double u2 = uniform01(h2);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

HeightField make_flat_surface() {
    HeightField h;
    h.z = [](double, double) { return 0.0; };
    h.gradient = [](double, double, double& gx, double& gy) { gx = 0.0; gy = 0.0; };
    h.max_abs_z_mm = 0.0;
    return h;
}

HeightField make_sinusoid_surface(double amplitude_mm, double period_mm) {
    if (amplitude_mm > 1.0)
        fail(ErrorCode::InvalidArgument, "surface amplitude exceeds shallow-relief limit (1 mm)");
    HeightField h;
    const double k = 2.0 * std::numbers::pi / period_mm;
    h.z = [=](double x, double) { return amplitude_mm * std::sin(k * x); };
    h.gradient = [=](double x, double, double& gx, double& gy) {
        gx = amplitude_mm * k * std::cos(k * x);
        gy = 0.0;
    };
    h.max_abs_z_mm = amplitude_mm;
    return h;
}

HeightField make_gaussian_bumps_surface(std::uint64_t seed, double amplitude_mm, double sigma_mm) {
    if (amplitude_mm > 1.0)
        fail(ErrorCode::InvalidArgument, "surface amplitude exceeds shallow-relief limit (1 mm)");
    struct Bump {
        double x, y, a;
    };
    // A fixed pattern of bumps across a generous area around the origin.
    auto bumps = std::make_shared<std::vector<Bump>>();
    const int n = 24;
    for (int i = 0; i < n; ++i) {
        const double bx = (uniform01(splitmix64(seed ^ (2 * i + 1))) - 0.5) * 80.0;
        const double by = (uniform01(splitmix64(seed ^ (2 * i + 2))) - 0.5) * 80.0;
        const double a = (uniform01(splitmix64(seed ^ (0x1000 + i))) * 2.0 - 1.0) * amplitude_mm;
        bumps->push_back({bx, by, a});
    }
    HeightField h;
    const double inv_2s2 = 1.0 / (2.0 * sigma_mm * sigma_mm);
    h.z = [=](double x, double y) {
        double z = 0.0;
        for (const auto& b : *bumps) {
            const double dx = x - b.x, dy = y - b.y;
            z += b.a * std::exp(-(dx * dx + dy * dy) * inv_2s2);
        }
        return z;
    };
    h.gradient = [=](double x, double y, double& gx, double& gy) {
        gx = 0.0;
        gy = 0.0;
        for (const auto& b : *bumps) {
            const double dx = x - b.x, dy = y - b.y;
            const double e = b.a * std::exp(-(dx * dx + dy * dy) * inv_2s2);
            gx += e * (-2.0 * dx * inv_2s2);
            gy += e * (-2.0 * dy * inv_2s2);
        }
    };
    // empirical height bound (bumps rarely stack): coarse scan plus margin
    double max_abs = 0.0;
    for (double y = -50.0; y <= 50.0; y += 1.0)
        for (double x = -50.0; x <= 50.0; x += 1.0)
            max_abs = std::max(max_abs, std::abs(h.z(x, y)));
    h.max_abs_z_mm = 1.5 * max_abs + amplitude_mm;
    return h;
}

HeightField make_analytic_surface(const SurfaceSpec& spec) {
    switch (spec.kind) {
    case SurfaceKind::Flat:
        return make_flat_surface();
    case SurfaceKind::Sinusoid:
        return make_sinusoid_surface(spec.amplitude_mm, spec.period_mm);
    case SurfaceKind::GaussianBumps:
        return make_gaussian_bumps_surface(spec.seed, spec.amplitude_mm, spec.sigma_mm);
    }
    fail(ErrorCode::InvalidArgument, "unknown surface kind");
}

std::function<double(double, double)> uniform_albedo(double value) {
    return [=](double, double) { return value; };
}

std::function<double(double, double)> checker_albedo(double cell_mm, double lo, double hi) {
    return [=](double x, double y) {
        const long cx = static_cast<long>(std::floor(x / cell_mm));
        const long cy = static_cast<long>(std::floor(y / cell_mm));
        return ((cx + cy) & 1) ? hi : lo;
    };
}

std::function<double(double, double)> noise_albedo(std::uint64_t seed, double scale_mm, double lo,
                                                   double hi) {
    return [=](double x, double y) {
        // two octaves for feature-rich texture
        const double v = 0.65 * value_noise(seed, x / scale_mm, y / scale_mm) +
                         0.35 * value_noise(seed ^ 0xabcdef12345ULL, 2.7 * x / scale_mm,
                                            2.7 * y / scale_mm);
        return lo + (hi - lo) * std::clamp(v, 0.0, 1.0);
    };
}

Eigen::Vector3d reflect_ray(const Eigen::Vector3d& d, const Eigen::Vector3d& n) {
    if (std::abs(d.norm() - 1.0) > 1e-9 || std::abs(n.norm() - 1.0) > 1e-9)
        fail(ErrorCode::InvalidArgument, "reflect_ray: inputs must be unit vectors");
    return d - 2.0 * d.dot(n) * n;
}

namespace {

// Surface intersection: analytic start just above max height, fixed-step
// march (0.1 mm), then bisection refinement.
bool intersect_surface(const HeightField& surface, const Eigen::Vector3d& origin,
                       const Eigen::Vector3d& dir, Eigen::Vector3d& hit) {
    if (dir.z() >= -1e-12)
        return false;
    const double z_top = surface.max_abs_z_mm + 0.2;
    const double z_bottom = -surface.max_abs_z_mm - 0.2;
    double t0 = (z_top - origin.z()) / dir.z();
    if (t0 < 0.0)
        t0 = 0.0;
    const double t1 = (z_bottom - origin.z()) / dir.z();

    auto above = [&](double t) {
        const Eigen::Vector3d p = origin + t * dir;
        return p.z() - surface.z(p.x(), p.y());
    };

    const double step = 0.1;
    double ta = t0;
    double fa = above(ta);
    if (fa <= 0.0)
        return false;
    double tb = ta;
    bool bracketed = false;
    while (tb < t1) {
        tb = std::min(tb + step, t1);
        if (above(tb) <= 0.0) {
            bracketed = true;
            break;
        }
        ta = tb;
    }
    if (!bracketed)
        return false;
    for (int i = 0; i < 40; ++i) {
        const double tm = 0.5 * (ta + tb);
        if (above(tm) > 0.0)
            ta = tm;
        else
            tb = tm;
    }
    hit = origin + 0.5 * (ta + tb) * dir;
    return true;
}

// Solve origin_s + u*u_axis + v*v_axis = p + s*r for (u, v, s).
bool intersect_screen(const ScreenGeometry& screen, const Eigen::Vector3d& p,
                      const Eigen::Vector3d& r, double& u, double& v) {
    Eigen::Matrix3d m;
    m.col(0) = screen.u_axis;
    m.col(1) = screen.v_axis;
    m.col(2) = -r;
    if (std::abs(m.determinant()) < 1e-15)
        return false;
    const Eigen::Vector3d rhs = p - screen.origin;
    const Eigen::Vector3d sol = m.partialPivLu().solve(rhs);
    if (sol.z() <= 0.0)
        return false; // behind the reflected ray
    u = sol.x();
    v = sol.y();
    return true;
}

struct IlluminationTerms {
    double base = 0.0;     // ambient + diffuse at this pixel
    double specular = 0.0; // weight of the screen sample
};

IlluminationTerms pattern_terms(const SyntheticScene& scene, const PixelTrace& t) {
    IlluminationTerms terms;
    if (!t.surface_hit) {
        terms.base = scene.ambient;
        return terms;
    }
    const double diffuse = (1.0 - scene.specular_fraction) * scene.ambient * t.albedo;
    terms.base = scene.ambient + diffuse;
    if (t.screen_hit)
        terms.specular = scene.specular_fraction;
    return terms;
}

double finalize_intensity(const SyntheticScene& scene, double value, std::uint64_t image_index,
                          int x, int y) {
    if (scene.noise_sigma > 0.0)
        value += scene.noise_sigma * gaussian_noise(scene.seed, image_index, x, y);
    return std::clamp(value, 0.0, 1.0);
}

std::uint64_t pattern_image_index(const PatternSpec& spec) {
    const std::uint64_t base = spec.orientation == Orientation::Horizontal ? 0 : 4;
    std::uint64_t idx = base + static_cast<std::uint64_t>(spec.phase_index - 1);
    if (spec.frequency == 1)
        return idx; // frequency-1 stack occupies indices 0..7
    return 16 + idx; // higher-frequency stack gets its own noise stream
}

constexpr std::uint64_t kWhiteImageIndex = 8;

} // namespace

PixelTrace trace_pixel(const SyntheticScene& scene, double px, double py) {
    PixelTrace t;
    double xn = (px - scene.camera.cx) / scene.camera.fx;
    double yn = (py - scene.camera.cy) / scene.camera.fy;
    if (scene.camera.k1 != 0.0 || scene.camera.k2 != 0.0) {
        // the sensor observes distorted coordinates; the ray uses ideal ones
        const Eigen::Vector2d und = undistort_normalized(scene.camera, {xn, yn});
        xn = und.x();
        yn = und.y();
    }
    const Eigen::Vector3d dir_cam(xn, yn, 1.0);
    const Eigen::Vector3d dir = (scene.camera_pose.rotation * dir_cam).normalized();

    Eigen::Vector3d hit;
    if (!intersect_surface(scene.surface, scene.camera_pose.position, dir, hit))
        return t;
    t.surface_hit = true;
    t.hit_point = hit;
    scene.surface.gradient(hit.x(), hit.y(), t.gx, t.gy);
    t.albedo = scene.surface.albedo(hit.x(), hit.y());

    const Eigen::Vector3d up_normal =
        Eigen::Vector3d(-t.gx, -t.gy, 1.0).normalized();
    const Eigen::Vector3d reflected = reflect_ray(dir, up_normal);

    double u, v;
    if (!intersect_screen(scene.screen, hit, reflected, u, v))
        return t;
    t.u = u;
    t.v = v;
    t.screen_hit = u >= 0.0 && u <= scene.screen.width_px - 1.0 && v >= 0.0 &&
                   v <= scene.screen.height_px - 1.0;
    return t;
}

ImageGrid render_pattern_image(const SyntheticScene& scene, const PatternSpec& spec, int jobs) {
    spec.validate();
    const ImageGrid fringe = gen_fringe(spec, scene.screen);
    const std::uint64_t image_index = pattern_image_index(spec);
    ImageGrid img(scene.image_width, scene.image_height);
    parallel_for(0, scene.image_height, jobs, [&](int y) {
        for (int x = 0; x < scene.image_width; ++x) {
            const PixelTrace t = trace_pixel(scene, x, y);
            const IlluminationTerms terms = pattern_terms(scene, t);
            double value = terms.base;
            if (terms.specular > 0.0) {
                const auto s = bilinear_sample(fringe, t.u, t.v);
                if (s)
                    value += terms.specular * *s;
            }
            img.at(x, y) = finalize_intensity(scene, value, image_index, x, y);
        }
    });
    return img;
}

ImageGrid render_white_image(const SyntheticScene& scene, int jobs) {
    ImageGrid img(scene.image_width, scene.image_height);
    parallel_for(0, scene.image_height, jobs, [&](int y) {
        for (int x = 0; x < scene.image_width; ++x) {
            const PixelTrace t = trace_pixel(scene, x, y);
            const double value = t.surface_hit ? scene.ambient * t.albedo : scene.ambient;
            img.at(x, y) = finalize_intensity(scene, value, kWhiteImageIndex, x, y);
        }
    });
    return img;
}

CaptureBundle render_bundle(const SyntheticScene& scene, int jobs) {
    if (scene.frequency < 1)
        fail(ErrorCode::InvalidFrequency, "scene frequency must be >= 1");
    const int w = scene.image_width, h = scene.image_height;

    const auto specs = build_sequence(scene.frequency);
    std::vector<ImageGrid> patterns;
    patterns.reserve(8);
    for (const auto& s : specs)
        patterns.push_back(gen_fringe(s, scene.screen));
    std::vector<ImageGrid> patterns_lo;
    std::vector<PatternSpec> specs_lo;
    if (scene.frequency > 1) {
        specs_lo = build_sequence(1);
        for (const auto& s : specs_lo)
            patterns_lo.push_back(gen_fringe(s, scene.screen));
    }

    CaptureBundle bundle;
    bundle.frequency = scene.frequency;
    bundle.intrinsics = scene.camera;
    bundle.geometry = SceneGeometry{scene.screen, scene.camera_pose, scene.standoff_mm};
    bundle.fringe_images.assign(8, ImageGrid(w, h));
    if (scene.frequency > 1)
        bundle.fringe_lo.assign(8, ImageGrid(w, h));
    bundle.white_image = ImageGrid(w, h);
    SimGroundTruth gt{ImageGrid(w, h, kNaN), ImageGrid(w, h, kNaN), ImageGrid(w, h, kNaN),
                      ImageGrid(w, h, kNaN), ImageGrid(w, h, kNaN), ImageGrid(w, h, 0.0)};

    parallel_for(0, h, jobs, [&](int y) {
        for (int x = 0; x < w; ++x) {
            const PixelTrace t = trace_pixel(scene, x, y);
            const IlluminationTerms terms = pattern_terms(scene, t);

            auto compose = [&](const std::vector<ImageGrid>& pats, const PatternSpec& spec,
                               size_t i) {
                double value = terms.base;
                if (terms.specular > 0.0) {
                    const auto s = bilinear_sample(pats[i], t.u, t.v);
                    if (s)
                        value += terms.specular * *s;
                }
                return finalize_intensity(scene, value, pattern_image_index(spec), x, y);
            };
            for (size_t i = 0; i < 8; ++i)
                bundle.fringe_images[i].at(x, y) = compose(patterns, specs[i], i);
            for (size_t i = 0; i < bundle.fringe_lo.size(); ++i)
                bundle.fringe_lo[i].at(x, y) = compose(patterns_lo, specs_lo[i], i);

            const double white = t.surface_hit ? scene.ambient * t.albedo : scene.ambient;
            bundle.white_image.at(x, y) = finalize_intensity(scene, white, kWhiteImageIndex, x, y);

            if (t.surface_hit) {
                const double inv_norm = 1.0 / std::sqrt(t.gx * t.gx + t.gy * t.gy + 1.0);
                gt.nx.at(x, y) = t.gx * inv_norm;
                gt.ny.at(x, y) = t.gy * inv_norm;
                gt.nz.at(x, y) = -inv_norm;
                gt.gx.at(x, y) = t.gx;
                gt.gy.at(x, y) = t.gy;
            }
            if (t.screen_hit)
                gt.footprint.at(x, y) = 1.0;
        }
    });
    bundle.ground_truth = std::move(gt);
    return bundle;
}

} // namespace pmd
