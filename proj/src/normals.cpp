#include "pmd/normals.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <mutex>
#include <numbers>
#include <vector>

#include <fftw3.h>

namespace pmd {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// FFTW plan creation/destruction is not thread-safe; execution of a private
// plan is.
std::mutex& fftw_plan_mutex() {
    static std::mutex m;
    return m;
}

} // namespace

NormalMap normals_from_gradients(const GradientMap& g) {
    const int w = g.gx.width, h = g.gx.height;
    NormalMap nm{ImageGrid(w, h, kNaN), ImageGrid(w, h, kNaN), ImageGrid(w, h, kNaN), g.mask};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!g.mask.at(x, y))
                continue;
            const double gx = g.gx.at(x, y) * g.scale;
            const double gy = g.gy.at(x, y) * g.scale;
            const double inv_norm = 1.0 / std::sqrt(gx * gx + gy * gy + 1.0);
            nm.nx.at(x, y) = gx * inv_norm;
            nm.ny.at(x, y) = gy * inv_norm;
            nm.nz.at(x, y) = -inv_norm;
        }
    return nm;
}

double phase_to_slope_scale(double screen_extent_mm, double standoff_mm, int frequency) {
    if (screen_extent_mm <= 0.0 || standoff_mm <= 0.0)
        fail(ErrorCode::InvalidArgument, "phase_to_slope_scale: extent and standoff must be > 0");
    if (frequency < 1)
        fail(ErrorCode::InvalidFrequency, "phase_to_slope_scale: frequency must be >= 1");
    return screen_extent_mm / (4.0 * std::numbers::pi * frequency * standoff_mm);
}

double phase_to_slope_scale(const ScreenGeometry& screen, double standoff_mm, int frequency,
                            Orientation axis) {
    const double extent =
        axis == Orientation::Horizontal ? screen.width_mm() : screen.height_mm();
    return phase_to_slope_scale(extent, standoff_mm, frequency);
}

DepthMap integrate_frankot_chellappa(const GradientMap& g) {
    const int w = g.gx.width, h = g.gx.height;
    if (g.mask.count() == 0)
        fail(ErrorCode::EmptyField, "integrate_frankot_chellappa: no valid pixels");

    const int pw = 2 * w, ph = 2 * h;
    std::vector<double> gx(static_cast<size_t>(pw) * ph), gy(static_cast<size_t>(pw) * ph);

    // Even extension of the surface about the half-sample boundary: gx flips
    // sign across the x mirror, gy across the y mirror. Holes become zero.
    auto fetch = [&](const ImageGrid& src, int x, int y) {
        const double v = src.at(x, y);
        return std::isnan(v) ? 0.0 : v;
    };
    for (int y = 0; y < ph; ++y) {
        const int sy = y < h ? y : 2 * h - 1 - y;
        const double flip_y = y < h ? 1.0 : -1.0;
        for (int x = 0; x < pw; ++x) {
            const int sx = x < w ? x : 2 * w - 1 - x;
            const double flip_x = x < w ? 1.0 : -1.0;
            gx[static_cast<size_t>(y) * pw + x] = flip_x * fetch(g.gx, sx, sy);
            gy[static_cast<size_t>(y) * pw + x] = flip_y * fetch(g.gy, sx, sy);
        }
    }

    const int spec_w = pw / 2 + 1;
    std::vector<std::complex<double>> Gx(static_cast<size_t>(ph) * spec_w);
    std::vector<std::complex<double>> Gy(static_cast<size_t>(ph) * spec_w);
    std::vector<std::complex<double>> Z(static_cast<size_t>(ph) * spec_w);
    std::vector<double> zpad(static_cast<size_t>(pw) * ph);

    {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        fftw_plan px = fftw_plan_dft_r2c_2d(ph, pw, gx.data(),
                                            reinterpret_cast<fftw_complex*>(Gx.data()),
                                            FFTW_ESTIMATE);
        fftw_plan py = fftw_plan_dft_r2c_2d(ph, pw, gy.data(),
                                            reinterpret_cast<fftw_complex*>(Gy.data()),
                                            FFTW_ESTIMATE);
        fftw_execute(px);
        fftw_execute(py);
        fftw_destroy_plan(px);
        fftw_destroy_plan(py);
    }

    constexpr double two_pi = 2.0 * std::numbers::pi;
    for (int ky = 0; ky < ph; ++ky) {
        const double wy = two_pi * (ky <= ph / 2 ? ky : ky - ph) / ph;
        for (int kx = 0; kx < spec_w; ++kx) {
            const double wx = two_pi * kx / pw;
            const size_t idx = static_cast<size_t>(ky) * spec_w + kx;
            const double denom = wx * wx + wy * wy;
            if (denom == 0.0) {
                Z[idx] = 0.0;
                continue;
            }
            const std::complex<double> j(0.0, 1.0);
            Z[idx] = -j * (wx * Gx[idx] + wy * Gy[idx]) / denom;
        }
    }

    {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        fftw_plan pz = fftw_plan_dft_c2r_2d(ph, pw, reinterpret_cast<fftw_complex*>(Z.data()),
                                            zpad.data(), FFTW_ESTIMATE);
        fftw_execute(pz);
        fftw_destroy_plan(pz);
    }

    const double norm = 1.0 / (static_cast<double>(pw) * ph);
    DepthMap dm{ImageGrid(w, h, kNaN), g.mask};
    double sum = 0.0;
    long n = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (g.mask.at(x, y)) {
                const double v = zpad[static_cast<size_t>(y) * pw + x] * norm;
                dm.z.at(x, y) = v;
                sum += v;
                ++n;
            }
    const double mean = sum / static_cast<double>(n);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (g.mask.at(x, y))
                dm.z.at(x, y) -= mean;
    return dm;
}

} // namespace pmd
