#include "pmd/phase.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>

#include "pmd/parallel.hpp"

namespace pmd {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_same_size(const ImageGrid& a, const ImageGrid& b, const char* what) {
    if (!a.same_size(b))
        fail(ErrorCode::DimensionMismatch, std::string(what) + ": image dimensions differ");
}

// Horizontal then vertical pass of a truncated Gaussian over several planes
// at once. Plane values at masked pixels must already be zeroed.
struct SeparableBlur {
    std::vector<double> kernel; // symmetric, normalized
    int radius = 0;

    explicit SeparableBlur(double sigma) {
        radius = std::max(1, static_cast<int>(std::ceil(3.5 * sigma)));
        kernel.resize(2 * radius + 1);
        double sum = 0.0;
        for (int i = -radius; i <= radius; ++i) {
            double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
            kernel[i + radius] = w;
            sum += w;
        }
        for (double& w : kernel)
            w /= sum;
    }

    void apply(const ImageGrid& src, ImageGrid& dst, ImageGrid& scratch, int jobs) const {
        const int w = src.width, h = src.height;
        parallel_for(0, h, jobs, [&](int y) {
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                const int lo = std::max(-radius, -x);
                const int hi = std::min(radius, w - 1 - x);
                for (int i = lo; i <= hi; ++i)
                    acc += kernel[i + radius] * src.at(x + i, y);
                scratch.at(x, y) = acc;
            }
        });
        parallel_for(0, h, jobs, [&](int y) {
            const int lo = std::max(-radius, -y);
            const int hi = std::min(radius, h - 1 - y);
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int i = lo; i <= hi; ++i)
                    acc += kernel[i + radius] * scratch.at(x, y + i);
                dst.at(x, y) = acc;
            }
        });
    }
};

// Low-pass of `field` by Gaussian-weighted plane fit over valid pixels.
ImageGrid plane_fit_lowpass(const ImageGrid& field, const ValidityMask& mask, double sigma,
                            int jobs) {
    const int w = field.width, h = field.height;

    // Moment planes. Coordinates are normalized by sigma to keep the normal
    // equations well conditioned on large grids.
    const double inv_s = 1.0 / sigma;
    ImageGrid m(w, h), mx(w, h), my(w, h), mxx(w, h), mxy(w, h), myy(w, h);
    ImageGrid f(w, h), fx(w, h), fy(w, h);
    for (int y = 0; y < h; ++y) {
        const double ys = y * inv_s;
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y))
                continue; // planes stay zero: masked data never enters
            const double xs = x * inv_s;
            const double v = field.at(x, y);
            m.at(x, y) = 1.0;
            mx.at(x, y) = xs;
            my.at(x, y) = ys;
            mxx.at(x, y) = xs * xs;
            mxy.at(x, y) = xs * ys;
            myy.at(x, y) = ys * ys;
            f.at(x, y) = v;
            fx.at(x, y) = v * xs;
            fy.at(x, y) = v * ys;
        }
    }

    SeparableBlur blur(sigma);
    ImageGrid scratch(w, h);
    ImageGrid bm(w, h), bmx(w, h), bmy(w, h), bmxx(w, h), bmxy(w, h), bmyy(w, h);
    ImageGrid bf(w, h), bfx(w, h), bfy(w, h);
    blur.apply(m, bm, scratch, jobs);
    blur.apply(mx, bmx, scratch, jobs);
    blur.apply(my, bmy, scratch, jobs);
    blur.apply(mxx, bmxx, scratch, jobs);
    blur.apply(mxy, bmxy, scratch, jobs);
    blur.apply(myy, bmyy, scratch, jobs);
    blur.apply(f, bf, scratch, jobs);
    blur.apply(fx, bfx, scratch, jobs);
    blur.apply(fy, bfy, scratch, jobs);

    ImageGrid low(w, h, kNaN);
    parallel_for(0, h, jobs, [&](int y) {
        const double ys = y * inv_s;
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y))
                continue;
            const double w0 = bm.at(x, y);
            const double xs = x * inv_s;
            // Centered first/second moments of the valid neighborhood.
            Eigen::Matrix3d A;
            Eigen::Vector3d rhs;
            const double sx = bmx.at(x, y) - xs * w0;
            const double sy = bmy.at(x, y) - ys * w0;
            const double sxx = bmxx.at(x, y) - 2.0 * xs * bmx.at(x, y) + xs * xs * w0;
            const double syy = bmyy.at(x, y) - 2.0 * ys * bmy.at(x, y) + ys * ys * w0;
            const double sxy = bmxy.at(x, y) - xs * bmy.at(x, y) - ys * bmx.at(x, y) + xs * ys * w0;
            A << w0, sx, sy, sx, sxx, sxy, sy, sxy, syy;
            rhs << bf.at(x, y), bfx.at(x, y) - xs * bf.at(x, y), bfy.at(x, y) - ys * bf.at(x, y);

            const double det = A.determinant();
            if (std::abs(det) > 1e-12 * std::max(w0 * w0 * w0, 1e-300)) {
                low.at(x, y) = A.ldlt().solve(rhs)(0);
            } else if (w0 > 0.0) {
                low.at(x, y) = rhs(0) / w0; // degenerate support: fall back to weighted mean
            }
        }
    });
    return low;
}

ImageGrid highpass_axis(const ImageGrid& phase, const ValidityMask& mask, double sigma, int jobs) {
    ImageGrid low = plane_fit_lowpass(phase, mask, sigma, jobs);
    ImageGrid out(phase.width, phase.height, kNaN);
    double sum = 0.0;
    long valid = 0;
    for (int y = 0; y < phase.height; ++y)
        for (int x = 0; x < phase.width; ++x)
            if (mask.at(x, y)) {
                const double v = phase.at(x, y) - low.at(x, y);
                out.at(x, y) = v;
                sum += v;
                ++valid;
            }
    const double mean = sum / static_cast<double>(valid);
    for (int y = 0; y < phase.height; ++y)
        for (int x = 0; x < phase.width; ++x)
            if (mask.at(x, y))
                out.at(x, y) -= mean;
    return out;
}

} // namespace

int ValidityMask::count() const {
    int n = 0;
    for (double v : mask.data)
        n += v != 0.0;
    return n;
}

ValidityMask mask_and(const ValidityMask& a, const ValidityMask& b) {
    if (!a.same_size(b))
        fail(ErrorCode::DimensionMismatch, "mask_and: mask dimensions differ");
    ValidityMask out = a;
    for (size_t i = 0; i < out.mask.data.size(); ++i)
        out.mask.data[i] = (a.mask.data[i] != 0.0 && b.mask.data[i] != 0.0) ? 1.0 : 0.0;
    out.threshold_used = std::max(a.threshold_used, b.threshold_used);
    return out;
}

PhaseRetrievalResult retrieve_phase(const ImageGrid& i1, const ImageGrid& i2,
                                    const ImageGrid& i3, const ImageGrid& i4) {
    require_same_size(i1, i2, "retrieve_phase");
    require_same_size(i1, i3, "retrieve_phase");
    require_same_size(i1, i4, "retrieve_phase");

    PhaseRetrievalResult r{ImageGrid(i1.width, i1.height), ImageGrid(i1.width, i1.height),
                           ImageGrid(i1.width, i1.height)};
    for (size_t i = 0; i < i1.data.size(); ++i) {
        const double num = i2.data[i] - i4.data[i]; // 2B sin(phi)
        const double den = i1.data[i] - i3.data[i]; // 2B cos(phi)
        r.phase.data[i] = std::atan2(num, den);
        r.modulation.data[i] = 0.5 * std::sqrt(num * num + den * den);
        r.bias.data[i] = 0.25 * (i1.data[i] + i2.data[i] + i3.data[i] + i4.data[i]);
    }
    return r;
}

ValidityMask validity_mask(const ImageGrid& modulation, double threshold) {
    if (threshold < 0.0)
        fail(ErrorCode::InvalidArgument, "validity threshold must be >= 0");
    ValidityMask vm{ImageGrid(modulation.width, modulation.height), threshold};
    for (size_t i = 0; i < modulation.data.size(); ++i)
        vm.mask.data[i] = modulation.data[i] >= threshold ? 1.0 : 0.0;
    return vm;
}

ImageGrid rewrap_from_screen_edge(const ImageGrid& phase) {
    ImageGrid out = phase;
    for (double& v : out.data)
        if (v < 0.0)
            v += 2.0 * std::numbers::pi;
    return out;
}

ImageGrid unwrap_two_freq(const ImageGrid& phase_lo, const ImageGrid& phase_hi, int k) {
    if (k < 2)
        fail(ErrorCode::InvalidArgument, "unwrap_two_freq: frequency ratio k must be >= 2");
    require_same_size(phase_lo, phase_hi, "unwrap_two_freq");
    constexpr double two_pi = 2.0 * std::numbers::pi;
    ImageGrid out(phase_lo.width, phase_lo.height);
    for (size_t i = 0; i < out.data.size(); ++i) {
        const double lo = phase_lo.data[i];
        const double hi = phase_hi.data[i];
        out.data[i] = hi + two_pi * std::round((k * lo - hi) / two_pi);
    }
    return out;
}

double auto_hp_sigma(const ValidityMask& mask) {
    int x0 = mask.mask.width, y0 = mask.mask.height, x1 = -1, y1 = -1;
    for (int y = 0; y < mask.mask.height; ++y)
        for (int x = 0; x < mask.mask.width; ++x)
            if (mask.at(x, y)) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
    if (x1 < 0)
        fail(ErrorCode::EmptyField, "auto_hp_sigma: validity mask is empty");
    const double dx = x1 - x0 + 1;
    const double dy = y1 - y0 + 1;
    return std::sqrt(dx * dx + dy * dy) / 8.0;
}

GradientMap highpass_gradients(const ImageGrid& phase_x_unwrapped,
                               const ImageGrid& phase_y_unwrapped,
                               const ValidityMask& mask, double sigma, int jobs) {
    if (sigma <= 0.0)
        fail(ErrorCode::InvalidArgument, "highpass_gradients: sigma must be > 0");
    require_same_size(phase_x_unwrapped, phase_y_unwrapped, "highpass_gradients");
    require_same_size(phase_x_unwrapped, mask.mask, "highpass_gradients");
    if (mask.count() == 0)
        fail(ErrorCode::EmptyField, "highpass_gradients: validity mask is empty");

    GradientMap g;
    g.gx = highpass_axis(phase_x_unwrapped, mask, sigma, jobs);
    g.gy = highpass_axis(phase_y_unwrapped, mask, sigma, jobs);
    g.mask = mask;
    g.scale = 1.0;
    return g;
}

} // namespace pmd
