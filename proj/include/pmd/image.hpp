#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "pmd/error.hpp"

namespace pmd {

/// Single-channel raster of linear intensity (or phase/gradient) values.
/// Row-major storage, origin top-left: x indexes columns, y indexes rows.
struct ImageGrid {
    int width = 0;
    int height = 0;
    std::vector<double> data; // data[y * width + x]

    ImageGrid() = default;
    ImageGrid(int w, int h, double fill = 0.0) : width(w), height(h) {
        if (w < 1 || h < 1)
            fail(ErrorCode::InvalidArgument, "ImageGrid dimensions must be >= 1");
        data.assign(static_cast<size_t>(w) * h, fill);
    }

    double& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    double at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }

    bool empty() const { return data.empty(); }
    size_t pixel_count() const { return data.size(); }
    bool same_size(const ImageGrid& other) const {
        return width == other.width && height == other.height;
    }
};

struct PixelCoord {
    int x = 0; // column
    int y = 0; // row
};

/// Bilinear interpolation of the four neighboring pixels. Coordinates outside
/// [0, width-1] x [0, height-1] return std::nullopt. Corners with zero weight
/// are never touched, so sampling at an exact pixel center returns that pixel
/// even when its neighbors hold NaN.
inline std::optional<double> bilinear_sample(const ImageGrid& img, double x, double y) {
    if (img.empty())
        fail(ErrorCode::InvalidArgument, "bilinear_sample: empty image");
    if (!(x >= 0.0 && x <= img.width - 1.0 && y >= 0.0 && y <= img.height - 1.0))
        return std::nullopt;

    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0;
    const double fy = y - y0;

    double value = 0.0;
    if (fx > 0.0 && fy > 0.0) {
        value = (1.0 - fx) * (1.0 - fy) * img.at(x0, y0) + fx * (1.0 - fy) * img.at(x0 + 1, y0) +
                (1.0 - fx) * fy * img.at(x0, y0 + 1) + fx * fy * img.at(x0 + 1, y0 + 1);
    } else if (fx > 0.0) {
        value = (1.0 - fx) * img.at(x0, y0) + fx * img.at(x0 + 1, y0);
    } else if (fy > 0.0) {
        value = (1.0 - fy) * img.at(x0, y0) + fy * img.at(x0, y0 + 1);
    } else {
        value = img.at(x0, y0);
    }
    return value;
}

} // namespace pmd
