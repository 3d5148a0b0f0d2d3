#include "pmd/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <memory>
#include <vector>

#include <png.h>

namespace pmd {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f)
            std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.string().c_str(), mode));
    if (!f)
        fail(ErrorCode::IoError, "cannot open " + path.string());
    return f;
}

uint16_t quantize16(double v) {
    const double clamped = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0);
    return static_cast<uint16_t>(std::floor(clamped * 65535.0 + 0.5));
}

uint16_t quantize_component(double c) {
    // component in [-1, 1] -> 0..65535, round half up
    const double clamped = std::clamp(std::isfinite(c) ? c : 0.0, -1.0, 1.0);
    return static_cast<uint16_t>(std::floor((clamped + 1.0) / 2.0 * 65535.0 + 0.5));
}

// --- PFM helpers -------------------------------------------------------------

void write_pfm_impl(const std::filesystem::path& path, int width, int height, int channels,
                    const std::vector<float>& samples) {
    FilePtr f = open_file(path, "wb");
    std::fprintf(f.get(), "%s\n%d %d\n-1.0\n", channels == 1 ? "Pf" : "PF", width, height);
    // PFM scanlines run bottom-to-top.
    const size_t row_samples = static_cast<size_t>(width) * channels;
    for (int y = height - 1; y >= 0; --y) {
        const float* row = samples.data() + static_cast<size_t>(y) * row_samples;
        if (std::fwrite(row, sizeof(float), row_samples, f.get()) != row_samples)
            fail(ErrorCode::IoError, "short write: " + path.string());
    }
}

void read_pfm_impl(const std::filesystem::path& path, int& width, int& height, int& channels,
                   std::vector<float>& samples) {
    FilePtr f = open_file(path, "rb");
    char magic[3] = {};
    if (std::fscanf(f.get(), "%2s", magic) != 1)
        fail(ErrorCode::FormatError, "not a PFM file: " + path.string());
    if (std::strcmp(magic, "Pf") == 0)
        channels = 1;
    else if (std::strcmp(magic, "PF") == 0)
        channels = 3;
    else
        fail(ErrorCode::FormatError, "not a PFM file: " + path.string());
    double scale = 0.0;
    if (std::fscanf(f.get(), "%d %d %lf", &width, &height, &scale) != 3 || width < 1 || height < 1)
        fail(ErrorCode::FormatError, "bad PFM header: " + path.string());
    if (scale >= 0.0)
        fail(ErrorCode::FormatError, "big-endian PFM not supported: " + path.string());
    std::fgetc(f.get()); // single whitespace after the header

    const size_t row_samples = static_cast<size_t>(width) * channels;
    samples.resize(row_samples * height);
    for (int y = height - 1; y >= 0; --y) {
        float* row = samples.data() + static_cast<size_t>(y) * row_samples;
        if (std::fread(row, sizeof(float), row_samples, f.get()) != row_samples)
            fail(ErrorCode::FormatError, "truncated PFM data: " + path.string());
    }
}

// --- PNG helpers -------------------------------------------------------------

struct PngRows {
    std::vector<std::vector<png_byte>> storage;
    std::vector<png_bytep> pointers;

    PngRows(int height, size_t row_bytes) : storage(height), pointers(height) {
        for (int y = 0; y < height; ++y) {
            storage[y].resize(row_bytes);
            pointers[y] = storage[y].data();
        }
    }
};

void write_png(const std::filesystem::path& path, int width, int height, int bit_depth,
               int color_type, PngRows& rows) {
    FilePtr f = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorCode::IoError, "libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorCode::IoError, "png write failed: " + path.string());
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16)
        png_set_swap(png); // rows hold host (little-endian) 16-bit samples
    png_write_image(png, rows.pointers.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

struct DecodedPng {
    int width = 0, height = 0, channels = 0, bit_depth = 0;
    std::vector<uint16_t> samples; // interleaved, host endian
};

DecodedPng read_png(const std::filesystem::path& path) {
    FilePtr f = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorCode::IoError, "libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorCode::FormatError, "png read failed: " + path.string());
    }
    png_init_io(png, f.get());
    png_read_info(png, info);

    const int color_type = png_get_color_type(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE)
        png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if (bit_depth == 16)
        png_set_swap(png);
    png_read_update_info(png, info);

    DecodedPng out;
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.bit_depth = png_get_bit_depth(png, info);
    out.channels = png_get_channels(png, info);

    PngRows rows(out.height, png_get_rowbytes(png, info));
    png_read_image(png, rows.pointers.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    out.samples.resize(static_cast<size_t>(out.width) * out.height * out.channels);
    for (int y = 0; y < out.height; ++y) {
        if (out.bit_depth == 16) {
            std::memcpy(out.samples.data() + static_cast<size_t>(y) * out.width * out.channels,
                        rows.storage[y].data(), rows.storage[y].size());
        } else {
            const png_byte* src = rows.storage[y].data();
            uint16_t* dst = out.samples.data() + static_cast<size_t>(y) * out.width * out.channels;
            for (int i = 0; i < out.width * out.channels; ++i)
                dst[i] = src[i];
        }
    }
    return out;
}

} // namespace

// --- PFM ---------------------------------------------------------------------

void write_pfm(const std::filesystem::path& path, const ImageGrid& img) {
    std::vector<float> samples(img.data.size());
    for (size_t i = 0; i < img.data.size(); ++i)
        samples[i] = static_cast<float>(img.data[i]);
    write_pfm_impl(path, img.width, img.height, 1, samples);
}

void write_pfm_rgb(const std::filesystem::path& path, const ImageGrid& r, const ImageGrid& g,
                   const ImageGrid& b) {
    if (!r.same_size(g) || !r.same_size(b))
        fail(ErrorCode::DimensionMismatch, "write_pfm_rgb: channel dimensions differ");
    std::vector<float> samples(r.data.size() * 3);
    for (size_t i = 0; i < r.data.size(); ++i) {
        samples[3 * i] = static_cast<float>(r.data[i]);
        samples[3 * i + 1] = static_cast<float>(g.data[i]);
        samples[3 * i + 2] = static_cast<float>(b.data[i]);
    }
    write_pfm_impl(path, r.width, r.height, 3, samples);
}

ImageGrid read_pfm(const std::filesystem::path& path) {
    int w, h, c;
    std::vector<float> samples;
    read_pfm_impl(path, w, h, c, samples);
    if (c != 1)
        fail(ErrorCode::FormatError, "expected single-channel PFM: " + path.string());
    ImageGrid img(w, h);
    for (size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = samples[i];
    return img;
}

std::array<ImageGrid, 3> read_pfm_rgb(const std::filesystem::path& path) {
    int w, h, c;
    std::vector<float> samples;
    read_pfm_impl(path, w, h, c, samples);
    if (c != 3)
        fail(ErrorCode::FormatError, "expected three-channel PFM: " + path.string());
    std::array<ImageGrid, 3> out{ImageGrid(w, h), ImageGrid(w, h), ImageGrid(w, h)};
    for (size_t i = 0; i < out[0].data.size(); ++i) {
        out[0].data[i] = samples[3 * i];
        out[1].data[i] = samples[3 * i + 1];
        out[2].data[i] = samples[3 * i + 2];
    }
    return out;
}

// --- PNG ---------------------------------------------------------------------

void write_png_gray16(const std::filesystem::path& path, const ImageGrid& img) {
    PngRows rows(img.height, static_cast<size_t>(img.width) * 2);
    for (int y = 0; y < img.height; ++y) {
        uint16_t* dst = reinterpret_cast<uint16_t*>(rows.storage[y].data());
        for (int x = 0; x < img.width; ++x)
            dst[x] = quantize16(img.at(x, y));
    }
    write_png(path, img.width, img.height, 16, PNG_COLOR_TYPE_GRAY, rows);
}

void write_png_gray8(const std::filesystem::path& path, const ImageGrid& img) {
    PngRows rows(img.height, static_cast<size_t>(img.width));
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double v = std::clamp(std::isfinite(img.at(x, y)) ? img.at(x, y) : 0.0, 0.0, 1.0);
            rows.storage[y][x] = static_cast<png_byte>(std::floor(v * 255.0 + 0.5));
        }
    write_png(path, img.width, img.height, 8, PNG_COLOR_TYPE_GRAY, rows);
}

ImageGrid read_png_gray(const std::filesystem::path& path) {
    const DecodedPng png = read_png(path);
    if (png.bit_depth == 8)
        std::fprintf(stderr, "warning: %s is 8-bit; phase accuracy is reduced\n",
                     path.string().c_str());
    const double max_code = png.bit_depth == 16 ? 65535.0 : 255.0;
    ImageGrid img(png.width, png.height);
    for (int y = 0; y < png.height; ++y)
        for (int x = 0; x < png.width; ++x) {
            const size_t base = (static_cast<size_t>(y) * png.width + x) * png.channels;
            double v;
            if (png.channels >= 3) {
                v = (0.2126 * png.samples[base] + 0.7152 * png.samples[base + 1] +
                     0.0722 * png.samples[base + 2]);
            } else {
                v = png.samples[base];
            }
            img.at(x, y) = v / max_code;
        }
    return img;
}

// --- Normal-map codec ----------------------------------------------------------

void write_normal_map_png(const std::filesystem::path& path, const NormalMap& nm) {
    PngRows rows(nm.height(), static_cast<size_t>(nm.width()) * 6);
    for (int y = 0; y < nm.height(); ++y) {
        uint16_t* dst = reinterpret_cast<uint16_t*>(rows.storage[y].data());
        for (int x = 0; x < nm.width(); ++x) {
            if (nm.mask.at(x, y)) {
                dst[3 * x] = quantize_component(nm.nx.at(x, y));
                dst[3 * x + 1] = quantize_component(nm.ny.at(x, y));
                dst[3 * x + 2] = quantize_component(nm.nz.at(x, y));
            } else {
                dst[3 * x] = dst[3 * x + 1] = dst[3 * x + 2] = 0;
            }
        }
    }
    write_png(path, nm.width(), nm.height(), 16, PNG_COLOR_TYPE_RGB, rows);
}

NormalMap read_normal_map_png(const std::filesystem::path& path) {
    const DecodedPng png = read_png(path);
    if (png.channels != 3 || png.bit_depth != 16)
        fail(ErrorCode::FormatError, "normal map must be 16-bit RGB: " + path.string());
    NormalMap nm{ImageGrid(png.width, png.height, kNaN), ImageGrid(png.width, png.height, kNaN),
                 ImageGrid(png.width, png.height, kNaN),
                 ValidityMask{ImageGrid(png.width, png.height, 0.0), 0.0}};
    for (int y = 0; y < png.height; ++y)
        for (int x = 0; x < png.width; ++x) {
            const size_t base = (static_cast<size_t>(y) * png.width + x) * 3;
            const uint16_t r = png.samples[base], g = png.samples[base + 1],
                           b = png.samples[base + 2];
            if (r == 0 && g == 0 && b == 0)
                continue; // invalid marker
            nm.nx.at(x, y) = r / 65535.0 * 2.0 - 1.0;
            nm.ny.at(x, y) = g / 65535.0 * 2.0 - 1.0;
            nm.nz.at(x, y) = b / 65535.0 * 2.0 - 1.0;
            nm.mask.mask.at(x, y) = 1.0;
        }
    return nm;
}

void write_mask_png(const std::filesystem::path& path, const ValidityMask& mask) {
    PngRows rows(mask.mask.height, static_cast<size_t>(mask.mask.width));
    for (int y = 0; y < mask.mask.height; ++y)
        for (int x = 0; x < mask.mask.width; ++x)
            rows.storage[y][x] = mask.at(x, y) ? 255 : 0;
    write_png(path, mask.mask.width, mask.mask.height, 8, PNG_COLOR_TYPE_GRAY, rows);
}

ImageGrid shaded_relief(const NormalMap& nm, const Eigen::Vector3d& light_dir) {
    const Eigen::Vector3d l = light_dir.normalized();
    ImageGrid img(nm.width(), nm.height(), 0.0);
    for (int y = 0; y < nm.height(); ++y)
        for (int x = 0; x < nm.width(); ++x) {
            if (!nm.mask.at(x, y))
                continue;
            const Eigen::Vector3d n(nm.nx.at(x, y), nm.ny.at(x, y), nm.nz.at(x, y));
            img.at(x, y) = std::max(0.0, n.dot(l));
        }
    return img;
}

} // namespace pmd
