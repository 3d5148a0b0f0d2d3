#pragma once

#include <filesystem>

#include "pmd/image.hpp"
#include "pmd/normals.hpp"
#include "pmd/phase.hpp"

namespace pmd {

// --- PFM (portable float map; little-endian, scale -1.0, rows bottom-up) ----

void write_pfm(const std::filesystem::path& path, const ImageGrid& img);
void write_pfm_rgb(const std::filesystem::path& path, const ImageGrid& r, const ImageGrid& g,
                   const ImageGrid& b);
ImageGrid read_pfm(const std::filesystem::path& path);
std::array<ImageGrid, 3> read_pfm_rgb(const std::filesystem::path& path);

// --- PNG ---------------------------------------------------------------------

/// Grayscale 16-bit; values clamped to [0,1] and quantized with
/// round-half-up to 0..65535.
void write_png_gray16(const std::filesystem::path& path, const ImageGrid& img);
void write_png_gray8(const std::filesystem::path& path, const ImageGrid& img);

/// Reads 8- or 16-bit PNG (gray or RGB; RGB converts to Rec.709 luma) and
/// divides by the max code value. 8-bit inputs print a precision warning.
ImageGrid read_png_gray(const std::filesystem::path& path);

// --- Normal-map codec ----------------------------------------------------------

/// 16-bit RGB encoding: channel = round((component+1)/2 * 65535); invalid
/// pixels are (0,0,0).
void write_normal_map_png(const std::filesystem::path& path, const NormalMap& nm);
NormalMap read_normal_map_png(const std::filesystem::path& path);

void write_mask_png(const std::filesystem::path& path, const ValidityMask& mask);

/// Lambertian shading of a normal map from a fixed light direction, for
/// quick previews. Invalid pixels are black.
ImageGrid shaded_relief(const NormalMap& nm,
                        const Eigen::Vector3d& light_dir = {-0.4, -0.4, -0.82});

} // namespace pmd
