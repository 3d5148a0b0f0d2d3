#include "pmd/geometry.hpp"

#include <cmath>

namespace pmd {

void CaptureBundle::validate() const {
    if (frequency < 1)
        fail(ErrorCode::InvalidFrequency, "capture bundle frequency must be >= 1");
    if (fringe_images.size() != 8)
        fail(ErrorCode::DimensionMismatch,
             "capture bundle must hold 8 fringe images, got " +
                 std::to_string(fringe_images.size()));
    for (const auto& img : fringe_images)
        if (!img.same_size(white_image) && !white_image.empty())
            fail(ErrorCode::DimensionMismatch, "fringe/white image dimensions differ");
    for (const auto& img : fringe_images)
        if (!img.same_size(fringe_images.front()))
            fail(ErrorCode::DimensionMismatch, "fringe image dimensions differ within bundle");
    if (!fringe_lo.empty()) {
        if (fringe_lo.size() != 8)
            fail(ErrorCode::DimensionMismatch,
                 "low-frequency stack must hold 8 fringe images, got " +
                     std::to_string(fringe_lo.size()));
        for (const auto& img : fringe_lo)
            if (!img.same_size(fringe_images.front()))
                fail(ErrorCode::DimensionMismatch, "low-frequency image dimensions differ");
    }
}

} // namespace pmd
