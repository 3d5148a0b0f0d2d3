#pragma once

#include <vector>

#include "pmd/geometry.hpp"
#include "pmd/image.hpp"

namespace pmd {

/// Axis of modulation on the screen: Horizontal patterns vary along screen u,
/// Vertical patterns vary along screen v.
enum class Orientation { Horizontal, Vertical };

/// Parameters of one displayed sinusoid. frequency is the number of full
/// cycles across the screen extent along the modulated axis; phase_index m
/// selects the shift (m-1) * pi/2.
struct PatternSpec {
    Orientation orientation = Orientation::Horizontal;
    int frequency = 1;
    int phase_index = 1; // 1..4

    double phase_shift() const;
    void validate() const;
};

/// Continuous pattern intensity at coordinate u along the modulated axis,
/// with `extent_px` the screen size along that axis:
///   S(u) = 0.5 + 0.5 * cos(2*pi*frequency*u/extent - phase_shift)
double fringe_value(const PatternSpec& spec, double u, double extent_px);

/// Rasterizes the pattern at screen resolution. Values in [0, 1], constant
/// along the unmodulated axis.
ImageGrid gen_fringe(const PatternSpec& spec, const ScreenGeometry& screen);

/// The acquisition sequence: horizontal m=1..4 then vertical m=1..4. This
/// ordering is the binding contract for CaptureBundle::fringe_images.
std::vector<PatternSpec> build_sequence(int frequency);

} // namespace pmd
