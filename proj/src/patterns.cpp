#include "pmd/patterns.hpp"

#include <cmath>
#include <numbers>

namespace pmd {

double PatternSpec::phase_shift() const {
    return (phase_index - 1) * std::numbers::pi / 2.0;
}

void PatternSpec::validate() const {
    if (frequency < 1)
        fail(ErrorCode::InvalidFrequency, "pattern frequency must be a positive integer");
    if (phase_index < 1 || phase_index > 4)
        fail(ErrorCode::InvalidArgument, "phase index must be in 1..4");
}

double fringe_value(const PatternSpec& spec, double u, double extent_px) {
    const double arg = 2.0 * std::numbers::pi * spec.frequency * u / extent_px - spec.phase_shift();
    return 0.5 + 0.5 * std::cos(arg);
}

ImageGrid gen_fringe(const PatternSpec& spec, const ScreenGeometry& screen) {
    spec.validate();
    ImageGrid img(screen.width_px, screen.height_px);
    if (spec.orientation == Orientation::Horizontal) {
        // Constant along v: compute one row and copy.
        std::vector<double> row(screen.width_px);
        for (int u = 0; u < screen.width_px; ++u)
            row[u] = fringe_value(spec, u, screen.width_px);
        for (int v = 0; v < screen.height_px; ++v)
            for (int u = 0; u < screen.width_px; ++u)
                img.at(u, v) = row[u];
    } else {
        for (int v = 0; v < screen.height_px; ++v) {
            const double value = fringe_value(spec, v, screen.height_px);
            for (int u = 0; u < screen.width_px; ++u)
                img.at(u, v) = value;
        }
    }
    return img;
}

std::vector<PatternSpec> build_sequence(int frequency) {
    if (frequency < 1)
        fail(ErrorCode::InvalidFrequency, "fringe sequence frequency must be >= 1");
    std::vector<PatternSpec> seq;
    seq.reserve(8);
    for (int m = 1; m <= 4; ++m)
        seq.push_back({Orientation::Horizontal, frequency, m});
    for (int m = 1; m <= 4; ++m)
        seq.push_back({Orientation::Vertical, frequency, m});
    return seq;
}

} // namespace pmd
