#pragma once

#include "pmd/image.hpp"

namespace pmd {

/// Per-pixel solution of the four-step phase shift: wrapped phase in
/// (-pi, pi], bias A and modulation B.
struct PhaseRetrievalResult {
    ImageGrid phase;
    ImageGrid bias;
    ImageGrid modulation;
};

/// Boolean raster marking pixels with enough fringe modulation to measure.
struct ValidityMask {
    ImageGrid mask; // 1.0 valid, 0.0 invalid
    double threshold_used = 0.0;

    bool at(int x, int y) const { return mask.at(x, y) != 0.0; }
    int count() const;
    bool same_size(const ValidityMask& other) const { return mask.same_size(other.mask); }
};

ValidityMask mask_and(const ValidityMask& a, const ValidityMask& b);

/// High-pass-filtered phase maps, interpreted as surface slopes. gx pairs with
/// the horizontal-fringe phase, gy with the vertical one. NaN exactly at
/// masked-out pixels. `scale` converts radians to slope (1.0 uncalibrated).
struct GradientMap {
    ImageGrid gx;
    ImageGrid gy;
    ValidityMask mask;
    double scale = 1.0;
};

/// Four-step phase retrieval:
///   phase = atan2(I2 - I4, I1 - I3)
///   B     = 0.5 * sqrt((I2-I4)^2 + (I1-I3)^2)
///   A     = (I1 + I2 + I3 + I4) / 4
PhaseRetrievalResult retrieve_phase(const ImageGrid& i1, const ImageGrid& i2,
                                    const ImageGrid& i3, const ImageGrid& i4);

/// Valid where modulation >= threshold. NaN modulation is invalid.
ValidityMask validity_mask(const ImageGrid& modulation, double threshold);

/// Maps wrapped phase (-pi, pi] to [0, 2*pi). With one sinusoidal period per
/// screen the branch cut then falls on the screen edge, outside the valid
/// field, so no spatial unwrapping is needed.
ImageGrid rewrap_from_screen_edge(const ImageGrid& phase);

/// Temporal two-frequency unwrapping of the high-frequency phase:
///   Phi = phase_hi + 2*pi * round((k * phase_lo - phase_hi) / (2*pi))
/// phase_lo must already be continuous over the field (frequency-1 phase
/// through rewrap_from_screen_edge). NaN propagates.
ImageGrid unwrap_two_freq(const ImageGrid& phase_lo, const ImageGrid& phase_hi, int k);

/// Default high-pass sigma: 1/8 of the diagonal of the valid region's
/// bounding box, in pixels.
double auto_hp_sigma(const ValidityMask& mask);

/// Removes the smooth position-dependent phase offset, leaving the surface
/// slope signal. The low-pass estimate is a first-order normalized
/// convolution: a Gaussian-weighted plane fit over valid pixels, evaluated at
/// the center pixel. A plane fit reproduces affine carriers exactly under any
/// mask truncation, which a plain masked blur does not. Masked-out pixels
/// contribute nothing and come back NaN; the result is mean-free over the
/// valid field.
GradientMap highpass_gradients(const ImageGrid& phase_x_unwrapped,
                               const ImageGrid& phase_y_unwrapped,
                               const ValidityMask& mask, double sigma, int jobs = 0);

} // namespace pmd
