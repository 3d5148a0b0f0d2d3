#pragma once

#include "pmd/geometry.hpp"
#include "pmd/image.hpp"
#include "pmd/patterns.hpp"
#include "pmd/phase.hpp"

namespace pmd {

/// Per-pixel unit surface normals. Camera-facing convention: nz < 0 at every
/// valid pixel; components are NaN at invalid pixels.
struct NormalMap {
    ImageGrid nx;
    ImageGrid ny;
    ImageGrid nz;
    ValidityMask mask;

    int width() const { return nx.width; }
    int height() const { return nx.height; }
};

/// Relative height field, zero-mean over the valid region.
struct DepthMap {
    ImageGrid z;
    ValidityMask mask;
};

/// n = (gx*scale, gy*scale, -1) / norm per pixel; mask propagated.
NormalMap normals_from_gradients(const GradientMap& g);

/// Small-angle conversion from phase to surface slope: a slope change ds
/// deflects the reflected ray by 2*ds and shifts the screen intersection by
/// about 2*standoff*ds, so one radian of phase corresponds to
/// extent_mm / (4*pi*frequency*standoff_mm) of slope.
double phase_to_slope_scale(double screen_extent_mm, double standoff_mm, int frequency);
double phase_to_slope_scale(const ScreenGeometry& screen, double standoff_mm, int frequency,
                            Orientation axis = Orientation::Horizontal);

/// Least-squares integration of the gradient field in the frequency domain:
///   Z(w) = -j * (wx*Gx + wy*Gy) / (wx^2 + wy^2),  Z(0) = 0.
/// The field is mirror-padded to twice its size before the transform (even
/// extension of the surface, so gx is odd-extended along x and gy along y)
/// and cropped after. NaN holes are filled with zero gradient beforehand; the
/// output is zero-mean over the valid field.
DepthMap integrate_frankot_chellappa(const GradientMap& g);

} // namespace pmd
