#include "pmd/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include <Eigen/SVD>

namespace pmd {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

ImageGrid gaussian_blur(const ImageGrid& src, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel)
        k /= sum;

    const int w = src.width, h = src.height;
    ImageGrid tmp(w, h), dst(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int xx = std::clamp(x + i, 0, w - 1);
                acc += kernel[i + radius] * src.at(xx, y);
            }
            tmp.at(x, y) = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int yy = std::clamp(y + i, 0, h - 1);
                acc += kernel[i + radius] * tmp.at(x, yy);
            }
            dst.at(x, y) = acc;
        }
    return dst;
}

void central_gradients(const ImageGrid& src, ImageGrid& gx, ImageGrid& gy) {
    const int w = src.width, h = src.height;
    gx = ImageGrid(w, h);
    gy = ImageGrid(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
            const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
            gx.at(x, y) = 0.5 * (src.at(xp, y) - src.at(xm, y));
            gy.at(x, y) = 0.5 * (src.at(x, yp) - src.at(x, ym));
        }
}

ImageGrid sanitize(const ImageGrid& src) {
    ImageGrid out = src;
    for (double& v : out.data)
        if (!std::isfinite(v))
            v = 0.0;
    return out;
}

} // namespace

Homography Homography::inverse() const {
    if (!invertible())
        fail(ErrorCode::InvalidArgument, "homography is not invertible");
    Homography out;
    out.m = m.inverse();
    out.normalize();
    return out;
}

Homography Homography::then(const Homography& next) const {
    Homography out;
    out.m = next.m * m;
    out.normalize();
    return out;
}

Homography Homography::translation(double tx, double ty) {
    Homography h;
    h.m(0, 2) = tx;
    h.m(1, 2) = ty;
    return h;
}

void Homography::normalize() {
    if (std::abs(m(2, 2)) > 1e-15)
        m /= m(2, 2);
}

// --- Radial distortion -----------------------------------------------------

Eigen::Vector2d distort_normalized(const CameraIntrinsics& k, const Eigen::Vector2d& undist) {
    const double r2 = undist.squaredNorm();
    const double f = 1.0 + k.k1 * r2 + k.k2 * r2 * r2;
    return undist * f;
}

Eigen::Vector2d undistort_normalized(const CameraIntrinsics& k, const Eigen::Vector2d& dist) {
    Eigen::Vector2d u = dist;
    for (int i = 0; i < 10; ++i) {
        const double r2 = u.squaredNorm();
        const double f = 1.0 + k.k1 * r2 + k.k2 * r2 * r2;
        u = dist / f;
    }
    return u;
}

ImageGrid undistort_image(const ImageGrid& img, const CameraIntrinsics& k) {
    ImageGrid out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const Eigen::Vector2d un((x - k.cx) / k.fx, (y - k.cy) / k.fy);
            const Eigen::Vector2d dn = distort_normalized(k, un);
            const double sx = k.cx + k.fx * dn.x();
            const double sy = k.cy + k.fy * dn.y();
            const auto v = bilinear_sample(img, sx, sy);
            out.at(x, y) = v ? *v : 0.0;
        }
    return out;
}

// --- Features ----------------------------------------------------------------

std::vector<FeaturePoint> detect_corners(const ImageGrid& img, int max_features) {
    if (img.empty())
        fail(ErrorCode::InvalidArgument, "detect_corners: empty image");
    const ImageGrid smooth = gaussian_blur(sanitize(img), 1.0);
    ImageGrid gx, gy;
    central_gradients(smooth, gx, gy);

    const int w = img.width, h = img.height;
    ImageGrid ixx(w, h), ixy(w, h), iyy(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            ixx.at(x, y) = gx.at(x, y) * gx.at(x, y);
            ixy.at(x, y) = gx.at(x, y) * gy.at(x, y);
            iyy.at(x, y) = gy.at(x, y) * gy.at(x, y);
        }
    ixx = gaussian_blur(ixx, 2.0);
    ixy = gaussian_blur(ixy, 2.0);
    iyy = gaussian_blur(iyy, 2.0);

    ImageGrid response(w, h);
    double max_response = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double a = ixx.at(x, y), b = ixy.at(x, y), c = iyy.at(x, y);
            const double det = a * c - b * b;
            const double tr = a + c;
            const double r = det - 0.06 * tr * tr;
            response.at(x, y) = r;
            max_response = std::max(max_response, r);
        }
    if (max_response <= 1e-12)
        return {};

    // orientation from coarse gradients
    const ImageGrid ogx = gaussian_blur(gx, 3.0);
    const ImageGrid ogy = gaussian_blur(gy, 3.0);

    const double threshold = 0.01 * max_response;
    const int border = 2;
    std::vector<FeaturePoint> points;
    for (int y = border; y < h - border; ++y)
        for (int x = border; x < w - border; ++x) {
            const double r = response.at(x, y);
            if (r < threshold)
                continue;
            bool is_max = true;
            for (int dy = -2; dy <= 2 && is_max; ++dy)
                for (int dx = -2; dx <= 2; ++dx) {
                    if (dx == 0 && dy == 0)
                        continue;
                    if (response.at(x + dx, y + dy) > r) {
                        is_max = false;
                        break;
                    }
                }
            if (!is_max)
                continue;

            // subpixel refinement by quadratic fit along each axis
            double sx = x, sy = y;
            const double dxm = response.at(x - 1, y), dxp = response.at(x + 1, y);
            const double dym = response.at(x, y - 1), dyp = response.at(x, y + 1);
            const double denx = dxm - 2.0 * r + dxp;
            const double deny = dym - 2.0 * r + dyp;
            if (std::abs(denx) > 1e-18)
                sx += std::clamp(0.5 * (dxm - dxp) / denx, -0.5, 0.5);
            if (std::abs(deny) > 1e-18)
                sy += std::clamp(0.5 * (dym - dyp) / deny, -0.5, 0.5);

            FeaturePoint p;
            p.x = sx;
            p.y = sy;
            p.response = r;
            p.orientation = std::atan2(ogy.at(x, y), ogx.at(x, y));
            points.push_back(p);
        }

    std::sort(points.begin(), points.end(), [](const FeaturePoint& a, const FeaturePoint& b) {
        if (a.response != b.response)
            return a.response > b.response;
        if (a.y != b.y)
            return a.y < b.y;
        return a.x < b.x;
    });
    if (static_cast<int>(points.size()) > max_features)
        points.resize(max_features);
    return points;
}

std::vector<FeatureDescriptor> describe_features(const ImageGrid& img,
                                                 const std::vector<FeaturePoint>& points) {
    const ImageGrid smooth = gaussian_blur(sanitize(img), 1.0);
    constexpr int kGrid = 8;
    constexpr double kSpacing = 2.2; // px between samples in the rotated patch

    std::vector<FeatureDescriptor> out;
    out.reserve(points.size());
    for (const auto& p : points) {
        const double c = std::cos(p.orientation), s = std::sin(p.orientation);
        FeatureDescriptor d;
        d.point = p;
        bool ok = true;
        double mean = 0.0;
        std::array<double, kGrid * kGrid> raw{};
        for (int j = 0; j < kGrid && ok; ++j)
            for (int i = 0; i < kGrid; ++i) {
                const double u = (i - (kGrid - 1) / 2.0) * kSpacing;
                const double v = (j - (kGrid - 1) / 2.0) * kSpacing;
                const double sx = p.x + c * u - s * v;
                const double sy = p.y + s * u + c * v;
                const auto val = bilinear_sample(smooth, sx, sy);
                if (!val) {
                    ok = false;
                    break;
                }
                raw[j * kGrid + i] = *val;
                mean += *val;
            }
        if (!ok)
            continue;
        mean /= raw.size();
        double norm = 0.0;
        for (double& v : raw) {
            v -= mean;
            norm += v * v;
        }
        norm = std::sqrt(norm);
        if (norm < 1e-9)
            continue; // textureless patch
        for (size_t i = 0; i < raw.size(); ++i)
            d.v[i] = static_cast<float>(raw[i] / norm);
        out.push_back(d);
    }
    return out;
}

namespace {

double descriptor_distance(const FeatureDescriptor& a, const FeatureDescriptor& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) {
        const double d = static_cast<double>(a.v[i]) - b.v[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

} // namespace

MatchSet detect_and_match(const ImageGrid& white_a, const ImageGrid& white_b) {
    if (white_a.empty() || white_b.empty())
        fail(ErrorCode::InvalidArgument, "detect_and_match: empty image");
    const auto da = describe_features(white_a, detect_corners(white_a));
    const auto db = describe_features(white_b, detect_corners(white_b));

    MatchSet matches;
    if (da.size() >= 1 && db.size() >= 1) {
        // nearest and second-nearest in b for each a
        std::vector<int> best_b(da.size(), -1);
        std::vector<double> best_d(da.size(), std::numeric_limits<double>::max());
        std::vector<double> second_d(da.size(), std::numeric_limits<double>::max());
        for (size_t i = 0; i < da.size(); ++i)
            for (size_t j = 0; j < db.size(); ++j) {
                const double d = descriptor_distance(da[i], db[j]);
                if (d < best_d[i]) {
                    second_d[i] = best_d[i];
                    best_d[i] = d;
                    best_b[i] = static_cast<int>(j);
                } else if (d < second_d[i]) {
                    second_d[i] = d;
                }
            }
        // mutual check: nearest in a for each b
        std::vector<int> best_a(db.size(), -1);
        std::vector<double> best_a_d(db.size(), std::numeric_limits<double>::max());
        for (size_t j = 0; j < db.size(); ++j)
            for (size_t i = 0; i < da.size(); ++i) {
                const double d = descriptor_distance(da[i], db[j]);
                if (d < best_a_d[j]) {
                    best_a_d[j] = d;
                    best_a[j] = static_cast<int>(i);
                }
            }
        for (size_t i = 0; i < da.size(); ++i) {
            const int j = best_b[i];
            if (j < 0 || best_a[j] != static_cast<int>(i))
                continue;
            const bool ratio_ok = best_d[i] < 1e-9 || best_d[i] < 0.8 * second_d[i];
            if (!ratio_ok)
                continue;
            matches.push_back(
                {da[i].point.x, da[i].point.y, db[j].point.x, db[j].point.y, best_d[i]});
        }
    }
    if (matches.size() < 4)
        fail(ErrorCode::InsufficientFeatures,
             "detect_and_match: fewer than 4 matches (" + std::to_string(matches.size()) + ")");
    return matches;
}

// --- RANSAC homography -------------------------------------------------------

namespace {

struct Normalization {
    Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
};

Normalization normalize_points(const std::vector<Eigen::Vector2d>& pts) {
    Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
    for (const auto& p : pts)
        centroid += p;
    centroid /= static_cast<double>(pts.size());
    double mean_dist = 0.0;
    for (const auto& p : pts)
        mean_dist += (p - centroid).norm();
    mean_dist /= static_cast<double>(pts.size());
    const double scale = mean_dist > 1e-12 ? std::numbers::sqrt2 / mean_dist : 1.0;
    Normalization n;
    n.t << scale, 0, -scale * centroid.x(), 0, scale, -scale * centroid.y(), 0, 0, 1;
    return n;
}

bool dlt_homography(const std::vector<Eigen::Vector2d>& a, const std::vector<Eigen::Vector2d>& b,
                    Homography& h) {
    const size_t n = a.size();
    if (n < 4)
        return false;
    const Normalization na = normalize_points(a);
    const Normalization nb = normalize_points(b);

    Eigen::MatrixXd m(2 * n, 9);
    for (size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d pa = na.t * Eigen::Vector3d(a[i].x(), a[i].y(), 1.0);
        const Eigen::Vector3d pb = nb.t * Eigen::Vector3d(b[i].x(), b[i].y(), 1.0);
        const double x = pa.x(), y = pa.y();
        const double xb = pb.x(), yb = pb.y();
        m.row(2 * i) << 0, 0, 0, -x, -y, -1, yb * x, yb * y, yb;
        m.row(2 * i + 1) << x, y, 1, 0, 0, 0, -xb * x, -xb * y, -xb;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
    const Eigen::VectorXd hv = svd.matrixV().col(8);
    Eigen::Matrix3d hn;
    hn << hv(0), hv(1), hv(2), hv(3), hv(4), hv(5), hv(6), hv(7), hv(8);
    Eigen::Matrix3d full = nb.t.inverse() * hn * na.t;
    if (std::abs(full(2, 2)) < 1e-12)
        return false;
    full /= full(2, 2);
    if (std::abs(full.determinant()) < 1e-12)
        return false;
    h.m = full;
    return true;
}

bool triple_collinear(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                      const Eigen::Vector2d& c) {
    const Eigen::Vector2d u = b - a, v = c - a;
    return std::abs(u.x() * v.y() - u.y() * v.x()) < 1e-6;
}

bool degenerate_sample(const std::vector<Eigen::Vector2d>& p) {
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
            for (int k = j + 1; k < 4; ++k)
                if (triple_collinear(p[i], p[j], p[k]))
                    return true;
    return false;
}

double symmetric_transfer_error(const Homography& h, const Homography& hinv, const Match& m) {
    const Eigen::Vector2d fwd = h.apply(m.ax, m.ay);
    const Eigen::Vector2d bwd = hinv.apply(m.bx, m.by);
    const double d1 = (fwd - Eigen::Vector2d(m.bx, m.by)).norm();
    const double d2 = (bwd - Eigen::Vector2d(m.ax, m.ay)).norm();
    return std::max(d1, d2);
}

} // namespace

RansacResult estimate_homography_ransac(const MatchSet& matches, const RansacParams& params) {
    const size_t n = matches.size();
    if (n < 4)
        fail(ErrorCode::RegistrationFailure,
             "estimate_homography_ransac: need at least 4 matches");

    // Canonical ordering makes the result invariant to input permutation.
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t i, size_t j) {
        const Match& a = matches[i];
        const Match& b = matches[j];
        return std::tie(a.ay, a.ax, a.by, a.bx, a.distance) <
               std::tie(b.ay, b.ax, b.by, b.bx, b.distance);
    });

    std::mt19937_64 rng(params.seed);
    std::uniform_int_distribution<size_t> pick(0, n - 1);

    Homography best_h;
    int best_count = -1;
    double best_err = std::numeric_limits<double>::max();

    int required = params.max_iters;
    for (int iter = 0; iter < required; ++iter) {
        size_t idx[4];
        idx[0] = pick(rng);
        do idx[1] = pick(rng); while (idx[1] == idx[0]);
        do idx[2] = pick(rng); while (idx[2] == idx[0] || idx[2] == idx[1]);
        do idx[3] = pick(rng); while (idx[3] == idx[0] || idx[3] == idx[1] || idx[3] == idx[2]);

        std::vector<Eigen::Vector2d> pa(4), pb(4);
        for (int i = 0; i < 4; ++i) {
            const Match& m = matches[order[idx[i]]];
            pa[i] = {m.ax, m.ay};
            pb[i] = {m.bx, m.by};
        }
        if (degenerate_sample(pa) || degenerate_sample(pb))
            continue;
        Homography h;
        if (!dlt_homography(pa, pb, h))
            continue;
        const Homography hinv = h.inverse();

        int count = 0;
        double err_sum = 0.0;
        for (const Match& m : matches) {
            const double e = symmetric_transfer_error(h, hinv, m);
            if (e < params.inlier_tol_px) {
                ++count;
                err_sum += e;
            }
        }
        const double mean_err = count > 0 ? err_sum / count : std::numeric_limits<double>::max();
        if (count > best_count || (count == best_count && mean_err < best_err)) {
            best_count = count;
            best_err = mean_err;
            best_h = h;
            // adaptive stopping at 99.9% confidence
            const double w = static_cast<double>(count) / static_cast<double>(n);
            const double p_sample = std::pow(w, 4.0);
            if (p_sample > 1e-12) {
                const int needed = static_cast<int>(
                    std::ceil(std::log(1e-3) / std::log(std::max(1e-12, 1.0 - p_sample))));
                required = std::clamp(needed, iter + 1, params.max_iters);
            }
        }
    }

    if (best_count < 4)
        fail(ErrorCode::RegistrationFailure, "estimate_homography_ransac: no valid model found");

    // Least-squares refit on the inliers, then refresh the inlier set (twice).
    RansacResult result;
    result.h = best_h;
    for (int round = 0; round < 2; ++round) {
        Homography hinv = result.h.inverse();
        std::vector<Eigen::Vector2d> pa, pb;
        for (const Match& m : matches)
            if (symmetric_transfer_error(result.h, hinv, m) < params.inlier_tol_px) {
                pa.push_back({m.ax, m.ay});
                pb.push_back({m.bx, m.by});
            }
        if (pa.size() >= 4) {
            Homography refined;
            if (dlt_homography(pa, pb, refined))
                result.h = refined;
        }
    }

    const Homography hinv = result.h.inverse();
    result.inliers.assign(n, false);
    double err_sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double e = symmetric_transfer_error(result.h, hinv, matches[i]);
        if (e < params.inlier_tol_px) {
            result.inliers[i] = true;
            ++result.inlier_count;
            err_sum += e;
        }
    }
    result.mean_reproj_error_px =
        result.inlier_count > 0 ? err_sum / result.inlier_count : 0.0;

    if (result.inlier_count < 10 || result.inlier_count * 2 < static_cast<int>(n))
        fail(ErrorCode::RegistrationFailure,
             "estimate_homography_ransac: best model explains only " +
                 std::to_string(result.inlier_count) + " of " + std::to_string(n) + " matches");
    return result;
}

// --- Warping & stitching -----------------------------------------------------

namespace {

// Inverse-warp one component grid; valid only where the nearest-neighbor mask
// is set and every bilinear corner is finite.
bool sample_valid(const NormalMap& nm, double sx, double sy, double& nx, double& ny, double& nz) {
    if (!(sx >= 0.0 && sx <= nm.width() - 1.0 && sy >= 0.0 && sy <= nm.height() - 1.0))
        return false;
    const int rx = static_cast<int>(std::lround(sx));
    const int ry = static_cast<int>(std::lround(sy));
    if (!nm.mask.at(std::clamp(rx, 0, nm.width() - 1), std::clamp(ry, 0, nm.height() - 1)))
        return false;
    const auto vx = bilinear_sample(nm.nx, sx, sy);
    const auto vy = bilinear_sample(nm.ny, sx, sy);
    const auto vz = bilinear_sample(nm.nz, sx, sy);
    if (!vx || !vy || !vz || !std::isfinite(*vx) || !std::isfinite(*vy) || !std::isfinite(*vz))
        return false;
    const double norm = std::sqrt(*vx * *vx + *vy * *vy + *vz * *vz);
    if (norm < 1e-12)
        return false;
    nx = *vx / norm;
    ny = *vy / norm;
    nz = *vz / norm;
    return true;
}

} // namespace

NormalMap warp_normal_map(const NormalMap& nm, const Homography& h, int target_width,
                          int target_height) {
    if (!h.invertible())
        fail(ErrorCode::InvalidArgument, "warp_normal_map: homography not invertible");
    const Homography hinv = h.inverse();
    NormalMap out{ImageGrid(target_width, target_height, kNaN),
                  ImageGrid(target_width, target_height, kNaN),
                  ImageGrid(target_width, target_height, kNaN),
                  ValidityMask{ImageGrid(target_width, target_height, 0.0),
                               nm.mask.threshold_used}};
    for (int y = 0; y < target_height; ++y)
        for (int x = 0; x < target_width; ++x) {
            const Eigen::Vector2d src = hinv.apply(x, y);
            double nx, ny, nz;
            if (!sample_valid(nm, src.x(), src.y(), nx, ny, nz))
                continue;
            out.nx.at(x, y) = nx;
            out.ny.at(x, y) = ny;
            out.nz.at(x, y) = nz;
            out.mask.mask.at(x, y) = 1.0;
        }
    return out;
}

StitchResult blend_stitch(const std::vector<ViewInput>& views) {
    if (views.empty())
        fail(ErrorCode::InvalidArgument, "blend_stitch: need at least one view");

    // Canvas: union of every view's corners mapped into the reference frame.
    double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;
    bool first = true;
    for (const auto& view : views) {
        const double w = view.map.width() - 1.0;
        const double h = view.map.height() - 1.0;
        const Eigen::Vector2d corners[4] = {view.to_reference.apply(0, 0),
                                            view.to_reference.apply(w, 0),
                                            view.to_reference.apply(0, h),
                                            view.to_reference.apply(w, h)};
        for (const auto& c : corners) {
            if (first) {
                min_x = max_x = c.x();
                min_y = max_y = c.y();
                first = false;
            } else {
                min_x = std::min(min_x, c.x());
                max_x = std::max(max_x, c.x());
                min_y = std::min(min_y, c.y());
                max_y = std::max(max_y, c.y());
            }
        }
    }
    const double ox = std::floor(min_x);
    const double oy = std::floor(min_y);
    const int canvas_w = static_cast<int>(std::ceil(max_x - ox)) + 1;
    const int canvas_h = static_cast<int>(std::ceil(max_y - oy)) + 1;
    const Homography offset = Homography::translation(-ox, -oy);

    ImageGrid acc_x(canvas_w, canvas_h), acc_y(canvas_w, canvas_h), acc_z(canvas_w, canvas_h);
    ImageGrid count(canvas_w, canvas_h);
    double disagreement_sum = 0.0; // accumulated pairwise angles, degrees
    long disagreement_pairs = 0;
    long overlap_pixels = 0;

    std::vector<NormalMap> warped;
    warped.reserve(views.size());
    for (const auto& view : views)
        warped.push_back(warp_normal_map(view.map, view.to_reference.then(offset), canvas_w,
                                         canvas_h));

    for (int y = 0; y < canvas_h; ++y)
        for (int x = 0; x < canvas_w; ++x) {
            int contributors = 0;
            double sx = 0.0, sy = 0.0, sz = 0.0;
            for (const auto& wm : warped) {
                if (!wm.mask.at(x, y))
                    continue;
                ++contributors;
                sx += wm.nx.at(x, y);
                sy += wm.ny.at(x, y);
                sz += wm.nz.at(x, y);
            }
            if (contributors == 0)
                continue;
            acc_x.at(x, y) = sx;
            acc_y.at(x, y) = sy;
            acc_z.at(x, y) = sz;
            count.at(x, y) = contributors;
            if (contributors >= 2) {
                ++overlap_pixels;
                // mean pairwise angle between contributing vectors
                std::vector<Eigen::Vector3d> vs;
                for (const auto& wm : warped)
                    if (wm.mask.at(x, y))
                        vs.emplace_back(wm.nx.at(x, y), wm.ny.at(x, y), wm.nz.at(x, y));
                for (size_t i = 0; i < vs.size(); ++i)
                    for (size_t j = i + 1; j < vs.size(); ++j) {
                        const double d = std::clamp(vs[i].dot(vs[j]), -1.0, 1.0);
                        disagreement_sum += std::acos(d) * 180.0 / std::numbers::pi;
                        ++disagreement_pairs;
                    }
            }
        }

    StitchResult result;
    result.stitched = NormalMap{ImageGrid(canvas_w, canvas_h, kNaN),
                                ImageGrid(canvas_w, canvas_h, kNaN),
                                ImageGrid(canvas_w, canvas_h, kNaN),
                                ValidityMask{ImageGrid(canvas_w, canvas_h, 0.0), 0.0}};
    for (int y = 0; y < canvas_h; ++y)
        for (int x = 0; x < canvas_w; ++x) {
            if (count.at(x, y) == 0.0)
                continue;
            const double nx = acc_x.at(x, y), ny = acc_y.at(x, y), nz = acc_z.at(x, y);
            const double norm = std::sqrt(nx * nx + ny * ny + nz * nz);
            if (norm < 1e-12)
                continue;
            result.stitched.nx.at(x, y) = nx / norm;
            result.stitched.ny.at(x, y) = ny / norm;
            result.stitched.nz.at(x, y) = nz / norm;
            result.stitched.mask.mask.at(x, y) = 1.0;
            ++result.coverage_pixels;
        }
    result.overlap_pixel_count = overlap_pixels;
    result.overlap_disagreement_deg =
        disagreement_pairs > 0 ? disagreement_sum / disagreement_pairs : 0.0;
    result.offset_x = -ox;
    result.offset_y = -oy;
    return result;
}

} // namespace pmd
