#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "pmd/patterns.hpp"
#include "pmd/phase.hpp"

using namespace pmd;

namespace {

ScreenGeometry test_screen(int w = 256, int h = 128) {
    ScreenGeometry s;
    s.width_px = w;
    s.height_px = h;
    return s;
}

double wrap_pi(double a) {
    while (a > std::numbers::pi)
        a -= 2 * std::numbers::pi;
    while (a <= -std::numbers::pi)
        a += 2 * std::numbers::pi;
    return a;
}

} // namespace

TEST_CASE("fringe values at the anchor points") {
    const ScreenGeometry s = test_screen();
    const ImageGrid m1 = gen_fringe({Orientation::Horizontal, 1, 1}, s);
    CHECK(m1.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));          // cos 0
    CHECK(m1.at(s.width_px / 2, 0) == doctest::Approx(0.0).epsilon(1e-12)); // cos pi
}

TEST_CASE("pi phase shift negates the cosine") {
    const ScreenGeometry s = test_screen();
    const ImageGrid m1 = gen_fringe({Orientation::Horizontal, 1, 1}, s);
    const ImageGrid m3 = gen_fringe({Orientation::Horizontal, 1, 3}, s);
    for (size_t i = 0; i < m1.data.size(); ++i)
        CHECK(m3.data[i] == doctest::Approx(1.0 - m1.data[i]).epsilon(1e-12));
}

TEST_CASE("opposite shifts sum to one for every m") {
    const ScreenGeometry s = test_screen(64, 32);
    for (int nu : {1, 3})
        for (int m = 1; m <= 2; ++m) {
            const ImageGrid a = gen_fringe({Orientation::Vertical, nu, m}, s);
            const ImageGrid b = gen_fringe({Orientation::Vertical, nu, m + 2}, s);
            for (size_t i = 0; i < a.data.size(); ++i)
                CHECK(a.data[i] + b.data[i] == doctest::Approx(1.0).epsilon(1e-12));
        }
}

TEST_CASE("mean over one full period is one half") {
    const ScreenGeometry s = test_screen(240, 2);
    for (int nu : {1, 2, 5})
        for (int m = 1; m <= 4; ++m) {
            const ImageGrid g = gen_fringe({Orientation::Horizontal, nu, m}, s);
            double mean = 0.0;
            for (int u = 0; u < s.width_px; ++u)
                mean += g.at(u, 0);
            mean /= s.width_px;
            CHECK(mean == doctest::Approx(0.5).epsilon(1e-6));
        }
}

TEST_CASE("patterns are constant along the unmodulated axis") {
    const ScreenGeometry s = test_screen(32, 16);
    const ImageGrid h = gen_fringe({Orientation::Horizontal, 2, 2}, s);
    for (int v = 1; v < s.height_px; ++v)
        for (int u = 0; u < s.width_px; ++u)
            CHECK(h.at(u, v) == h.at(u, 0));
    const ImageGrid vimg = gen_fringe({Orientation::Vertical, 2, 2}, s);
    for (int v = 0; v < s.height_px; ++v)
        for (int u = 1; u < s.width_px; ++u)
            CHECK(vimg.at(u, v) == vimg.at(0, v));
}

TEST_CASE("build_sequence ordering and validation") {
    const auto seq = build_sequence(1);
    REQUIRE(seq.size() == 8);
    CHECK(seq[0].orientation == Orientation::Horizontal);
    CHECK(seq[0].frequency == 1);
    CHECK(seq[0].phase_index == 1);
    CHECK(seq[4].orientation == Orientation::Vertical);
    CHECK(seq[4].phase_index == 1);
    CHECK(seq[3].phase_index == 4);
    CHECK(seq[7].phase_index == 4);

    for (const auto& spec : build_sequence(4))
        CHECK(spec.frequency == 4);

    CHECK_THROWS_AS(build_sequence(0), Error);
    try {
        build_sequence(0);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidFrequency);
    }
}

TEST_CASE("four patterns fed to phase retrieval recover the screen phase") {
    // self-consistency without any optics
    const ScreenGeometry s = test_screen(512, 4);
    for (int nu : {1, 4}) {
        ImageGrid imgs[4] = {gen_fringe({Orientation::Horizontal, nu, 1}, s),
                             gen_fringe({Orientation::Horizontal, nu, 2}, s),
                             gen_fringe({Orientation::Horizontal, nu, 3}, s),
                             gen_fringe({Orientation::Horizontal, nu, 4}, s)};
        const auto r = retrieve_phase(imgs[0], imgs[1], imgs[2], imgs[3]);
        for (int u = 0; u < s.width_px; ++u) {
            const double expected = wrap_pi(2.0 * std::numbers::pi * nu * u / s.width_px);
            const double got = r.phase.at(u, 1);
            CHECK(std::abs(wrap_pi(got - expected)) < 1e-6);
        }
    }
}
