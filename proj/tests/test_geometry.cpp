#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <set>

#include "doctest.h"
#include "sct/geometry.hpp"

using namespace sct;

TEST_CASE("uniform_angles half-open grid") {
    auto s = uniform_angles(4, 0.0, 180.0);
    REQUIRE(s.n_views() == 4);
    CHECK(s.angles_deg[0] == doctest::Approx(0.0));
    CHECK(s.angles_deg[1] == doctest::Approx(45.0));
    CHECK(s.angles_deg[2] == doctest::Approx(90.0));
    CHECK(s.angles_deg[3] == doctest::Approx(135.0));
    CHECK(s.n_frames == 1);
    CHECK_FALSE(s.limited);

    auto one = uniform_angles(1, 0.0, 180.0);
    REQUIRE(one.n_views() == 1);
    CHECK(one.angles_deg[0] == doctest::Approx(0.0));

    auto neg = uniform_angles(3, -60.0, 60.0);
    CHECK(neg.angles_deg[0] == doctest::Approx(-60.0));
    CHECK(neg.angles_deg[1] == doctest::Approx(-20.0));
    CHECK(neg.angles_deg[2] == doctest::Approx(20.0));

    CHECK_THROWS(uniform_angles(0, 0.0, 180.0));
    CHECK_THROWS(uniform_angles(4, 90.0, 10.0));
}

TEST_CASE("limited_angles flags the schedule and requires range < 180") {
    auto s = limited_angles(3, -60.0, 60.0);
    CHECK(s.limited);
    CHECK(s.angles_deg[0] == doctest::Approx(-60.0));
    CHECK(s.angles_deg[1] == doctest::Approx(-20.0));
    CHECK(s.angles_deg[2] == doctest::Approx(20.0));

    auto one = limited_angles(1, 0.0, 90.0);
    REQUIRE(one.n_views() == 1);
    CHECK(one.angles_deg[0] == doctest::Approx(0.0));

    auto two = limited_angles(2, -45.0, 45.0);
    CHECK(two.angles_deg[0] == doctest::Approx(-45.0));
    CHECK(two.angles_deg[1] == doctest::Approx(0.0));

    CHECK_THROWS(limited_angles(10, 0.0, 180.0));
    CHECK_THROWS(limited_angles(10, 0.0, 200.0));
}

TEST_CASE("interlaced_angles bit-reversed frames") {
    SUBCASE("2 views x 2 frames") {
        auto s = interlaced_angles(2, 2);
        REQUIRE(s.n_views() == 4);
        auto frames = s.views_by_frame();
        REQUIRE(frames.size() == 2);
        CHECK(s.angles_deg[frames[0][0]] == doctest::Approx(0.0));
        CHECK(s.angles_deg[frames[0][1]] == doctest::Approx(90.0));
        CHECK(s.angles_deg[frames[1][0]] == doctest::Approx(45.0));
        CHECK(s.angles_deg[frames[1][1]] == doctest::Approx(135.0));
    }
    SUBCASE("1 view x 4 frames follows bitrev order 0,2,1,3") {
        auto s = interlaced_angles(1, 4);
        REQUIRE(s.n_views() == 4);
        CHECK(s.angles_deg[0] == doctest::Approx(0.0));
        CHECK(s.angles_deg[1] == doctest::Approx(90.0));
        CHECK(s.angles_deg[2] == doctest::Approx(45.0));
        CHECK(s.angles_deg[3] == doctest::Approx(135.0));
    }
    SUBCASE("K=1 equals the uniform grid") {
        auto a = interlaced_angles(7, 1);
        auto b = uniform_angles(7, 0.0, 180.0);
        REQUIRE(a.n_views() == b.n_views());
        for (int v = 0; v < a.n_views(); ++v)
            CHECK(a.angles_deg[v] == doctest::Approx(b.angles_deg[v]));
    }
    SUBCASE("non-power-of-two frame count rejected") {
        CHECK_THROWS(interlaced_angles(4, 3));
        CHECK_THROWS(interlaced_angles(4, 0));
    }
    SUBCASE("union over frames is the uniform fine grid, all angles unique") {
        auto s = interlaced_angles(6, 8);
        std::vector<double> all = s.angles_deg;
        std::sort(all.begin(), all.end());
        double delta = 180.0 / (6 * 8);
        for (size_t k = 0; k < all.size(); ++k)
            CHECK(std::abs(all[k] - k * delta) < 1e-12);
        for (size_t k = 1; k < all.size(); ++k) CHECK(all[k] != all[k - 1]);
    }
    SUBCASE("within-frame spacing is constant K*delta, strictly increasing") {
        auto s = interlaced_angles(5, 4);
        auto frames = s.views_by_frame();
        double expect = 4.0 * 180.0 / (5 * 4);
        for (const auto& f : frames)
            for (size_t j = 1; j < f.size(); ++j)
                CHECK(s.angles_deg[f[j]] - s.angles_deg[f[j - 1]] ==
                      doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("schedule validation") {
    AngleSchedule s;
    s.angles_deg = {0.0, 10.0};
    s.frame_of_view = {0, 2};
    s.n_frames = 3;
    CHECK_THROWS(s.validate());  // frame 1 owns no views
    s.frame_of_view = {0, 1};
    s.n_frames = 2;
    CHECK_NOTHROW(s.validate());
}

TEST_CASE("schedule csv round trip") {
    auto s = interlaced_angles(3, 4);
    auto r = AngleSchedule::from_csv(s.to_csv());
    REQUIRE(r.n_views() == s.n_views());
    CHECK(r.n_frames == s.n_frames);
    for (int v = 0; v < s.n_views(); ++v) {
        CHECK(r.angles_deg[v] == doctest::Approx(s.angles_deg[v]).epsilon(1e-10));
        CHECK(r.frame_of_view[v] == s.frame_of_view[v]);
    }
    CHECK_THROWS(AngleSchedule::from_csv("angle,frame\n0,0\n"));
}

TEST_CASE("beam_block_mask membership on angle mod 180") {
    auto s = uniform_angles(4, 0.0, 180.0);  // 0 45 90 135
    auto m = beam_block_mask(s, {{40.0, 50.0}}, 1, 3);
    for (int c = 0; c < 3; ++c) {
        CHECK(m.at(0, 0, c));
        CHECK_FALSE(m.at(1, 0, c));
        CHECK(m.at(2, 0, c));
        CHECK(m.at(3, 0, c));
    }

    auto none = beam_block_mask(s, {}, 1, 3);
    for (int v = 0; v < 4; ++v)
        for (int c = 0; c < 3; ++c) CHECK(none.at(v, 0, c));

    AngleSchedule wrap;
    wrap.angles_deg = {0.0, 90.0, 190.0};
    wrap.frame_of_view = {0, 0, 0};
    wrap.n_frames = 1;
    auto mw = beam_block_mask(wrap, {{5.0, 15.0}}, 1, 2);
    CHECK(mw.at(0, 0, 0));
    CHECK(mw.at(1, 0, 0));
    CHECK_FALSE(mw.at(2, 0, 0));  // 190 deg is 10 deg mod 180
}

TEST_CASE("geometry validation") {
    Geometry g;
    g.detector_channels = 8;
    CHECK_NOTHROW(g.validate());
    g.tilt_deg = 10.0;
    CHECK_THROWS(g.validate());
    g.kind = GeometryKind::laminography;
    CHECK_NOTHROW(g.validate());
    g.tilt_deg = 95.0;
    CHECK_THROWS(g.validate());
    g.tilt_deg = 30.0;
    g.channel_pitch = 0.0;
    CHECK_THROWS(g.validate());
}
