#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "sct/metrics.hpp"

using namespace sct;

namespace {

Volume vol2(float a, float b) {
    Volume v(1, 1, 1, 2);
    v.data = {a, b};
    return v;
}

Volume radial_image(int n, double (*f)(double)) {
    Volume v(1, 1, n, n);
    double c = 0.5 * (n - 1);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            v.at(0, 0, y, x) = static_cast<float>(f(std::hypot(y - c, x - c)));
    return v;
}

}  // namespace

TEST_CASE("rmse hand values and symmetry") {
    CHECK(rmse(vol2(1, 2), vol2(1, 2)) == 0.0);
    CHECK(rmse(vol2(0, 0), vol2(3, 4)) == doctest::Approx(3.5355339).epsilon(1e-6));
    Volume a = vol2(0.3f, -1.2f), b = vol2(2.0f, 0.5f);
    CHECK(rmse(a, b) == rmse(b, a));
    Volume wrong(1, 1, 1, 3);
    CHECK_THROWS_AS(rmse(a, wrong), DimensionError);
}

TEST_CASE("nrmse normalizes by reference dynamic range") {
    Volume test = vol2(0, 0), ref = vol2(0, 2);
    // rmse = sqrt(4/2) = sqrt(2), range = 2
    CHECK(nrmse(test, ref) == doctest::Approx(std::sqrt(2.0) / 2.0));
    CHECK(nrmse(ref, ref) == 0.0);
}

TEST_CASE("psnr identity 20*log10(range/rmse)") {
    Volume test = vol2(0, 0), ref = vol2(0, 2);
    double r = rmse(test, ref);
    CHECK(psnr(test, ref) == doctest::Approx(20.0 * std::log10(2.0 / r)));
    CHECK(std::isinf(psnr(ref, ref)));
}

TEST_CASE("ring_score basics") {
    SUBCASE("all-zero slice scores 0") {
        Volume z(1, 1, 64, 64);
        CHECK(ring_score(z) == 0.0);
    }
    SUBCASE("radially smooth blob scores near zero") {
        Volume blob = radial_image(
            64, +[](double r) { return std::exp(-r * r / 200.0); });
        CHECK(ring_score(blob) <= 1e-3);
    }
    SUBCASE("injected annulus scores at least 10x the smooth case") {
        Volume blob = radial_image(
            64, +[](double r) { return std::exp(-r * r / 200.0); });
        double base = ring_score(blob);
        Volume ringy = blob;
        double c = 0.5 * 63;
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x)
                if (std::lround(std::hypot(y - c, x - c)) == 14)
                    ringy.at(0, 0, y, x) += 0.5f;
        CHECK(ring_score(ringy) >= 10.0 * base);
        CHECK(ring_score(ringy) > 0.01);
    }
    SUBCASE("invariant under adding a constant") {
        Volume blob = radial_image(
            64, +[](double r) { return std::cos(r / 9.0); });
        Volume shifted = blob;
        for (float& v : shifted.data) v += 3.25f;
        CHECK(ring_score(shifted) ==
              doctest::Approx(ring_score(blob)).epsilon(1e-6));
    }
}

TEST_CASE("evaluate fills per-frame table for 4D volumes") {
    Volume test(2, 1, 8, 8), ref(2, 1, 8, 8);
    for (size_t i = 0; i < ref.data.size(); ++i)
        ref.data[i] = static_cast<float>(i % 5);
    MetricReport rep = evaluate(test, ref);
    REQUIRE(rep.per_frame.size() == 2);
    CHECK(rep.per_frame[0].frame == 0);
    CHECK(rep.per_frame[1].frame == 1);
    CHECK(rep.rmse > 0.0);
    Volume solo(1, 1, 8, 8);
    CHECK(evaluate(solo, solo).per_frame.empty());
}
