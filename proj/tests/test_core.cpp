#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "sct/core.hpp"

using namespace sct;
namespace fs = std::filesystem;

namespace {

std::string tmp_path(const std::string& name) {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "sct_test_core";
        fs::create_directories(d);
        return d;
    }();
    return (dir / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("container payload bytes are raw f32le in row-major order") {
    Volume v(1, 1, 2, 2);
    v.data = {0.0f, 1.0f, 2.0f, 3.0f};
    std::string p = tmp_path("payload.sct");
    write_container(p, v);

    std::string bytes = slurp(p);
    size_t sep = bytes.find("---\n");
    REQUIRE(sep != std::string::npos);
    std::string payload = bytes.substr(sep + 4);
    REQUIRE(payload.size() == 16);
    float vals[4];
    std::memcpy(vals, payload.data(), 16);
    CHECK(vals[0] == 0.0f);
    CHECK(vals[1] == 1.0f);
    CHECK(vals[2] == 2.0f);
    CHECK(vals[3] == 3.0f);
    CHECK(bytes.rfind("SCT1\n", 0) == 0);
}

TEST_CASE("sinogram header records dims=views,rows,channels") {
    Sinogram s(45, 1, 128);
    std::string p = tmp_path("sino.sct");
    write_container(p, s);
    std::string header = slurp(p);
    CHECK(header.find("dims=45,1,128") != std::string::npos);
    CHECK(header.find("kind=sinogram") != std::string::npos);
    CHECK(header.find("dtype=f32le") != std::string::npos);
}

TEST_CASE("round trip is bit-exact for all payload kinds") {
    std::mt19937 rng(42);
    std::uniform_real_distribution<float> u(-100.0f, 100.0f);

    for (int rep = 0; rep < 20; ++rep) {
        int a = 1 + rng() % 4, b = 1 + rng() % 3, c = 1 + rng() % 7,
            d = 1 + rng() % 9;
        Volume v(a, b, c, d, 0.25);
        for (float& x : v.data) x = u(rng);
        std::string p = tmp_path("rt_vol.sct");
        write_container(p, v);
        Volume v2 = read_volume(p);
        CHECK(v2.nt == v.nt);
        CHECK(v2.nz == v.nz);
        CHECK(v2.ny == v.ny);
        CHECK(v2.nx == v.nx);
        CHECK(v2.voxel_size == doctest::Approx(v.voxel_size));
        CHECK(std::memcmp(v2.data.data(), v.data.data(),
                          v.data.size() * sizeof(float)) == 0);

        Sinogram s(1 + rng() % 9, 1 + rng() % 3, 1 + rng() % 17,
                   rep % 2 ? SinoKind::counts : SinoKind::log_normalized);
        for (float& x : s.data) x = u(rng);
        write_container(tmp_path("rt_sino.sct"), s);
        Sinogram s2 = read_sinogram(tmp_path("rt_sino.sct"));
        CHECK(s2.kind == s.kind);
        CHECK(std::memcmp(s2.data.data(), s.data.data(),
                          s.data.size() * sizeof(float)) == 0);

        WeightMap w(1 + rng() % 9, 1, 1 + rng() % 17);
        for (float& x : w.data) x = std::abs(u(rng));
        write_container(tmp_path("rt_w.sct"), w);
        WeightMap w2 = read_weights(tmp_path("rt_w.sct"));
        CHECK(std::memcmp(w2.data.data(), w.data.data(),
                          w.data.size() * sizeof(float)) == 0);
    }
}

TEST_CASE("unknown header keys survive the round trip in meta") {
    Volume v(1, 1, 2, 2);
    std::string p = tmp_path("meta.sct");
    write_container(p, v, {{"experiment", "run-7"}, {"note", "x=1"}});
    auto [payload, meta] = read_container(p);
    CHECK(meta.at("experiment") == "run-7");
    CHECK(meta.at("note") == "x=1");
}

TEST_CASE("distinct parse errors") {
    SUBCASE("bad magic") {
        std::string p = tmp_path("badmagic.sct");
        std::ofstream(p, std::ios::binary) << "SCT";
        try {
            read_container(p);
            FAIL("expected throw");
        } catch (const ContainerParseError& e) {
            CHECK(e.code == ContainerParseError::Code::bad_magic);
        }
    }
    SUBCASE("length mismatch") {
        std::string p = tmp_path("short.sct");
        std::ofstream(p, std::ios::binary)
            << "SCT1\nkind=volume\ndims=1,1,2,2\ndtype=f32le\n---\nxx";
        try {
            read_container(p);
            FAIL("expected throw");
        } catch (const ContainerParseError& e) {
            CHECK(e.code == ContainerParseError::Code::length_mismatch);
        }
    }
    SUBCASE("trailing bytes also count as length mismatch") {
        Volume v(1, 1, 2, 2);
        std::string p = tmp_path("long.sct");
        write_container(p, v);
        std::ofstream(p, std::ios::binary | std::ios::app) << "extra";
        try {
            read_container(p);
            FAIL("expected throw");
        } catch (const ContainerParseError& e) {
            CHECK(e.code == ContainerParseError::Code::length_mismatch);
        }
    }
    SUBCASE("malformed header") {
        std::string p = tmp_path("malformed.sct");
        std::ofstream(p, std::ios::binary)
            << "SCT1\nkind volume\n---\n";
        try {
            read_container(p);
            FAIL("expected throw");
        } catch (const ContainerParseError& e) {
            CHECK(e.code == ContainerParseError::Code::malformed_header);
        }
    }
    SUBCASE("missing file is an i/o error") {
        CHECK_THROWS_AS(read_container(tmp_path("does_not_exist.sct")), IoError);
    }
}

TEST_CASE("non-finite data rejected before writing") {
    Volume v(1, 1, 1, 2);
    v.data = {1.0f, std::numeric_limits<float>::quiet_NaN()};
    try {
        write_container(tmp_path("nan.sct"), v);
        FAIL("expected throw");
    } catch (const ContainerParseError& e) {
        CHECK(e.code == ContainerParseError::Code::non_finite);
    }
}

TEST_CASE("pgm rendering") {
    SUBCASE("default window maps endpoints to 0 and 255") {
        float s[2] = {0.0f, 1.0f};
        std::string p = tmp_path("a.pgm");
        render_pgm(s, 1, 2, p);
        std::string bytes = slurp(p);
        CHECK(bytes.substr(0, 3) == "P5\n");
        REQUIRE(bytes.size() >= 2);
        CHECK(static_cast<unsigned char>(bytes[bytes.size() - 2]) == 0);
        CHECK(static_cast<unsigned char>(bytes[bytes.size() - 1]) == 255);
    }
    SUBCASE("constant slice maps to 0") {
        float s[2] = {5.0f, 5.0f};
        std::string p = tmp_path("b.pgm");
        render_pgm(s, 1, 2, p);
        std::string bytes = slurp(p);
        CHECK(static_cast<unsigned char>(bytes[bytes.size() - 2]) == 0);
        CHECK(static_cast<unsigned char>(bytes[bytes.size() - 1]) == 0);
    }
    SUBCASE("explicit window (0,1) on [0, 0.5, 1] gives [0, 128, 255]") {
        float s[3] = {0.0f, 0.5f, 1.0f};
        std::string p = tmp_path("c.pgm");
        render_pgm(s, 1, 3, p, std::make_pair(0.0, 1.0));
        std::string bytes = slurp(p);
        CHECK(static_cast<unsigned char>(bytes[bytes.size() - 3]) == 0);
        CHECK(static_cast<unsigned char>(bytes[bytes.size() - 2]) == 128);
        CHECK(static_cast<unsigned char>(bytes[bytes.size() - 1]) == 255);
    }
    SUBCASE("affine rescaling of slice and window leaves pixels unchanged") {
        std::mt19937 rng(1);
        std::uniform_real_distribution<float> u(-2.0f, 3.0f);
        std::vector<float> s(64);
        for (float& x : s) x = u(rng);
        std::vector<float> s2(64);
        for (size_t i = 0; i < 64; ++i) s2[i] = 4.0f * s[i] - 7.0f;
        render_pgm(s.data(), 8, 8, tmp_path("d1.pgm"),
                   std::make_pair(-2.0, 3.0));
        render_pgm(s2.data(), 8, 8, tmp_path("d2.pgm"),
                   std::make_pair(4.0 * -2.0 - 7.0, 4.0 * 3.0 - 7.0));
        CHECK(slurp(tmp_path("d1.pgm")) == slurp(tmp_path("d2.pgm")));
    }
}
