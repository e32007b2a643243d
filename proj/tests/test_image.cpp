#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "stainforge/errors.hpp"
#include "stainforge/image.hpp"
#include "stainforge/rng.hpp"

using namespace stainforge;
namespace fs = std::filesystem;

namespace {

RgbPatch random_patch(int w, int h, Rng& rng, double lo = 0.0, double hi = 1.0) {
    RgbPatch p(w, h);
    for (auto& v : p.data) v = rng.uniform(lo, hi);
    return p;
}

} // namespace

TEST_CASE("rgb_to_od known values") {
    RgbPatch p(3, 1);
    p.px(0, 0)[0] = p.px(0, 0)[1] = p.px(0, 0)[2] = 1.0;  // white
    p.px(1, 0)[0] = p.px(1, 0)[1] = p.px(1, 0)[2] = 0.1;
    p.px(2, 0)[0] = p.px(2, 0)[1] = p.px(2, 0)[2] = 0.0;  // floored at epsilon
    const OdImage od = rgb_to_od(p);
    for (int c = 0; c < 3; ++c) {
        CHECK(od.px(0, 0)[c] == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(od.px(1, 0)[c] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(od.px(2, 0)[c] == doctest::Approx(6.0).epsilon(1e-12)); // -log10(1e-6)
    }
}

TEST_CASE("od_to_rgb known values") {
    OdImage od(2, 1);
    od.px(0, 0)[0] = od.px(0, 0)[1] = od.px(0, 0)[2] = 0.0;
    od.px(1, 0)[0] = 1.0;
    od.px(1, 0)[1] = 0.5;
    od.px(1, 0)[2] = 2.0;
    const RgbPatch p = od_to_rgb(od);
    for (int c = 0; c < 3; ++c) CHECK(p.px(0, 0)[c] == doctest::Approx(1.0));
    CHECK(p.px(1, 0)[0] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(p.px(1, 0)[1] == doctest::Approx(std::pow(10.0, -0.5)).epsilon(1e-12));
    CHECK(p.px(1, 0)[2] == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("od round trip is the identity above epsilon") {
    Rng rng(7);
    const RgbPatch p = random_patch(17, 13, rng, 0.01, 1.0);
    const RgbPatch back = od_to_rgb(rgb_to_od(p));
    for (int64_t i = 0; i < p.pixels() * 3; ++i)
        CHECK(std::abs(back.data[i] - p.data[i]) < 1e-6);
}

TEST_CASE("rgb_to_od is monotonically decreasing and bounded") {
    const OdConfig cfg;
    Rng rng(11);
    double prev_od = 1e9;
    for (double v = 0.0; v <= 1.0; v += 0.01) {
        RgbPatch p(1, 1);
        p.data = {v, v, v};
        const OdImage od = rgb_to_od(p, cfg);
        CHECK(od.data[0] <= prev_od);
        CHECK(od.data[0] >= 0.0);
        CHECK(od.data[0] <= cfg.od_cap);
        prev_od = od.data[0];
    }
    // random patches stay in range
    for (int t = 0; t < 5; ++t) {
        const OdImage od = rgb_to_od(random_patch(9, 9, rng), cfg);
        for (double v : od.data) {
            CHECK(v >= 0.0);
            CHECK(v <= cfg.od_cap);
        }
    }
}

TEST_CASE("OdConfig validation") {
    OdConfig bad;
    bad.epsilon = 0.0;
    CHECK_THROWS_AS(rgb_to_od(RgbPatch(1, 1), bad), InvalidConfig);
    bad.epsilon = 2.0; // above background
    CHECK_THROWS_AS(rgb_to_od(RgbPatch(1, 1), bad), InvalidConfig);
    const OdConfig derived = OdConfig::with_epsilon(1.0, 1e-6);
    CHECK(derived.od_cap == doctest::Approx(6.0));
}

TEST_CASE("8-bit conversion uses round-half-up and is lossless for u8 data") {
    RgbPatch p(2, 1);
    p.data = {0.5 / 255.0, 128.49 / 255.0, 128.5 / 255.0, 0.0, 1.0, 254.5 / 255.0};
    const Image8 img = to_image8(p);
    CHECK(img.data[0] == 1);   // 0.5 rounds up
    CHECK(img.data[1] == 128);
    CHECK(img.data[2] == 129); // 128.5 rounds up
    CHECK(img.data[3] == 0);
    CHECK(img.data[4] == 255);
    CHECK(img.data[5] == 255); // 254.5 rounds up

    Rng rng(3);
    Image8 src(5, 4);
    for (auto& b : src.data) b = static_cast<uint8_t>(rng.below(256));
    const Image8 round = to_image8(to_patch(src));
    CHECK(round.data == src.data);
}

TEST_CASE("bilinear resize preserves constants and dimensions") {
    RgbPatch p(10, 6);
    for (auto& v : p.data) v = 0.37;
    const RgbPatch r = resize_bilinear(p, 7, 9);
    CHECK(r.width == 7);
    CHECK(r.height == 9);
    for (double v : r.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("png and ppm io round trips; png bytes are deterministic") {
    Rng rng(5);
    Image8 img(19, 11);
    for (auto& b : img.data) b = static_cast<uint8_t>(rng.below(256));

    const fs::path dir = fs::temp_directory_path() / "stainforge_test_image";
    fs::create_directories(dir);
    const std::string png1 = (dir / "a.png").string();
    const std::string png2 = (dir / "b.png").string();
    const std::string ppm = (dir / "a.ppm").string();

    write_image(png1, img);
    write_image(png2, img);
    write_image(ppm, img);

    const Image8 back_png = read_image(png1);
    CHECK(back_png.width == img.width);
    CHECK(back_png.height == img.height);
    CHECK(back_png.data == img.data);

    const Image8 back_ppm = read_image(ppm);
    CHECK(back_ppm.data == img.data);

    std::ifstream f1(png1, std::ios::binary), f2(png2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);

    CHECK_THROWS_AS(read_image((dir / "missing.png").string()), IoError);
    fs::remove_all(dir);
}

TEST_CASE("patch validation catches bad values") {
    RgbPatch p(2, 2);
    p.validate();
    p.data[3] = 1.5;
    CHECK_THROWS_AS(p.validate(), InvalidConfig);
    RgbPatch empty;
    CHECK_THROWS_AS(empty.validate(), InvalidConfig);
}
