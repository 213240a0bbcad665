// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "qdr/errors.hpp"
#include "qdr/image.hpp"
#include "qdr/png_io.hpp"
#include "qdr/rng.hpp"

using namespace qdr;

namespace {
Image random_image(std::uint64_t seed, int h, int w, int c = 3) {
    Rng rng(seed);
    Image img(h, w, c);
    for (float& v : img.data) v = static_cast<float>(rng.uniform());
    return img;
}
} // namespace

TEST_SUITE("image") {
    TEST_CASE("resize_area identity when grids align") {
        const Image img = random_image(1, 16, 16);
        const Image out = resize_area(img, 16, 16);
        for (std::size_t i = 0; i < img.data.size(); ++i)
            CHECK(out.data[i] == doctest::Approx(img.data[i]).epsilon(1e-6));
    }

    TEST_CASE("resize_area preserves a constant image") {
        Image img(10, 14, 3, 0.37f);
        const Image out = resize_area(img, 4, 4);
        for (float v : out.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-6));
    }

    TEST_CASE("resize_area box average on 2x2 -> 1x1") {
        Image img(2, 2, 1);
        img.at(0, 0, 0) = 0.0f;
        img.at(0, 1, 0) = 1.0f;
        img.at(1, 0, 0) = 1.0f;
        img.at(1, 1, 0) = 0.0f;
        const Image out = resize_area(img, 1, 1);
        CHECK(out.at(0, 0, 0) == doctest::Approx(0.5));
    }

    TEST_CASE("crop bounds check") {
        const Image img = random_image(2, 8, 8);
        CHECK_THROWS_AS(crop(img, 4, 4, 8, 2), InvalidInput);
        const Image c = crop(img, 2, 3, 4, 5);
        CHECK(c.height == 4);
        CHECK(c.width == 5);
        CHECK(c.at(0, 0, 0) == img.at(2, 3, 0));
        CHECK(c.at(3, 4, 2) == img.at(5, 7, 2));
    }

    TEST_CASE("luma averages channels") {
        Image img(1, 1, 3);
        img.at(0, 0, 0) = 0.3f;
        img.at(0, 0, 1) = 0.6f;
        img.at(0, 0, 2) = 0.9f;
        CHECK(luma(img).at(0, 0, 0) == doctest::Approx(0.6).epsilon(1e-6));
    }

    TEST_CASE("png round trip is exact on quantized values") {
        Image img = random_image(3, 12, 9);
        for (float& v : img.data) v = std::floor(v * 255.0f + 0.5f) / 255.0f;
        const std::string path =
            (std::filesystem::temp_directory_path() / "qdr_test_rt.png").string();
        write_png(path, img);
        const Image back = read_png(path);
        REQUIRE(back.same_shape(img));
        for (std::size_t i = 0; i < img.data.size(); ++i)
            CHECK(back.data[i] == doctest::Approx(img.data[i]).epsilon(1e-6));
        std::remove(path.c_str());
    }

    TEST_CASE("png gray round trip") {
        Image img(5, 7, 1);
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 7; ++x) img.at(y, x, 0) = (y * 7 + x) % 2 ? 1.0f : 0.0f;
        const std::string path =
            (std::filesystem::temp_directory_path() / "qdr_test_gray.png").string();
        write_png(path, img);
        const Image back = read_png(path);
        REQUIRE(back.channels == 1);
        for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(back.data[i] == img.data[i]);
        std::remove(path.c_str());
    }
}
