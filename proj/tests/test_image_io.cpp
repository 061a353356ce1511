#include <doctest.h>

#include <png.h>

#include <cstring>

#include "haifit/image_io.hpp"
#include "support.hpp"

using namespace haifit;

namespace {

Image8 pattern(int w, int h) {
  Image8 img{w, h, 3, {}};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) img.pixels.push_back(std::uint8_t((x * 31 + y * 17 + c * 80) % 256));
    }
  }
  return img;
}

/// Encodes raw pixels in any simplified-API format.
std::string encode_raw(const std::vector<std::uint8_t>& pixels, int w, int h, png_uint_32 format) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = png_uint_32(w);
  image.height = png_uint_32(h);
  image.format = format;
  png_alloc_size_t size = 0;
  png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr);
  std::string out(size, '\0');
  png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr);
  out.resize(size);
  return out;
}

}  // namespace

TEST_CASE("png round trip and deterministic encoding") {
  const Image8 img = pattern(13, 7);
  const std::string png = encode_png(img);
  CHECK(decode_png(png) == img);
  CHECK(encode_png(decode_png(png)) == png);
  testing::TempDir dir;
  write_png(dir / "x.png", img);
  CHECK(read_png(dir / "x.png") == img);
}

TEST_CASE("transparency is composited over white and gray expands to rgb") {
  // Two pixels: opaque red, fully transparent black.
  const std::string rgba = encode_raw({255, 0, 0, 255, 0, 0, 0, 0}, 2, 1, PNG_FORMAT_RGBA);
  const Image8 img = decode_png(rgba);
  CHECK(img.channels == 3);
  CHECK(img.at(0, 0, 0) == 255);
  CHECK(img.at(0, 0, 1) == 0);
  CHECK(img.at(1, 0, 0) == 255);
  CHECK(img.at(1, 0, 2) == 255);
  const Image8 gray = decode_png(encode_raw({0, 128, 255}, 3, 1, PNG_FORMAT_GRAY));
  CHECK(gray.at(1, 0, 0) == 128);
  CHECK(gray.at(1, 0, 2) == 128);
}

TEST_CASE("undecodable bytes are a format error") {
  try {
    decode_png("abc");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Format);
  }
  const std::string png = encode_png(pattern(4, 4));
  CHECK_THROWS_AS(decode_png(png.substr(0, png.size() / 2)), Error);
}

TEST_CASE("area resampling averages covered pixels") {
  Image8 img{4, 2, 3, {}};
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 4; ++x) {
      for (int c = 0; c < 3; ++c) img.pixels.push_back(std::uint8_t(10 * x + 100 * y));
    }
  }
  const Image8 half = resample_area(img, 2, 1);
  CHECK(half.at(0, 0, 0) == 55);   // mean of 0, 10, 100, 110
  CHECK(half.at(1, 0, 1) == 75);   // mean of 20, 30, 120, 130
  // 3 -> 2 columns: output 0 covers column 0 fully and half of column 1.
  Image8 row{3, 1, 3, {0, 0, 0, 90, 90, 90, 210, 210, 210}};
  const Image8 two = resample_area(row, 2, 1);
  CHECK(two.at(0, 0, 0) == 30);    // (0 + 0.5 * 90) / 1.5
  CHECK(two.at(1, 0, 0) == 170);   // (0.5 * 90 + 210) / 1.5
  CHECK(resample_area(img, 4, 2) == img);
}

TEST_CASE("letterbox keeps aspect ratio on white") {
  Image8 wide{8, 4, 3, std::vector<std::uint8_t>(8 * 4 * 3, 0)};
  const Image8 boxed = letterbox(wide, 4);
  CHECK(boxed.width == 4);
  CHECK(boxed.height == 4);
  CHECK(boxed.at(0, 0, 0) == 255);
  CHECK(boxed.at(3, 0, 2) == 255);
  CHECK(boxed.at(0, 1, 0) == 0);
  CHECK(boxed.at(3, 2, 0) == 0);
  CHECK(boxed.at(2, 3, 1) == 255);
  const Image8 sq = pattern(6, 6);
  CHECK(letterbox(sq, 6) == sq);
}
