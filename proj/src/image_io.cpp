#include "haifit/image_io.hpp"

#include <png.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstring>

#include "haifit/archive.hpp"

namespace haifit {

Image8 decode_png(std::string_view bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(ErrorKind::Format, std::string("cannot decode PNG: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  Image8 out{static_cast<int>(image.width), static_cast<int>(image.height), 3, {}};
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  png_color white{255, 255, 255};
  if (!png_image_finish_read(&image, &white, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorKind::Format, std::string("cannot decode PNG: ") + image.message);
  }
  return out;
}

std::string encode_png(const Image8& img) {
  if (img.channels != 3) throw Error(ErrorKind::ChannelCount, "encode_png expects RGB");
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
    throw Error(ErrorKind::Format, std::string("cannot encode PNG: ") + image.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
    throw Error(ErrorKind::Format, std::string("cannot encode PNG: ") + image.message);
  }
  out.resize(size);
  return out;
}

Image8 read_png(const std::filesystem::path& path) {
  try {
    return decode_png(read_file(path));
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void write_png(const std::filesystem::path& path, const Image8& image) { write_file_atomic(path, encode_png(image)); }

namespace {

/// (dst x src) matrix of coverage weights for a 1-D box resample.
Eigen::MatrixXd box_weights(int src, int dst) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(dst, src);
  const double scale = double(src) / double(dst);
  for (int o = 0; o < dst; ++o) {
    const double lo = o * scale;
    const double hi = (o + 1) * scale;
    for (int i = static_cast<int>(std::floor(lo)); i < std::min(src, static_cast<int>(std::ceil(hi))); ++i) {
      const double overlap = std::min(hi, double(i + 1)) - std::max(lo, double(i));
      if (overlap > 0) w(o, i) = overlap;
    }
    w.row(o) /= w.row(o).sum();
  }
  return w;
}

}  // namespace

Image8 resample_area(const Image8& image, int width, int height) {
  if (width <= 0 || height <= 0) throw Error(ErrorKind::Shape, "resample target must be positive");
  if (image.width == width && image.height == height) return image;
  const Eigen::MatrixXd wy = box_weights(image.height, height);
  const Eigen::MatrixXd wx = box_weights(image.width, width);
  Image8 out{width, height, image.channels, {}};
  out.pixels.resize(std::size_t(width) * height * image.channels);
  Eigen::MatrixXd plane(image.height, image.width);
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) plane(y, x) = image.at(x, y, c);
    }
    const Eigen::MatrixXd res = wy * plane * wx.transpose();
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(res(y, x), 0.0, 255.0)));
      }
    }
  }
  return out;
}

Image8 letterbox(const Image8& image, int size) {
  if (image.width == size && image.height == size) return image;
  const double scale = double(size) / double(std::max(image.width, image.height));
  const int w = std::max(1, static_cast<int>(std::lround(image.width * scale)));
  const int h = std::max(1, static_cast<int>(std::lround(image.height * scale)));
  const Image8 scaled = resample_area(image, w, h);
  Image8 out{size, size, image.channels, std::vector<std::uint8_t>(std::size_t(size) * size * image.channels, 255)};
  const int ox = (size - w) / 2;
  const int oy = (size - h) / 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < image.channels; ++c) out.at(ox + x, oy + y, c) = scaled.at(x, y, c);
    }
  }
  return out;
}

}  // namespace haifit
