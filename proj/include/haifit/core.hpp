#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "haifit/ops.hpp"

namespace haifit {

enum class ValueRange { Unit, Unbounded };

/// 4-D array plus the value interval it promises. Unit means [-1, 1].
template <typename Scalar>
struct FeatureMap {
  Tensor<Scalar> data;
  ValueRange range = ValueRange::Unbounded;

  const Shape& shape() const { return data.shape(); }

  void validate() const {
    const Shape& s = data.shape();
    if (s.n < 1 || s.h < 1 || s.w < 1) throw Error(ErrorKind::Shape, "feature map has empty extent " + to_string(s));
    if (!data.all_finite()) throw Error(ErrorKind::Numerical, "feature map holds non-finite values");
    if (range == ValueRange::Unit) {
      constexpr double tol = 1e-6;
      if (double(data.vec().minCoeff()) < -1.0 - tol || double(data.vec().maxCoeff()) > 1.0 + tol) {
        throw Error(ErrorKind::Domain, "feature map leaves [-1,1]");
      }
    }
  }
};

/// Square resolutions, each double the previous.
class ResolutionSchedule {
 public:
  ResolutionSchedule() = default;
  explicit ResolutionSchedule(std::vector<int> levels);

  const std::vector<int>& levels() const { return levels_; }
  std::size_t size() const { return levels_.size(); }
  int operator[](std::size_t i) const { return levels_.at(i); }
  int coarsest() const { return levels_.front(); }
  int finest() const { return levels_.back(); }
  /// One more stage at twice the finest resolution.
  ResolutionSchedule grown() const;
  std::string to_string() const;

  friend bool operator==(const ResolutionSchedule&, const ResolutionSchedule&) = default;

 private:
  std::vector<int> levels_;
};

ResolutionSchedule make_schedule(int coarsest, int finest);
/// Parses "32,64,128".
ResolutionSchedule parse_schedule(const std::string& text);

struct TrainConfig {
  double lambda_l1 = 1.5;
  double lambda_adv = 10.0;
  double lambda_style = 250.0;
  double lambda_per = 0.1;
  double lr_generator = 1e-4;
  double lr_discriminator = 5e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int batch_size = 8;
  int k_alternation = 1;
  int decay_period_epochs = 100;
  double decay_factor = 0.5;
  int early_stop_patience = 10;
  bool early_stopping = true;
  int epochs_per_stage = 10;
  int max_epochs = 200;
  bool use_afrm = true;
  bool use_cscm = true;
  /// Style loss on extractor features instead of raw images.
  bool style_on_features = false;
  /// Style and perceptual terms on every active level, not only the finest.
  bool perceptual_all_levels = false;
  int validation_count = 16;
  std::string extractor_path;
  ResolutionSchedule schedule = ResolutionSchedule({32, 64, 128, 256});
  std::uint64_t seed = 0;

  void validate() const;
};

std::string to_json_text(const TrainConfig& config);
TrainConfig train_config_from_json_text(const std::string& text);

/// 8-bit interleaved image as decoded from disk.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(int x, int y, int c) { return pixels[(std::size_t(y) * width + x) * channels + c]; }
  std::uint8_t at(int x, int y, int c) const { return pixels[(std::size_t(y) * width + x) * channels + c]; }

  friend bool operator==(const Image8&, const Image8&) = default;
};

/// v -> v / 127.5 - 1, as a (1, 3, h, w) map.
template <typename Scalar>
FeatureMap<Scalar> normalize_image(const Image8& raw) {
  if (raw.channels != 3) {
    throw Error(ErrorKind::ChannelCount, "expected 3 channels, got " + std::to_string(raw.channels));
  }
  Tensor<Scalar> t(Shape{1, 3, raw.height, raw.width});
  for (int y = 0; y < raw.height; ++y) {
    for (int x = 0; x < raw.width; ++x) {
      for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = Scalar(raw.at(x, y, c)) / Scalar(127.5) - Scalar(1);
    }
  }
  return {std::move(t), ValueRange::Unit};
}

/// Inverse of normalize_image for sample `b`, rounding to nearest and clamping.
template <typename Scalar>
Image8 denormalize_image(const Tensor<Scalar>& t, Index b = 0) {
  if (t.c() != 3) throw Error(ErrorKind::ChannelCount, "expected 3 channels, got " + std::to_string(t.c()));
  Image8 img{static_cast<int>(t.w()), static_cast<int>(t.h()), 3, {}};
  img.pixels.resize(std::size_t(t.h()) * t.w() * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = (double(t.at(b, c, y, x)) + 1.0) * 127.5;
        img.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return img;
}

/// Area-averaged pyramid, coarsest first; the last entry is `image` itself.
template <typename Scalar>
std::vector<FeatureMap<Scalar>> downsample_pyramid(const FeatureMap<Scalar>& image, const ResolutionSchedule& schedule) {
  const Shape s = image.shape();
  if (s.h != schedule.finest() || s.w != schedule.finest()) {
    throw Error(ErrorKind::Shape, "image " + to_string(s) + " does not match finest resolution " +
                                      std::to_string(schedule.finest()));
  }
  NoGradGuard no_grad;
  std::vector<FeatureMap<Scalar>> out;
  Var<Scalar> full(image.data);
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    const Index factor = schedule.finest() / schedule[i];
    out.push_back({ops::avg_pool(full, factor).value(), image.range});
  }
  return out;
}

}  // namespace haifit
