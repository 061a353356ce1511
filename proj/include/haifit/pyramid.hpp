#pragma once

#include <string>
#include <vector>

#include "haifit/core.hpp"
#include "haifit/encoder.hpp"

namespace haifit {

/// Cross-level skip connection: X + X * X_prev, or X when disabled.
/// `prev_residual` must already be at X's spatial size.
template <typename Scalar>
Var<Scalar> cscm_fuse(const Var<Scalar>& features, const Var<Scalar>& prev_residual, bool enabled) {
  if (!enabled) return features;
  require_same_shape(features.shape(), prev_residual.shape(), "cscm_fuse");
  return ops::add(features, ops::mul(features, prev_residual));
}

/// Generator G_n: a residual block of (3 + n) convolutions at m/4 followed
/// by a two-step upsampling head to a 3-channel tanh image at m.
template <typename Scalar>
class GeneratorLevel {
 public:
  struct Output {
    Var<Scalar> image;
    Var<Scalar> last_residual;
  };

  GeneratorLevel() = default;
  GeneratorLevel(int level, Rng& rng) : level_(level) {
    for (int i = 0; i < residual_depth(); ++i) {
      residual_.emplace_back(kFeatureChannels, kFeatureChannels, 3, 1, 1, rng);
    }
    head_.emplace_back(kFeatureChannels, 128, 3, 1, 1, rng);
    head_.emplace_back(128, 64, 3, 1, 1, rng);
    head_.emplace_back(64, 3, 3, 1, 1, rng);
  }

  int level() const { return level_; }
  int residual_depth() const { return 3 + level_; }

  /// `prev_image` is the coarser level's output (undefined at level 1); it is
  /// nearest-upsampled and added to the head's pre-activation.
  Output operator()(const Var<Scalar>& fused, const Var<Scalar>& prev_image) const {
    if (level_ > 1 && !prev_image.defined()) {
      throw Error(ErrorKind::Protocol, "level " + std::to_string(level_) + " needs the previous level's image");
    }
    if (level_ == 1 && prev_image.defined()) throw Error(ErrorKind::Protocol, "level 1 takes no previous image");
    if (fused.shape().c != kFeatureChannels) {
      throw Error(ErrorKind::ChannelCount, "generator input needs 256 channels, got " + std::to_string(fused.shape().c));
    }
    const auto slope = Scalar(kLeakySlope);
    Var<Scalar> h = fused;
    for (std::size_t i = 0; i < residual_.size(); ++i) {
      h = ops::instance_norm(residual_[i](h));
      if (i + 1 < residual_.size()) h = ops::leaky_relu(h, slope);
    }
    Var<Scalar> residual = ops::add(fused, h);

    Var<Scalar> y = ops::leaky_relu(ops::instance_norm(head_[0](ops::upsample_nearest(residual, 2))), slope);
    y = ops::leaky_relu(ops::instance_norm(head_[1](ops::upsample_nearest(y, 2))), slope);
    y = head_[2](y);
    if (prev_image.defined()) {
      const Index factor = y.shape().h / prev_image.shape().h;
      auto up = ops::upsample_nearest(prev_image, factor);
      require_same_shape(up.shape(), y.shape(), "generator residual path");
      y = ops::add(y, up);
    }
    return {ops::tanh(y), residual};
  }

  void collect(const std::string& prefix, ParamList<Scalar>& out) const {
    for (std::size_t i = 0; i < residual_.size(); ++i) residual_[i].collect(prefix + ".res" + std::to_string(i), out);
    for (std::size_t i = 0; i < head_.size(); ++i) head_[i].collect(prefix + ".head" + std::to_string(i), out);
  }

 private:
  int level_ = 1;
  std::vector<Conv2d<Scalar>> residual_;
  std::vector<Conv2d<Scalar>> head_;
};

/// Pyramid of (encoder, generator) pairs, one per active schedule level.
template <typename Scalar>
class PyramidGenerator {
 public:
  struct Trace {
    std::vector<Var<Scalar>> images;
    std::vector<Var<Scalar>> encoded;
    std::vector<Var<Scalar>> residuals;
  };

  PyramidGenerator() = default;
  PyramidGenerator(ResolutionSchedule schedule, bool use_afrm, bool use_cscm)
      : schedule_(std::move(schedule)), use_afrm_(use_afrm), use_cscm_(use_cscm) {}

  const ResolutionSchedule& schedule() const { return schedule_; }
  int level_count() const { return static_cast<int>(levels_.size()); }
  bool use_afrm() const { return use_afrm_; }
  bool use_cscm() const { return use_cscm_; }
  const Mffe<Scalar>& encoder(int level) const { return levels_.at(level - 1).encoder; }
  Mffe<Scalar>& encoder(int level) { return levels_.at(level - 1).encoder; }
  const GeneratorLevel<Scalar>& generator(int level) const { return levels_.at(level - 1).generator; }

  /// Appends the next level with freshly initialized weights.
  void grow(Rng& rng) {
    if (level_count() >= static_cast<int>(schedule_.size())) {
      throw Error(ErrorKind::Growth, "generator already at finest resolution " + std::to_string(schedule_.finest()));
    }
    const int n = level_count() + 1;
    Mffe<Scalar> enc(rng);
    GeneratorLevel<Scalar> gen(n, rng);
    levels_.push_back({std::move(enc), std::move(gen)});
  }

  /// Runs levels 1..active_levels on a finest-resolution sketch batch.
  Trace trace(const Tensor<Scalar>& sketch, int active_levels) const {
    if (active_levels < 1 || active_levels > level_count()) {
      throw Error(ErrorKind::Protocol, "active_levels " + std::to_string(active_levels) + " outside 1.." +
                                           std::to_string(level_count()));
    }
    auto pyramid = downsample_pyramid(FeatureMap<Scalar>{sketch, ValueRange::Unit}, schedule_);
    Trace t;
    Var<Scalar> prev_image;
    Var<Scalar> prev_residual;
    for (int n = 1; n <= active_levels; ++n) {
      const auto& lv = levels_[n - 1];
      Var<Scalar> sketch_n(pyramid[n - 1].data);
      Var<Scalar> x = lv.encoder(sketch_n, prev_image, use_afrm_);
      t.encoded.push_back(x);
      if (n > 1) {
        auto up = ops::upsample_nearest(prev_residual, x.shape().h / prev_residual.shape().h);
        x = cscm_fuse(x, up, use_cscm_);
      }
      auto out = lv.generator(x, prev_image);
      t.images.push_back(out.image);
      t.residuals.push_back(out.last_residual);
      prev_image = out.image;
      prev_residual = out.last_residual;
    }
    return t;
  }

  std::vector<Var<Scalar>> forward_full(const Tensor<Scalar>& sketch, int active_levels) const {
    return trace(sketch, active_levels).images;
  }

  void collect(ParamList<Scalar>& out) const {
    for (int n = 1; n <= level_count(); ++n) collect_level(n, out);
  }
  void collect_level(int n, ParamList<Scalar>& out) const {
    levels_[n - 1].encoder.collect("enc.L" + std::to_string(n), out);
    levels_[n - 1].generator.collect("gen.L" + std::to_string(n), out);
  }

 private:
  struct Level {
    Mffe<Scalar> encoder;
    GeneratorLevel<Scalar> generator;
  };

  ResolutionSchedule schedule_;
  bool use_afrm_ = true;
  bool use_cscm_ = true;
  std::vector<Level> levels_;
};

}  // namespace haifit
