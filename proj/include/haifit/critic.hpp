#pragma once

#include <string>
#include <vector>

#include "haifit/core.hpp"
#include "haifit/nn.hpp"

namespace haifit {

/// Patch critic for one pyramid level: four stride-2 4x4 convolutions
/// (64, 128, 256, 512 channels), instance norm after all but the first,
/// then a 3x3 convolution to one channel and a sigmoid.
template <typename Scalar>
class PatchDiscriminator {
 public:
  PatchDiscriminator() = default;
  PatchDiscriminator(int level, int resolution, Rng& rng) : level_(level), resolution_(resolution) {
    const Index widths[] = {3, 64, 128, 256, 512};
    for (int i = 0; i < 4; ++i) convs_.emplace_back(widths[i], widths[i + 1], 4, 2, 1, rng);
    out_ = Conv2d<Scalar>(512, 1, 3, 1, 1, rng);
  }

  int level() const { return level_; }
  int resolution() const { return resolution_; }

  Var<Scalar> operator()(const Var<Scalar>& image) const {
    const Shape s = image.shape();
    if (s.c != 3 || s.h != resolution_ || s.w != resolution_) {
      throw Error(ErrorKind::Shape, "critic " + std::to_string(level_) + " expects 3x" + std::to_string(resolution_) +
                                        "^2 images, got " + to_string(s));
    }
    Var<Scalar> h = image;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      h = convs_[i](h);
      if (i > 0) h = ops::instance_norm(h);
      h = ops::leaky_relu(h, Scalar(0.2));
    }
    return ops::sigmoid(out_(h));
  }

  void collect(const std::string& prefix, ParamList<Scalar>& out) const {
    for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i].collect(prefix + ".conv" + std::to_string(i), out);
    out_.collect(prefix + ".out", out);
  }

 private:
  int level_ = 1;
  int resolution_ = 0;
  std::vector<Conv2d<Scalar>> convs_;
  Conv2d<Scalar> out_;
};

/// One critic per active level.
template <typename Scalar>
class Critics {
 public:
  Critics() = default;
  explicit Critics(ResolutionSchedule schedule) : schedule_(std::move(schedule)) {}

  int count() const { return static_cast<int>(critics_.size()); }
  const PatchDiscriminator<Scalar>& at(int level) const { return critics_.at(level - 1); }

  void grow(Rng& rng) {
    if (count() >= static_cast<int>(schedule_.size())) {
      throw Error(ErrorKind::Growth, "critics already cover the finest resolution");
    }
    const int n = count() + 1;
    critics_.emplace_back(n, schedule_[n - 1], rng);
  }

  Var<Scalar> discriminate(const Var<Scalar>& image, int level) const {
    if (level < 1 || level > count()) throw Error(ErrorKind::Protocol, "no critic for level " + std::to_string(level));
    return critics_[level - 1](image);
  }

  void collect(ParamList<Scalar>& out) const {
    for (int n = 1; n <= count(); ++n) critics_[n - 1].collect("critic.L" + std::to_string(n), out);
  }

 private:
  ResolutionSchedule schedule_;
  std::vector<PatchDiscriminator<Scalar>> critics_;
};

}  // namespace haifit
