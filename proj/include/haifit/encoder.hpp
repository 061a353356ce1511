#pragma once

#include <string>
#include <vector>

#include "haifit/nn.hpp"

namespace haifit {

inline constexpr Index kFeatureChannels = 256;
inline constexpr Index kIntentGrid = 4;
inline constexpr Index kIntentParts = 4;
inline constexpr Index kIntentPartDim = kFeatureChannels * kIntentGrid * kIntentGrid / kIntentParts;  // 1024
inline constexpr double kLeakySlope = 0.2;

/// Four (n, 1024, 1, 1) steps cut from a (n, 256, 4, 4) map.
template <typename Scalar>
struct IntentSequence {
  std::vector<Var<Scalar>> parts;
};

/// Level 1 passes the sketch through; later levels add the coarser
/// generated image, nearest-upsampled to the sketch resolution.
/// An undefined `prev_output` means "absent".
template <typename Scalar>
Var<Scalar> level_input_fuse(const Var<Scalar>& sketch, const Var<Scalar>& prev_output) {
  if (!prev_output.defined()) return sketch;
  const Shape s = sketch.shape();
  const Shape p = prev_output.shape();
  if (p.h == 0 || s.h % p.h != 0 || s.w % p.w != 0 || s.h / p.h != s.w / p.w) {
    throw Error(ErrorKind::Shape, "cannot upsample " + to_string(p) + " onto " + to_string(s));
  }
  auto up = ops::upsample_nearest(prev_output, s.h / p.h);
  require_same_shape(up.shape(), s, "level_input_fuse");
  return ops::add(sketch, up);
}

/// Splits the flattened per-sample vector (natural NCHW order) into four
/// contiguous chunks; chunk j holds channels [64j, 64j + 64) over the 4x4 grid.
template <typename Scalar>
IntentSequence<Scalar> sequence_split(const Var<Scalar>& pooled) {
  const Shape s = pooled.shape();
  if (s.c != kFeatureChannels || s.h != kIntentGrid || s.w != kIntentGrid) {
    throw Error(ErrorKind::Shape, "sequence_split expects (n,256,4,4), got " + to_string(s));
  }
  IntentSequence<Scalar> seq;
  for (Index j = 0; j < kIntentParts; ++j) seq.parts.push_back(ops::slice_features(pooled, j * kIntentPartDim, kIntentPartDim));
  return seq;
}

/// Inverse of sequence_split.
template <typename Scalar>
Var<Scalar> sequence_assemble(const std::vector<Var<Scalar>>& parts) {
  if (parts.size() != static_cast<std::size_t>(kIntentParts)) {
    throw Error(ErrorKind::Sequence, "expected 4 parts, got " + std::to_string(parts.size()));
  }
  return ops::concat(parts, Shape{parts.front().shape().n, kFeatureChannels, kIntentGrid, kIntentGrid});
}

/// Multi-scale feature fusion encoder for one pyramid level: a shallow
/// convolution stack for contours (SCM), a bidirectional two-layer LSTM
/// over a 4-step decomposition for drawing intent (AFRM), and a learnable
/// gain zeta mixing them: x = zeta * contour + intent.
template <typename Scalar>
class Mffe {
 public:
  struct IntentOutputs {
    std::vector<Var<Scalar>> dir;
    /// Reverse-branch outputs realigned to part order.
    std::vector<Var<Scalar>> rev;
    Var<Scalar> feature;
  };

  Mffe() = default;
  explicit Mffe(Rng& rng)
      : scm_{Conv2d<Scalar>(3, 64, 3, 2, 1, rng), Conv2d<Scalar>(64, 128, 3, 2, 1, rng),
             Conv2d<Scalar>(128, kFeatureChannels, 3, 1, 1, rng)},
        dir_(kIntentPartDim, kIntentPartDim, 2, rng),
        rev_(kIntentPartDim, kIntentPartDim, 2, rng),
        reduce_(2 * kFeatureChannels, kFeatureChannels, 1, 1, 0, rng),
        zeta_(Tensor<Scalar>(Shape{1, 1, 1, 1}, Scalar(1)), true) {}

  /// SCM: (n, 3, m, m) -> (n, 256, m/4, m/4).
  Var<Scalar> contour(const Var<Scalar>& x) const {
    const Shape s = x.shape();
    if (s.c != 3) throw Error(ErrorKind::ChannelCount, "encoder input needs 3 channels, got " + std::to_string(s.c));
    if (s.h != s.w || s.h % 4 != 0 || s.h < 4 * kIntentGrid) {
      throw Error(ErrorKind::Shape, "encoder input resolution must be square, divisible by 4 and >= 16: " + to_string(s));
    }
    Var<Scalar> h = x;
    for (const auto& conv : scm_) h = ops::leaky_relu(ops::instance_norm(conv(h)), Scalar(kLeakySlope));
    return h;
  }

  /// AFRM over an already split sequence -> (n, 256, 4, 4).
  IntentOutputs intent(const IntentSequence<Scalar>& seq) const {
    if (seq.parts.size() != static_cast<std::size_t>(kIntentParts)) {
      throw Error(ErrorKind::Sequence, "expected 4 parts, got " + std::to_string(seq.parts.size()));
    }
    IntentOutputs out;
    out.dir = dir_(seq.parts);
    std::vector<Var<Scalar>> reversed(seq.parts.rbegin(), seq.parts.rend());
    auto rev_steps = rev_(reversed);
    out.rev.assign(rev_steps.rbegin(), rev_steps.rend());
    auto stacked = ops::concat(std::vector<Var<Scalar>>{sequence_assemble(out.dir), sequence_assemble(out.rev)},
                               Shape{out.dir.front().shape().n, 2 * kFeatureChannels, kIntentGrid, kIntentGrid});
    out.feature = reduce_(stacked);
    return out;
  }

  /// Full encoder pass. Without AFRM the contour feature is returned as is.
  Var<Scalar> operator()(const Var<Scalar>& sketch, const Var<Scalar>& prev_output, bool use_afrm) const {
    auto contour_feature = contour(level_input_fuse(sketch, prev_output));
    if (!use_afrm) return contour_feature;
    const Index side = contour_feature.shape().h;
    auto pooled = ops::adaptive_avg_pool(contour_feature, kIntentGrid);
    auto intent_feature = intent(sequence_split(pooled)).feature;
    return ops::add(ops::scale_by(contour_feature, zeta_), ops::upsample_nearest(intent_feature, side / kIntentGrid));
  }

  const Var<Scalar>& zeta() const { return zeta_; }
  const std::vector<Conv2d<Scalar>>& scm() const { return scm_; }

  /// Makes the reverse branch share the forward branch's parameters.
  void tie_reverse_to_forward() { rev_ = dir_; }

  void collect(const std::string& prefix, ParamList<Scalar>& out) const {
    for (std::size_t i = 0; i < scm_.size(); ++i) scm_[i].collect(prefix + ".scm" + std::to_string(i), out);
    dir_.collect(prefix + ".afrm.dir", out);
    rev_.collect(prefix + ".afrm.rev", out);
    reduce_.collect(prefix + ".afrm.reduce", out);
    out.push_back({prefix + ".zeta", zeta_});
  }

 private:
  std::vector<Conv2d<Scalar>> scm_;
  Lstm<Scalar> dir_;
  Lstm<Scalar> rev_;
  Conv2d<Scalar> reduce_;
  Var<Scalar> zeta_;
};

}  // namespace haifit
