#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "haifit/archive.hpp"
#include "haifit/nn.hpp"

namespace haifit {

struct ExtractorConvSpec {
  Index in = 0;
  Index out = 0;
  Index kernel = 3;
  Index stride = 1;
  Index pad = 1;
};

enum class StagePool { None, Max2, Avg2 };

struct ExtractorStageSpec {
  StagePool pool = StagePool::None;
  std::vector<ExtractorConvSpec> convs;
  bool relu = true;
};

/// Frozen multi-stage convolution network used by the perceptual loss,
/// LPIPS and FID. Each stage optionally pools, then applies its
/// convolutions (each followed by ReLU unless the stage is marked linear).
///
/// Two profiles share this class: the bundled test profile (small random
/// network, data/extractor_test_v1.hfa) and a user-supplied pretrained
/// network such as VGG-16 converted to the same archive layout.
template <typename Scalar>
class FeatureExtractor {
 public:
  static constexpr int kManifestVersion = 1;

  FeatureExtractor() = default;

  /// He-initialized random weights for `layout`.
  static FeatureExtractor random(std::vector<ExtractorStageSpec> layout, std::uint64_t seed) {
    FeatureExtractor fx;
    fx.layout_ = std::move(layout);
    Rng rng(seed);
    for (const auto& stage : fx.layout_) {
      std::vector<Conv2d<Scalar>> convs;
      for (const auto& c : stage.convs) {
        Conv2d<Scalar> conv(c.in, c.out, c.kernel, c.stride, c.pad, rng);
        const double stddev = std::sqrt(2.0 / double(c.in * c.kernel * c.kernel));
        conv.weight().mutable_value() = normal_tensor<Scalar>(conv.weight().shape(), stddev, rng);
        convs.push_back(std::move(conv));
      }
      fx.stages_.push_back(std::move(convs));
    }
    fx.freeze();
    return fx;
  }

  /// Five stages, 16-32-32-32-32 channels, stride 2 from stage 2 on.
  static std::vector<ExtractorStageSpec> test_profile_layout() {
    return {
        {StagePool::None, {{3, 16, 3, 1, 1}}},
        {StagePool::None, {{16, 32, 3, 2, 1}}},
        {StagePool::None, {{32, 32, 3, 2, 1}}},
        {StagePool::None, {{32, 32, 3, 2, 1}}},
        {StagePool::None, {{32, 32, 3, 2, 1}}},
    };
  }

  static FeatureExtractor from_archive(const Archive& a) {
    const auto& m = a.manifest();
    if (m.value("kind", "") != "feature_extractor") throw Error(ErrorKind::Format, "archive is not a feature extractor");
    if (m.value("version", 0) != kManifestVersion) throw Error(ErrorKind::Format, "unsupported extractor version");
    FeatureExtractor fx;
    fx.input_shift_ = m.at("input_shift").get<std::vector<double>>();
    fx.input_scale_ = m.at("input_scale").get<std::vector<double>>();
    for (const auto& js : m.at("stages")) {
      ExtractorStageSpec spec;
      const std::string pool = js.at("pool").get<std::string>();
      spec.pool = pool == "max2" ? StagePool::Max2 : pool == "avg2" ? StagePool::Avg2 : StagePool::None;
      for (const auto& jc : js.at("convs")) {
        spec.convs.push_back({jc.at("in").get<Index>(), jc.at("out").get<Index>(), jc.at("kernel").get<Index>(),
                              jc.at("stride").get<Index>(), jc.at("pad").get<Index>()});
      }
      spec.relu = js.value("relu", true);
      fx.layout_.push_back(spec);
    }
    Rng unused(0);
    for (std::size_t s = 0; s < fx.layout_.size(); ++s) {
      std::vector<Conv2d<Scalar>> convs;
      for (std::size_t c = 0; c < fx.layout_[s].convs.size(); ++c) {
        const auto& spec = fx.layout_[s].convs[c];
        Conv2d<Scalar> conv(spec.in, spec.out, spec.kernel, spec.stride, spec.pad, unused);
        const std::string prefix = param_prefix(s, c);
        conv.weight().mutable_value() = a.get<Scalar>(prefix + ".weight");
        conv.bias().mutable_value() = a.get<Scalar>(prefix + ".bias");
        if (!(conv.weight().shape() == Shape{spec.out, spec.in, spec.kernel, spec.kernel})) {
          throw Error(ErrorKind::Format, "extractor tensor " + prefix + " has the wrong shape");
        }
        convs.push_back(std::move(conv));
      }
      fx.stages_.push_back(std::move(convs));
    }
    fx.freeze();
    return fx;
  }

  static FeatureExtractor load(const std::filesystem::path& path) { return from_archive(Archive::load(path)); }

  Archive to_archive() const {
    Archive a;
    auto& m = a.manifest();
    m["kind"] = "feature_extractor";
    m["version"] = kManifestVersion;
    m["input_shift"] = input_shift_;
    m["input_scale"] = input_scale_;
    m["stages"] = nlohmann::json::array();
    for (std::size_t s = 0; s < layout_.size(); ++s) {
      nlohmann::json js;
      js["pool"] = layout_[s].pool == StagePool::Max2 ? "max2" : layout_[s].pool == StagePool::Avg2 ? "avg2" : "none";
      js["relu"] = layout_[s].relu;
      js["convs"] = nlohmann::json::array();
      for (std::size_t c = 0; c < layout_[s].convs.size(); ++c) {
        const auto& spec = layout_[s].convs[c];
        js["convs"].push_back(
            {{"in", spec.in}, {"out", spec.out}, {"kernel", spec.kernel}, {"stride", spec.stride}, {"pad", spec.pad}});
        const auto& conv = stages_[s][c];
        a.put(param_prefix(s, c) + ".weight", conv.weight().value());
        a.put(param_prefix(s, c) + ".bias", conv.bias().value());
      }
      m["stages"].push_back(js);
    }
    return a;
  }

  std::size_t stage_count() const { return stages_.size(); }

  /// Output of every stage for a (n, 3, h, w) batch in [-1, 1].
  std::vector<Var<Scalar>> operator()(const Var<Scalar>& x) const {
    std::vector<Var<Scalar>> out;
    Var<Scalar> h = ops::channel_affine(x, input_shift_, input_scale_);
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      if (layout_[s].pool == StagePool::Max2) h = ops::max_pool(h, 2);
      if (layout_[s].pool == StagePool::Avg2) h = ops::avg_pool(h, 2);
      for (const auto& conv : stages_[s]) h = layout_[s].relu ? ops::relu(conv(h)) : conv(h);
      out.push_back(h);
    }
    return out;
  }

  /// Per-image descriptor for FID: spatial mean of the last stage.
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> pooled_features(const Tensor<Scalar>& images) const {
    NoGradGuard no_grad;
    const auto last = (*this)(Var<Scalar>(images)).back().value();
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> feats(last.n(), last.c());
    for (Index b = 0; b < last.n(); ++b) feats.row(b) = last.sample_matrix(b).rowwise().mean().transpose();
    return feats;
  }

  /// Sets the per-channel input normalization applied before stage 1.
  void set_input_normalization(std::vector<double> shift, std::vector<double> scale) {
    input_shift_ = std::move(shift);
    input_scale_ = std::move(scale);
  }

 private:
  static std::string param_prefix(std::size_t stage, std::size_t conv) {
    return "stage" + std::to_string(stage) + ".conv" + std::to_string(conv);
  }

  void freeze() {
    for (auto& stage : stages_) {
      for (auto& conv : stage) {
        conv.weight().set_requires_grad(false);
        conv.bias().set_requires_grad(false);
      }
    }
  }

  std::vector<ExtractorStageSpec> layout_;
  std::vector<std::vector<Conv2d<Scalar>>> stages_;
  std::vector<double> input_shift_{0.0, 0.0, 0.0};
  std::vector<double> input_scale_{1.0, 1.0, 1.0};
};

/// Path of the bundled test-profile extractor fixture.
std::filesystem::path default_extractor_path();

}  // namespace haifit
