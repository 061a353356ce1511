#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>

#include "haifit/core.hpp"
#include "haifit/extractor.hpp"

namespace haifit {

/// PSNR in dB; `infinite` is set when the images are identical.
struct PsnrValue {
  double db = 0.0;
  bool infinite = false;
};

/// Images on the [0, 255] scale, any NCHW shape (both equal).
PsnrValue psnr(const Tensor<double>& a, const Tensor<double>& b);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// Mean SSIM over every sample and channel, Gaussian window (11 taps,
/// sigma 1.5), valid region only, C1 = (0.01*255)^2, C2 = (0.03*255)^2.
/// Inputs on the [0, 255] scale.
double ssim(const Tensor<double>& a, const Tensor<double>& b);

/// [-1, 1] -> [0, 255] without rounding.
template <typename Scalar>
Tensor<double> to_pixel_scale(const Tensor<Scalar>& t) {
  Tensor<double> out(t.shape());
  out.array() = (t.vec().template cast<double>().array() + 1.0) * 127.5;
  return out;
}

Tensor<double> to_pixel_scale(const Image8& img);

struct DistributionStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  /// Symmetric and numerically PSD.
  void validate() const;
};

/// Sample mean and unbiased covariance of the rows of `samples`.
DistributionStats estimate_stats(const Eigen::MatrixXd& samples);

/// ‖μ₁−μ₂‖² + tr(Σ₁ + Σ₂ − 2(Σ₁Σ₂)^{1/2}), with the trace of the square
/// root taken through the symmetric form Σ₁^{1/2} Σ₂ Σ₁^{1/2}.
double frechet_distance(const DistributionStats& s1, const DistributionStats& s2);

/// Rows are per-image features; each set needs at least d + 1 rows.
double fid_from_samples(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake);

/// LPIPS-style distance with uniform channel weights: per stage, unit-
/// normalize features across channels, square the difference, sum over
/// channels, average spatially; sum over stages. Returns the batch mean.
template <typename Scalar>
double lpips_distance(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const FeatureExtractor<Scalar>& backbone) {
  require_same_shape(a.shape(), b.shape(), "lpips_distance");
  NoGradGuard no_grad;
  const auto fa = backbone(Var<Scalar>(a));
  const auto fb = backbone(Var<Scalar>(b));
  const Index n = a.n();
  double total = 0.0;
  for (std::size_t s = 0; s < fa.size(); ++s) {
    const auto& ta = fa[s].value();
    const auto& tb = fb[s].value();
    for (Index i = 0; i < n; ++i) {
      const Eigen::MatrixXd ma = ta.sample_matrix(i).template cast<double>();
      const Eigen::MatrixXd mb = tb.sample_matrix(i).template cast<double>();
      const Eigen::RowVectorXd na = (ma.colwise().norm().array() + 1e-10).matrix();
      const Eigen::RowVectorXd nb = (mb.colwise().norm().array() + 1e-10).matrix();
      const Eigen::MatrixXd diff = ma.array().rowwise() / na.array() - mb.array().rowwise() / nb.array();
      total += diff.colwise().squaredNorm().mean();
    }
  }
  return total / double(n);
}

struct MetricsReport {
  PsnrValue psnr;
  double ssim = 0.0;
  double lpips = 0.0;
  std::optional<double> fid;
  std::size_t sample_count = 0;
  std::string fingerprint;

  /// Keys: psnr_db, ssim, lpips, fid, n. Infinite PSNR is written as the
  /// string "inf"; an FID that could not be estimated is null.
  std::string to_json_text() const;
};

}  // namespace haifit
