#include "haifit/metrics.hpp"

#include <cmath>

#include <json.hpp>

namespace haifit {

PsnrValue psnr(const Tensor<double>& a, const Tensor<double>& b) {
  require_same_shape(a.shape(), b.shape(), "psnr");
  const double mse = (a.array() - b.array()).square().mean();
  if (mse == 0.0) return {std::numeric_limits<double>::infinity(), true};
  return {10.0 * std::log10(255.0 * 255.0 / mse), false};
}

namespace {

Eigen::VectorXd gaussian_taps() {
  Eigen::VectorXd taps(kSsimWindow);
  const int r = kSsimWindow / 2;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double x = i - r;
    taps[i] = std::exp(-x * x / (2.0 * kSsimSigma * kSsimSigma));
  }
  return taps / taps.sum();
}

/// Separable 'valid' filtering of an h x w plane.
Eigen::MatrixXd filter_valid(const Eigen::MatrixXd& plane, const Eigen::VectorXd& taps) {
  const Index k = taps.size();
  const Index oh = plane.rows() - k + 1;
  const Index ow = plane.cols() - k + 1;
  Eigen::MatrixXd rows(plane.rows(), ow);
  for (Index x = 0; x < ow; ++x) rows.col(x) = plane.middleCols(x, k) * taps;
  Eigen::MatrixXd out(oh, ow);
  for (Index y = 0; y < oh; ++y) out.row(y) = taps.transpose() * rows.middleRows(y, k);
  return out;
}

}  // namespace

double ssim(const Tensor<double>& a, const Tensor<double>& b) {
  require_same_shape(a.shape(), b.shape(), "ssim");
  if (a.h() < kSsimWindow || a.w() < kSsimWindow) {
    throw Error(ErrorKind::Shape, "ssim needs images of at least 11x11, got " + to_string(a.shape()));
  }
  constexpr double c1 = (0.01 * 255) * (0.01 * 255);
  constexpr double c2 = (0.03 * 255) * (0.03 * 255);
  const Eigen::VectorXd taps = gaussian_taps();
  double total = 0.0;
  Index planes = 0;
  for (Index n = 0; n < a.n(); ++n) {
    for (Index c = 0; c < a.c(); ++c) {
      Eigen::MatrixXd x(a.h(), a.w());
      Eigen::MatrixXd y(a.h(), a.w());
      for (Index r = 0; r < a.h(); ++r) {
        for (Index q = 0; q < a.w(); ++q) {
          x(r, q) = a.at(n, c, r, q);
          y(r, q) = b.at(n, c, r, q);
        }
      }
      const Eigen::ArrayXXd mx = filter_valid(x, taps).array();
      const Eigen::ArrayXXd my = filter_valid(y, taps).array();
      const Eigen::ArrayXXd sxx = filter_valid(x.cwiseProduct(x), taps).array() - mx * mx;
      const Eigen::ArrayXXd syy = filter_valid(y.cwiseProduct(y), taps).array() - my * my;
      const Eigen::ArrayXXd sxy = filter_valid(x.cwiseProduct(y), taps).array() - mx * my;
      const Eigen::ArrayXXd map =
          ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
      total += map.mean();
      ++planes;
    }
  }
  return total / double(planes);
}

Tensor<double> to_pixel_scale(const Image8& img) {
  if (img.channels != 3) throw Error(ErrorKind::ChannelCount, "expected 3 channels");
  Tensor<double> out(Shape{1, 3, img.height, img.width});
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) out.at(0, c, y, x) = img.at(x, y, c);
    }
  }
  return out;
}

void DistributionStats::validate() const {
  if (covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
    throw Error(ErrorKind::Shape, "covariance does not match mean dimension");
  }
  const double scale = std::max(1.0, covariance.cwiseAbs().maxCoeff());
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw Error(ErrorKind::Numerical, "covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-8 * scale) throw Error(ErrorKind::Numerical, "covariance is not PSD");
}

DistributionStats estimate_stats(const Eigen::MatrixXd& samples) {
  if (samples.rows() < 2) throw Error(ErrorKind::SampleCount, "need at least 2 samples for a covariance");
  DistributionStats s;
  s.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - s.mean.transpose();
  s.covariance = (centered.transpose() * centered) / double(samples.rows() - 1);
  return s;
}

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const DistributionStats& s1, const DistributionStats& s2) {
  s1.validate();
  s2.validate();
  if (s1.mean.size() != s2.mean.size()) throw Error(ErrorKind::Shape, "stats have different dimensions");
  const Eigen::MatrixXd root1 = psd_sqrt(s1.covariance);
  const Eigen::MatrixXd product = root1 * s2.covariance * root1;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (product + product.transpose()), Eigen::EigenvaluesOnly);
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  // A negative eigenvalue here is the imaginary part of the square root.
  const double reference = std::max(1.0, std::sqrt(std::max(0.0, lambda.maxCoeff())));
  if (lambda.minCoeff() < 0.0 && std::sqrt(-lambda.minCoeff()) > 1e-3 * reference) {
    throw Error(ErrorKind::Numerical, "matrix square root has a significant imaginary component");
  }
  const double tr_sqrt = lambda.cwiseMax(0.0).cwiseSqrt().sum();
  return (s1.mean - s2.mean).squaredNorm() + s1.covariance.trace() + s2.covariance.trace() - 2.0 * tr_sqrt;
}

double fid_from_samples(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake) {
  if (real.cols() != fake.cols()) throw Error(ErrorKind::Shape, "feature dimensions differ");
  const Index need = real.cols() + 1;
  if (real.rows() < need || fake.rows() < need) {
    throw Error(ErrorKind::SampleCount, "FID needs at least " + std::to_string(need) + " samples per set, got " +
                                            std::to_string(real.rows()) + " and " + std::to_string(fake.rows()));
  }
  return frechet_distance(estimate_stats(real), estimate_stats(fake));
}

std::string MetricsReport::to_json_text() const {
  nlohmann::json j;
  j["psnr_db"] = psnr.infinite ? nlohmann::json("inf") : nlohmann::json(psnr.db);
  j["ssim"] = ssim;
  j["lpips"] = lpips;
  j["fid"] = fid ? nlohmann::json(*fid) : nlohmann::json(nullptr);
  j["n"] = sample_count;
  return j.dump(2);
}

}  // namespace haifit
