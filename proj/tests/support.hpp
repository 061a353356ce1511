#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "haifit/extractor.hpp"

namespace haifit::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "haifit") {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

template <typename Scalar>
Tensor<Scalar> uniform_tensor(Shape shape, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<Scalar> t(shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = Scalar(dist(rng));
  return t;
}

/// The bundled test-profile extractor.
template <typename Scalar>
FeatureExtractor<Scalar> test_extractor() {
  return FeatureExtractor<Scalar>::load(default_extractor_path());
}

struct GradCheck {
  double max_rel_error = 0;
  std::size_t checked = 0;
  /// Coordinates dropped because a kink lies within eps (see check_gradient).
  std::size_t skipped = 0;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, floor)
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares the backward-pass gradient of `loss` w.r.t. `param` with
/// central differences at up to `count` of the given flat indices (all of
/// them by default). A coordinate whose eps and eps/2 estimates disagree
/// has a ReLU-type kink within eps, where central differences say nothing
/// about the derivative; it is skipped and the next index is used.
inline GradCheck check_gradient(const std::function<Var<double>()>& loss, const Var<double>& param,
                                const std::vector<Index>& indices, double eps = 1e-4,
                                std::size_t count = std::size_t(-1)) {
  param.zero_grad();
  const auto root = loss();
  backward(root);
  const Tensor<double> analytic = param.grad();
  const auto central = [&](Index i, double h) {
    double& v = param.mutable_value()[i];
    const double saved = v;
    double plus;
    double minus;
    {
      NoGradGuard no_grad;
      v = saved + h;
      plus = loss().item();
      v = saved - h;
      minus = loss().item();
    }
    v = saved;
    return (plus - minus) / (2 * h);
  };
  GradCheck out;
  for (Index i : indices) {
    if (out.checked >= count) break;
    const double numeric = central(i, eps);
    if (relative_error(numeric, central(i, eps / 2), 1e-8) > 1e-5) {
      ++out.skipped;
      continue;
    }
    out.max_rel_error = std::max(out.max_rel_error, relative_error(analytic[i], numeric));
    ++out.checked;
  }
  param.zero_grad();
  return out;
}

/// Every index of a small tensor.
inline std::vector<Index> all_indices(const Var<double>& v) {
  std::vector<Index> out(static_cast<std::size_t>(v.value().size()));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<Index>(i);
  return out;
}

/// `count` distinct indices drawn with a fixed seed.
inline std::vector<Index> sample_indices(const Var<double>& v, std::size_t count, std::uint64_t seed) {
  std::vector<Index> all = all_indices(v);
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min(count, all.size()));
  return all;
}

}  // namespace haifit::testing
