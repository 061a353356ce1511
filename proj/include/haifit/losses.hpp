#pragma once

#include <cmath>

#include "haifit/core.hpp"
#include "haifit/extractor.hpp"

namespace haifit {

inline constexpr double kProbabilityClamp = 1e-7;

/// Mean absolute difference.
template <typename Scalar>
Var<Scalar> l1_loss(const Var<Scalar>& generated, const Var<Scalar>& target) {
  require_same_shape(generated.shape(), target.shape(), "l1_loss");
  return ops::mean_abs(ops::sub(generated, target));
}

template <typename Scalar>
void check_probabilities(const Var<Scalar>& scores, const char* what) {
  const auto& v = scores.value().vec();
  if (!v.allFinite() || v.minCoeff() < Scalar(0) || v.maxCoeff() > Scalar(1)) {
    throw Error(ErrorKind::Domain, std::string(what) + " scores must lie in [0,1]");
  }
}

/// -(mean log D(real) + mean log(1 - D(fake)))
template <typename Scalar>
Var<Scalar> discriminator_loss(const Var<Scalar>& real_scores, const Var<Scalar>& fake_scores) {
  check_probabilities(real_scores, "real");
  check_probabilities(fake_scores, "fake");
  const auto eps = Scalar(kProbabilityClamp);
  return ops::scale(ops::add(ops::mean_log_prob(real_scores, false, eps), ops::mean_log_prob(fake_scores, true, eps)),
                    Scalar(-1));
}

/// Non-saturating generator term: -mean log D(fake).
template <typename Scalar>
Var<Scalar> generator_adversarial_loss(const Var<Scalar>& fake_scores) {
  check_probabilities(fake_scores, "fake");
  return ops::scale(ops::mean_log_prob(fake_scores, false, Scalar(kProbabilityClamp)), Scalar(-1));
}

template <typename Scalar>
struct AdversarialLosses {
  Var<Scalar> d_loss;
  Var<Scalar> g_loss;
};

template <typename Scalar>
AdversarialLosses<Scalar> adversarial_losses(const Var<Scalar>& real_scores, const Var<Scalar>& fake_scores) {
  return {discriminator_loss(real_scores, fake_scores), generator_adversarial_loss(fake_scores)};
}

template <typename Scalar>
Var<Scalar> gram_matrix(const Var<Scalar>& features) {
  return ops::gram(features);
}

/// Mean absolute difference of Gram matrices.
template <typename Scalar>
Var<Scalar> style_loss(const Var<Scalar>& generated, const Var<Scalar>& target) {
  require_same_shape(generated.shape(), target.shape(), "style_loss");
  return ops::mean_abs(ops::sub(gram_matrix(generated), gram_matrix(target)));
}

/// Σ over five stages of (1/N_i)·‖φ_i(target) − φ_i(generated)‖₁.
template <typename Scalar>
Var<Scalar> perceptual_loss(const Var<Scalar>& generated, const Var<Scalar>& target,
                            const FeatureExtractor<Scalar>& extractor) {
  if (extractor.stage_count() != 5) {
    throw Error(ErrorKind::Configuration,
                "perceptual loss needs 5 extractor stages, got " + std::to_string(extractor.stage_count()));
  }
  require_same_shape(generated.shape(), target.shape(), "perceptual_loss");
  auto fg = extractor(generated);
  auto ft = extractor(target.detach());
  Var<Scalar> total;
  for (std::size_t i = 0; i < fg.size(); ++i) {
    auto term = ops::mean_abs(ops::sub(fg[i], ft[i]));
    total = total.defined() ? ops::add(total, term) : term;
  }
  return total;
}

/// Style term on extractor features: the Gram loss summed over stages.
template <typename Scalar>
Var<Scalar> feature_style_loss(const Var<Scalar>& generated, const Var<Scalar>& target,
                               const FeatureExtractor<Scalar>& extractor) {
  auto fg = extractor(generated);
  auto ft = extractor(target.detach());
  Var<Scalar> total;
  for (std::size_t i = 0; i < fg.size(); ++i) {
    auto term = style_loss(fg[i], ft[i]);
    total = total.defined() ? ops::add(total, term) : term;
  }
  return total;
}

struct LossWeights {
  double l1 = 1.5;
  double adv = 10.0;
  double style = 250.0;
  double perceptual = 0.1;

  static LossWeights from(const TrainConfig& c) { return {c.lambda_l1, c.lambda_adv, c.lambda_style, c.lambda_per}; }
};

struct LossBreakdown {
  double l1 = 0;
  double adv = 0;
  double style = 0;
  double perceptual = 0;
  double total = 0;
};

/// total = λ_l1·l1 + λ_adv·adv + λ_style·style + λ_per·perceptual, evaluated
/// left to right in double.
inline LossBreakdown total_generator_loss(double l1, double adv, double style, double perceptual,
                                          const LossWeights& w) {
  LossBreakdown b{l1, adv, style, perceptual, 0.0};
  b.total = w.l1 * l1 + w.adv * adv + w.style * style + w.perceptual * perceptual;
  return b;
}

}  // namespace haifit
